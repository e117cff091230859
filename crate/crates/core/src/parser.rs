//! HTML extraction: title, meta description/keywords, images, links and
//! the searchable page text.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use scraper::{ElementRef, Html, Node, Selector};
use thiserror::Error;

use crate::frontier::{normalize, NormalizedUrl};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid fraction `{0}`: expected a value in (0, 1] such as `1/3` or `0.5`")]
pub struct FractionError(pub String);

/// Exact rational in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    num: u64,
    den: u64,
}

impl Fraction {
    pub const ONE: Fraction = Fraction { num: 1, den: 1 };
    pub const ONE_THIRD: Fraction = Fraction { num: 1, den: 3 };

    pub fn new(num: u64, den: u64) -> Result<Self, FractionError> {
        if num == 0 || den == 0 || num > den {
            return Err(FractionError(format!("{num}/{den}")));
        }
        let g = gcd(num, den);
        Ok(Self { num: num / g, den: den / g })
    }

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn denominator(&self) -> u64 {
        self.den
    }

    pub fn is_one(&self) -> bool {
        self.num == self.den
    }

    /// `ceil(len * self)`.
    pub fn ceil_mul(&self, len: usize) -> usize {
        let scaled = len as u128 * self.num as u128;
        scaled.div_ceil(self.den as u128) as usize
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Default for Fraction {
    fn default() -> Self {
        Self::ONE_THIRD
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Fraction {
    type Err = FractionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || FractionError(s.to_string());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n = n.trim().parse().map_err(|_| err())?;
            let d = d.trim().parse().map_err(|_| err())?;
            return Fraction::new(n, d).map_err(|_| err());
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| err())? };
        let den = 10u64.pow(frac.len() as u32);
        let frac_val: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err())? };
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_val))
            .ok_or_else(err)?;
        Fraction::new(num, den).map_err(|_| err())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedPage {
    pub url: NormalizedUrl,
    pub title: String,
    pub description: String,
    pub keywords: Vec<String>,
    pub images: Vec<NormalizedUrl>,
    /// Document order, deduplicated.
    pub links: Vec<NormalizedUrl>,
    pub page_component: String,
}

impl ExtractedPage {
    pub fn empty(url: NormalizedUrl) -> Self {
        Self {
            url,
            title: String::new(),
            description: String::new(),
            keywords: Vec::new(),
            images: Vec::new(),
            links: Vec::new(),
            page_component: String::new(),
        }
    }
}

/// First `ceil(chars × fraction)` Unicode scalar values of `text`.
pub fn truncate_component(text: &str, fraction: Fraction) -> String {
    if fraction.is_one() {
        return text.to_string();
    }
    let keep = fraction.ceil_mul(text.chars().count());
    text.chars().take(keep).collect()
}

/// Comma-separated meta keywords: trimmed, non-empty, first occurrence kept.
pub fn split_keywords(meta_value: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    meta_value
        .split(',')
        .map(str::trim)
        .filter(|k| !k.is_empty() && seen.insert(*k))
        .map(str::to_string)
        .collect()
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn selector(css: &str) -> Selector {
    Selector::parse(css).expect("static selector")
}

fn meta_content(doc: &Html, name: &str) -> String {
    doc.select(&selector("meta"))
        .find(|m| m.value().attr("name").is_some_and(|n| n.trim().eq_ignore_ascii_case(name)))
        .and_then(|m| m.value().attr("content"))
        .map(|c| c.trim().to_string())
        .unwrap_or_default()
}

fn is_hidden_container(el: ElementRef<'_>) -> bool {
    matches!(el.value().name(), "script" | "style" | "head")
}

fn visible_text(doc: &Html) -> String {
    let mut raw = String::new();
    for node in doc.root_element().descendants() {
        let Node::Text(text) = node.value() else {
            continue;
        };
        let hidden = node
            .ancestors()
            .filter_map(ElementRef::wrap)
            .any(is_hidden_container);
        if !hidden {
            raw.push_str(text);
        }
    }
    collapse_whitespace(&raw)
}

pub fn extract_page(html: &[u8], base: &NormalizedUrl, truncation_fraction: Fraction) -> ExtractedPage {
    let text = String::from_utf8_lossy(html);
    let doc = Html::parse_document(&text);

    let title = doc
        .select(&selector("title"))
        .next()
        .map(|t| collapse_whitespace(&t.text().collect::<String>()))
        .unwrap_or_default();

    let images = doc
        .select(&selector("img[src]"))
        .filter_map(|img| img.value().attr("src"))
        .filter_map(|src| normalize(src, Some(base)).ok())
        .collect();

    let mut seen = HashSet::new();
    let links = doc
        .select(&selector("a[href]"))
        .filter_map(|a| a.value().attr("href"))
        .filter_map(|href| normalize(href, Some(base)).ok())
        .filter(|u| seen.insert(u.as_str().to_string()))
        .collect();

    ExtractedPage {
        url: base.clone(),
        title,
        description: meta_content(&doc, "description"),
        keywords: split_keywords(&meta_content(&doc, "keywords")),
        images,
        links,
        page_component: truncate_component(&visible_text(&doc), truncation_fraction),
    }
}
