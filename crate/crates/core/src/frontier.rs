//! URL identity, host scoping, and the FIFO frontier with its visited set.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UrlError {
    #[error("malformed url `{0}`")]
    MalformedUrl(String),
    #[error("unsupported scheme `{0}`")]
    UnsupportedScheme(String),
}

/// A canonical absolute http(s) URL.
///
/// Scheme and host are lowercase, default ports are elided, dot-segments
/// are resolved, percent-escapes in the path use uppercase hex with
/// unreserved characters decoded, and the fragment is always dropped.
/// The query string is kept verbatim.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NormalizedUrl(Url);

impl NormalizedUrl {
    pub fn parse(raw: &str) -> Result<Self, UrlError> {
        normalize(raw, None)
    }

    pub fn as_str(&self) -> &str {
        self.0.as_str()
    }

    pub fn scheme(&self) -> &str {
        self.0.scheme()
    }

    pub fn host(&self) -> &str {
        self.0.host_str().unwrap_or_default()
    }

    pub fn port(&self) -> u16 {
        // http/https always have a known default
        self.0.port_or_known_default().unwrap_or(80)
    }

    pub fn path(&self) -> &str {
        self.0.path()
    }

    pub fn query(&self) -> Option<&str> {
        self.0.query()
    }

    pub fn scope(&self) -> HostScope {
        HostScope {
            scheme: self.scheme().to_string(),
            host: self.host().to_string(),
            port: self.port(),
        }
    }

    pub fn as_url(&self) -> &Url {
        &self.0
    }

    /// Same origin, different path. Used for `/robots.txt`.
    pub fn with_path(&self, path: &str) -> NormalizedUrl {
        let mut url = self.0.clone();
        url.set_path(path);
        url.set_query(None);
        NormalizedUrl(url)
    }
}

impl fmt::Display for NormalizedUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for NormalizedUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NormalizedUrl({})", self.as_str())
    }
}

impl Serialize for NormalizedUrl {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for NormalizedUrl {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        NormalizedUrl::parse(&raw).map_err(serde::de::Error::custom)
    }
}

impl std::str::FromStr for NormalizedUrl {
    type Err = UrlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NormalizedUrl::parse(s)
    }
}

/// Resolve `raw` (against `base` when relative) and canonicalize it.
pub fn normalize(raw: &str, base: Option<&NormalizedUrl>) -> Result<NormalizedUrl, UrlError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(UrlError::MalformedUrl(raw.to_string()));
    }
    let parsed = match base {
        Some(base) => base.0.join(trimmed),
        None => Url::parse(trimmed),
    }
    .map_err(|_| UrlError::MalformedUrl(raw.to_string()))?;

    match parsed.scheme() {
        "http" | "https" => {}
        other => return Err(UrlError::UnsupportedScheme(other.to_string())),
    }
    if parsed.host_str().map_or(true, str::is_empty) {
        return Err(UrlError::MalformedUrl(raw.to_string()));
    }

    let mut url = parsed;
    url.set_fragment(None);
    let path = normalize_percent_encoding(url.path());
    if path != url.path() {
        url.set_path(&path);
        // decoding can expose new dot-segments; re-parse to resolve them
        url = Url::parse(url.as_str()).map_err(|_| UrlError::MalformedUrl(raw.to_string()))?;
    }
    Ok(NormalizedUrl(url))
}

fn is_unreserved(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~')
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

/// Decode escaped unreserved characters and uppercase the remaining escapes.
fn normalize_percent_encoding(path: &str) -> String {
    let bytes = path.as_bytes();
    let mut out = String::with_capacity(path.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let (Some(hi), Some(lo)) = (hex_val(bytes[i + 1]), hex_val(bytes[i + 2])) {
                let decoded = hi * 16 + lo;
                if is_unreserved(decoded) {
                    out.push(decoded as char);
                } else {
                    out.push('%');
                    out.push(bytes[i + 1].to_ascii_uppercase() as char);
                    out.push(bytes[i + 2].to_ascii_uppercase() as char);
                }
                i += 3;
                continue;
            }
        }
        // path is ASCII after url serialization
        out.push(bytes[i] as char);
        i += 1;
    }
    out
}

/// The (scheme, host, port) triple a crawl is confined to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HostScope {
    pub scheme: String,
    pub host: String,
    pub port: u16,
}

impl HostScope {
    /// `host:port`, the key used for politeness and robots caching.
    pub fn authority(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }
}

impl fmt::Display for HostScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}://{}:{}", self.scheme, self.host, self.port)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkClass {
    Internal,
    External,
}

pub fn classify(url: &NormalizedUrl, scope: &HostScope) -> LinkClass {
    if url.scheme() == scope.scheme && url.host() == scope.host && url.port() == scope.port {
        LinkClass::Internal
    } else {
        LinkClass::External
    }
}

/// FIFO queue plus an insert-only visited set.
#[derive(Debug, Default)]
pub struct Frontier {
    queue: VecDeque<NormalizedUrl>,
    visited: HashSet<String>,
}

impl Frontier {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `false` (and leaves the frontier untouched) for a URL seen before.
    pub fn enqueue(&mut self, url: NormalizedUrl) -> bool {
        if !self.visited.insert(url.as_str().to_string()) {
            return false;
        }
        self.queue.push_back(url);
        true
    }

    pub fn dequeue(&mut self) -> Option<NormalizedUrl> {
        self.queue.pop_front()
    }

    /// Record a URL as quested without queueing it (redirect sources).
    pub fn mark_visited(&mut self, url: &NormalizedUrl) -> bool {
        self.visited.insert(url.as_str().to_string())
    }

    pub fn contains(&self, url: &NormalizedUrl) -> bool {
        self.visited.contains(url.as_str())
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn visited_len(&self) -> usize {
        self.visited.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n(s: &str) -> NormalizedUrl {
        NormalizedUrl::parse(s).unwrap()
    }

    #[test]
    fn normalizes_case_port_dots_and_fragment() {
        let u = normalize("HTTP://Example.COM:80/a/../b#frag", None).unwrap();
        assert_eq!(u.as_str(), "http://example.com/b");
    }

    #[test]
    fn resolves_relative_against_base() {
        let base = n("http://example.com/dir/page1.html");
        let u = normalize("page2.html", Some(&base)).unwrap();
        assert_eq!(u.as_str(), "http://example.com/dir/page2.html");
    }

    #[test]
    fn rejects_non_http_schemes() {
        assert_eq!(
            normalize("mailto:a@b.c", None),
            Err(UrlError::UnsupportedScheme("mailto".into()))
        );
        assert!(matches!(
            normalize("javascript:void(0)", Some(&n("http://h/"))),
            Err(UrlError::UnsupportedScheme(_))
        ));
    }

    #[test]
    fn rejects_garbage_and_relative_without_base() {
        assert!(matches!(normalize("", None), Err(UrlError::MalformedUrl(_))));
        assert!(matches!(normalize("page2.html", None), Err(UrlError::MalformedUrl(_))));
        assert!(matches!(normalize("http://", None), Err(UrlError::MalformedUrl(_))));
    }

    #[test]
    fn percent_escapes_are_canonical() {
        let u = n("http://h/%7euser/%2fa%3Fb/%41");
        assert_eq!(u.as_str(), "http://h/~user/%2Fa%3Fb/A");
        // encoded dot segments collapse too
        assert_eq!(n("http://h/a/%2E%2e/b").as_str(), "http://h/b");
    }

    #[test]
    fn query_is_identity_significant() {
        assert_ne!(n("http://h/x?a=1"), n("http://h/x?a=2"));
        assert_eq!(n("http://h/x?a=1#top"), n("http://h/x?a=1"));
    }

    #[test]
    fn https_default_port_elided_and_explicit_port_kept() {
        assert_eq!(n("https://H:443/").as_str(), "https://h/");
        let u = n("http://h:8080/x");
        assert_eq!(u.as_str(), "http://h:8080/x");
        assert_eq!(u.port(), 8080);
    }

    #[test]
    fn classify_uses_the_exact_triple() {
        let scope = n("http://example.com:80/").scope();
        assert_eq!(classify(&n("http://example.com/x"), &scope), LinkClass::Internal);
        assert_eq!(classify(&n("http://other.com/x"), &scope), LinkClass::External);
        assert_eq!(classify(&n("https://example.com/x"), &scope), LinkClass::External);
        assert_eq!(classify(&n("http://www.example.com/x"), &scope), LinkClass::External);
        assert_eq!(classify(&n("http://example.com:81/x"), &scope), LinkClass::External);
    }

    #[test]
    fn enqueue_dedups() {
        let mut f = Frontier::new();
        assert!(f.enqueue(n("http://h/a")));
        assert!(!f.enqueue(n("http://h/a")));
        assert_eq!(f.queue_len(), 1);
    }

    #[test]
    fn enqueue_hundred_distinct_then_duplicates() {
        let urls: Vec<_> = (0..100).map(|i| n(&format!("http://h/p{i}"))).collect();
        let mut f = Frontier::new();
        let mut accepted = 0;
        for u in urls.iter().chain(urls.iter()) {
            accepted += f.enqueue(u.clone()) as usize;
        }
        let oracle: HashSet<&str> = urls.iter().map(|u| u.as_str()).collect();
        assert_eq!(accepted, oracle.len());
        assert_eq!(f.queue_len(), oracle.len());
        assert_eq!(f.visited_len(), oracle.len());
    }

    #[test]
    fn dequeue_is_fifo_and_keeps_visited() {
        let mut f = Frontier::new();
        assert_eq!(f.dequeue(), None);
        f.enqueue(n("http://h/a"));
        f.enqueue(n("http://h/b"));
        f.enqueue(n("http://h/a"));
        assert_eq!(f.dequeue(), Some(n("http://h/a")));
        assert_eq!(f.dequeue(), Some(n("http://h/b")));
        assert_eq!(f.dequeue(), None);
        assert_eq!(f.visited_len(), 2);
        assert!(!f.enqueue(n("http://h/a")));
    }

    fn raw_url() -> impl Strategy<Value = String> {
        let scheme = prop_oneof![Just("http"), Just("HTTPS"), Just("Http")];
        let host = prop_oneof![Just("Example.com"), Just("h"), Just("127.0.0.1")];
        let port = prop_oneof![Just(String::new()), Just(":80".to_string()), Just(":443".to_string()), Just(":8080".to_string())];
        let seg = prop_oneof![
            "[a-zA-Z0-9_~-]{1,6}",
            Just(".".to_string()),
            Just("..".to_string()),
            Just("%7e".to_string()),
            Just("%2f".to_string()),
            Just("%41b".to_string()),
            Just("a b".to_string()),
            Just("é".to_string()),
        ];
        let path = prop::collection::vec(seg, 0..5).prop_map(|s| s.join("/"));
        let query = prop_oneof![Just(String::new()), "\\?[a-z=&0-9]{0,8}"];
        let frag = prop_oneof![Just(String::new()), "#[a-z]{0,4}"];
        (scheme, host, port, path, query, frag)
            .prop_map(|(s, h, p, path, q, f)| format!("{s}://{h}{p}/{path}{q}{f}"))
    }

    proptest! {
        #[test]
        fn normalize_is_a_fixed_point(raw in raw_url()) {
            let once = normalize(&raw, None).unwrap();
            let twice = normalize(once.as_str(), None).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(!once.as_str().contains('#'));
        }

        #[test]
        fn dequeued_urls_never_repeat(ops in prop::collection::vec((any::<bool>(), 0u8..20), 0..200)) {
            let mut f = Frontier::new();
            let mut out = Vec::new();
            let mut accepted = 0;
            for (is_push, k) in ops {
                if is_push {
                    accepted += f.enqueue(n(&format!("http://h/{k}"))) as usize;
                } else if let Some(u) = f.dequeue() {
                    out.push(u);
                }
            }
            let unique: HashSet<_> = out.iter().collect();
            prop_assert_eq!(unique.len(), out.len());
            prop_assert_eq!(f.visited_len(), accepted);
        }
    }
}
