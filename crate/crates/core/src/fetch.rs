//! Page retrieval and the robots.txt subset used by the normal crawler.

use std::time::{Duration, Instant};

use reqwest::header::{CONTENT_TYPE, LOCATION, USER_AGENT};
use reqwest::redirect::Policy;
use thiserror::Error;

use crate::frontier::{normalize, HostScope, NormalizedUrl};

pub const DEFAULT_USER_AGENT: &str = "ExclusiveCrawler/1.0";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
pub const MAX_REDIRECTS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FetchError {
    #[error("timed out fetching {0}")]
    Timeout(String),
    #[error("connection to {url} failed: {reason}")]
    ConnectionFailed { url: String, reason: String },
    #[error("more than {MAX_REDIRECTS} redirects starting at {0}")]
    TooManyRedirects(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResult {
    /// Final URL after any followed redirects.
    pub url: NormalizedUrl,
    pub status: u16,
    pub content_type: String,
    /// Retained only for 2xx HTML responses.
    pub body: Vec<u8>,
    pub elapsed: Duration,
    /// URLs visited before `url`, oldest first.
    pub redirected_from: Vec<NormalizedUrl>,
    /// Normalized `Location` of a 3xx response that was not followed.
    pub location: Option<NormalizedUrl>,
}

impl FetchResult {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn is_html(&self) -> bool {
        is_html_content_type(&self.content_type)
    }

    pub fn is_redirect(&self) -> bool {
        (300..400).contains(&self.status)
    }
}

pub fn is_html_content_type(content_type: &str) -> bool {
    content_type.to_ascii_lowercase().contains("text/html")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RedirectMode {
    /// Follow up to [`MAX_REDIRECTS`] hops.
    Follow,
    /// Return the 3xx response with its `location` and let the caller decide.
    Manual,
}

/// Shared HTTP client. Cheap to clone, safe to use from many workers.
#[derive(Debug, Clone)]
pub struct Fetcher {
    client: reqwest::Client,
    user_agent: String,
}

impl Fetcher {
    pub fn new(timeout: Duration, user_agent: &str) -> Self {
        let client = reqwest::Client::builder()
            .redirect(Policy::none())
            .timeout(timeout)
            .build()
            .expect("http client with static configuration");
        Self {
            client,
            user_agent: user_agent.to_string(),
        }
    }

    pub fn user_agent(&self) -> &str {
        &self.user_agent
    }

    pub async fn fetch_page(
        &self,
        url: &NormalizedUrl,
        redirects: RedirectMode,
    ) -> Result<FetchResult, FetchError> {
        let started = Instant::now();
        let mut current = url.clone();
        let mut chain = Vec::new();
        loop {
            let mut result = self.get(&current, false).await?;
            if result.is_redirect() {
                if let (RedirectMode::Follow, Some(next)) = (redirects, result.location.clone()) {
                    if chain.len() == MAX_REDIRECTS {
                        return Err(FetchError::TooManyRedirects(url.to_string()));
                    }
                    chain.push(std::mem::replace(&mut current, next));
                    continue;
                }
            }
            result.redirected_from = chain;
            result.elapsed = started.elapsed();
            return Ok(result);
        }
    }

    /// Fetch `/robots.txt` for `scope`. Any failure or non-2xx means allow-all.
    pub async fn fetch_robots(&self, scope: &HostScope) -> Option<RobotsRules> {
        let url = NormalizedUrl::parse(&format!("{scope}/robots.txt")).ok()?;
        match self.get(&url, true).await {
            Ok(res) if res.is_success() => Some(RobotsRules::parse(&String::from_utf8_lossy(&res.body))),
            Ok(_) => None,
            Err(err) => {
                tracing::debug!(%err, "robots.txt unavailable, allowing all");
                None
            }
        }
    }

    async fn get(&self, url: &NormalizedUrl, keep_any_body: bool) -> Result<FetchResult, FetchError> {
        let started = Instant::now();
        let response = self
            .client
            .get(url.as_str())
            .header(USER_AGENT, &self.user_agent)
            .send()
            .await
            .map_err(|e| classify_error(url, e))?;
        let status = response.status().as_u16();
        let content_type = response
            .headers()
            .get(CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or_default()
            .to_string();
        let location = response
            .headers()
            .get(LOCATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|loc| normalize(loc, Some(url)).ok());
        let keep = (200..300).contains(&status) && (keep_any_body || is_html_content_type(&content_type));
        let body = if keep {
            response.bytes().await.map_err(|e| classify_error(url, e))?.to_vec()
        } else {
            Vec::new()
        };
        Ok(FetchResult {
            url: url.clone(),
            status,
            content_type,
            body,
            elapsed: started.elapsed(),
            redirected_from: Vec::new(),
            location: if (300..400).contains(&status) { location } else { None },
        })
    }
}

fn classify_error(url: &NormalizedUrl, err: reqwest::Error) -> FetchError {
    if err.is_timeout() {
        FetchError::Timeout(url.to_string())
    } else {
        FetchError::ConnectionFailed {
            url: url.to_string(),
            reason: err.to_string(),
        }
    }
}

/// One-shot fetch with redirect following.
pub async fn fetch_page(
    url: &NormalizedUrl,
    timeout: Duration,
    user_agent: &str,
) -> Result<FetchResult, FetchError> {
    Fetcher::new(timeout, user_agent)
        .fetch_page(url, RedirectMode::Follow)
        .await
}

/// One-shot robots.txt fetch.
pub async fn fetch_robots(scope: &HostScope, timeout: Duration, user_agent: &str) -> Option<RobotsRules> {
    Fetcher::new(timeout, user_agent).fetch_robots(scope).await
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RobotsGroup {
    pub agent: String,
    pub disallow: Vec<String>,
}

/// `User-agent` / `Disallow` prefix rules. `Allow`, `Crawl-delay` and
/// wildcards are not interpreted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RobotsRules {
    pub groups: Vec<RobotsGroup>,
}

impl RobotsRules {
    pub fn parse(body: &str) -> Self {
        let mut groups: Vec<RobotsGroup> = Vec::new();
        // index of the first group sharing the current run of User-agent lines
        let mut open: Option<usize> = None;
        let mut saw_rule = false;

        for line in body.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            let Some((field, value)) = line.split_once(':') else {
                continue;
            };
            let value = value.trim();
            match field.trim().to_ascii_lowercase().as_str() {
                "user-agent" => {
                    if open.is_none() || saw_rule {
                        open = Some(groups.len());
                        saw_rule = false;
                    }
                    groups.push(RobotsGroup {
                        agent: value.to_string(),
                        disallow: Vec::new(),
                    });
                }
                "disallow" => {
                    if let Some(start) = open {
                        saw_rule = true;
                        for group in &mut groups[start..] {
                            group.disallow.push(value.to_string());
                        }
                    }
                }
                "allow" | "crawl-delay" | "sitemap" => {
                    if open.is_some() {
                        saw_rule = true;
                    }
                }
                _ => {}
            }
        }
        Self { groups }
    }
}

fn agent_matches(pattern: &str, user_agent: &str) -> bool {
    let product = user_agent.split('/').next().unwrap_or(user_agent).trim();
    pattern.eq_ignore_ascii_case(user_agent) || pattern.eq_ignore_ascii_case(product)
}

pub fn check_robots(rules: Option<&RobotsRules>, url: &NormalizedUrl, user_agent: &str) -> bool {
    let Some(rules) = rules else {
        return true;
    };
    let exact: Vec<&RobotsGroup> = rules
        .groups
        .iter()
        .filter(|g| g.agent != "*" && agent_matches(&g.agent, user_agent))
        .collect();
    let selected = if exact.is_empty() {
        rules.groups.iter().filter(|g| g.agent == "*").collect()
    } else {
        exact
    };
    let path = url.path();
    !selected
        .iter()
        .flat_map(|g| g.disallow.iter())
        .any(|prefix| !prefix.is_empty() && path.starts_with(prefix.as_str()))
}
