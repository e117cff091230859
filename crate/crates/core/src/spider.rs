//! A single crawl worker: dequeue, fetch, parse, save, follow.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;
use tokio::sync::OnceCell;

use crate::fetch::{check_robots, Fetcher, RedirectMode, RobotsRules, DEFAULT_TIMEOUT, DEFAULT_USER_AGENT};
use crate::frontier::{classify, Frontier, HostScope, LinkClass, NormalizedUrl};
use crate::manager::HostGate;
use crate::parser::{extract_page, ExtractedPage, Fraction};
use crate::store::{make_record, CrawlRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Site-scoped: never leaves the seed host, never reads robots.txt.
    Exclusive,
    /// Baseline: honours robots.txt and follows external links within a budget.
    Normal,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Exclusive => "exclusive",
            Mode::Normal => "normal",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exclusive" => Ok(Mode::Exclusive),
            "normal" => Ok(Mode::Normal),
            other => Err(format!("unknown mode `{other}` (expected exclusive|normal)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrawlConfig {
    pub mode: Mode,
    pub seed: NormalizedUrl,
    /// Upper bound on stored records, not on fetch attempts.
    pub max_pages: usize,
    pub timeout: Duration,
    pub user_agent: String,
    pub truncation_fraction: Fraction,
    pub min_delay_per_host: Duration,
    pub workers: usize,
    /// External URLs a normal crawl may enqueue. Ignored in exclusive mode.
    pub external_page_budget: u64,
}

impl CrawlConfig {
    pub fn new(mode: Mode, seed: NormalizedUrl) -> Self {
        Self {
            mode,
            seed,
            max_pages: 1000,
            timeout: DEFAULT_TIMEOUT,
            user_agent: DEFAULT_USER_AGENT.to_string(),
            truncation_fraction: Fraction::ONE_THIRD,
            min_delay_per_host: Duration::ZERO,
            workers: 1,
            external_page_budget: 10,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_max_pages(mut self, max_pages: usize) -> Self {
        self.max_pages = max_pages;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_min_delay(mut self, delay: Duration) -> Self {
        self.min_delay_per_host = delay;
        self
    }

    pub fn with_external_budget(mut self, budget: u64) -> Self {
        self.external_page_budget = budget;
        self
    }

    pub fn with_truncation(mut self, fraction: Fraction) -> Self {
        self.truncation_fraction = fraction;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_user_agent(mut self, user_agent: impl Into<String>) -> Self {
        self.user_agent = user_agent.into();
        self
    }

    pub(crate) fn validate(&self) -> Result<(), CrawlError> {
        if self.max_pages == 0 {
            return Err(CrawlError::InvalidConfig("max_pages must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(CrawlError::InvalidConfig("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub(crate) fn initial_budget(&self) -> u64 {
        match self.mode {
            Mode::Exclusive => 0,
            Mode::Normal => self.external_page_budget,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CrawlStats {
    /// Page fetch attempts, robots.txt excluded.
    pub pages_fetched: u64,
    pub pages_stored: u64,
    pub errors: u64,
    pub robots_fetches: u64,
    pub external_links_seen: u64,
    pub wall_time: Duration,
    /// Mean page fetch latency.
    pub per_page_mean: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CrawlResult {
    pub records: Vec<CrawlRecord>,
    pub stats: CrawlStats,
}

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("seed {url} unreachable: {reason}")]
    SeedUnreachable { url: String, reason: String },
    #[error("a crawl worker failed: {reason}")]
    WorkerPanic { reason: String, partial: Box<CrawlResult> },
    #[error("invalid crawl configuration: {0}")]
    InvalidConfig(String),
}

/// Shared pool of external URLs a normal crawl may still enqueue.
#[derive(Debug, Clone, Default)]
pub struct ExternalBudget(Arc<AtomicU64>);

impl ExternalBudget {
    pub fn new(remaining: u64) -> Self {
        Self(Arc::new(AtomicU64::new(remaining)))
    }

    pub fn remaining(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    pub fn try_take(&self) -> bool {
        self.0
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |r| r.checked_sub(1))
            .is_ok()
    }
}

/// Frontier admission for one discovered URL.
pub(crate) fn admit(
    frontier: &mut Frontier,
    url: NormalizedUrl,
    class: LinkClass,
    mode: Mode,
    budget: &ExternalBudget,
) -> bool {
    match (class, mode) {
        (LinkClass::Internal, _) => frontier.enqueue(url),
        (LinkClass::External, Mode::Exclusive) => false,
        (LinkClass::External, Mode::Normal) => {
            !frontier.contains(&url) && budget.try_take() && frontier.enqueue(url)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FollowOutcome {
    pub enqueued: usize,
    pub external_seen: usize,
}

/// Enqueue the followable links of `page`. External links are only counted
/// in exclusive mode; in normal mode they draw on `budget`.
pub fn follower(
    page: &ExtractedPage,
    config: &CrawlConfig,
    frontier: &mut Frontier,
    scope: &HostScope,
    budget: &ExternalBudget,
) -> FollowOutcome {
    let mut out = FollowOutcome::default();
    for link in &page.links {
        let class = classify(link, scope);
        if class == LinkClass::External {
            out.external_seen += 1;
        }
        if admit(frontier, link.clone(), class, config.mode, budget) {
            out.enqueued += 1;
        }
    }
    out
}

/// What happened to one dequeued URL.
#[derive(Debug)]
pub(crate) enum Visit {
    RobotsDenied,
    Failed(String),
    Redirect(NormalizedUrl),
    NotHtml,
    Page(ExtractedPage),
}

#[derive(Debug, Default)]
struct Counters {
    pages_fetched: AtomicU64,
    errors: AtomicU64,
    robots_fetches: AtomicU64,
    external_links_seen: AtomicU64,
    fetch_micros: AtomicU64,
}

/// State shared by every worker of one run: HTTP client, politeness gate,
/// robots cache and counters.
#[derive(Debug)]
pub(crate) struct CrawlContext {
    pub config: CrawlConfig,
    pub scope: HostScope,
    fetcher: Fetcher,
    gate: Mutex<HostGate>,
    /// One turn at a time per host, so each wait is measured from the
    /// previous request's real start.
    host_turns: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    robots: Mutex<HashMap<String, Arc<OnceCell<Option<RobotsRules>>>>>,
    counters: Counters,
}

impl CrawlContext {
    pub fn new(config: CrawlConfig) -> Self {
        let fetcher = Fetcher::new(config.timeout, &config.user_agent);
        let gate = Mutex::new(HostGate::new(config.min_delay_per_host));
        Self {
            scope: config.seed.scope(),
            config,
            fetcher,
            gate,
            host_turns: Mutex::new(HashMap::new()),
            robots: Mutex::new(HashMap::new()),
            counters: Counters::default(),
        }
    }

    async fn wait_for_slot(&self, scope: &HostScope) {
        if self.config.min_delay_per_host.is_zero() {
            return;
        }
        let host = scope.authority();
        let turn = self
            .host_turns
            .lock()
            .expect("host turns poisoned")
            .entry(host.clone())
            .or_default()
            .clone();
        let _turn = turn.lock().await;
        let wait = self
            .gate
            .lock()
            .expect("host gate poisoned")
            .acquire_slot(&host, Instant::now());
        if !wait.is_zero() {
            tokio::time::sleep(wait).await;
        }
        self.gate
            .lock()
            .expect("host gate poisoned")
            .mark_started(&host, Instant::now());
    }

    /// robots.txt for `scope`, fetched at most once per run.
    async fn robots_for(&self, scope: &HostScope) -> Option<RobotsRules> {
        let cell = self
            .robots
            .lock()
            .expect("robots cache poisoned")
            .entry(scope.authority())
            .or_default()
            .clone();
        cell.get_or_init(|| async {
            self.wait_for_slot(scope).await;
            self.counters.robots_fetches.fetch_add(1, Ordering::SeqCst);
            self.fetcher.fetch_robots(scope).await
        })
        .await
        .clone()
    }

    pub async fn visit(&self, url: &NormalizedUrl) -> Visit {
        if self.config.mode == Mode::Normal {
            let rules = self.robots_for(&url.scope()).await;
            if !check_robots(rules.as_ref(), url, &self.config.user_agent) {
                tracing::debug!(%url, "disallowed by robots.txt");
                return Visit::RobotsDenied;
            }
        }

        self.wait_for_slot(&url.scope()).await;
        self.counters.pages_fetched.fetch_add(1, Ordering::SeqCst);
        let started = Instant::now();
        let fetched = self.fetcher.fetch_page(url, RedirectMode::Manual).await;
        self.counters
            .fetch_micros
            .fetch_add(started.elapsed().as_micros() as u64, Ordering::SeqCst);

        let res = match fetched {
            Ok(res) => res,
            Err(err) => {
                self.counters.errors.fetch_add(1, Ordering::SeqCst);
                tracing::debug!(%url, %err, "fetch failed");
                return Visit::Failed(err.to_string());
            }
        };
        if res.is_redirect() {
            if let Some(target) = res.location {
                return Visit::Redirect(target);
            }
        }
        if !res.is_success() {
            self.counters.errors.fetch_add(1, Ordering::SeqCst);
            return Visit::Failed(format!("HTTP status {}", res.status));
        }
        if !res.is_html() {
            return Visit::NotHtml;
        }
        Visit::Page(extract_page(&res.body, url, self.config.truncation_fraction))
    }

    pub fn note_external(&self, count: usize) {
        self.counters
            .external_links_seen
            .fetch_add(count as u64, Ordering::SeqCst);
    }

    pub fn stats(&self, pages_stored: u64, wall_time: Duration) -> CrawlStats {
        let pages_fetched = self.counters.pages_fetched.load(Ordering::SeqCst);
        let micros = self.counters.fetch_micros.load(Ordering::SeqCst);
        CrawlStats {
            pages_fetched,
            pages_stored,
            errors: self.counters.errors.load(Ordering::SeqCst),
            robots_fetches: self.counters.robots_fetches.load(Ordering::SeqCst),
            external_links_seen: self.counters.external_links_seen.load(Ordering::SeqCst),
            wall_time,
            per_page_mean: if pages_fetched == 0 {
                Duration::ZERO
            } else {
                Duration::from_micros(micros / pages_fetched)
            },
        }
    }
}

/// Crawl from `config.seed` with a single sequential worker.
pub async fn crawl_site(config: &CrawlConfig) -> Result<CrawlResult, CrawlError> {
    config.validate()?;
    let started = Instant::now();
    let ctx = CrawlContext::new(config.clone());
    let budget = ExternalBudget::new(config.initial_budget());
    let mut frontier = Frontier::new();
    let mut records: Vec<CrawlRecord> = Vec::new();
    frontier.enqueue(config.seed.clone());

    while let Some(url) = frontier.dequeue() {
        let is_seed = url == config.seed;
        match ctx.visit(&url).await {
            Visit::Failed(reason) if is_seed => {
                return Err(CrawlError::SeedUnreachable {
                    url: url.to_string(),
                    reason,
                });
            }
            Visit::Failed(_) | Visit::RobotsDenied | Visit::NotHtml => {}
            Visit::Redirect(target) => {
                let class = classify(&target, &ctx.scope);
                admit(&mut frontier, target, class, config.mode, &budget);
            }
            Visit::Page(page) => {
                let n = records.len() as u64 + 1;
                records.push(make_record(&page, n, n));
                let followed = follower(&page, config, &mut frontier, &ctx.scope, &budget);
                ctx.note_external(followed.external_seen);
                if records.len() >= config.max_pages {
                    break;
                }
            }
        }
    }

    let stats = ctx.stats(records.len() as u64, started.elapsed());
    Ok(CrawlResult { records, stats })
}
