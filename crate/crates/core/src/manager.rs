//! Multi-spider crawl manager.
//!
//! URLs are sharded over workers with a stable FNV-1a 64 hash of their
//! rendered form, so a URL can only ever be owned by one worker and each
//! worker's private frontier is enough to guarantee no overlap. Discovered
//! links are routed to the owner's inbox. A global in-flight counter
//! (incremented on route, decremented once a URL is rejected or fully
//! processed) detects quiescence. All requests pass one shared per-host gate.

use std::collections::HashMap;
use std::hash::Hasher;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use fnv::FnvHasher;
use tokio::sync::{mpsc, watch};

use crate::frontier::{classify, Frontier, LinkClass, NormalizedUrl};
use crate::spider::{
    admit, crawl_site, CrawlConfig, CrawlContext, CrawlError, CrawlResult, ExternalBudget, Mode, Visit,
};
use crate::store::{make_record, CrawlRecord};

/// Owner worker of `url`: FNV-1a 64 over the URL bytes, modulo `n_workers`.
pub fn assign(url: &NormalizedUrl, n_workers: usize) -> usize {
    assert!(n_workers >= 1, "n_workers must be positive");
    let mut hasher = FnvHasher::default();
    hasher.write(url.as_str().as_bytes());
    (hasher.finish() % n_workers as u64) as usize
}

/// Per-host request spacing.
#[derive(Debug, Clone)]
pub struct HostGate {
    min_delay: Duration,
    last_grant: HashMap<String, Instant>,
}

impl HostGate {
    pub fn new(min_delay: Duration) -> Self {
        Self {
            min_delay,
            last_grant: HashMap::new(),
        }
    }

    pub fn min_delay(&self) -> Duration {
        self.min_delay
    }

    /// Reserve the next slot for `host` and return how long the caller must
    /// wait from `now` before using it.
    pub fn acquire_slot(&mut self, host: &str, now: Instant) -> Duration {
        let granted = match self.last_grant.get(host) {
            Some(&last) => (last + self.min_delay).max(now),
            None => now,
        };
        self.last_grant.insert(host.to_string(), granted);
        granted - now
    }

    /// Move `host`'s last grant forward to when the request actually went out.
    pub fn mark_started(&mut self, host: &str, at: Instant) {
        let entry = self.last_grant.entry(host.to_string()).or_insert(at);
        *entry = (*entry).max(at);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub mode: String,
    pub pages_stored: u64,
    pub wall_time: Duration,
    pub per_page_mean: Duration,
    pub requests_total: u64,
}

impl BenchReport {
    pub fn new(mode: &str, pages_stored: u64, wall_time: Duration, requests_total: u64) -> Self {
        let per_page_mean = if pages_stored > 0 {
            wall_time / pages_stored as u32
        } else {
            Duration::ZERO
        };
        Self {
            mode: mode.to_string(),
            pages_stored,
            wall_time,
            per_page_mean,
            requests_total,
        }
    }
}

struct Shared {
    ctx: CrawlContext,
    inboxes: Vec<mpsc::UnboundedSender<NormalizedUrl>>,
    in_flight: AtomicUsize,
    stored: AtomicU64,
    budget: ExternalBudget,
    done: watch::Sender<bool>,
    seed_failure: std::sync::Mutex<Option<String>>,
}

impl Shared {
    fn route(&self, url: NormalizedUrl) {
        let owner = assign(&url, self.inboxes.len());
        self.in_flight.fetch_add(1, Ordering::SeqCst);
        if self.inboxes[owner].send(url).is_err() {
            // receiver gone: the run is shutting down
            self.finish_one();
        }
    }

    fn finish_one(&self) {
        if self.in_flight.fetch_sub(1, Ordering::SeqCst) == 1 {
            self.done.send_replace(true);
        }
    }

    /// Forward a discovered link unless this run can never admit it.
    fn offer(&self, url: NormalizedUrl) {
        if classify(&url, &self.ctx.scope) == LinkClass::External && self.budget.remaining() == 0 {
            return;
        }
        self.route(url);
    }

    /// Claim the next global record id, or `None` once `max_pages` is reached.
    fn claim_id(&self) -> Option<u64> {
        let max = self.ctx.config.max_pages as u64;
        let claimed = self
            .stored
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |s| (s < max).then_some(s + 1))
            .ok()?
            + 1;
        if claimed == max {
            self.done.send_replace(true);
        }
        Some(claimed)
    }
}

struct Worker {
    shared: Arc<Shared>,
    inbox: mpsc::UnboundedReceiver<NormalizedUrl>,
    frontier: Frontier,
    records: Vec<CrawlRecord>,
}

impl Worker {
    fn accept(&mut self, url: NormalizedUrl) {
        let shared = &self.shared;
        let class = classify(&url, &shared.ctx.scope);
        if admit(&mut self.frontier, url, class, shared.ctx.config.mode, &shared.budget) {
            // counted until processed
            return;
        }
        shared.finish_one();
    }

    async fn run(mut self) -> Vec<CrawlRecord> {
        let mut done = self.shared.done.subscribe();
        loop {
            if *done.borrow() {
                break;
            }
            while let Ok(url) = self.inbox.try_recv() {
                self.accept(url);
            }
            if let Some(url) = self.frontier.dequeue() {
                self.process(url).await;
                self.shared.finish_one();
                continue;
            }
            tokio::select! {
                msg = self.inbox.recv() => match msg {
                    Some(url) => self.accept(url),
                    None => break,
                },
                _ = done.changed() => {}
            }
        }
        self.records
    }

    async fn process(&mut self, url: NormalizedUrl) {
        let shared = Arc::clone(&self.shared);
        let is_seed = url == shared.ctx.config.seed;
        match shared.ctx.visit(&url).await {
            Visit::Failed(reason) if is_seed => {
                *shared.seed_failure.lock().expect("seed flag poisoned") = Some(reason);
            }
            Visit::Failed(_) | Visit::RobotsDenied | Visit::NotHtml => {}
            Visit::Redirect(target) => shared.offer(target),
            Visit::Page(page) => {
                let Some(id) = shared.claim_id() else {
                    return;
                };
                let local = self.records.len() as u64 + 1;
                self.records.push(make_record(&page, id, local));
                let mut external = 0;
                for link in page.links {
                    if classify(&link, &shared.ctx.scope) == LinkClass::External {
                        external += 1;
                        if shared.ctx.config.mode == Mode::Exclusive {
                            continue;
                        }
                    }
                    shared.offer(link);
                }
                shared.ctx.note_external(external);
            }
        }
    }
}

/// Crawl with `config.workers` concurrent spiders.
///
/// Records are returned in global storage order: `id` is that order and
/// `page_number` is the 1-based position within the storing worker.
pub async fn run_managed_crawl(config: &CrawlConfig) -> Result<CrawlResult, CrawlError> {
    config.validate()?;
    if config.workers == 1 {
        return crawl_site(config).await;
    }
    let started = Instant::now();
    let (done, _) = watch::channel(false);
    let mut receivers = Vec::with_capacity(config.workers);
    let mut senders = Vec::with_capacity(config.workers);
    for _ in 0..config.workers {
        let (tx, rx) = mpsc::unbounded_channel();
        senders.push(tx);
        receivers.push(rx);
    }
    let shared = Arc::new(Shared {
        ctx: CrawlContext::new(config.clone()),
        inboxes: senders,
        in_flight: AtomicUsize::new(0),
        stored: AtomicU64::new(0),
        budget: ExternalBudget::new(config.initial_budget()),
        done,
        seed_failure: std::sync::Mutex::new(None),
    });
    shared.route(config.seed.clone());

    let handles: Vec<_> = receivers
        .into_iter()
        .map(|inbox| {
            let worker = Worker {
                shared: Arc::clone(&shared),
                inbox,
                frontier: Frontier::new(),
                records: Vec::new(),
            };
            tokio::spawn(worker.run())
        })
        .collect();

    let mut records = Vec::new();
    let mut panic_reason = None;
    for handle in handles {
        match handle.await {
            Ok(mut r) => records.append(&mut r),
            Err(err) => {
                shared.done.send_replace(true);
                panic_reason.get_or_insert_with(|| err.to_string());
            }
        }
    }
    records.sort_by_key(|r| r.id);
    let stats = shared.ctx.stats(records.len() as u64, started.elapsed());
    let result = CrawlResult { records, stats };

    if let Some(reason) = panic_reason {
        return Err(CrawlError::WorkerPanic {
            reason,
            partial: Box::new(result),
        });
    }
    if let Some(reason) = shared.seed_failure.lock().expect("seed flag poisoned").take() {
        return Err(CrawlError::SeedUnreachable {
            url: config.seed.to_string(),
            reason,
        });
    }
    Ok(result)
}
