//! Exclusive vs. normal crawl comparison on a hermetic two-host fixture.

use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::fixture::{generate_fixture, serve_fixture, FixtureError, FixtureServer, FixtureSpec, Manifest};
use crate::frontier::NormalizedUrl;
use crate::manager::{run_managed_crawl, BenchReport};
use crate::spider::{CrawlConfig, CrawlError, CrawlResult, Mode};

pub const COMPARISON_HEADER: &str = "mode,pages,wall_ms,per_page_ms,requests";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error(transparent)]
    Crawl(#[from] CrawlError),
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug)]
pub struct ModeRun {
    pub report: BenchReport,
    pub result: CrawlResult,
    /// Requests seen by the site host during this run: (path, status).
    pub site_requests: Vec<(String, u16)>,
    pub external_requests: Vec<(String, u16)>,
}

#[derive(Debug)]
pub struct BenchOutcome {
    pub manifest: Manifest,
    pub site_origin: String,
    pub external_origin: String,
    pub exclusive: ModeRun,
    pub normal: ModeRun,
}

impl BenchOutcome {
    pub fn reports(&self) -> (&BenchReport, &BenchReport) {
        (&self.exclusive.report, &self.normal.report)
    }
}

/// Generate the fixture (plus a second host for its external links), serve
/// both, and crawl once per mode with otherwise identical settings.
///
/// `config.seed` and `config.mode` are replaced; every other field is used
/// as given.
pub async fn run_benchmark(spec: &FixtureSpec, config: &CrawlConfig) -> Result<BenchOutcome, BenchError> {
    let work = tempfile::tempdir()?;
    let site_dir = work.path().join("site");
    let external_dir = work.path().join("external");

    let external = serve_fixture(&external_dir, 0, spec.latency(), spec.robots_body.clone()).await?;
    let external_spec = FixtureSpec {
        pages: spec.pages,
        links_per_page: 1,
        external_fraction: 0.0,
        dead_link_count: 0,
        seed: spec.seed.wrapping_add(1),
        private_pages: 0,
        ..spec.clone()
    };
    generate_fixture(&external_spec, &external_dir)?;

    let site_spec = FixtureSpec {
        external_origin: external.origin(),
        ..spec.clone()
    };
    let manifest = generate_fixture(&site_spec, &site_dir)?;
    let site = serve_fixture(&site_dir, 0, spec.latency(), spec.robots_body.clone()).await?;

    let seed = NormalizedUrl::parse(&site.url(&manifest.pages[0].path)).expect("fixture url is valid");
    let base = CrawlConfig { seed, ..config.clone() };

    let exclusive = run_mode(&base, Mode::Exclusive, &site, &external).await?;
    let normal = run_mode(&base, Mode::Normal, &site, &external).await?;

    Ok(BenchOutcome {
        manifest,
        site_origin: site.origin(),
        external_origin: external.origin(),
        exclusive,
        normal,
    })
}

async fn run_mode(
    base: &CrawlConfig,
    mode: Mode,
    site: &FixtureServer,
    external: &FixtureServer,
) -> Result<ModeRun, BenchError> {
    site.log().clear();
    external.log().clear();
    let config = base.clone().with_mode(mode);
    let result = run_managed_crawl(&config).await?;
    let requests = |s: &FixtureServer| -> Vec<(String, u16)> {
        s.log().entries().into_iter().map(|e| (e.path, e.status)).collect()
    };
    let site_requests = requests(site);
    let external_requests = requests(external);
    let report = BenchReport::new(
        mode.label(),
        result.stats.pages_stored,
        result.stats.wall_time,
        (site_requests.len() + external_requests.len()) as u64,
    );
    tracing::info!(mode = mode.label(), pages = report.pages_stored, wall = ?report.wall_time, "benchmark run finished");
    Ok(ModeRun {
        report,
        result,
        site_requests,
        external_requests,
    })
}

fn millis(d: std::time::Duration) -> String {
    format!("{:.3}", d.as_secs_f64() * 1000.0)
}

pub fn write_comparison_csv<'a, W, I>(reports: I, mut out: W) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a BenchReport>,
{
    writeln!(out, "{COMPARISON_HEADER}")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.mode,
            r.pages_stored,
            millis(r.wall_time),
            millis(r.per_page_mean),
            r.requests_total
        )?;
    }
    out.flush()
}

pub fn save_comparison_csv(outcome: &BenchOutcome, path: &Path) -> io::Result<()> {
    let file = std::fs::File::create(path)?;
    let (exclusive, normal) = outcome.reports();
    write_comparison_csv([exclusive, normal], io::BufWriter::new(file))
}
