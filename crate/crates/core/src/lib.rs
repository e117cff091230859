//! Site-scoped ("exclusive") web crawler with a baseline "normal" mode.
//!
//! The crawl pipeline is dequeue → fetch → parse → save → follow. An
//! exclusive crawl stays on the seed's (scheme, host, port) and never reads
//! robots.txt; a normal crawl honours robots.txt and follows external links
//! within a budget. [`manager::run_managed_crawl`] runs several spiders
//! over hash-sharded queues; [`bench::run_benchmark`] compares both modes
//! against a generated local site.

pub mod bench;
pub mod fetch;
pub mod fixture;
pub mod frontier;
pub mod manager;
pub mod parser;
pub mod spider;
pub mod store;

pub use bench::{run_benchmark, BenchOutcome};
pub use fetch::{check_robots, fetch_page, fetch_robots, FetchError, FetchResult, Fetcher, RobotsRules};
pub use fixture::{generate_fixture, serve_fixture, FixtureServer, FixtureSpec, Manifest, RequestLog};
pub use frontier::{classify, normalize, Frontier, HostScope, LinkClass, NormalizedUrl, UrlError};
pub use manager::{assign, run_managed_crawl, BenchReport, HostGate};
pub use parser::{extract_page, split_keywords, truncate_component, ExtractedPage, Fraction};
pub use spider::{crawl_site, follower, CrawlConfig, CrawlError, CrawlResult, CrawlStats, Mode};
pub use store::{make_record, read_records, write_csv, write_jsonl, CrawlRecord, StoreError};
