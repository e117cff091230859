use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use exclusive_crawler::bench::{save_comparison_csv, write_comparison_csv};
use exclusive_crawler::fetch::DEFAULT_USER_AGENT;
use exclusive_crawler::{
    generate_fixture, run_benchmark, run_managed_crawl, serve_fixture, write_csv, write_jsonl, CrawlConfig,
    FixtureSpec, Fraction, Mode, NormalizedUrl,
};

#[derive(Parser)]
#[command(name = "excrawl", version, about = "Site-scoped exclusive crawler and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Crawl a site and write its records.
    Crawl(CrawlArgs),
    /// Generate or serve a fixture site.
    #[command(subcommand)]
    Fixture(FixtureCommand),
    /// Compare exclusive and normal crawls on a generated local site.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exclusive,
    Normal,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exclusive => Mode::Exclusive,
            ModeArg::Normal => Mode::Normal,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Jsonl,
    Csv,
    Both,
}

#[derive(Args)]
struct CrawlArgs {
    #[arg(long, value_enum, default_value = "exclusive")]
    mode: ModeArg,
    #[arg(long)]
    seed_url: NormalizedUrl,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    workers: u64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    max_pages: u64,
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 100)]
    delay_ms: u64,
    /// Fraction of each page's text to keep, e.g. `1/3`, `0.5` or `1`.
    #[arg(long, default_value = "1/3")]
    truncate: Fraction,
    #[arg(long, default_value_t = 10)]
    external_budget: u64,
    #[arg(long, default_value = DEFAULT_USER_AGENT)]
    user_agent: String,
    /// Output path; `.jsonl` / `.csv` is appended per format.
    #[arg(long, default_value = "crawl")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: Format,
}

#[derive(Subcommand)]
enum FixtureCommand {
    /// Write a deterministic site and its manifest.
    Gen(GenArgs),
    /// Serve a directory with request logging until interrupted.
    Serve(ServeArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 20)]
    pages: usize,
    #[arg(long, default_value_t = 3)]
    links_per_page: usize,
    #[arg(long, default_value_t = 0.0)]
    external_fraction: f64,
    #[arg(long, default_value_t = 0)]
    dead_links: usize,
    #[arg(long, default_value_t = 0)]
    private_pages: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "http://127.0.0.1:8081")]
    external_origin: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value_t = 0)]
    latency_ms: u64,
    /// File served at /robots.txt (404 when omitted).
    #[arg(long)]
    robots: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 20)]
    pages: usize,
    #[arg(long, default_value_t = 3)]
    links_per_page: usize,
    #[arg(long, default_value_t = 0.25)]
    external_fraction: f64,
    #[arg(long, default_value_t = 50)]
    latency_ms: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    workers: u64,
    #[arg(long, default_value_t = 10)]
    external_budget: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Comparison CSV path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn with_extension(base: &Path, ext: &str) -> PathBuf {
    match base.extension().and_then(|e| e.to_str()) {
        Some("jsonl" | "csv") => base.with_extension(ext),
        _ => {
            let mut s = base.as_os_str().to_owned();
            s.push(".");
            s.push(ext);
            PathBuf::from(s)
        }
    }
}

async fn crawl(args: CrawlArgs) -> Result<()> {
    let config = CrawlConfig {
        mode: args.mode.into(),
        seed: args.seed_url,
        max_pages: args.max_pages as usize,
        timeout: Duration::from_millis(args.timeout_ms),
        user_agent: args.user_agent,
        truncation_fraction: args.truncate,
        min_delay_per_host: Duration::from_millis(args.delay_ms),
        workers: args.workers as usize,
        external_page_budget: args.external_budget,
    };
    let result = run_managed_crawl(&config).await?;

    if matches!(args.format, Format::Jsonl | Format::Both) {
        let path = with_extension(&args.out, "jsonl");
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_jsonl(&result.records, BufWriter::new(file))?;
        println!("wrote {}", path.display());
    }
    if matches!(args.format, Format::Csv | Format::Both) {
        let path = with_extension(&args.out, "csv");
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_csv(&result.records, BufWriter::new(file))?;
        println!("wrote {}", path.display());
    }
    let s = &result.stats;
    println!(
        "{} crawl: {} stored, {} fetched, {} errors, {} robots.txt, {} external links seen, {:.1?} wall, {:.1?} per fetch",
        config.mode.label(),
        s.pages_stored,
        s.pages_fetched,
        s.errors,
        s.robots_fetches,
        s.external_links_seen,
        s.wall_time,
        s.per_page_mean
    );
    Ok(())
}

fn fixture_gen(args: GenArgs) -> Result<()> {
    let spec = FixtureSpec {
        pages: args.pages,
        links_per_page: args.links_per_page,
        external_fraction: args.external_fraction,
        dead_link_count: args.dead_links,
        seed: args.seed,
        private_pages: args.private_pages,
        external_origin: args.external_origin,
        ..FixtureSpec::default()
    };
    let manifest = generate_fixture(&spec, &args.out)?;
    println!(
        "generated {} pages ({} internal, {} external links) in {}",
        manifest.pages.len(),
        manifest.internal_links(),
        manifest.external_links(),
        args.out.display()
    );
    Ok(())
}

async fn fixture_serve(args: ServeArgs) -> Result<()> {
    let robots = match &args.robots {
        Some(p) => Some(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let server = serve_fixture(&args.dir, args.port, Duration::from_millis(args.latency_ms), robots).await?;
    println!("serving {} at {}", args.dir.display(), server.origin());
    std::io::stdout().flush()?;
    tokio::signal::ctrl_c().await?;
    println!("{} requests served", server.log().len());
    Ok(())
}

async fn bench(args: BenchArgs) -> Result<()> {
    let spec = FixtureSpec {
        pages: args.pages,
        links_per_page: args.links_per_page,
        external_fraction: args.external_fraction,
        seed: args.seed,
        latency_ms: args.latency_ms,
        robots_body: Some("User-agent: *\nDisallow: /private/\n".to_string()),
        ..FixtureSpec::default()
    };
    let placeholder = NormalizedUrl::parse("http://127.0.0.1/").expect("static url");
    let config = CrawlConfig::new(Mode::Exclusive, placeholder)
        .with_workers(args.workers as usize)
        .with_external_budget(args.external_budget)
        .with_max_pages(usize::MAX);
    let outcome = run_benchmark(&spec, &config).await?;
    match &args.out {
        Some(path) => {
            save_comparison_csv(&outcome, path).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => {
            let (e, n) = outcome.reports();
            write_comparison_csv([e, n], std::io::stdout().lock())?;
        }
    }
    let (e, n) = outcome.reports();
    println!(
        "exclusive/normal wall time ratio: {:.2}",
        e.wall_time.as_secs_f64() / n.wall_time.as_secs_f64()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };
    let result = runtime.block_on(async {
        match cli.command {
            Command::Crawl(args) => crawl(args).await,
            Command::Fixture(FixtureCommand::Gen(args)) => fixture_gen(args),
            Command::Fixture(FixtureCommand::Serve(args)) => fixture_serve(args).await,
            Command::Bench(args) => bench(args).await,
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
