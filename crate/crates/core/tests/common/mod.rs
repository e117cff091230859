#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::time::Duration;

use exclusive_crawler::fixture::{FixtureServer, ManifestPage};
use exclusive_crawler::{generate_fixture, serve_fixture, CrawlResult, FixtureSpec, Manifest};

pub struct Site {
    pub dir: tempfile::TempDir,
    pub server: FixtureServer,
    pub manifest: Manifest,
}

impl Site {
    pub fn seed(&self) -> exclusive_crawler::NormalizedUrl {
        exclusive_crawler::NormalizedUrl::parse(&self.server.url(&self.manifest.pages[0].path)).unwrap()
    }

    /// Requested paths (query included) with their statuses.
    pub fn requests(&self) -> Vec<(String, u16)> {
        self.server.log().entries().into_iter().map(|e| (e.path, e.status)).collect()
    }
}

/// Generate `spec` into a temp dir and serve it.
pub async fn site(spec: FixtureSpec) -> Site {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_fixture(&spec, dir.path()).unwrap();
    let server = serve_fixture(dir.path(), 0, spec.latency(), spec.robots_body.clone()).await.unwrap();
    Site { dir, server, manifest }
}

/// A site whose external links point at a second served fixture.
pub async fn two_host_site(spec: FixtureSpec) -> (Site, Site) {
    let ext_dir = tempfile::tempdir().unwrap();
    let ext_server = serve_fixture(ext_dir.path(), 0, spec.latency(), spec.robots_body.clone()).await.unwrap();
    let ext_spec = FixtureSpec {
        pages: spec.pages,
        links_per_page: 1,
        external_fraction: 0.0,
        dead_link_count: 0,
        private_pages: 0,
        seed: spec.seed + 1000,
        ..spec.clone()
    };
    let ext_manifest = generate_fixture(&ext_spec, ext_dir.path()).unwrap();
    let main = site(FixtureSpec { external_origin: ext_server.origin(), ..spec }).await;
    (main, Site { dir: ext_dir, server: ext_server, manifest: ext_manifest })
}

/// Paths reachable from page 1 through internal links that the fixture serves
/// with 200, computed from the manifest alone.
pub fn bfs_oracle(manifest: &Manifest) -> BTreeSet<String> {
    let pages: HashMap<&str, &ManifestPage> = manifest.pages.iter().map(|p| (p.path.as_str(), p)).collect();
    let start = manifest.pages[0].path.as_str();
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(path) = queue.pop_front() {
        for next in &pages[path].internal {
            if pages.contains_key(next.as_str()) && seen.insert(next.as_str()) {
                queue.push_back(next.as_str());
            }
        }
    }
    seen.into_iter().map(str::to_string).collect()
}

/// Stored record URLs on `origin`, as paths.
pub fn stored_paths(result: &CrawlResult, origin: &str) -> BTreeSet<String> {
    result
        .records
        .iter()
        .filter_map(|r| r.url.strip_prefix(origin).map(str::to_string))
        .collect()
}

pub fn stored_urls(result: &CrawlResult) -> BTreeSet<String> {
    result.records.iter().map(|r| r.url.clone()).collect()
}

/// Paths requested more than once.
pub fn repeated_paths(requests: &[(String, u16)]) -> Vec<String> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for (p, _) in requests {
        *counts.entry(p.as_str()).or_default() += 1;
    }
    let mut dups: Vec<String> = counts.into_iter().filter(|(_, c)| *c > 1).map(|(p, _)| p.to_string()).collect();
    dups.sort();
    dups
}

pub const NO_DELAY: Duration = Duration::ZERO;
