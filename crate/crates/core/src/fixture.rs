//! Deterministic fixture sites and a local HTTP server that logs every
//! request. Used by the tests and by the benchmark.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::extract::{Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::Response;
use axum::Router;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("invalid fixture spec: {0}")]
    InvalidSpec(String),
    #[error("i/o failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("port {0} is already in use")]
    PortInUse(u16),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub pages: usize,
    /// Extra links per page on top of the spanning tree that keeps every
    /// page reachable from page 1.
    pub links_per_page: usize,
    /// Share of all live links that point at `external_origin`.
    pub external_fraction: f64,
    pub dead_link_count: usize,
    pub seed: u64,
    pub latency_ms: u64,
    pub robots_body: Option<String>,
    /// The last `private_pages` pages live under `/private/`.
    pub private_pages: usize,
    pub external_origin: String,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            pages: 20,
            links_per_page: 3,
            external_fraction: 0.0,
            dead_link_count: 0,
            seed: 7,
            latency_ms: 0,
            robots_body: None,
            private_pages: 0,
            external_origin: "http://127.0.0.1:8081".to_string(),
        }
    }
}

impl FixtureSpec {
    pub fn latency(&self) -> Duration {
        Duration::from_millis(self.latency_ms)
    }

    fn validate(&self) -> Result<(), FixtureError> {
        let bad = |m: &str| Err(FixtureError::InvalidSpec(m.to_string()));
        if self.pages == 0 {
            return bad("pages must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.external_fraction) {
            return bad("external_fraction must lie in [0, 1]");
        }
        if self.private_pages >= self.pages {
            return bad("private_pages must leave page 1 public");
        }
        if self.external_link_count() > self.pages * self.links_per_page {
            return bad("external_fraction needs more link slots than links_per_page provides");
        }
        Ok(())
    }

    /// Spanning-tree links plus the per-page extras; dead links excluded.
    pub fn total_links(&self) -> usize {
        self.pages - 1 + self.pages * self.links_per_page
    }

    pub fn external_link_count(&self) -> usize {
        (self.external_fraction * self.total_links() as f64).round() as usize
    }

    pub fn page_path(&self, index: usize) -> String {
        if index > 0 && index >= self.pages - self.private_pages {
            format!("/private/p{}.html", index + 1)
        } else {
            format!("/p{}.html", index + 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestPage {
    pub path: String,
    pub title: String,
    pub internal: Vec<String>,
    pub external: Vec<String>,
    pub dead: Vec<String>,
    pub images: Vec<String>,
}

/// Ground truth for a generated site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: FixtureSpec,
    pub pages: Vec<ManifestPage>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, FixtureError> {
        let bytes = std::fs::read(dir.join(MANIFEST_FILE))?;
        serde_json::from_slice(&bytes).map_err(|e| FixtureError::IoFailure(e.into()))
    }

    pub fn external_links(&self) -> usize {
        self.pages.iter().map(|p| p.external.len()).sum()
    }

    pub fn internal_links(&self) -> usize {
        self.pages.iter().map(|p| p.internal.len()).sum()
    }
}

const WORDS: &[&str] = &[
    "crawler", "spider", "index", "search", "engine", "query", "table", "column", "record",
    "webmaster", "host", "page", "link", "title", "keyword", "update", "database", "storage",
    "parser", "queue", "robot", "manager", "thread", "fetch", "result", "archive", "site",
    "content", "meta", "anchor",
];

fn words(rng: &mut ChaCha8Rng, count: usize) -> Vec<&'static str> {
    (0..count).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect()
}

/// Render an internal path in one of several equivalent spellings.
fn spell_internal(rng: &mut ChaCha8Rng, path: &str) -> String {
    match rng.random_range(0..3) {
        0 => path.to_string(),
        1 => format!("{path}#section-{}", rng.random_range(1..4)),
        _ => format!("/.{path}"),
    }
}

/// Write `p1.html..pN.html` and `manifest.json` into `out_dir`.
pub fn generate_fixture(spec: &FixtureSpec, out_dir: &Path) -> Result<Manifest, FixtureError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.pages;
    let paths: Vec<String> = (0..n).map(|i| spec.page_path(i)).collect();
    let origin = spec.external_origin.trim_end_matches('/');

    let mut pages: Vec<ManifestPage> = paths
        .iter()
        .enumerate()
        .map(|(i, path)| ManifestPage {
            path: path.clone(),
            title: format!("Fixture Page {}", i + 1),
            internal: Vec::new(),
            external: Vec::new(),
            dead: Vec::new(),
            images: (0..rng.random_range(0..=2))
                .map(|j| format!("/img/p{}-{}.png", i + 1, j + 1))
                .collect(),
        })
        .collect();

    for child in 1..n {
        let parent = rng.random_range(0..child);
        pages[parent].internal.push(paths[child].clone());
    }

    let mut slots: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, spec.links_per_page)).collect();
    slots.shuffle(&mut rng);
    let external = spec.external_link_count();
    for (k, &source) in slots.iter().enumerate() {
        if k < external {
            let target = rng.random_range(1..=n);
            pages[source].external.push(format!("{origin}/p{target}.html"));
        } else {
            let target = rng.random_range(0..n);
            pages[source].internal.push(paths[target].clone());
        }
    }
    for d in 0..spec.dead_link_count {
        let source = rng.random_range(0..n);
        pages[source].dead.push(format!("/missing/d{}.html", d + 1));
    }

    std::fs::create_dir_all(out_dir)?;
    if spec.private_pages > 0 {
        std::fs::create_dir_all(out_dir.join("private"))?;
    }
    for (i, page) in pages.iter().enumerate() {
        let html = render_page(&mut rng, i, page);
        std::fs::write(out_dir.join(page.path.trim_start_matches('/')), html)?;
    }

    let manifest = Manifest {
        spec: spec.clone(),
        pages,
    };
    let mut json = serde_json::to_string_pretty(&manifest).map_err(io::Error::from)?;
    json.push('\n');
    std::fs::write(out_dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

fn render_page(rng: &mut ChaCha8Rng, index: usize, page: &ManifestPage) -> String {
    let mut anchors: Vec<String> = page
        .internal
        .iter()
        .map(|p| spell_internal(rng, p))
        .chain(page.external.iter().cloned())
        .chain(page.dead.iter().cloned())
        .collect();
    anchors.shuffle(rng);

    let keywords = words(rng, 3).join(", ");
    let topic = words(rng, 2);
    let mut html = String::new();
    let _ = writeln!(html, "<!DOCTYPE html>\n<html>\n<head>");
    let _ = writeln!(html, "<title>{}</title>", page.title);
    let _ = writeln!(
        html,
        "<meta name=\"description\" content=\"Fixture page {} about {} and {}\">",
        index + 1,
        topic[0],
        topic[1]
    );
    let _ = writeln!(html, "<meta name=\"keywords\" content=\"{keywords}\">");
    let _ = writeln!(html, "<style>body {{ font-family: sans-serif; }}</style>");
    let _ = writeln!(html, "</head>\n<body>\n<h1>{}</h1>", page.title);
    for _ in 0..rng.random_range(1..=3) {
        let len = rng.random_range(12..40);
        let _ = writeln!(html, "<p>{}</p>", words(rng, len).join(" "));
    }
    for img in &page.images {
        let _ = writeln!(html, "<img src=\"{img}\" alt=\"figure\">");
    }
    let _ = writeln!(html, "<ul>");
    for (k, href) in anchors.iter().enumerate() {
        let _ = writeln!(html, "<li><a href=\"{href}\">link {}</a></li>", k + 1);
    }
    let _ = writeln!(html, "</ul>\n<script>var visits = 0;</script>\n</body>\n</html>");
    html
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestLogEntry {
    pub at: Instant,
    pub method: String,
    /// Path plus query as received.
    pub path: String,
    pub status: u16,
    pub user_agent: String,
}

/// Append-only request log with monotone timestamps.
#[derive(Debug, Clone, Default)]
pub struct RequestLog(Arc<Mutex<Vec<RequestLogEntry>>>);

impl RequestLog {
    fn append(&self, method: String, path: String, status: u16, user_agent: String) {
        let mut entries = self.0.lock().expect("request log poisoned");
        entries.push(RequestLogEntry {
            at: Instant::now(),
            method,
            path,
            status,
            user_agent,
        });
    }

    pub fn entries(&self) -> Vec<RequestLogEntry> {
        self.0.lock().expect("request log poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.0.lock().expect("request log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Start a fresh measurement window.
    pub fn clear(&self) {
        self.0.lock().expect("request log poisoned").clear();
    }

    pub fn count_path(&self, path: &str) -> usize {
        self.0
            .lock()
            .expect("request log poisoned")
            .iter()
            .filter(|e| e.path == path)
            .count()
    }
}

struct ServerState {
    dir: PathBuf,
    latency: Duration,
    robots_body: Option<String>,
    redirects: Mutex<HashMap<String, String>>,
    log: RequestLog,
}

/// A running fixture server. Stops when dropped.
pub struct FixtureServer {
    addr: SocketAddr,
    state: Arc<ServerState>,
    task: JoinHandle<()>,
}

impl FixtureServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `http://127.0.0.1:<port>`
    pub fn origin(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.origin(), path)
    }

    pub fn log(&self) -> &RequestLog {
        &self.state.log
    }

    /// Answer `from` with a 302 to `to` (a path or absolute URL).
    pub fn redirect(&self, from: &str, to: &str) {
        self.state
            .redirects
            .lock()
            .expect("redirect table poisoned")
            .insert(from.to_string(), to.to_string());
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Serve `dir` on 127.0.0.1:`port` (0 picks a free port).
pub async fn serve_fixture(
    dir: &Path,
    port: u16,
    latency: Duration,
    robots_body: Option<String>,
) -> Result<FixtureServer, FixtureError> {
    let listener = TcpListener::bind(("127.0.0.1", port)).await.map_err(|e| {
        if e.kind() == io::ErrorKind::AddrInUse {
            FixtureError::PortInUse(port)
        } else {
            FixtureError::IoFailure(e)
        }
    })?;
    let addr = listener.local_addr()?;
    let state = Arc::new(ServerState {
        dir: dir.to_path_buf(),
        latency,
        robots_body,
        redirects: Mutex::new(HashMap::new()),
        log: RequestLog::default(),
    });
    let app = Router::new().fallback(handle).with_state(Arc::clone(&state));
    let task = tokio::spawn(async move {
        if let Err(err) = axum::serve(listener, app).await {
            tracing::warn!(%err, "fixture server stopped");
        }
    });
    Ok(FixtureServer { addr, state, task })
}

fn content_type_for(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html" | "htm") => "text/html; charset=utf-8",
        Some("json") => "application/json",
        Some("txt") => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

/// Map a request path onto a file below `dir`, refusing traversal.
fn resolve(dir: &Path, path: &str) -> Option<PathBuf> {
    let rel = Path::new(path.trim_start_matches('/'));
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return None;
    }
    Some(dir.join(rel))
}

async fn handle(State(state): State<Arc<ServerState>>, request: Request) -> Response {
    let method = request.method().to_string();
    let path = request
        .uri()
        .path_and_query()
        .map(|pq| pq.as_str().to_string())
        .unwrap_or_else(|| "/".to_string());
    let user_agent = request
        .headers()
        .get(header::USER_AGENT)
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default()
        .to_string();
    let bare_path = request.uri().path().to_string();

    let redirect = state
        .redirects
        .lock()
        .expect("redirect table poisoned")
        .get(&bare_path)
        .cloned();
    let (status, content_type, body, location): (StatusCode, &str, Vec<u8>, Option<String>) =
        if let Some(to) = redirect {
            (StatusCode::FOUND, "text/plain", Vec::new(), Some(to))
        } else if bare_path == "/robots.txt" {
            match &state.robots_body {
                Some(b) => (StatusCode::OK, "text/plain; charset=utf-8", b.clone().into_bytes(), None),
                None => (StatusCode::NOT_FOUND, "text/plain", b"not found".to_vec(), None),
            }
        } else {
            match resolve(&state.dir, &bare_path) {
                Some(file) if file.is_file() => match tokio::fs::read(&file).await {
                    Ok(bytes) => (StatusCode::OK, content_type_for(&file), bytes, None),
                    Err(_) => (StatusCode::INTERNAL_SERVER_ERROR, "text/plain", Vec::new(), None),
                },
                _ => (StatusCode::NOT_FOUND, "text/plain", b"not found".to_vec(), None),
            }
        };

    state.log.append(method, path, status.as_u16(), user_agent);
    if !state.latency.is_zero() {
        tokio::time::sleep(state.latency).await;
    }

    let mut response = Response::new(Body::from(body));
    *response.status_mut() = status;
    response
        .headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type));
    if let Some(to) = location.and_then(|l| HeaderValue::from_str(&l).ok()) {
        response.headers_mut().insert(header::LOCATION, to);
    }
    response
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                    out.push((rel, std::fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn single_page_without_links() {
        let dir = tempfile::tempdir().unwrap();
        let spec = FixtureSpec {
            pages: 1,
            links_per_page: 0,
            ..FixtureSpec::default()
        };
        let m = generate_fixture(&spec, dir.path()).unwrap();
        assert_eq!(m.pages.len(), 1);
        let p = &m.pages[0];
        assert!(p.internal.is_empty() && p.external.is_empty() && p.dead.is_empty());
        assert!(dir.path().join("p1.html").is_file());
        assert_eq!(Manifest::load(dir.path()).unwrap(), m);
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let spec = FixtureSpec {
            pages: 20,
            seed: 7,
            external_fraction: 0.1,
            dead_link_count: 2,
            private_pages: 3,
            ..FixtureSpec::default()
        };
        generate_fixture(&spec, a.path()).unwrap();
        generate_fixture(&spec, b.path()).unwrap();
        assert_eq!(read_tree(a.path()), read_tree(b.path()));

        let c = tempfile::tempdir().unwrap();
        generate_fixture(&FixtureSpec { seed: 8, ..spec }, c.path()).unwrap();
        assert_ne!(read_tree(a.path()), read_tree(c.path()));
    }

    #[test]
    fn external_share_is_rounded_fraction_of_all_links() {
        let dir = tempfile::tempdir().unwrap();
        let spec = FixtureSpec {
            pages: 20,
            links_per_page: 3,
            external_fraction: 0.2,
            ..FixtureSpec::default()
        };
        let m = generate_fixture(&spec, dir.path()).unwrap();
        let total = m.internal_links() + m.external_links();
        assert_eq!(total, 79);
        assert_eq!(m.external_links(), (0.2 * total as f64).round() as usize);
    }

    #[test]
    fn rejects_unsatisfiable_specs() {
        let dir = tempfile::tempdir().unwrap();
        for spec in [
            FixtureSpec { pages: 0, ..FixtureSpec::default() },
            FixtureSpec { pages: 5, links_per_page: 0, external_fraction: 0.5, ..FixtureSpec::default() },
            FixtureSpec { external_fraction: 1.5, ..FixtureSpec::default() },
            FixtureSpec { pages: 3, private_pages: 3, ..FixtureSpec::default() },
        ] {
            assert!(matches!(generate_fixture(&spec, dir.path()), Err(FixtureError::InvalidSpec(_))));
        }
    }

    #[test]
    fn every_page_reachable_through_internal_links() {
        let dir = tempfile::tempdir().unwrap();
        let spec = FixtureSpec { pages: 60, links_per_page: 0, private_pages: 10, ..FixtureSpec::default() };
        let m = generate_fixture(&spec, dir.path()).unwrap();
        let by_path: HashMap<&str, &ManifestPage> = m.pages.iter().map(|p| (p.path.as_str(), p)).collect();
        let mut seen = std::collections::HashSet::from([m.pages[0].path.as_str()]);
        let mut queue = std::collections::VecDeque::from([m.pages[0].path.as_str()]);
        while let Some(p) = queue.pop_front() {
            for next in &by_path[p].internal {
                if seen.insert(next.as_str()) {
                    queue.push_back(next.as_str());
                }
            }
        }
        assert_eq!(seen.len(), 60);
        assert!(m.pages[50].path.starts_with("/private/"));
    }

    #[test]
    fn resolve_refuses_traversal() {
        let d = Path::new("/srv");
        assert_eq!(resolve(d, "/p1.html"), Some(PathBuf::from("/srv/p1.html")));
        assert_eq!(resolve(d, "/../etc/passwd"), None);
        assert_eq!(resolve(d, "/a/./b"), Some(PathBuf::from("/srv/a/b")));
    }

    #[tokio::test]
    async fn serves_files_logs_and_404s() {
        let dir = tempfile::tempdir().unwrap();
        generate_fixture(&FixtureSpec { pages: 2, ..FixtureSpec::default() }, dir.path()).unwrap();
        let server = serve_fixture(dir.path(), 0, Duration::ZERO, None).await.unwrap();
        let client = reqwest::Client::new();
        let ok = client.get(server.url("/p1.html")).header("User-Agent", "t/1").send().await.unwrap();
        assert_eq!(ok.status(), 200);
        assert!(ok.headers()[header::CONTENT_TYPE].to_str().unwrap().starts_with("text/html"));
        assert_eq!(server.log().len(), 1);
        let missing = client.get(server.url("/nope.html")).send().await.unwrap();
        assert_eq!(missing.status(), 404);
        let robots = client.get(server.url("/robots.txt")).send().await.unwrap();
        assert_eq!(robots.status(), 404);
        let entries = server.log().entries();
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[0].user_agent, "t/1");
        assert_eq!((entries[1].path.as_str(), entries[1].status), ("/nope.html", 404));
        assert!(entries.windows(2).all(|w| w[0].at <= w[1].at));
    }

    #[tokio::test]
    async fn injected_latency_is_observed() {
        let dir = tempfile::tempdir().unwrap();
        generate_fixture(&FixtureSpec { pages: 1, ..FixtureSpec::default() }, dir.path()).unwrap();
        let server = serve_fixture(dir.path(), 0, Duration::from_millis(50), None).await.unwrap();
        let client = reqwest::Client::new();
        // warm the connection so only the injected delay is measured
        client.get(server.url("/p1.html")).send().await.unwrap();
        let t = Instant::now();
        client.get(server.url("/p1.html")).send().await.unwrap().bytes().await.unwrap();
        let elapsed = t.elapsed();
        assert!(elapsed >= Duration::from_millis(50), "{elapsed:?}");
        assert!(elapsed <= Duration::from_millis(70), "{elapsed:?}");
    }

    #[tokio::test]
    async fn robots_body_and_port_conflicts() {
        let dir = tempfile::tempdir().unwrap();
        let server = serve_fixture(dir.path(), 0, Duration::ZERO, Some("User-agent: *\nDisallow: /x/\n".into()))
            .await
            .unwrap();
        let body = reqwest::get(server.url("/robots.txt")).await.unwrap().text().await.unwrap();
        assert!(body.contains("Disallow: /x/"));
        let taken = server.addr().port();
        assert!(matches!(
            serve_fixture(dir.path(), taken, Duration::ZERO, None).await,
            Err(FixtureError::PortInUse(p)) if p == taken
        ));
    }
}
