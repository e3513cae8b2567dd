//! Read-only static file server for viewer exports and viewer assets.
//!
//! Only `GET` and `HEAD` are answered; anything else gets 405. Paths are
//! resolved against each root in order and must stay inside it after
//! symlinks are resolved. `/` and directories map to `index.html`.

use std::fs::File;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread::JoinHandle;

use tiny_http::{Header, Method, Request, Response, Server, StatusCode};

use crate::error::{Error, Result};

pub struct StaticServer {
    server: Arc<Server>,
    roots: Arc<Vec<PathBuf>>,
}

/// A running server; dropping it without [`shutdown`](Self::shutdown)
/// leaves the workers running.
pub struct ServerHandle {
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
}

pub fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" | "htm" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" | "map" => "application/json",
        "wasm" => "application/wasm",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ppm" => "image/x-portable-pixmap",
        "txt" => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

impl StaticServer {
    /// Binds `host:port` (port 0 picks a free one) serving `roots`.
    pub fn bind(host: &str, port: u16, roots: Vec<PathBuf>) -> Result<Self> {
        let mut canonical = Vec::with_capacity(roots.len());
        for root in roots {
            let c = root.canonicalize().map_err(|e| Error::io(&root, e))?;
            if !c.is_dir() {
                return Err(Error::invalid(format!("{} is not a directory", root.display())));
            }
            canonical.push(c);
        }
        let addr = format!("{host}:{port}");
        let server = Server::http(&addr).map_err(|e| Error::invalid(format!("cannot listen on {addr}: {e}")))?;
        Ok(Self { server: Arc::new(server), roots: Arc::new(canonical) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.server.server_addr().to_ip().expect("bound to an IP address")
    }

    /// Serves on `workers` threads until [`ServerHandle::shutdown`].
    pub fn spawn(self, workers: usize) -> ServerHandle {
        let threads = (0..workers.max(1))
            .map(|_| {
                let (server, roots) = (Arc::clone(&self.server), Arc::clone(&self.roots));
                std::thread::spawn(move || {
                    while let Ok(request) = server.recv() {
                        // A client hanging up mid-response is not a server error.
                        let _ = respond(request, &roots);
                    }
                })
            })
            .collect();
        ServerHandle { server: self.server, workers: threads }
    }
}

impl ServerHandle {
    pub fn shutdown(self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers {
            let _ = w.join();
        }
    }

    /// Blocks for as long as the workers run.
    pub fn wait(self) {
        for w in self.workers {
            let _ = w.join();
        }
    }
}

fn text(status: u16, body: &str) -> Response<std::io::Cursor<Vec<u8>>> {
    Response::from_string(body).with_status_code(StatusCode(status)).with_header(header("Content-Type", "text/plain"))
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("static header")
}

fn respond(request: Request, roots: &[PathBuf]) -> std::io::Result<()> {
    if !matches!(request.method(), Method::Get | Method::Head) {
        return request.respond(text(405, "method not allowed\n").with_header(header("Allow", "GET, HEAD")));
    }
    let Some(path) = resolve(request.url(), roots) else {
        return request.respond(text(404, "not found\n"));
    };
    match File::open(&path) {
        Ok(file) => {
            // File lengths are known, so always send Content-Length rather than chunking.
            let response = Response::from_file(file)
                .with_chunked_threshold(usize::MAX)
                .with_header(header("Content-Type", content_type(&path)))
                .with_header(header("Cache-Control", "no-store"));
            request.respond(response)
        }
        Err(_) => request.respond(text(404, "not found\n")),
    }
}

/// Maps a request URL to a file inside one of `roots`, or `None`.
pub fn resolve(url: &str, roots: &[PathBuf]) -> Option<PathBuf> {
    let path = url.split(['?', '#']).next().unwrap_or("");
    let mut relative = PathBuf::new();
    for segment in path.split('/').filter(|s| !s.is_empty()) {
        if segment == "." || segment == ".." || segment.contains(['\\', '%', '\0']) {
            return None;
        }
        relative.push(segment);
    }
    roots.iter().find_map(|root| {
        let mut candidate = root.join(&relative).canonicalize().ok()?;
        if candidate.is_dir() {
            candidate = candidate.join("index.html").canonicalize().ok()?;
        }
        (candidate.starts_with(root) && candidate.is_file()).then_some(candidate)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_stays_inside_roots() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        std::fs::write(a.path().join("manifest.json"), "{}").unwrap();
        std::fs::write(b.path().join("index.html"), "<p>").unwrap();
        std::fs::write(b.path().join("manifest.json"), "shadowed").unwrap();
        let roots = vec![a.path().canonicalize().unwrap(), b.path().canonicalize().unwrap()];
        let found = resolve("/manifest.json?x=1", &roots).unwrap();
        assert_eq!(std::fs::read_to_string(found).unwrap(), "{}");
        assert!(resolve("/", &roots).unwrap().ends_with("index.html"));
        for bad in ["/../etc/passwd", "/a/../../x", "/%2e%2e/x", "/missing", "/..\\x"] {
            assert_eq!(resolve(bad, &roots), None, "{bad}");
        }
    }

    #[test]
    fn types_follow_extensions() {
        assert_eq!(content_type(Path::new("a/manifest.json")), "application/json");
        assert_eq!(content_type(Path::new("x.bin")), "application/octet-stream");
        assert_eq!(content_type(Path::new("index.html")), "text/html; charset=utf-8");
    }
}
