//! Mock repository: serves a catalog file over HTTP, re-reading it on every
//! request and passing it through an optional mutation hook.

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

/// Rewrites the catalog text for request number `n` (from 1). `None`
/// answers 503.
pub type MutationHook = Box<dyn Fn(u64, String) -> Option<String> + Send + Sync>;

pub struct MockRepo {
    addr: SocketAddr,
    server: Arc<tiny_http::Server>,
    stop: Arc<AtomicBool>,
    requests: Arc<AtomicU64>,
    thread: Option<JoinHandle<()>>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(1)
}

/// Sets every entry's `last_update_ms` to the current time.
pub fn refresh_timestamps(text: &str) -> String {
    let now = now_ms();
    text.lines()
        .map(|l| {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                return l.to_owned();
            }
            let mut f: Vec<&str> = t.split_whitespace().collect();
            let stamp = now.to_string();
            if f.len() == 10 {
                f[9] = &stamp;
                f.join(" ")
            } else {
                l.to_owned()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

impl MockRepo {
    pub fn start(addr: &str, catalog: PathBuf, hook: Option<MutationHook>) -> io::Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(|e| io::Error::other(e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("not an IP listener"))?;
        let server = Arc::new(server);
        let stop = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(AtomicU64::new(0));
        let (srv, st, reqs) = (
            Arc::clone(&server),
            Arc::clone(&stop),
            Arc::clone(&requests),
        );
        let thread = std::thread::Builder::new()
            .name("mockrepo".into())
            .spawn(move || {
                while !st.load(Ordering::SeqCst) {
                    let req = match srv.recv_timeout(Duration::from_millis(100)) {
                        Ok(Some(r)) => r,
                        Ok(None) => continue,
                        Err(e) => {
                            log::warn!("mockrepo: {e}");
                            break;
                        }
                    };
                    let n = reqs.fetch_add(1, Ordering::SeqCst) + 1;
                    let body = std::fs::read_to_string(&catalog)
                        .map_err(|e| e.to_string())
                        .and_then(|t| match &hook {
                            Some(h) => h(n, t).ok_or_else(|| "refused by hook".to_string()),
                            None => Ok(t),
                        });
                    let resp = match body {
                        Ok(b) => tiny_http::Response::from_string(b).with_status_code(200),
                        Err(e) => tiny_http::Response::from_string(e).with_status_code(503),
                    };
                    if let Err(e) = req.respond(resp) {
                        log::debug!("mockrepo respond: {e}");
                    }
                }
            })?;
        Ok(Self {
            addr,
            server,
            stop,
            requests,
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}/catalog", self.addr)
    }

    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    /// Blocks serving until the process ends.
    pub fn wait(mut self) {
        if let Some(h) = self.thread.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockRepo {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(h) = self.thread.take() {
            let _ = h.join();
        }
    }
}
