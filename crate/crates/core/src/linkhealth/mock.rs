//! A small local HTTP server for offline link checks. Every response has an
//! empty body; the status is looked up by longest matching path prefix.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

#[derive(Debug, Default)]
struct Routes {
    default_status: u16,
    prefixes: BTreeMap<String, u16>,
    delays: BTreeMap<String, Duration>,
    head_not_allowed: bool,
}

impl Routes {
    fn lookup<T: Copy>(map: &BTreeMap<String, T>, path: &str) -> Option<T> {
        map.iter().filter(|(p, _)| path.starts_with(p.as_str())).max_by_key(|(p, _)| p.len()).map(|(_, v)| *v)
    }
}

pub struct MockServer {
    addr: SocketAddr,
    routes: Arc<Mutex<Routes>>,
    hits: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds an ephemeral port on 127.0.0.1; unmatched paths answer
    /// `default_status`.
    pub fn start(default_status: u16) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let routes = Arc::new(Mutex::new(Routes { default_status, ..Routes::default() }));
        let hits = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let (routes, hits, stop) = (routes.clone(), hits.clone(), stop.clone());
            std::thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    let (routes, hits) = (routes.clone(), hits.clone());
                    std::thread::spawn(move || {
                        let _ = serve(conn, &routes, &hits);
                    });
                }
            })
        };
        Ok(Self { addr, routes, hits, stop, handle: Some(handle) })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Sets the status for every path starting with `prefix`.
    pub fn set_status(&self, prefix: &str, status: u16) {
        self.routes.lock().unwrap().prefixes.insert(prefix.to_string(), status);
    }

    pub fn set_default_status(&self, status: u16) {
        self.routes.lock().unwrap().default_status = status;
    }

    /// Delays responses for paths starting with `prefix`.
    pub fn set_delay(&self, prefix: &str, delay: Duration) {
        self.routes.lock().unwrap().delays.insert(prefix.to_string(), delay);
    }

    /// Answers HEAD with 405 so clients must fall back to GET.
    pub fn reject_head(&self, on: bool) {
        self.routes.lock().unwrap().head_not_allowed = on;
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(conn: TcpStream, routes: &Mutex<Routes>, hits: &AtomicUsize) -> std::io::Result<()> {
    conn.set_read_timeout(Some(Duration::from_secs(5)))?;
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
    }
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("/").to_string();
    if method.is_empty() {
        return Ok(());
    }
    hits.fetch_add(1, Ordering::SeqCst);
    let (status, delay) = {
        let r = routes.lock().unwrap();
        let status = if method == "HEAD" && r.head_not_allowed {
            405
        } else {
            Routes::lookup(&r.prefixes, &path).unwrap_or(r.default_status)
        };
        (status, Routes::lookup(&r.delays, &path))
    };
    if let Some(d) = delay {
        std::thread::sleep(d);
    }
    let mut out = conn;
    write!(out, "HTTP/1.1 {status} {}\r\ncontent-length: 0\r\nconnection: close\r\n\r\n", reason_phrase(status))?;
    out.flush()
}

fn reason_phrase(status: u16) -> &'static str {
    match status {
        200 => "OK",
        301 => "Moved Permanently",
        302 => "Found",
        404 => "Not Found",
        405 => "Method Not Allowed",
        410 => "Gone",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}
