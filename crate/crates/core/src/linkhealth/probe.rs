use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Alive,
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Ok,
    HttpError,
    Timeout,
    DnsFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStatus {
    pub url: String,
    pub verdict: Verdict,
    pub reason: FailureReason,
    pub status_code: Option<u16>,
    #[serde(skip)]
    pub latency: Duration,
}

impl LinkStatus {
    pub fn new(url: impl Into<String>, reason: FailureReason, status_code: Option<u16>, latency: Duration) -> Self {
        let verdict = if reason == FailureReason::Ok { Verdict::Alive } else { Verdict::Dead };
        Self { url: url.into(), verdict, reason, status_code, latency }
    }

    pub fn is_alive(&self) -> bool {
        self.verdict == Verdict::Alive
    }
}

/// Anything that can decide whether a URL is alive.
pub trait LinkProber: Send + Sync {
    fn check(&self, url: &str) -> LinkStatus;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub retries: u32,
    /// Global cap on concurrent requests.
    pub max_inflight: usize,
    /// Cap on concurrent requests to one host.
    pub per_host: usize,
    /// When set, `scheme://host/path` is fetched as `{base_url}/host/path`.
    pub base_url: Option<String>,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { timeout: Duration::from_secs(10), retries: 2, max_inflight: 16, per_host: 4, base_url: None }
    }
}

/// Rewrites `url` onto a mock server: host and path become the path.
pub fn rebase_url(url: &str, base: &str) -> String {
    let base = base.trim_end_matches('/');
    match url::Url::parse(url) {
        Ok(u) => {
            let mut out = format!("{base}/{}{}", u.host_str().unwrap_or(""), u.path());
            if let Some(q) = u.query() {
                out.push('?');
                out.push_str(q);
            }
            out
        }
        Err(_) => format!("{base}/{}", url.trim_start_matches('/')),
    }
}

/// HEAD/GET prober over HTTP. Redirects are not followed: a 3xx answer
/// already shows the link resolves.
pub struct HttpProber {
    agent: ureq::Agent,
    retries: u32,
    base_url: Option<String>,
}

impl HttpProber {
    pub fn new(config: &ProbeConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .max_redirects(0)
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, retries: config.retries, base_url: config.base_url.clone() }
    }

    fn once(&self, target: &str) -> Result<u16, FailureReason> {
        let status = self.agent.head(target).call().map(|r| r.status().as_u16()).map_err(classify)?;
        if status == 405 || status == 501 {
            return self.agent.get(target).call().map(|r| r.status().as_u16()).map_err(classify);
        }
        Ok(status)
    }
}

fn classify(err: ureq::Error) -> FailureReason {
    match err {
        ureq::Error::Timeout(_) => FailureReason::Timeout,
        ureq::Error::HostNotFound => FailureReason::DnsFailure,
        ureq::Error::Io(e) => {
            if e.kind() == std::io::ErrorKind::TimedOut || e.kind() == std::io::ErrorKind::WouldBlock {
                FailureReason::Timeout
            } else if e.to_string().contains("lookup address") {
                // getaddrinfo failures surface as plain io errors
                FailureReason::DnsFailure
            } else {
                FailureReason::HttpError
            }
        }
        _ => FailureReason::HttpError,
    }
}

impl LinkProber for HttpProber {
    fn check(&self, url: &str) -> LinkStatus {
        let target = match &self.base_url {
            Some(b) => rebase_url(url, b),
            None => url.to_string(),
        };
        let start = Instant::now();
        let mut attempt = 0;
        loop {
            let outcome = self.once(&target);
            let retryable = matches!(outcome, Err(FailureReason::Timeout) | Err(FailureReason::HttpError));
            if retryable && attempt < self.retries {
                attempt += 1;
                continue;
            }
            return match outcome {
                Ok(code) if (200..400).contains(&code) => {
                    LinkStatus::new(url, FailureReason::Ok, Some(code), start.elapsed())
                }
                Ok(code) => LinkStatus::new(url, FailureReason::HttpError, Some(code), start.elapsed()),
                Err(reason) => LinkStatus::new(url, reason, None, start.elapsed()),
            };
        }
    }
}

/// Probes one URL with the default configuration.
pub fn check_url(url: &str, timeout: Duration, retries: u32) -> LinkStatus {
    HttpProber::new(&ProbeConfig { timeout, retries, ..ProbeConfig::default() }).check(url)
}

fn host_of(url: &str) -> String {
    url::Url::parse(url).ok().and_then(|u| u.host_str().map(str::to_ascii_lowercase)).unwrap_or_default()
}

/// Probes `urls` with at most `max_inflight` requests in flight and at most
/// `per_host` per host. Each host's URLs are dealt round-robin into up to
/// `per_host` lanes; lanes are worked through sequentially by a fixed pool of
/// threads. Results come back in input order.
pub fn probe_all(prober: &dyn LinkProber, urls: &[String], max_inflight: usize, per_host: usize) -> Vec<LinkStatus> {
    if urls.is_empty() {
        return Vec::new();
    }
    let per_host = per_host.max(1);
    let mut by_host: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, u) in urls.iter().enumerate() {
        by_host.entry(host_of(u)).or_default().push(i);
    }
    let mut lanes: Vec<Vec<usize>> = Vec::new();
    for idxs in by_host.into_values() {
        let n = per_host.min(idxs.len());
        let mut host_lanes = vec![Vec::new(); n];
        for (k, i) in idxs.into_iter().enumerate() {
            host_lanes[k % n].push(i);
        }
        lanes.extend(host_lanes);
    }
    let queue = Mutex::new(lanes.into_iter());
    let results: Mutex<Vec<Option<LinkStatus>>> = Mutex::new(vec![None; urls.len()]);
    let workers = max_inflight.max(1).min(urls.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let lane = queue.lock().expect("queue lock").next();
                let Some(lane) = lane else { break };
                for i in lane {
                    let status = prober.check(&urls[i]);
                    results.lock().expect("results lock")[i] = Some(status);
                }
            });
        }
    });
    results.into_inner().expect("results lock").into_iter().map(|s| s.expect("every url probed")).collect()
}
