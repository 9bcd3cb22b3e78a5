//! Link-health monitoring: composite site weights, normalized budget
//! allocation with clamping, seeded URL sampling, probing, alive-rate gating
//! and recheck scheduling.

pub mod mock;
mod probe;

pub use probe::{
    check_url, probe_all, rebase_url, FailureReason, HttpProber, LinkProber, LinkStatus, ProbeConfig, Verdict,
};

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::text::hash64;

/// Number of most recent alive rates used for the variance term.
pub const VARIANCE_WINDOW: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinkHealthError {
    #[error("every site weight is zero")]
    NoWeight,
    #[error("invalid link-health parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub epsilon: f64,
    pub k_total: u64,
    pub k_min: u64,
    pub k_max: u64,
    pub tau_alive: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self { lambda1: 1.0, lambda2: 1.0, epsilon: 1.0, k_total: 10_000, k_min: 30, k_max: 3000, tau_alive: 0.9 }
    }
}

impl WeightParams {
    // negated comparisons so that NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), LinkHealthError> {
        let bad = |m: &str| Err(LinkHealthError::InvalidParams(m.to_string()));
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad("lambda1 and lambda2 must be non-negative");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.k_total == 0 || self.k_min == 0 || self.k_max == 0 {
            return bad("K_total, k_min and k_max must be positive");
        }
        if self.k_min > self.k_max {
            return bad("k_min must not exceed k_max");
        }
        if !(self.tau_alive > 0.0 && self.tau_alive <= 1.0) {
            return bad("tau_alive must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub timestamp: DateTime<Utc>,
    pub alive_rate: f64,
}

/// Sample variance (n - 1 denominator); 0 for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteStats {
    pub source_name: String,
    pub n_s: u64,
    pub sigma2_s: f64,
    pub delta_n_s: u64,
    pub history: Vec<HistoryPoint>,
}

impl SiteStats {
    /// Stats from a dataset count, the previous count (if any) and the
    /// inspection history. The variance covers the last
    /// [`VARIANCE_WINDOW`] rates; a shrinking site has `delta_n_s = 0`.
    pub fn new(source_name: impl Into<String>, n_s: u64, previous_n: Option<u64>, history: Vec<HistoryPoint>) -> Self {
        let rates: Vec<f64> = history.iter().map(|h| h.alive_rate).collect();
        let window = &rates[rates.len().saturating_sub(VARIANCE_WINDOW)..];
        Self {
            source_name: source_name.into(),
            n_s,
            sigma2_s: sample_variance(window),
            delta_n_s: previous_n.map_or(0, |p| n_s.saturating_sub(p)),
            history,
        }
    }
}

/// `ln(1 + N) * (1 + lambda1 * sigma2) * (1 + lambda2 * dN / (N + epsilon))`.
pub fn site_weight(stats: &SiteStats, p: &WeightParams) -> f64 {
    let n = stats.n_s as f64;
    (1.0 + n).ln() * (1.0 + p.lambda1 * stats.sigma2_s) * (1.0 + p.lambda2 * stats.delta_n_s as f64 / (n + p.epsilon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Unrounded proportional share.
    pub k_star: f64,
    /// Final sample size after rounding, clamping and the URL-count cap.
    pub k: u64,
}

/// `k* = w / sum(w) * K_total`, then `k = min(clamp(round(k*), k_min, k_max), urls)`.
/// Sites missing from `url_counts` are treated as having no URL cap.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn allocate_budget(
    weights: &BTreeMap<String, f64>,
    url_counts: &BTreeMap<String, u64>,
    p: &WeightParams,
) -> Result<BTreeMap<String, Allocation>, LinkHealthError> {
    p.validate()?;
    let total: f64 = weights.values().sum();
    if !(total > 0.0) {
        return Err(LinkHealthError::NoWeight);
    }
    Ok(weights
        .iter()
        .map(|(site, w)| {
            let k_star = w / total * p.k_total as f64;
            let clamped = (k_star.round() as u64).clamp(p.k_min, p.k_max);
            let cap = url_counts.get(site).copied().unwrap_or(u64::MAX);
            (site.clone(), Allocation { k_star, k: clamped.min(cap) })
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Gate {
    Alive,
    Dead,
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gate::Alive => "ALIVE",
            Gate::Dead => "DEAD",
        })
    }
}

pub fn gate_for(alive_rate: f64, tau_alive: f64) -> Gate {
    if alive_rate < tau_alive {
        Gate::Dead
    } else {
        Gate::Alive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadLink {
    pub url: String,
    pub reason: FailureReason,
    pub status_code: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteInspection {
    pub source_name: String,
    pub sampled: u64,
    pub alive: u64,
    pub alive_rate: f64,
    pub gate: Gate,
    pub dead_links: Vec<DeadLink>,
}

/// Seeded sample of `min(k, |urls|)` URLs without replacement. URLs are
/// sorted first so the sample depends only on the set, the site and the seed.
pub fn sample_urls(site: &str, urls: &[String], k: u64, seed: u64) -> Vec<String> {
    let mut sorted: Vec<&String> = urls.iter().collect();
    sorted.sort();
    sorted.dedup();
    let amount = (k as usize).min(sorted.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ hash64(seed, site.as_bytes()));
    let mut idx = rand::seq::index::sample(&mut rng, sorted.len(), amount).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| sorted[i].clone()).collect()
}

/// Samples and probes one site.
pub fn inspect_site(
    site: &str,
    k_s: u64,
    urls: &[String],
    seed: u64,
    tau_alive: f64,
    prober: &dyn LinkProber,
    config: &ProbeConfig,
) -> SiteInspection {
    let sample = sample_urls(site, urls, k_s.max(1), seed);
    let statuses = probe_all(prober, &sample, config.max_inflight, config.per_host);
    summarize_site(site, &statuses, tau_alive)
}

pub fn summarize_site(site: &str, statuses: &[LinkStatus], tau_alive: f64) -> SiteInspection {
    let sampled = statuses.len() as u64;
    let alive = statuses.iter().filter(|s| s.is_alive()).count() as u64;
    let alive_rate = if sampled == 0 { 0.0 } else { alive as f64 / sampled as f64 };
    SiteInspection {
        source_name: site.to_string(),
        sampled,
        alive,
        alive_rate,
        gate: gate_for(alive_rate, tau_alive),
        dead_links: statuses
            .iter()
            .filter(|s| !s.is_alive())
            .map(|s| DeadLink { url: s.url.clone(), reason: s.reason, status_code: s.status_code })
            .collect(),
    }
}

/// Persistent per-site monitoring state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SiteState {
    pub source_name: String,
    pub history: Vec<HistoryPoint>,
    /// Dataset count at the previous inspection.
    pub last_count: Option<u64>,
    /// Set when the site was gated DEAD; the next cycle probes it at full
    /// quota.
    pub recheck: bool,
    pub gate: Option<Gate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteReport {
    pub source_name: String,
    pub weight: f64,
    pub k_star: f64,
    pub k_s: u64,
    pub forced_recheck: bool,
    #[serde(flatten)]
    pub inspection: SiteInspection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionReport {
    pub cycle: u64,
    pub timestamp: DateTime<Utc>,
    pub sites: Vec<SiteReport>,
}

impl InspectionReport {
    /// `site<TAB>k_s<TAB>alive_rate<TAB>gate`, one line per site.
    pub fn lines(&self) -> Vec<String> {
        self.sites
            .iter()
            .map(|s| format!("{}\t{}\t{:.4}\t{}", s.source_name, s.k_s, s.inspection.alive_rate, s.inspection.gate))
            .collect()
    }

    pub fn gate_of(&self, site: &str) -> Option<Gate> {
        self.sites.iter().find(|s| s.source_name == site).map(|s| s.inspection.gate)
    }
}

/// One monitoring cycle over `site_urls` (site to the URLs of its
/// datasets; `N_s` is the list length). Weights use the state before the
/// cycle; afterwards each site's history, count and recheck flag are
/// updated. Sites gated DEAD in the previous cycle get a quota of `k_max`
/// (capped at their URL count).
#[allow(clippy::too_many_arguments)]
pub fn run_inspection(
    site_urls: &BTreeMap<String, Vec<String>>,
    states: &mut BTreeMap<String, SiteState>,
    p: &WeightParams,
    prober: &dyn LinkProber,
    config: &ProbeConfig,
    seed: u64,
    cycle: u64,
    timestamp: DateTime<Utc>,
) -> Result<InspectionReport, LinkHealthError> {
    p.validate()?;
    let sites: BTreeMap<&String, &Vec<String>> = site_urls.iter().filter(|(_, u)| !u.is_empty()).collect();
    if sites.is_empty() {
        return Ok(InspectionReport { cycle, timestamp, sites: Vec::new() });
    }
    let mut weights = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for (site, urls) in &sites {
        let state = states.get(*site).cloned().unwrap_or_default();
        let stats = SiteStats::new(site.as_str(), urls.len() as u64, state.last_count, state.history);
        weights.insert((*site).clone(), site_weight(&stats, p));
        counts.insert((*site).clone(), urls.len() as u64);
    }
    let alloc = allocate_budget(&weights, &counts, p)?;
    let cycle_seed = seed ^ cycle.wrapping_mul(0x9e37_79b9_7f4a_7c15);

    let mut reports = Vec::new();
    for (site, urls) in &sites {
        let state = states
            .entry((*site).clone())
            .or_insert_with(|| SiteState { source_name: (*site).clone(), ..SiteState::default() });
        let a = alloc[*site];
        let forced = state.recheck;
        let k_s = if forced { p.k_max.min(urls.len() as u64) } else { a.k };
        let inspection = inspect_site(site, k_s, urls, cycle_seed, p.tau_alive, prober, config);
        state.history.push(HistoryPoint { timestamp, alive_rate: inspection.alive_rate });
        state.last_count = Some(urls.len() as u64);
        state.recheck = inspection.gate == Gate::Dead;
        state.gate = Some(inspection.gate);
        reports.push(SiteReport {
            source_name: (*site).clone(),
            weight: weights[*site],
            k_star: a.k_star,
            k_s,
            forced_recheck: forced,
            inspection,
        });
    }
    Ok(InspectionReport { cycle, timestamp, sites: reports })
}
