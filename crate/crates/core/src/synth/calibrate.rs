//! Fitting the response model's intercept and noise scale to target
//! response-time CDF fractions, and the app popularity exponent to a top-10
//! coverage share.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{planned_latency_ms, skeleton, GeneratorConfig, Skeleton, SynthError};
use crate::analysis::{cdf_fractions_censored, DEFAULT_CDF_THRESHOLDS};
use crate::event::EventLog;
use crate::labeling::{pair_response_times, top_k_apps, AppCatalog, CategoryMap};

/// Pooled response-time CDF at 5 min, 1 h and 24 h.
pub const TARGET_CDF: [f64; 3] = [0.5432, 0.7586, 0.9390];
/// Share of notifications sent by each participant's ten most active apps.
pub const TARGET_TOP10_COVERAGE: f64 = 0.9430;

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 0.02;
const TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub cdf: [f64; 3],
    pub top10_coverage: Option<f64>,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            cdf: TARGET_CDF,
            top10_coverage: Some(TARGET_TOP10_COVERAGE),
        }
    }
}

fn top_share(n: usize, k: usize, s: f64) -> f64 {
    let w = super::zipf_weights(n, s);
    w[..k.min(n)].iter().sum::<f64>() / w.iter().sum::<f64>()
}

/// Zipf exponent whose `k` head ranks out of `n` carry `coverage` of the mass.
pub fn zipf_exponent_for_coverage(n: usize, k: usize, coverage: f64) -> Result<f64, SynthError> {
    if k >= n {
        return if coverage == 1.0 {
            Ok(0.0)
        } else {
            Err(SynthError::CalibrationFailed(format!(
                "top-{k} of {n} apps always covers everything"
            )))
        };
    }
    let floor = k as f64 / n as f64;
    if !(floor..1.0).contains(&coverage) {
        return Err(SynthError::CalibrationFailed(format!(
            "top-{k} coverage {coverage} outside [{floor}, 1) for {n} apps"
        )));
    }
    let (mut lo, mut hi) = (0.0, 50.0);
    for _ in 0..MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if top_share(n, k, mid) < coverage {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMeasurement {
    pub cdf: Vec<f64>,
    pub top10_coverage: f64,
    pub n_notifications: usize,
    pub n_top10: usize,
}

/// Pooled CDF over every participant's top-`k` app notifications, counting
/// never-answered ones in the denominator, plus the pooled top-`k` coverage.
pub fn pooled_top_k_cdf(logs: &[EventLog], k: usize, thresholds: &[f64]) -> CohortMeasurement {
    let mut pooled = Vec::new();
    let mut total = 0;
    for log in logs {
        let catalog = AppCatalog::from_notifications(&log.notifications, CategoryMap::default());
        let top: std::collections::BTreeSet<String> = top_k_apps(&catalog, k).into_iter().collect();
        total += log.notifications.len();
        pooled.extend(
            pair_response_times(log)
                .into_iter()
                .filter(|l| top.contains(&l.app_package))
                .map(|l| l.uncensored_seconds()),
        );
    }
    CohortMeasurement {
        cdf: cdf_fractions_censored(&pooled, thresholds),
        top10_coverage: if total == 0 { 0.0 } else { pooled.len() as f64 / total as f64 },
        n_notifications: total,
        n_top10: pooled.len(),
    }
}

/// Labels the cohort from notification and foreground streams only.
pub fn measure_cohort(cfg: &GeneratorConfig) -> CohortMeasurement {
    let logs: Vec<EventLog> = (0..cfg.n_participants)
        .into_par_iter()
        .map(|i| {
            let s = skeleton(cfg, i);
            s.label_log(cfg, &s.latencies(cfg))
        })
        .collect();
    pooled_top_k_cdf(&logs, TOP_K, &DEFAULT_CDF_THRESHOLDS)
}

/// Per-participant arrays for fast re-labelling under new intercept/sigma.
struct Frame {
    arrival: Vec<i64>,
    app: Vec<usize>,
    systematic: Vec<f64>,
    noise: Vec<f64>,
    top: Vec<bool>,
    background: Vec<Vec<i64>>,
}

impl Frame {
    fn new(s: &Skeleton, cfg: &GeneratorConfig) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for n in &s.notifications {
            *counts.entry(s.apps[n.app].clone()).or_insert(0) += 1;
        }
        let catalog = AppCatalog::from_counts(counts, CategoryMap::default());
        let top: std::collections::BTreeSet<String> = top_k_apps(&catalog, TOP_K).into_iter().collect();
        let index: BTreeMap<&str, usize> = s.apps.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
        let mut background = vec![Vec::new(); s.apps.len()];
        for (t, app) in &s.background_opens {
            if let Some(&i) = index.get(app.as_str()) {
                background[i].push(*t);
            }
        }
        Self {
            arrival: s.notifications.iter().map(|n| n.arrival_utc_ms).collect(),
            app: s.notifications.iter().map(|n| n.app).collect(),
            systematic: s.notifications.iter().map(|n| s.systematic(&cfg.response, n)).collect(),
            noise: s.notifications.iter().map(|n| n.noise).collect(),
            top: s.notifications.iter().map(|n| top.contains(&s.apps[n.app])).collect(),
            background,
        }
    }

    /// Next-open delays (seconds) of the top-app notifications.
    fn delays(&self, cfg: &GeneratorConfig, intercept: f64, sigma: f64) -> Vec<Option<f64>> {
        let end = cfg.study_end_utc_ms();
        let mut opens = self.background.clone();
        for i in 0..self.arrival.len() {
            let lat = planned_latency_ms(
                intercept,
                sigma,
                cfg.response.max_days,
                self.systematic[i],
                self.noise[i],
                self.arrival[i],
                end,
            );
            if let Some(l) = lat {
                opens[self.app[i]].push(self.arrival[i] + l);
            }
        }
        for o in &mut opens {
            o.sort_unstable();
        }
        (0..self.arrival.len())
            .filter(|&i| self.top[i])
            .map(|i| {
                let times = &opens[self.app[i]];
                let j = times.partition_point(|&t| t <= self.arrival[i]);
                times.get(j).map(|&t| (t - self.arrival[i]) as f64 / 1000.0)
            })
            .collect()
    }
}

fn pooled(frames: &[Frame], cfg: &GeneratorConfig, intercept: f64, sigma: f64) -> Vec<f64> {
    let delays: Vec<Option<f64>> = frames
        .par_iter()
        .flat_map_iter(|f| f.delays(cfg, intercept, sigma))
        .map(|d| d.filter(|&s| s <= crate::labeling::RESPONSE_CAP_SECONDS))
        .collect();
    cdf_fractions_censored(&delays, &DEFAULT_CDF_THRESHOLDS)
}

/// Intercept putting the 5-minute fraction on `target` for a given sigma;
/// `None` when no intercept in range gets close enough.
fn fit_intercept(frames: &[Frame], cfg: &GeneratorConfig, sigma: f64, target: f64) -> Option<(f64, Vec<f64>)> {
    let (mut lo, mut hi) = (-4.0, 8.0);
    for _ in 0..MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if pooled(frames, cfg, mid, sigma)[0] > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-5 {
            break;
        }
    }
    let b = 0.5 * (lo + hi);
    let f = pooled(frames, cfg, b, sigma);
    ((f[0] - target).abs() <= 0.005).then_some((b, f))
}

/// Bisection on the response model: the intercept pins the 5-minute fraction
/// and sigma is moved until the 1-hour fraction matches. The 24-hour fraction
/// is mostly set by apps that are never opened, so it is only checked, like
/// the other two, against [`TOLERANCE`].
pub fn calibrate(cfg: &GeneratorConfig, targets: &CalibrationTargets) -> Result<GeneratorConfig, SynthError> {
    cfg.validate()?;
    let t = targets.cdf;
    if t.iter().any(|v| !(0.0..=1.0).contains(v) || *v == 0.0) {
        return Err(SynthError::CalibrationFailed(format!("targets {t:?} must lie in (0, 1]")));
    }
    if t[0] > t[1] || t[1] > t[2] {
        return Err(SynthError::CalibrationFailed(format!(
            "targets {t:?} are not non-decreasing"
        )));
    }
    let mut out = cfg.clone();
    if let Some(coverage) = targets.top10_coverage {
        out.apps.popularity_exponent = zipf_exponent_for_coverage(out.apps.count, TOP_K, coverage)?;
    }
    let frames: Vec<Frame> = (0..out.n_participants)
        .into_par_iter()
        .map(|i| Frame::new(&skeleton(&out, i), &out))
        .collect();

    let (mut lo, mut hi) = (0.05, 4.0);
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        match fit_intercept(&frames, &out, mid, t[0]) {
            Some((_, f)) if f[1] > t[1] + 1e-12 => lo = mid,
            _ => hi = mid,
        }
        if hi - lo < 1e-4 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SynthError::CalibrationFailed(format!(
            "no convergence after {MAX_ITERATIONS} iterations"
        )));
    }
    let sigma = hi;
    let (intercept, fit) = fit_intercept(&frames, &out, sigma, t[0]).ok_or_else(|| {
        SynthError::CalibrationFailed(format!("5-minute fraction {} unreachable", t[0]))
    })?;
    if fit.iter().zip(&t).any(|(f, t)| (f - t).abs() > TOLERANCE) {
        return Err(SynthError::CalibrationFailed(format!(
            "best fit {fit:?} misses targets {t:?} by more than {TOLERANCE}"
        )));
    }
    out.response.intercept = intercept;
    out.response.sigma = sigma;
    Ok(out)
}
