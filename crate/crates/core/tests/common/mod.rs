//! Brute-force reference implementations used by the integration tests.
//! Written for clarity, not speed, and sharing no code with the library.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveHrv {
    pub nni_50: usize,
    pub pnni_50: f64,
    pub nni_20: usize,
    pub pnni_20: f64,
    pub sdsd: f64,
    pub range_nni: f64,
    pub rmssd: f64,
    pub sdnn: f64,
    pub mean_nni: f64,
    pub cvsd: f64,
    pub cvnni: f64,
}

fn naive_mean(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    s / v.len() as f64
}

fn naive_pop_std(v: &[f64]) -> f64 {
    let m = naive_mean(v);
    let mut s = 0.0;
    for x in v {
        s += (x - m) * (x - m);
    }
    (s / v.len() as f64).sqrt()
}

pub fn naive_hrv(nn: &[f64]) -> NaiveHrv {
    let mut diffs = Vec::new();
    for i in 1..nn.len() {
        diffs.push(nn[i] - nn[i - 1]);
    }
    let mut nni_50 = 0;
    let mut nni_20 = 0;
    let mut sq = 0.0;
    for d in &diffs {
        if d.abs() > 50.0 {
            nni_50 += 1;
        }
        if d.abs() > 20.0 {
            nni_20 += 1;
        }
        sq += d * d;
    }
    let mut sorted = nn.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean_nni = naive_mean(nn);
    let rmssd = (sq / diffs.len() as f64).sqrt();
    let sdnn = naive_pop_std(nn);
    NaiveHrv {
        nni_50,
        pnni_50: nni_50 as f64 * 100.0 / diffs.len() as f64,
        nni_20,
        pnni_20: nni_20 as f64 * 100.0 / diffs.len() as f64,
        sdsd: naive_pop_std(&diffs),
        range_nni: sorted[sorted.len() - 1] - sorted[0],
        rmssd,
        sdnn,
        mean_nni,
        cvsd: rmssd / mean_nni,
        cvnni: sdnn / mean_nni,
    }
}

/// Least-squares `(slope, intercept)` through the design matrix `[t 1]`,
/// solved by QR.
pub fn naive_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len();
    let a = DMatrix::from_fn(n, 2, |i, j| if j == 0 { points[i].0 } else { 1.0 });
    let b = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    let r = qr.r();
    let c1 = qtb[1] / r[(1, 1)];
    let c0 = (qtb[0] - r[(0, 1)] * c1) / r[(0, 0)];
    (c0, c1)
}

/// `(mean, population variance, min, max, rms)`.
pub fn naive_stats(x: &[f64]) -> (f64, f64, f64, f64, f64) {
    let m = naive_mean(x);
    let mut var = 0.0;
    let mut sq = 0.0;
    for v in x {
        var += (v - m) * (v - m);
        sq += v * v;
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len() as f64;
    (m, var / n, sorted[0], sorted[x.len() - 1], (sq / n).sqrt())
}

pub fn naive_triangular(nn: &[f64], bin_ms: f64) -> f64 {
    let lo = nn.iter().cloned().fold(f64::MAX, f64::min);
    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    for v in nn {
        *bins.entry(((v - lo) / bin_ms).floor() as i64).or_insert(0) += 1;
    }
    nn.len() as f64 / *bins.values().max().unwrap() as f64
}

pub fn naive_cdf(values: &[f64], thresholds: &[f64]) -> Vec<f64> {
    thresholds
        .iter()
        .map(|t| {
            let mut c = 0usize;
            for v in values {
                if v <= t {
                    c += 1;
                }
            }
            c as f64 / values.len() as f64
        })
        .collect()
}

/// Average ranks by counting (1-based), O(n^2).
pub fn naive_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|a| {
            let below = x.iter().filter(|b| *b < a).count() as f64;
            let equal = x.iter().filter(|b| *b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let ma = naive_mean(a);
    let mb = naive_mean(b);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

pub fn naive_spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&naive_ranks(a), &naive_ranks(b))
}

pub fn mean_abs(y: &[f64], c: f64) -> f64 {
    y.iter().map(|v| (v - c).abs()).sum::<f64>() / y.len() as f64
}

pub fn root_mean_sq(y: &[f64], c: f64) -> f64 {
    (y.iter().map(|v| (v - c) * (v - c)).sum::<f64>() / y.len() as f64).sqrt()
}

/// Constants on an even grid spanning the data plus every data value.
pub fn constant_sweep(y: &[f64], steps: usize) -> Vec<f64> {
    let lo = y.iter().cloned().fold(f64::MAX, f64::min);
    let hi = y.iter().cloned().fold(f64::MIN, f64::max);
    let mut out: Vec<f64> = (0..=steps)
        .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
        .collect();
    out.extend_from_slice(y);
    out
}

/// Disjoint `[on, off)` screen sessions rebuilt from on/off transitions;
/// an unterminated session ends at `end`.
pub fn screen_sessions(events: &[(bool, i64)], end: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let mut open: Option<i64> = None;
    for &(on, t) in events {
        match (on, open) {
            (true, None) => open = Some(t),
            (false, Some(s)) => {
                out.push((s, t));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        out.push((s, end));
    }
    out
}

/// A cohort small enough for property tests: short study, one short wear session.
pub fn small_generator(seed: u64, participants: usize, days: usize) -> nrt_core::synth::GeneratorConfig {
    let mut cfg = nrt_core::synth::GeneratorConfig {
        seed,
        n_participants: participants,
        days,
        ..Default::default()
    };
    cfg.physio.wear_fraction = 1.0;
    cfg.physio.wear_day = 0;
    cfg.physio.wear_hours = 0.25;
    cfg
}
