//! Time-domain heart-rate variability over NN intervals in milliseconds.

use serde::{Deserialize, Serialize};

use super::PhysioError;

pub const TRIANGULAR_BIN_MS: f64 = 7.8125;
pub const MIN_TIME_INTERVALS: usize = 3;
pub const MIN_TRIANGULAR_INTERVALS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrvTimeFeatures {
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

fn population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn hrv_time_features(nn_ms: &[f64]) -> Result<HrvTimeFeatures, PhysioError> {
    if nn_ms.len() < MIN_TIME_INTERVALS {
        return Err(PhysioError::TooFewIntervals);
    }
    let diffs: Vec<f64> = nn_ms.windows(2).map(|w| w[1] - w[0]).collect();
    let count_above = |limit: f64| diffs.iter().filter(|d| d.abs() > limit).count();
    let nni_50 = count_above(50.0);
    let nni_20 = count_above(20.0);
    let n_diffs = diffs.len() as f64;
    let (_, sdsd) = population_std(&diffs);
    let rmssd = (diffs.iter().map(|d| d * d).sum::<f64>() / n_diffs).sqrt();
    let (mean_nni, sdnn) = population_std(nn_ms);
    let (lo, hi) = nn_ms
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    Ok(HrvTimeFeatures {
        nni_50,
        pnni_50: 100.0 * nni_50 as f64 / n_diffs,
        nni_20,
        pnni_20: 100.0 * nni_20 as f64 / n_diffs,
        sdsd,
        range_nni: hi - lo,
        rmssd,
        sdnn,
        mean_nni,
        cvsd: rmssd / mean_nni,
        cvnni: sdnn / mean_nni,
    })
}

/// Number of intervals divided by the height of the tallest histogram bin
/// (bin width 1/128 s).
pub fn triangular_index(nn_ms: &[f64]) -> Result<f64, PhysioError> {
    if nn_ms.len() < MIN_TRIANGULAR_INTERVALS {
        return Err(PhysioError::TooFewIntervals);
    }
    let lo = nn_ms.iter().copied().fold(f64::INFINITY, f64::min);
    let mut bins: Vec<usize> = Vec::new();
    for &v in nn_ms {
        let b = ((v - lo) / TRIANGULAR_BIN_MS).floor() as usize;
        if b >= bins.len() {
            bins.resize(b + 1, 0);
        }
        bins[b] += 1;
    }
    let peak = bins.iter().copied().max().unwrap_or(1);
    Ok(nn_ms.len() as f64 / peak as f64)
}
