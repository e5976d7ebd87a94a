//! Tonic/phasic split of electrodermal activity.
//!
//! The tonic level (SCL) is a zero-phase low-pass of the signal: a centered
//! moving average applied twice. The phasic part (SCR) is the remainder, so
//! `scl + scr` reconstructs the input.

use serde::{Deserialize, Serialize};

use super::PhysioError;

pub const EDA_CUTOFF_HZ: f64 = 0.05;
pub const EDA_MIN_SECONDS: f64 = 8.0;

/// -3 dB point of a length-L boxcar applied twice, as a fraction of fs/L.
const TWO_PASS_BOXCAR_CUTOFF: f64 = 0.318;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaDecomposition {
    pub scl: Vec<f64>,
    pub scr: Vec<f64>,
}

/// Odd moving-average length giving the requested cutoff at this rate.
pub fn smoothing_length(rate_hz: f64, cutoff_hz: f64) -> usize {
    let raw = (TWO_PASS_BOXCAR_CUTOFF * rate_hz / cutoff_hz).round() as usize;
    let odd = if raw % 2 == 0 { raw + 1 } else { raw };
    odd.max(3)
}

/// Centered moving average with odd-symmetric edge extension, which keeps
/// constants and straight lines unchanged.
fn centered_moving_average(x: &[f64], len: usize) -> Vec<f64> {
    let n = x.len();
    let half = len / 2;
    let at = |i: isize| -> f64 {
        if i < 0 {
            let k = ((-i) as usize).min(n - 1);
            2.0 * x[0] - x[k]
        } else if i as usize >= n {
            let k = (i as usize - (n - 1)).min(n - 1);
            2.0 * x[n - 1] - x[n - 1 - k]
        } else {
            x[i as usize]
        }
    };
    let mut out = Vec::with_capacity(n);
    let mut acc: f64 = (-(half as isize)..=half as isize).map(at).sum();
    out.push(acc / len as f64);
    for i in 1..n as isize {
        acc += at(i + half as isize) - at(i - 1 - half as isize);
        out.push(acc / len as f64);
    }
    out
}

pub fn decompose_eda(samples: &[f64], rate_hz: f64) -> Result<EdaDecomposition, PhysioError> {
    if (samples.len() as f64) < EDA_MIN_SECONDS * rate_hz || samples.len() < 2 {
        return Err(PhysioError::WindowTooShort);
    }
    let len = smoothing_length(rate_hz, EDA_CUTOFF_HZ);
    let scl = centered_moving_average(&centered_moving_average(samples, len), len);
    let scr = samples.iter().zip(&scl).map(|(x, s)| x - s).collect();
    Ok(EdaDecomposition { scl, scr })
}
