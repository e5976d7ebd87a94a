use serde::{Deserialize, Serialize};

use super::PhysioError;

/// Summary statistics of one channel window. Variance is the population
/// variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatFeatures {
    pub mean: f64,
    pub var: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub rms: f64,
}

pub fn stat_features(window: &[f64]) -> Result<StatFeatures, PhysioError> {
    if window.is_empty() {
        return Err(PhysioError::EmptyWindow);
    }
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let (min, max) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let rms = (window.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    Ok(StatFeatures {
        mean,
        var,
        std: var.sqrt(),
        min,
        max,
        rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_values() {
        let s = stat_features(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.var, 1.25);
        assert_eq!((s.min, s.max), (1.0, 4.0));
        assert!((s.rms - 7.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_and_empty() {
        assert_eq!(stat_features(&[5.0, 5.0, 5.0]).unwrap().var, 0.0);
        assert!(matches!(stat_features(&[]), Err(PhysioError::EmptyWindow)));
    }
}
