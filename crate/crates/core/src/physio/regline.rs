use serde::{Deserialize, Serialize};

use super::PhysioError;

/// Features of the least-squares line through a window, robust to the
/// level shifts caused by movement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegLineFeatures {
    /// `|slope|`
    pub f_slope: f64,
    /// `sqrt(|slope|)`
    pub f_sqrt_slope: f64,
    /// `sqrt(|intercept|)`
    pub f_intercept1: f64,
    /// `sqrt(|intercept|)^3`
    pub f_intercept2: f64,
}

/// Fits `y = a t + b` to `(t, y)` pairs. `t` should be seconds from the
/// window start.
pub fn regline_features(points: &[(f64, f64)]) -> Result<RegLineFeatures, PhysioError> {
    if points.len() < 2 {
        return Err(PhysioError::DegenerateWindow);
    }
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (sxx, sxy) = points.iter().fold((0.0, 0.0), |(sxx, sxy), &(t, y)| {
        let dt = t - t_mean;
        (sxx + dt * dt, sxy + dt * (y - y_mean))
    });
    if sxx <= 0.0 {
        return Err(PhysioError::DegenerateWindow);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let root = intercept.abs().sqrt();
    Ok(RegLineFeatures {
        f_slope: slope.abs(),
        f_sqrt_slope: slope.abs().sqrt(),
        f_intercept1: root,
        f_intercept2: root.powi(3),
    })
}
