//! Univariate F-test scoring and top-K feature selection.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::{Matrix, ModelError};

/// F value reported when a feature is (numerically) collinear with the target.
pub const F_SENTINEL: f64 = 1e12;
const PERFECT_R2: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FScore {
    pub f: f64,
    pub p: f64,
}

/// F statistic of the simple linear regression of `y` on each column.
pub fn f_regression_scores(x: &Matrix, y: &[f64]) -> Result<Vec<FScore>, ModelError> {
    let n = y.len();
    if x.rows() != n {
        return Err(ModelError::DimensionMismatch {
            expected: n,
            found: x.rows(),
        });
    }
    if n < 3 {
        return Err(ModelError::TooFewRows(n));
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let syy: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    if syy <= 1e-24 * y_mean.abs().max(1.0) {
        return Err(ModelError::DegenerateTarget);
    }
    let dof = (n - 2) as f64;
    let dist = FisherSnedecor::new(1.0, dof).expect("dof >= 1");
    let mut out = Vec::with_capacity(x.cols());
    for j in 0..x.cols() {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for (xi, yi) in col.iter().zip(y) {
            sxx += (xi - mean) * (xi - mean);
            sxy += (xi - mean) * (yi - y_mean);
        }
        if sxx <= 1e-24 * mean.abs().max(1.0).powi(2) * n as f64 {
            out.push(FScore { f: 0.0, p: 1.0 });
            continue;
        }
        let r2 = (sxy * sxy / (sxx * syy)).min(1.0);
        if r2 >= PERFECT_R2 {
            out.push(FScore {
                f: F_SENTINEL,
                p: 0.0,
            });
            continue;
        }
        let f = r2 / (1.0 - r2) * dof;
        out.push(FScore { f, p: dist.sf(f) });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorParams {
    pub scores: Vec<f64>,
    /// Ascending column indices.
    pub selected: Vec<usize>,
}

impl SelectorParams {
    /// Keeps the `k` largest finite scores; ties go to the lower index.
    pub fn from_scores(scores: Vec<f64>, k: usize) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).filter(|&j| scores[j].is_finite()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order.truncate(k);
        order.sort_unstable();
        Self {
            scores,
            selected: order,
        }
    }

    /// Selection on `f_regression_scores`; a constant target scores every
    /// feature 0.
    pub fn fit(x: &Matrix, y: &[f64], k: usize) -> Result<Self, ModelError> {
        let scores = match f_regression_scores(x, y) {
            Ok(s) => s.into_iter().map(|s| s.f).collect(),
            Err(ModelError::DegenerateTarget) => vec![0.0; x.cols()],
            Err(e) => return Err(e),
        };
        Ok(Self::from_scores(scores, k))
    }
}
