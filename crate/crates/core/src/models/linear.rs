//! Linear regressors on standardized, selected features.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{median, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>()
    }
}

fn to_dmatrix(x: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(x.rows(), x.cols(), x.as_slice())
}

fn column_means(x: &Matrix) -> Vec<f64> {
    let n = x.rows().max(1) as f64;
    (0..x.cols()).map(|j| x.column(j).iter().sum::<f64>() / n).collect()
}

fn centered(x: &Matrix, y: &[f64]) -> (DMatrix<f64>, DVector<f64>, Vec<f64>, f64) {
    let x_mean = column_means(x);
    let y_mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
    let mut a = to_dmatrix(x);
    for (j, m) in x_mean.iter().enumerate() {
        a.column_mut(j).add_scalar_mut(-m);
    }
    let b = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    (a, b, x_mean, y_mean)
}

fn intercept_for(coef: &[f64], x_mean: &[f64], y_mean: f64) -> f64 {
    y_mean - coef.iter().zip(x_mean).map(|(c, m)| c * m).sum::<f64>()
}

/// Minimum-norm least squares through the SVD of the centered design.
pub fn fit_ols(x: &Matrix, y: &[f64]) -> LinearModel {
    if x.cols() == 0 || x.rows() == 0 {
        return LinearModel {
            coef: vec![0.0; x.cols()],
            intercept: y.iter().sum::<f64>() / y.len().max(1) as f64,
        };
    }
    let (a, b, x_mean, y_mean) = centered(x, y);
    let svd = a.svd(true, true);
    let tol = svd.singular_values.max() * 1e-12 * x.rows().max(x.cols()) as f64;
    let coef: Vec<f64> = svd
        .solve(&b, tol)
        .map(|c| c.iter().copied().collect())
        .unwrap_or_else(|_| vec![0.0; x.cols()]);
    LinearModel {
        intercept: intercept_for(&coef, &x_mean, y_mean),
        coef,
    }
}

/// Gamma hyperpriors on the noise precision (alpha) and weight precision
/// (lambda).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesPriors {
    pub alpha_1: f64,
    pub alpha_2: f64,
    pub lambda_1: f64,
    pub lambda_2: f64,
}

impl BayesPriors {
    pub fn uniform(scale: f64) -> Self {
        Self {
            alpha_1: scale,
            alpha_2: scale,
            lambda_1: scale,
            lambda_2: scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesianRidgeModel {
    pub linear: LinearModel,
    pub alpha: f64,
    pub lambda: f64,
    pub iterations: usize,
}

pub const BAYES_MAX_ITER: usize = 300;
pub const BAYES_TOL: f64 = 1e-4;

/// Evidence maximization by fixed-point updates of the two precisions.
pub fn fit_bayesian_ridge(x: &Matrix, y: &[f64], priors: BayesPriors) -> BayesianRidgeModel {
    let n = x.rows() as f64;
    let (a, b, x_mean, y_mean) = centered(x, y);
    let var_y = b.norm_squared() / n.max(1.0);
    let mut alpha = 1.0 / (var_y + f64::EPSILON);
    let mut lambda = 1.0;
    if x.cols() == 0 || x.rows() == 0 {
        return BayesianRidgeModel {
            linear: LinearModel {
                coef: vec![0.0; x.cols()],
                intercept: y_mean,
            },
            alpha,
            lambda,
            iterations: 0,
        };
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u computed");
    let v_t = svd.v_t.as_ref().expect("v_t computed");
    let s = &svd.singular_values;
    let uty = u.transpose() * &b;
    let mut coef = DVector::zeros(x.cols());
    let mut iterations = 0;
    for it in 0..BAYES_MAX_ITER {
        iterations = it + 1;
        let shrink = DVector::from_iterator(
            s.len(),
            s.iter()
                .zip(uty.iter())
                .map(|(&si, &ui)| si * ui / (si * si + lambda / alpha)),
        );
        let new_coef = v_t.transpose() * shrink;
        let resid = &b - &a * &new_coef;
        let sse = resid.norm_squared();
        let gamma: f64 = s
            .iter()
            .map(|&si| alpha * si * si / (lambda + alpha * si * si))
            .sum();
        lambda = (gamma + 2.0 * priors.lambda_1) / (new_coef.norm_squared() + 2.0 * priors.lambda_2);
        alpha = (n - gamma + 2.0 * priors.alpha_1) / (sse + 2.0 * priors.alpha_2);
        let change = (&new_coef - &coef).lp_norm(1);
        let scale = new_coef.lp_norm(1).max(f64::MIN_POSITIVE);
        coef = new_coef;
        if it > 0 && change / scale < BAYES_TOL {
            break;
        }
    }
    // Posterior mean with the final precisions.
    let shrink = DVector::from_iterator(
        s.len(),
        s.iter()
            .zip(uty.iter())
            .map(|(&si, &ui)| si * ui / (si * si + lambda / alpha)),
    );
    let coef: Vec<f64> = (v_t.transpose() * shrink).iter().copied().collect();
    BayesianRidgeModel {
        linear: LinearModel {
            intercept: intercept_for(&coef, &x_mean, y_mean),
            coef,
        },
        alpha,
        lambda,
        iterations,
    }
}

pub const SVR_ITERATIONS: usize = 400;

/// `0.5 |w|^2 + C mean(max(0, |y - w.x - b| - eps))`
pub fn svr_objective(model: &LinearModel, x: &Matrix, y: &[f64], c: f64, epsilon: f64) -> f64 {
    let n = y.len().max(1) as f64;
    let loss: f64 = (0..x.rows())
        .map(|i| ((y[i] - model.predict_row(x.row(i))).abs() - epsilon).max(0.0))
        .sum();
    0.5 * model.coef.iter().map(|w| w * w).sum::<f64>() + c * loss / n
}

/// Epsilon-insensitive linear regression by full-batch subgradient descent
/// on `w` (step 1/(t+1)) with the intercept set to the median residual after
/// every step. Returns the best iterate seen.
pub fn fit_svr_linear(x: &Matrix, y: &[f64], c: f64, epsilon: f64) -> LinearModel {
    let n = y.len().max(1) as f64;
    let d = x.cols();
    let mut model = LinearModel {
        coef: vec![0.0; d],
        intercept: median(y),
    };
    // residuals without the intercept, y - w.x
    let mut resid = y.to_vec();
    let objective = |m: &LinearModel, resid: &[f64]| {
        let loss: f64 = resid.iter().map(|r| ((r - m.intercept).abs() - epsilon).max(0.0)).sum();
        0.5 * m.coef.iter().map(|w| w * w).sum::<f64>() + c * loss / n
    };
    let mut best = model.clone();
    let mut best_obj = objective(&model, &resid);
    for t in 0..SVR_ITERATIONS {
        let mut grad = model.coef.clone();
        for (i, r) in resid.iter().enumerate() {
            let r = r - model.intercept;
            if r.abs() > epsilon {
                let s = r.signum() * c / n;
                for (g, xv) in grad.iter_mut().zip(x.row(i)) {
                    *g -= s * xv;
                }
            }
        }
        let eta = 1.0 / (t as f64 + 1.0);
        for (w, g) in model.coef.iter_mut().zip(&grad) {
            *w -= eta * g;
        }
        for (i, r) in resid.iter_mut().enumerate() {
            *r = y[i] - x.row(i).iter().zip(&model.coef).map(|(a, b)| a * b).sum::<f64>();
        }
        model.intercept = median(&resid);
        let obj = objective(&model, &resid);
        if obj < best_obj {
            best_obj = obj;
            best = model.clone();
        }
    }
    best
}
