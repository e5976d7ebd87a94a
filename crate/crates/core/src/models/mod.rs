//! Regressors, baselines, and the scaling/selection steps fitted with them.
//!
//! [`TrainedModel::fit`] standardizes with the fit rows' statistics, keeps the
//! top-K features by F score, and fits the regressor on the result. Prediction
//! applies the same three steps.

mod ensemble;
mod linear;
mod matrix;
mod scaler;
mod select;
mod tree;

pub use ensemble::{fit_gbr, fit_random_forest, gbr_training_curve, ForestModel, GbrModel, MIN_SAMPLES_LEAF};
pub use linear::{
    fit_bayesian_ridge, fit_ols, fit_svr_linear, svr_objective, BayesPriors, BayesianRidgeModel,
    LinearModel, BAYES_MAX_ITER, BAYES_TOL, SVR_ITERATIONS,
};
pub use matrix::Matrix;
pub use scaler::ScalerParams;
pub use select::{f_regression_scores, FScore, SelectorParams, F_SENTINEL};
pub use tree::{Node, Tree, MAX_BINS};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_K_FEATURES: usize = 8;
pub const MODEL_FORMAT: &str = "nrt-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model has not been fitted")]
    NotFitted,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("target is constant")]
    DegenerateTarget,
    #[error("need at least 3 rows, got {0}")]
    TooFewRows(usize),
    #[error("cannot fit on zero rows")]
    Empty,
    #[error("model file: {0}")]
    Format(String),
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    let n = v.len();
    let (lower, mid, _) = v.select_nth_unstable_by(n / 2, f64::total_cmp);
    let mid = *mid;
    if n % 2 == 1 {
        mid
    } else {
        let below = lower.iter().copied().max_by(f64::total_cmp).unwrap();
        0.5 * (below + mid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    MeanBaseline,
    MedianBaseline,
    Ols,
    BayesianRidge,
    SvrLinear,
    Gbr,
    RandomForest,
}

impl RegressorKind {
    pub const ALL: [RegressorKind; 7] = [
        RegressorKind::MeanBaseline,
        RegressorKind::MedianBaseline,
        RegressorKind::Ols,
        RegressorKind::BayesianRidge,
        RegressorKind::SvrLinear,
        RegressorKind::Gbr,
        RegressorKind::RandomForest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegressorKind::MeanBaseline => "mean_baseline",
            RegressorKind::MedianBaseline => "median_baseline",
            RegressorKind::Ols => "ols",
            RegressorKind::BayesianRidge => "bayesian_ridge",
            RegressorKind::SvrLinear => "svr_linear",
            RegressorKind::Gbr => "gbr",
            RegressorKind::RandomForest => "random_forest",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, RegressorKind::MeanBaseline | RegressorKind::MedianBaseline)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Third,
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        let m = match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().round() as usize,
            MaxFeatures::Third => d / 3,
        };
        m.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorParams {
    MeanBaseline,
    MedianBaseline,
    Ols,
    BayesianRidge { hyperprior: f64 },
    SvrLinear { c: f64, epsilon: f64 },
    Gbr { n_estimators: usize, learning_rate: f64, max_depth: usize },
    RandomForest { n_estimators: usize, max_features: MaxFeatures },
}

impl RegressorParams {
    pub fn kind(&self) -> RegressorKind {
        match self {
            RegressorParams::MeanBaseline => RegressorKind::MeanBaseline,
            RegressorParams::MedianBaseline => RegressorKind::MedianBaseline,
            RegressorParams::Ols => RegressorKind::Ols,
            RegressorParams::BayesianRidge { .. } => RegressorKind::BayesianRidge,
            RegressorParams::SvrLinear { .. } => RegressorKind::SvrLinear,
            RegressorParams::Gbr { .. } => RegressorKind::Gbr,
            RegressorParams::RandomForest { .. } => RegressorKind::RandomForest,
        }
    }

    /// Parameters used when a kind has no grid (or none is searched).
    pub fn default_for(kind: RegressorKind) -> Self {
        match kind {
            RegressorKind::MeanBaseline => RegressorParams::MeanBaseline,
            RegressorKind::MedianBaseline => RegressorParams::MedianBaseline,
            RegressorKind::Ols => RegressorParams::Ols,
            RegressorKind::BayesianRidge => RegressorParams::BayesianRidge { hyperprior: 1e-6 },
            RegressorKind::SvrLinear => RegressorParams::SvrLinear { c: 1.0, epsilon: 0.1 },
            RegressorKind::Gbr => RegressorParams::Gbr {
                n_estimators: 100,
                learning_rate: 0.1,
                max_depth: 3,
            },
            RegressorKind::RandomForest => RegressorParams::RandomForest {
                n_estimators: 100,
                max_features: MaxFeatures::Sqrt,
            },
        }
    }

    /// Tree count of an ensemble.
    pub fn n_estimators(&self) -> Option<usize> {
        match self {
            RegressorParams::Gbr { n_estimators, .. }
            | RegressorParams::RandomForest { n_estimators, .. } => Some(*n_estimators),
            _ => None,
        }
    }

    pub fn with_n_estimators(self, n: usize) -> Self {
        match self {
            RegressorParams::Gbr {
                learning_rate,
                max_depth,
                ..
            } => RegressorParams::Gbr {
                n_estimators: n,
                learning_rate,
                max_depth,
            },
            RegressorParams::RandomForest { max_features, .. } => RegressorParams::RandomForest {
                n_estimators: n,
                max_features,
            },
            other => other,
        }
    }
}

/// Default hyperparameter grid; empty for kinds without hyperparameters.
pub fn grid(kind: RegressorKind) -> Vec<RegressorParams> {
    let mut out = Vec::new();
    match kind {
        RegressorKind::MeanBaseline | RegressorKind::MedianBaseline | RegressorKind::Ols => {}
        RegressorKind::BayesianRidge => {
            for hyperprior in [1e-6, 1e-4] {
                out.push(RegressorParams::BayesianRidge { hyperprior });
            }
        }
        RegressorKind::SvrLinear => {
            for c in [0.1, 1.0, 10.0] {
                for epsilon in [0.01, 0.1] {
                    out.push(RegressorParams::SvrLinear { c, epsilon });
                }
            }
        }
        RegressorKind::Gbr => {
            for n_estimators in [50, 100, 200] {
                for learning_rate in [0.05, 0.1] {
                    for max_depth in [2, 3] {
                        out.push(RegressorParams::Gbr {
                            n_estimators,
                            learning_rate,
                            max_depth,
                        });
                    }
                }
            }
        }
        RegressorKind::RandomForest => {
            for n_estimators in [100, 300] {
                for max_features in [MaxFeatures::Sqrt, MaxFeatures::Third] {
                    out.push(RegressorParams::RandomForest {
                        n_estimators,
                        max_features,
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    pub params: RegressorParams,
    pub seed: u64,
    pub k_features: usize,
}

impl RegressorSpec {
    pub fn new(params: RegressorParams, seed: u64) -> Self {
        Self {
            params,
            seed,
            k_features: DEFAULT_K_FEATURES,
        }
    }

    pub fn kind(&self) -> RegressorKind {
        self.params.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Learned {
    Constant { value: f64 },
    Linear(LinearModel),
    BayesianRidge(BayesianRidgeModel),
    Gbr(GbrModel),
    Forest(ForestModel),
}

impl Learned {
    fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            Learned::Constant { value } => *value,
            Learned::Linear(m) => m.predict_row(x),
            Learned::BayesianRidge(m) => m.linear.predict_row(x),
            Learned::Gbr(m) => m.predict_row(x),
            Learned::Forest(m) => m.predict_row(x),
        }
    }
}

/// Which rows a model saw, for leakage checks and reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// Caller-supplied row ids of the fit rows, in fit order.
    pub fit_rows: Vec<usize>,
    pub n_features: usize,
    /// SHA-256 over the fit matrix and targets.
    pub data_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub version: u32,
    pub spec: RegressorSpec,
    pub scaler: ScalerParams,
    pub selector: SelectorParams,
    pub learned: Learned,
    pub meta: TrainingMeta,
}

pub fn data_hash(x: &Matrix, y: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update((x.rows() as u64).to_le_bytes());
    h.update((x.cols() as u64).to_le_bytes());
    for v in x.as_slice().iter().chain(y) {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl TrainedModel {
    /// Fits on `x`/`y`; `fit_rows[i]` is the caller's id for row `i`.
    pub fn fit(spec: &RegressorSpec, x: &Matrix, y: &[f64], fit_rows: Vec<usize>) -> Result<Self, ModelError> {
        if x.rows() != y.len() {
            return Err(ModelError::DimensionMismatch {
                expected: x.rows(),
                found: y.len(),
            });
        }
        if fit_rows.len() != y.len() {
            return Err(ModelError::DimensionMismatch {
                expected: y.len(),
                found: fit_rows.len(),
            });
        }
        if y.is_empty() {
            return Err(ModelError::Empty);
        }
        let scaler = ScalerParams::fit(x);
        let z = scaler.transform(x);
        let selector = if x.rows() >= 3 {
            SelectorParams::fit(&z, y, spec.k_features)?
        } else {
            SelectorParams::from_scores(vec![0.0; x.cols()], spec.k_features)
        };
        let zs = z.select_cols(&selector.selected);
        let learned = fit_learned(&spec.params, &zs, y, spec.seed);
        Ok(Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            spec: *spec,
            scaler,
            selector,
            learned,
            meta: TrainingMeta {
                fit_rows,
                n_features: x.cols(),
                data_hash: data_hash(x, y),
            },
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        if x.cols() != self.meta.n_features {
            return Err(ModelError::DimensionMismatch {
                expected: self.meta.n_features,
                found: x.cols(),
            });
        }
        let z = self.scaler.transform(x).select_cols(&self.selector.selected);
        Ok((0..z.rows()).map(|i| self.learned.predict_row(z.row(i))).collect())
    }

    /// The first `n` trees of an ensemble; identical to fitting with `n`.
    pub fn truncated(&self, n: usize) -> Option<Self> {
        let learned = match &self.learned {
            Learned::Gbr(m) if n <= m.trees.len() => Learned::Gbr(GbrModel {
                trees: m.trees[..n].to_vec(),
                ..m.clone()
            }),
            Learned::Forest(m) if n <= m.trees.len() => Learned::Forest(ForestModel {
                trees: m.trees[..n].to_vec(),
                ..m.clone()
            }),
            _ => return None,
        };
        let mut spec = self.spec;
        spec.params = spec.params.with_n_estimators(n);
        Some(Self {
            spec,
            learned,
            ..self.clone()
        })
    }

    /// Coefficients of a linear model mapped back to unscaled inputs:
    /// `(selected column, coefficient)` pairs and the intercept.
    pub fn original_scale_linear(&self) -> Option<(Vec<(usize, f64)>, f64)> {
        let lin = match &self.learned {
            Learned::Linear(m) => m,
            Learned::BayesianRidge(m) => &m.linear,
            _ => return None,
        };
        let mut intercept = lin.intercept;
        let mut coef = Vec::new();
        for (&j, &w) in self.selector.selected.iter().zip(&lin.coef) {
            let s = self.scaler.std[j];
            let c = if s > 0.0 { w / s } else { 0.0 };
            intercept -= c * self.scaler.mean[j];
            coef.push((j, c));
        }
        Some((coef, intercept))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let m: TrainedModel =
            serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        if m.format != MODEL_FORMAT || m.version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported format {} v{}",
                m.format, m.version
            )));
        }
        Ok(m)
    }
}

fn fit_learned(params: &RegressorParams, x: &Matrix, y: &[f64], seed: u64) -> Learned {
    match *params {
        RegressorParams::MeanBaseline => Learned::Constant {
            value: y.iter().sum::<f64>() / y.len() as f64,
        },
        RegressorParams::MedianBaseline => Learned::Constant { value: median(y) },
        RegressorParams::Ols => Learned::Linear(fit_ols(x, y)),
        RegressorParams::BayesianRidge { hyperprior } => {
            Learned::BayesianRidge(fit_bayesian_ridge(x, y, BayesPriors::uniform(hyperprior)))
        }
        RegressorParams::SvrLinear { c, epsilon } => Learned::Linear(fit_svr_linear(x, y, c, epsilon)),
        RegressorParams::Gbr {
            n_estimators,
            learning_rate,
            max_depth,
        } => Learned::Gbr(fit_gbr(x, y, n_estimators, learning_rate, max_depth)),
        RegressorParams::RandomForest {
            n_estimators,
            max_features,
        } => Learned::Forest(fit_random_forest(
            x,
            y,
            n_estimators,
            max_features.resolve(x.cols()),
            seed,
        )),
    }
}

/// A spec that may or may not have been fitted yet.
#[derive(Debug, Clone)]
pub struct Estimator {
    pub spec: RegressorSpec,
    model: Option<TrainedModel>,
}

impl Estimator {
    pub fn new(spec: RegressorSpec) -> Self {
        Self { spec, model: None }
    }

    pub fn fit(&mut self, x: &Matrix, y: &[f64]) -> Result<&TrainedModel, ModelError> {
        let model = TrainedModel::fit(&self.spec, x, y, (0..y.len()).collect())?;
        Ok(self.model.insert(model))
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        self.model.as_ref().ok_or(ModelError::NotFitted)?.predict(x)
    }

    pub fn model(&self) -> Option<&TrainedModel> {
        self.model.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert!(grid(RegressorKind::MeanBaseline).is_empty());
        assert_eq!(grid(RegressorKind::Gbr).len(), 12);
        assert_eq!(grid(RegressorKind::RandomForest).len(), 4);
        assert_eq!(grid(RegressorKind::SvrLinear).len(), 6);
        assert_eq!(grid(RegressorKind::BayesianRidge).len(), 2);
    }

    #[test]
    fn mean_baseline() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let spec = RegressorSpec::new(RegressorParams::MeanBaseline, 0);
        let m = TrainedModel::fit(&spec, &x, &[1.0, 2.0, 3.0, 10.0], vec![0, 1, 2, 3]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![4.0; 4]);
    }

    #[test]
    fn not_fitted_and_dimension_mismatch() {
        let spec = RegressorSpec::new(RegressorParams::Ols, 0);
        let mut e = Estimator::new(spec);
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 3.0], [2.0, 2.0], [3.0, 7.0]]).unwrap();
        assert!(matches!(e.predict(&x), Err(ModelError::NotFitted)));
        e.fit(&x, &[1.0, 2.0, 3.0, 5.0]).unwrap();
        let bad = Matrix::from_rows(&[[1.0]]).unwrap();
        assert!(matches!(e.predict(&bad), Err(ModelError::DimensionMismatch { .. })));
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let rows: Vec<[f64; 3]> = (0..30)
            .map(|i| [(i as f64).sin(), (i as f64 * 0.3).cos(), i as f64 / 7.0])
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] + 0.3 * r[2]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        for params in [
            RegressorParams::Ols,
            RegressorParams::default_for(RegressorKind::BayesianRidge),
            RegressorParams::default_for(RegressorKind::Gbr),
            RegressorParams::RandomForest {
                n_estimators: 5,
                max_features: MaxFeatures::Third,
            },
        ] {
            let m = TrainedModel::fit(&RegressorSpec::new(params, 3), &x, &y, (0..30).collect()).unwrap();
            let back = TrainedModel::from_json(&m.to_json()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
        }
    }

    #[test]
    fn truncated_matches_direct_fit() {
        let rows: Vec<[f64; 2]> = (0..40).map(|i| [(i as f64).sin(), (i as f64 * 0.2).cos()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * r[1]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let big = RegressorSpec::new(
            RegressorParams::RandomForest {
                n_estimators: 30,
                max_features: MaxFeatures::Sqrt,
            },
            9,
        );
        let small = RegressorSpec {
            params: big.params.with_n_estimators(10),
            ..big
        };
        let a = TrainedModel::fit(&big, &x, &y, (0..40).collect()).unwrap().truncated(10).unwrap();
        let b = TrainedModel::fit(&small, &x, &y, (0..40).collect()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
