//! Boosted and bagged tree ensembles.
//!
//! Tree `t` of either ensemble depends only on the data, the spec seed and
//! `t` itself, so the first `m` trees of a larger fit equal a fit with `m`
//! trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{build_tree, Binned, Tree, TreeParams};
use super::Matrix;

pub const MIN_SAMPLES_LEAF: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrModel {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl GbrModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.init
            + self.learning_rate * self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>()
    }
}

pub fn fit_gbr(x: &Matrix, y: &[f64], n_estimators: usize, learning_rate: f64, max_depth: usize) -> GbrModel {
    let n = y.len();
    let init = y.iter().sum::<f64>() / n as f64;
    let data = Binned::new(x);
    let mut pred = vec![init; n];
    let mut trees = Vec::with_capacity(n_estimators);
    let params = TreeParams {
        max_depth: Some(max_depth),
        min_samples_leaf: MIN_SAMPLES_LEAF,
        max_features: None,
    };
    let mut rows: Vec<usize> = (0..n).collect();
    for _ in 0..n_estimators {
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        rows.iter_mut().enumerate().for_each(|(i, r)| *r = i);
        let tree = build_tree::<ChaCha8Rng>(&data, &resid, &mut rows, params, None);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += learning_rate * tree.predict_row(x.row(i));
        }
        trees.push(tree);
    }
    GbrModel {
        init,
        learning_rate,
        trees,
    }
}

/// Mean squared training error after each boosting round (index 0 = the
/// constant start).
pub fn gbr_training_curve(model: &GbrModel, x: &Matrix, y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let mut pred = vec![model.init; y.len()];
    let mse = |pred: &[f64]| pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    let mut curve = vec![mse(&pred)];
    for tree in &model.trees {
        for (i, p) in pred.iter_mut().enumerate() {
            *p += model.learning_rate * tree.predict_row(x.row(i));
        }
        curve.push(mse(&pred));
    }
    curve
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub y_min: f64,
    pub y_max: f64,
}

impl ForestModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mean = self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64;
        mean.clamp(self.y_min, self.y_max)
    }
}

fn tree_seed(seed: u64, t: usize) -> u64 {
    // splitmix64 step over the pair
    let mut z = seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fit_random_forest(x: &Matrix, y: &[f64], n_estimators: usize, max_features: usize, seed: u64) -> ForestModel {
    let n = y.len();
    let data = Binned::new(x);
    let params = TreeParams {
        max_depth: None,
        min_samples_leaf: MIN_SAMPLES_LEAF,
        max_features: Some(max_features.clamp(1, x.cols().max(1))),
    };
    let trees = (0..n_estimators)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, t));
            let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            build_tree(&data, y, &mut rows, params, Some(&mut rng))
        })
        .collect();
    let (y_min, y_max) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    ForestModel {
        trees,
        y_min,
        y_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Matrix, Vec<f64>) {
        let rows: Vec<[f64; 3]> = (0..120)
            .map(|i| {
                let f = i as f64;
                [(f * 0.3).sin(), (f * 0.07).cos(), (f * 1.3).sin()]
            })
            .collect();
        let y = rows.iter().map(|r| 2.0 * r[0] + r[1] * r[1] + 0.1 * r[2]).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn boosting_loss_is_monotone() {
        let (x, y) = data();
        let m = fit_gbr(&x, &y, 60, 0.1, 3);
        let curve = gbr_training_curve(&m, &x, &y);
        assert!(curve.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(curve.last().unwrap() < &(curve[0] * 0.2));
    }

    #[test]
    fn boosting_prefix_equals_smaller_fit() {
        let (x, y) = data();
        let big = fit_gbr(&x, &y, 40, 0.1, 2);
        let small = fit_gbr(&x, &y, 20, 0.1, 2);
        assert_eq!(&big.trees[..20], &small.trees[..]);
    }

    #[test]
    fn forest_bounded_and_prefix_stable() {
        let (x, y) = data();
        let big = fit_random_forest(&x, &y, 30, 2, 7);
        let small = fit_random_forest(&x, &y, 10, 2, 7);
        assert_eq!(&big.trees[..10], &small.trees[..]);
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for i in 0..x.rows() {
            let p = big.predict_row(&[x.get(i, 0) * 3.0, -5.0, 9.0]);
            assert!(p >= lo && p <= hi);
        }
        assert_ne!(fit_random_forest(&x, &y, 5, 2, 8), fit_random_forest(&x, &y, 5, 2, 7));
    }
}
