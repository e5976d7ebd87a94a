//! Histogram regression trees shared by boosting and random forests.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;

pub const MAX_BINS: usize = 32;

/// Candidate thresholds per feature; a row goes left at threshold `b` when
/// its value is `<= edges[b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Binned {
    pub edges: Vec<Vec<f64>>,
    /// Column-major bin indices, `bins[j * rows + i]`.
    pub bins: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
}

fn feature_edges(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    values.dedup();
    if values.len() <= 1 {
        return Vec::new();
    }
    if values.len() <= MAX_BINS {
        return values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let mut edges: Vec<f64> = (1..MAX_BINS)
        .map(|k| {
            let q = k * (values.len() - 1) / MAX_BINS;
            0.5 * (values[q] + values[q + 1])
        })
        .collect();
    edges.dedup();
    edges
}

impl Binned {
    pub fn new(x: &Matrix) -> Self {
        let cols = x.cols();
        let edges: Vec<Vec<f64>> = (0..cols).map(|j| feature_edges(x.column(j))).collect();
        let mut bins = Vec::with_capacity(x.rows() * cols);
        for (j, e) in edges.iter().enumerate() {
            bins.extend((0..x.rows()).map(|i| e.partition_point(|b| *b < x.get(i, j)) as u8));
        }
        Self {
            edges,
            bins,
            rows: x.rows(),
            cols,
        }
    }

    fn column(&self, j: usize) -> &[u8] {
        &self.bins[j * self.rows..(j + 1) * self.rows]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(v) => Some(*v),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` uses all.
    pub max_features: Option<usize>,
}

struct Builder<'a, R> {
    data: &'a Binned,
    y: &'a [f64],
    params: TreeParams,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
    perm: Vec<usize>,
}

impl<R: Rng> Builder<'_, R> {
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, usize)> {
        let n = rows.len();
        let total: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let parent = total * total / n as f64;
        // partial Fisher-Yates over a persistent permutation of the columns
        let m = match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < self.data.cols => {
                let m = m.max(1);
                for k in 0..m {
                    let r = rng.random_range(k..self.data.cols);
                    self.perm.swap(k, r);
                }
                self.perm[..m].sort_unstable();
                m
            }
            _ => self.data.cols,
        };
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut best: Option<(f64, usize, usize)> = None;
        let mut sums = [0.0f64; MAX_BINS];
        let mut counts = [0usize; MAX_BINS];
        for idx in 0..m {
            let j = self.perm[idx];
            let n_edges = self.data.edges[j].len();
            if n_edges == 0 {
                continue;
            }
            // only bins in [lo, hi] are occupied; thresholds outside leave a side empty
            let col = self.data.column(j);
            let (mut lo, mut hi) = (MAX_BINS, 0);
            for &i in rows {
                let b = col[i] as usize;
                sums[b] += self.y[i];
                counts[b] += 1;
                lo = lo.min(b);
                hi = hi.max(b);
            }
            let (mut s_left, mut n_left) = (0.0, 0usize);
            for b in lo..hi {
                s_left += sums[b];
                n_left += counts[b];
                let n_right = n - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let s_right = total - s_left;
                let gain = s_left * s_left / n_left as f64 + s_right * s_right / n_right as f64
                    - parent;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, j, b));
                }
            }
            sums[lo..=hi].fill(0.0);
            counts[lo..=hi].fill(0);
        }
        best.map(|(_, j, b)| (j, b))
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || rows.len() < 2 * self.params.min_samples_leaf.max(1) {
            return id;
        }
        let Some((j, b)) = self.best_split(rows) else {
            return id;
        };
        let col = self.data.column(j);
        let mut split = 0;
        for k in 0..rows.len() {
            if col[rows[k]] as usize <= b {
                rows.swap(k, split);
                split += 1;
            }
        }
        let (l_rows, r_rows) = rows.split_at_mut(split);
        let left = self.grow(l_rows, depth + 1);
        let right = self.grow(r_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: j,
            threshold: self.data.edges[j][b],
            left,
            right,
        };
        id
    }
}

/// Least-squares tree on the given rows (repeats allowed, as in a bootstrap
/// sample).
pub fn build_tree<R: Rng>(
    data: &Binned,
    y: &[f64],
    rows: &mut [usize],
    params: TreeParams,
    rng: Option<&mut R>,
) -> Tree {
    assert!(!rows.is_empty(), "tree needs at least one row");
    let mut b = Builder {
        data,
        y,
        params,
        rng,
        nodes: Vec::new(),
        perm: (0..data.cols).collect(),
    };
    b.grow(rows, 0);
    Tree { nodes: b.nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn step_function_is_learned() {
        let rows: Vec<[f64; 1]> = (0..40).map(|i| [i as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { 5.0 }).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let data = Binned::new(&x);
        let mut idx: Vec<usize> = (0..40).collect();
        let params = TreeParams {
            max_depth: Some(1),
            min_samples_leaf: 1,
            max_features: None,
        };
        let t = build_tree::<ChaCha8Rng>(&data, &y, &mut idx, params, None);
        assert_eq!(t.predict_row(&[3.0]), 1.0);
        assert_eq!(t.predict_row(&[33.0]), 5.0);
        assert_eq!(t.nodes.len(), 3);
    }

    #[test]
    fn edges_for_many_values() {
        let e = feature_edges((0..1000).map(f64::from).collect());
        assert!(e.len() < MAX_BINS);
        assert!(e.windows(2).all(|w| w[0] < w[1]));
        assert!(feature_edges(vec![2.0; 5]).is_empty());
    }
}
