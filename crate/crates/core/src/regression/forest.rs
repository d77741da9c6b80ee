//! CART regression trees and a bagged forest of them.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Forest hyper-parameters. `mtry = None` means ⌈d/3⌉ candidate features per
/// split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForestSpec {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub mtry: Option<usize>,
    pub rng_seed: u64,
}

impl Default for ForestSpec {
    fn default() -> Self {
        ForestSpec { n_trees: 300, max_depth: 3, min_samples_split: 2, mtry: None, rng_seed: 0 }
    }
}

impl ForestSpec {
    pub fn with_seed(&self, rng_seed: u64) -> ForestSpec {
        ForestSpec { rng_seed, ..self.clone() }
    }

    pub fn mtry_for(&self, d: usize) -> usize {
        self.mtry.unwrap_or(d.div_ceil(3)).clamp(1, d.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::validation("n_trees must be at least 1"));
        }
        if self.max_depth == 0 {
            return Err(Error::validation("max_depth must be at least 1"));
        }
        if self.mtry == Some(0) {
            return Err(Error::validation("mtry must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Binary regression tree stored as a node arena; node 0 is the root.
/// Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    /// Total squared-error reduction credited to each feature.
    gains: Vec<f64>,
}

impl RegressionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn has_splits(&self) -> bool {
        self.nodes.len() > 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionForest {
    trees: Vec<RegressionTree>,
    n_features: usize,
}

impl RegressionForest {
    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}

/// SplitMix64 finaliser, used to derive independent stream seeds.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains `spec.n_trees` trees on bootstrap resamples. Each tree draws from
/// its own stream derived from `rng_seed` and the tree index, so the result
/// does not depend on the thread count.
pub fn rf_train(x: &[Vec<f64>], y: &[f64], spec: &ForestSpec) -> Result<RegressionForest> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} rows but {} targets", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::degenerate("a forest needs at least 2 samples"));
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::degenerate("no feature dimensions"));
    }
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::shape("ragged feature rows"));
    }
    let trees = (0..spec.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.rng_seed ^ mix(t as u64)));
            let m = x.len();
            let rows: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
            let mut builder =
                Builder { x, y, spec, mtry: spec.mtry_for(d), rng, nodes: Vec::new(), gains: vec![0.0; d] };
            builder.grow(rows, 0);
            RegressionTree { nodes: builder.nodes, gains: builder.gains }
        })
        .collect();
    Ok(RegressionForest { trees, n_features: d })
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    spec: &'a ForestSpec,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    gains: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf { value: mean });

        let y0 = self.y[rows[0]];
        let pure = rows.iter().all(|&r| self.y[r] == y0);
        if pure || depth >= self.spec.max_depth || rows.len() < self.spec.min_samples_split {
            return id;
        }
        let Some(best) = self.best_split(&rows) else {
            return id;
        };
        self.gains[best.feature] += best.gain;
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][best.feature] <= best.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        id
    }

    /// Largest squared-error reduction over `mtry` features drawn without
    /// replacement, thresholds at midpoints between distinct sorted values.
    fn best_split(&mut self, rows: &[usize]) -> Option<BestSplit> {
        let d = self.gains.len();
        let mut features = sample(&mut self.rng, d, self.mtry).into_vec();
        features.sort_unstable();

        let n = rows.len() as f64;
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let parent_sse = rows.iter().map(|&r| (self.y[r] - total / n).powi(2)).sum::<f64>();

        let mut best: Option<BestSplit> = None;
        let mut order: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
        for f in features {
            order.clear();
            order.extend(rows.iter().map(|&r| (self.x[r][f], self.y[r])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));

            let (mut sum_l, mut sq_l) = (0.0, 0.0);
            let sq_total: f64 = order.iter().map(|p| p.1 * p.1).sum();
            for k in 1..order.len() {
                let yk = order[k - 1].1;
                sum_l += yk;
                sq_l += yk * yk;
                if order[k].0 == order[k - 1].0 {
                    continue;
                }
                let (nl, nr) = (k as f64, n - k as f64);
                let sum_r = total - sum_l;
                let sse = (sq_l - sum_l * sum_l / nl) + (sq_total - sq_l - sum_r * sum_r / nr);
                let gain = parent_sse - sse;
                if gain > 1e-12 * parent_sse.max(f64::MIN_POSITIVE) && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let threshold = 0.5 * (order[k - 1].0 + order[k].0);
                    best = Some(BestSplit { feature: f, threshold, gain });
                }
            }
        }
        best
    }
}

/// Mean of the per-tree leaf values reached by `x`.
pub fn rf_predict(forest: &RegressionForest, x: &[f64]) -> f64 {
    forest.trees.iter().map(|t| t.predict(x)).sum::<f64>() / forest.trees.len() as f64
}

/// Rounds half away from zero, then clamps to the mRS range 0..=4.
pub fn round_mrs(raw: f64) -> u8 {
    raw.round().clamp(0.0, 4.0) as u8
}

pub fn predict_mrs(forest: &RegressionForest, x: &[f64]) -> u8 {
    round_mrs(rf_predict(forest, x))
}

/// Mean decrease in squared error. Each tree's per-feature gains are
/// normalised to sum 1; trees are averaged over those that split at all.
/// All zeros when no tree has a split.
pub fn rf_importance(forest: &RegressionForest) -> Vec<f64> {
    let mut acc = vec![0.0; forest.n_features];
    let mut used = 0usize;
    for t in &forest.trees {
        let total: f64 = t.gains.iter().sum();
        if total <= 0.0 {
            continue;
        }
        used += 1;
        for (a, g) in acc.iter_mut().zip(&t.gains) {
            *a += g / total;
        }
    }
    if used > 0 {
        let s: f64 = acc.iter().sum();
        acc.iter_mut().for_each(|a| *a /= s);
    }
    acc
}
