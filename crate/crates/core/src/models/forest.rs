//! Random forest of Gini-split decision trees.
//!
//! Each tree draws its own bootstrap sample and per-node feature subsets from
//! a ChaCha stream keyed by `(seed, tree index)`, so serial and parallel
//! training produce identical forests.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_labels, FeatureMatrix, ModelError};

/// Sample weighting applied during split search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    #[default]
    None,
    /// Each class contributes half of the total weight.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    pub max_depth: usize,
    pub features_per_split: usize,
    pub seed: u64,
    /// Draw a bootstrap sample per tree. When false every tree sees the full
    /// training set once.
    pub bootstrap: bool,
    pub class_weight: ClassWeight,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            min_samples_leaf: 6,
            max_depth: 4,
            features_per_split: 3,
            seed: 0,
            bootstrap: true,
            class_weight: ClassWeight::None,
        }
    }
}

impl RfParams {
    pub fn validate(&self, n_features: usize) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidParams(msg));
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1".into());
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1".into());
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be at least 1".into());
        }
        if self.features_per_split == 0 || self.features_per_split > n_features {
            return bad(format!(
                "features_per_split must be in 1..={n_features}, got {}",
                self.features_per_split
            ));
        }
        Ok(())
    }
}

/// Serial or rayon-parallel tree construction. Both give identical models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        /// Weighted sample count reaching this node.
        samples: f64,
        impurity: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        /// Weighted positive-class fraction.
        value: f64,
        samples: f64,
        impurity: f64,
    },
}

impl Node {
    fn samples(&self) -> f64 {
        match self {
            Node::Split { samples, .. } | Node::Leaf { samples, .. } => *samples,
        }
    }

    fn impurity(&self) -> f64 {
        match self {
            Node::Split { impurity, .. } | Node::Leaf { impurity, .. } => *impurity,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn accumulate_importance(&self, root_samples: f64, acc: &mut [f64]) {
        if let Node::Split {
            feature,
            samples,
            impurity,
            left,
            right,
            ..
        } = self
        {
            let decrease = samples * impurity
                - left.samples() * left.impurity()
                - right.samples() * right.impurity();
            acc[*feature] += decrease / root_samples;
            left.accumulate_importance(root_samples, acc);
            right.accumulate_importance(root_samples, acc);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: Node,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: RfParams,
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
}

impl ForestModel {
    /// Mean positive-leaf fraction over all trees.
    pub fn predict_row(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.n_features {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.root.predict(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }

    /// Mean decrease in Gini impurity per feature, weighted by the fraction
    /// of samples reaching each split, averaged over trees and normalized to
    /// sum to one. All zeros when no tree split at all.
    pub fn gini_importance(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.n_features];
        for t in &self.trees {
            let mut acc = vec![0.0; self.n_features];
            t.root.accumulate_importance(t.root.samples(), &mut acc);
            for (s, a) in total.iter_mut().zip(acc) {
                *s += a;
            }
        }
        let n = self.trees.len() as f64;
        total.iter_mut().for_each(|v| *v /= n);
        let sum: f64 = total.iter().sum();
        if sum > 0.0 {
            total.iter_mut().for_each(|v| *v /= sum);
        }
        total
    }
}

struct TrainSet<'a> {
    x: &'a FeatureMatrix,
    y: &'a [bool],
    weight: [f64; 2],
    params: &'a RfParams,
}

impl TrainSet<'_> {
    #[inline]
    fn w(&self, row: usize) -> f64 {
        self.weight[self.y[row] as usize]
    }
}

/// Weighted Gini impurity of a node with total weight `w` and positive weight `p`.
#[inline]
fn gini(w: f64, p: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let q = p / w;
    2.0 * q * (1.0 - q)
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    /// Σ child weight × child impurity.
    score: f64,
}

fn best_split(set: &TrainSet<'_>, rows: &[usize], features: &[usize]) -> Option<SplitChoice> {
    let msl = set.params.min_samples_leaf;
    let n = rows.len();
    let total_w: f64 = rows.iter().map(|&r| set.w(r)).sum();
    let total_p: f64 = rows.iter().filter(|&&r| set.y[r]).map(|&r| set.w(r)).sum();
    let mut best: Option<SplitChoice> = None;
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(n);

    for &f in features {
        keyed.clear();
        keyed.extend(rows.iter().map(|&r| (set.x.get(r, f), r)));
        keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let (mut lw, mut lp) = (0.0, 0.0);
        for i in 1..n {
            let r = keyed[i - 1].1;
            lw += set.w(r);
            if set.y[r] {
                lp += set.w(r);
            }
            let (a, b) = (keyed[i - 1].0, keyed[i].0);
            if a == b || i < msl || n - i < msl {
                continue;
            }
            let (rw, rp) = (total_w - lw, total_p - lp);
            let score = lw * gini(lw, lp) + rw * gini(rw, rp);
            let better = match &best {
                None => true,
                Some(cur) => score < cur.score - 1e-12 * cur.score.abs().max(1.0),
            };
            if better {
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    score,
                });
            }
        }
    }
    best
}

fn grow(set: &TrainSet<'_>, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> Node {
    let w: f64 = rows.iter().map(|&r| set.w(r)).sum();
    let p: f64 = rows.iter().filter(|&&r| set.y[r]).map(|&r| set.w(r)).sum();
    let impurity = gini(w, p);
    let leaf = |value| Node::Leaf {
        value,
        samples: w,
        impurity,
    };
    let value = if w > 0.0 { p / w } else { 0.0 };
    if depth >= set.params.max_depth || p == 0.0 || p == w || rows.len() < 2 * set.params.min_samples_leaf {
        return leaf(value);
    }

    let n_features = set.x.cols();
    let mut features = index::sample(rng, n_features, set.params.features_per_split).into_vec();
    features.sort_unstable();

    let Some(split) = best_split(set, &rows, &features) else {
        return leaf(value);
    };
    if w * impurity - split.score <= 1e-12 * w {
        return leaf(value);
    }
    let (left, right): (Vec<usize>, Vec<usize>) = rows
        .into_iter()
        .partition(|&r| set.x.get(r, split.feature) <= split.threshold);
    Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        samples: w,
        impurity,
        left: Box::new(grow(set, left, depth + 1, rng)),
        right: Box::new(grow(set, right, depth + 1, rng)),
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn grow_tree(set: &TrainSet<'_>, tree: usize) -> DecisionTree {
    let mut rng = tree_rng(set.params.seed, tree);
    let n = set.x.rows();
    let rows: Vec<usize> = if set.params.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    DecisionTree {
        root: grow(set, rows, 0, &mut rng),
    }
}

fn class_weights(y: &[bool], mode: ClassWeight) -> [f64; 2] {
    match mode {
        ClassWeight::None => [1.0, 1.0],
        ClassWeight::Balanced => {
            let n = y.len() as f64;
            let pos = y.iter().filter(|&&v| v).count() as f64;
            [n / (2.0 * (n - pos)), n / (2.0 * pos)]
        }
    }
}

/// Trains a forest using rayon across trees.
pub fn train_random_forest(x: &FeatureMatrix, y: &[bool], params: &RfParams) -> Result<ForestModel, ModelError> {
    train_random_forest_with(x, y, params, Execution::Parallel)
}

pub fn train_random_forest_with(
    x: &FeatureMatrix,
    y: &[bool],
    params: &RfParams,
    execution: Execution,
) -> Result<ForestModel, ModelError> {
    check_labels(x, y)?;
    params.validate(x.cols())?;
    let set = TrainSet {
        x,
        y,
        weight: class_weights(y, params.class_weight),
        params,
    };
    let trees = match execution {
        Execution::Serial => (0..params.n_trees).map(|t| grow_tree(&set, t)).collect(),
        Execution::Parallel => (0..params.n_trees).into_par_iter().map(|t| grow_tree(&set, t)).collect(),
    };
    Ok(ForestModel {
        params: params.clone(),
        n_features: x.cols(),
        trees,
    })
}
