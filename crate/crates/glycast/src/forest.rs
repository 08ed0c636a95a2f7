//! From-scratch regression trees, random forest and extra-trees.
//!
//! Trees are grown by recursive variance-reduction splitting. The forest
//! records how often each training row entered each tree's bootstrap
//! sample; that count matrix is what the [`crate::confidence`] estimator
//! consumes. Fitting is deterministic for a given seed regardless of
//! how many threads are used.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::synth::derive_seed;
use crate::Result;

/// Score comparisons treat differences below this as ties, resolved by
/// lowest feature index then lowest threshold.
const SCORE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Scan midpoints of sorted unique values, take the best.
    Best,
    /// Draw one uniform threshold per candidate feature (extra-trees).
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    All,
    Fraction(f64),
    Count(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub split_mode: SplitMode,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams::random_forest()
    }
}

impl ForestParams {
    /// Random forest defaults: 500 trees, leaf size 4, bootstrap on.
    pub fn random_forest() -> Self {
        ForestParams {
            n_estimators: 500,
            min_leaf: 4,
            max_features: MaxFeatures::All,
            bootstrap: true,
            split_mode: SplitMode::Best,
            seed: 0,
        }
    }

    /// Extra-trees defaults: 300 trees, leaf size 2, no bootstrap,
    /// random split thresholds.
    pub fn extra_trees() -> Self {
        ForestParams {
            n_estimators: 300,
            min_leaf: 2,
            max_features: MaxFeatures::All,
            bootstrap: false,
            split_mode: SplitMode::Random,
            seed: 0,
        }
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_estimators < 1 {
            return Err(Error::Config("n_estimators must be >= 1".into()));
        }
        if self.min_leaf < 1 {
            return Err(Error::Config("min_leaf must be >= 1".into()));
        }
        if self.n_candidate_features(n_features) == 0 {
            return Err(Error::Config("max_features must be in (0, n_features]".into()));
        }
        Ok(())
    }

    fn n_candidate_features(&self, n_features: usize) -> usize {
        match self.max_features {
            MaxFeatures::All => n_features,
            MaxFeatures::Fraction(f) => {
                if f <= 0.0 {
                    0
                } else {
                    ((f * n_features as f64).ceil() as usize).min(n_features)
                }
            }
            MaxFeatures::Count(c) => c.min(n_features),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// Mean of the node's training targets.
        value: f64,
        n_samples: usize,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Internal { feature, threshold, left, right } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }
}

/// A trained ensemble plus the bootstrap-count matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
    /// `counts[b][i]` = times training row `i` entered tree `b`'s sample.
    /// All ones when bootstrap is off.
    pub counts: Vec<Vec<u32>>,
    pub params: ForestParams,
    pub n_train: usize,
    pub n_features: usize,
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    targets: &'a [f64],
    min_leaf: usize,
    n_candidates: usize,
    split_mode: SplitMode,
}

impl<'a> TreeBuilder<'a> {
    fn leaf(&self, idx: &[usize]) -> TreeNode {
        let sum: f64 = idx.iter().map(|&i| self.targets[i]).sum();
        TreeNode::Leaf { value: sum / idx.len() as f64, n_samples: idx.len() }
    }

    fn build(&self, idx: Vec<usize>, rng: &mut ChaCha8Rng) -> TreeNode {
        if idx.len() < 2 * self.min_leaf {
            return self.leaf(&idx);
        }
        let first = self.targets[idx[0]];
        if idx.iter().all(|&i| self.targets[i] == first) {
            return self.leaf(&idx);
        }

        let n_features = self.rows[0].len();
        let mut candidates = sample_without_replacement(n_features, self.n_candidates, rng);
        candidates.sort_unstable();

        let mut best: Option<(f64, usize, f64)> = None; // (score, feature, threshold)
        for &feature in &candidates {
            let candidate = match self.split_mode {
                SplitMode::Best => self.best_split_for_feature(&idx, feature),
                SplitMode::Random => self.random_split_for_feature(&idx, feature, rng),
            };
            if let Some((score, threshold)) = candidate {
                let improves = match best {
                    None => true,
                    Some((bs, _, _)) => score < bs - SCORE_TOL,
                };
                if improves {
                    best = Some((score, feature, threshold));
                }
            }
        }

        let (_, feature, threshold) = match best {
            Some(b) => b,
            None => return self.leaf(&idx),
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| self.rows[i][feature] <= threshold);
        TreeNode::Internal {
            feature,
            threshold,
            left: Box::new(self.build(left_idx, rng)),
            right: Box::new(self.build(right_idx, rng)),
        }
    }

    /// Scans midpoints of sorted unique feature values; returns the
    /// lowest weighted child SSE and its threshold, honoring min_leaf.
    fn best_split_for_feature(&self, idx: &[usize], feature: usize) -> Option<(f64, f64)> {
        let mut pairs: Vec<(f64, f64)> =
            idx.iter().map(|&i| (self.rows[i][feature], self.targets[i])).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let n = pairs.len();

        // prefix sums of y and y^2
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let prefix: Vec<(f64, f64)> = pairs
            .iter()
            .map(|&(_, y)| {
                sum += y;
                sum_sq += y * y;
                (sum, sum_sq)
            })
            .collect();
        let (total, total_sq) = prefix[n - 1];

        let mut best: Option<(f64, f64)> = None;
        for split_at in self.min_leaf..=(n - self.min_leaf) {
            let (lo, hi) = (pairs[split_at - 1].0, pairs[split_at].0);
            if lo == hi {
                continue;
            }
            let threshold = lo + (hi - lo) / 2.0;
            let (ls, lsq) = prefix[split_at - 1];
            let (rs, rsq) = (total - ls, total_sq - lsq);
            let n_l = split_at as f64;
            let n_r = (n - split_at) as f64;
            let score = (lsq - ls * ls / n_l) + (rsq - rs * rs / n_r);
            let improves = match best {
                None => true,
                Some((bs, _)) => score < bs - SCORE_TOL,
            };
            if improves {
                best = Some((score, threshold));
            }
        }
        best
    }

    /// Draws one uniform threshold in (min, max) of the node's values for
    /// this feature; rejected when the resulting children would violate
    /// min_leaf or the feature is constant at the node.
    fn random_split_for_feature(
        &self,
        idx: &[usize],
        feature: usize,
        rng: &mut ChaCha8Rng,
    ) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in idx {
            let v = self.rows[i][feature];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo >= hi {
            return None;
        }
        let threshold = rng.gen_range(lo..hi);
        let (mut n_l, mut sum_l, mut sq_l) = (0usize, 0.0, 0.0);
        let (mut n_r, mut sum_r, mut sq_r) = (0usize, 0.0, 0.0);
        for &i in idx {
            let y = self.targets[i];
            if self.rows[i][feature] <= threshold {
                n_l += 1;
                sum_l += y;
                sq_l += y * y;
            } else {
                n_r += 1;
                sum_r += y;
                sq_r += y * y;
            }
        }
        if n_l < self.min_leaf || n_r < self.min_leaf {
            return None;
        }
        let score =
            (sq_l - sum_l * sum_l / n_l as f64) + (sq_r - sum_r * sum_r / n_r as f64);
        Some((score, threshold))
    }
}

fn sample_without_replacement(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Fits a single tree on the given row indices (with multiplicity).
pub fn fit_tree(
    rows: &[Vec<f64>],
    targets: &[f64],
    params: &ForestParams,
    rng: &mut ChaCha8Rng,
) -> Result<TreeNode> {
    if rows.is_empty() {
        return Err(Error::Fit("cannot fit a tree on zero rows".into()));
    }
    params.validate(rows[0].len())?;
    let builder = TreeBuilder {
        rows,
        targets,
        min_leaf: params.min_leaf,
        n_candidates: params.n_candidate_features(rows[0].len()),
        split_mode: params.split_mode,
    };
    Ok(builder.build((0..rows.len()).collect(), rng))
}

impl Forest {
    /// Trains `n_estimators` trees, each on a bootstrap resample when
    /// bootstrap is on, recording the count matrix. Per-tree RNG streams
    /// derive from `seed` and the tree index, so parallel fitting is
    /// reproducible.
    pub fn fit(rows: &[Vec<f64>], targets: &[f64], params: &ForestParams) -> Result<Self> {
        if rows.is_empty() || rows.len() != targets.len() {
            return Err(Error::Fit("rows and targets must be non-empty and equal length".into()));
        }
        let n = rows.len();
        let n_features = rows[0].len();
        params.validate(n_features)?;

        let builder = TreeBuilder {
            rows,
            targets,
            min_leaf: params.min_leaf,
            n_candidates: params.n_candidate_features(n_features),
            split_mode: params.split_mode,
        };

        let fitted: Vec<(TreeNode, Vec<u32>)> = (0..params.n_estimators)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, b as u64));
                let (idx, counts) = if params.bootstrap {
                    let mut counts = vec![0u32; n];
                    let mut idx = Vec::with_capacity(n);
                    for _ in 0..n {
                        let i = rng.gen_range(0..n);
                        counts[i] += 1;
                        idx.push(i);
                    }
                    (idx, counts)
                } else {
                    ((0..n).collect(), vec![1u32; n])
                };
                (builder.build(idx, &mut rng), counts)
            })
            .collect();

        let (trees, counts) = fitted.into_iter().unzip();
        Ok(Forest { trees, counts, params: params.clone(), n_train: n, n_features })
    }

    /// Mean of the per-tree predictions.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let preds = self.tree_predictions(x)?;
        Ok(preds.iter().sum::<f64>() / preds.len() as f64)
    }

    /// Per-tree predictions at `x`, in tree order.
    pub fn tree_predictions(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: x.len() });
        }
        Ok(self.trees.iter().map(|t| t.predict(x)).collect())
    }

    /// Serializes to versioned JSON.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Versioned<'a> {
            format_version: u32,
            forest: &'a Forest,
        }
        Ok(serde_json::to_string(&Versioned { format_version: 1, forest: self })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Versioned {
            format_version: u32,
            forest: Forest,
        }
        let v: Versioned = serde_json::from_str(text)?;
        if v.format_version != 1 {
            return Err(Error::Config(format!(
                "unsupported forest format version {}",
                v.format_version
            )));
        }
        Ok(v.forest)
    }
}
