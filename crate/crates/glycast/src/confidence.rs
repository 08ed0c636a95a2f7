//! Infinitesimal-jackknife variance for forest predictions and
//! normal-quantile prediction intervals.
//!
//! With `t_b` the prediction of tree `b` at the query point, `t̄` their
//! mean and `N[b][i]` the bootstrap count of training row `i` in tree
//! `b`'s sample:
//!
//! ```text
//! Cov_i       = (1/B) * sum_b (N[b][i] - 1) * (t_b - t̄)
//! v_raw       = sum_i Cov_i^2
//! v_corrected = v_raw - (n / B^2) * sum_b (t_b - t̄)^2
//! ```
//!
//! `v_raw` is the biased variant; `v_corrected` subtracts the
//! Monte-Carlo noise term and may overshoot below zero at small `B`, in
//! which case interval construction uses the clamped value.
//!
//! ```
//! use glycast::confidence::ij_variance_from_parts;
//!
//! // Two trees, two training rows, each tree trained on one row twice.
//! let counts = vec![vec![2, 0], vec![0, 2]];
//! let est = ij_variance_from_parts(&counts, &[1.0, 3.0], 2);
//! assert_eq!(est.v_raw, 2.0);
//! assert_eq!(est.v_corrected, 1.0);
//! ```

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::Error;
use crate::forest::Forest;
use crate::Result;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VarianceEstimate {
    /// Biased infinitesimal-jackknife variance, (mmol/L)^2.
    pub v_raw: f64,
    /// Bias-corrected variance; may be negative at small B.
    pub v_corrected: f64,
    /// max(v_corrected, 0), safe for interval construction.
    pub v_corrected_clamped: f64,
    /// Mean of the per-tree predictions.
    pub tree_mean: f64,
    /// (1/B) * sum_b (t_b - t̄)^2.
    pub tree_spread: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub center: f64,
    pub half_width: f64,
    pub coverage: f64,
}

impl PredictionInterval {
    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }
}

/// Infinitesimal-jackknife variance of the forest prediction at `x`.
/// Requires a bootstrap-trained forest; the count matrix is otherwise
/// uninformative.
pub fn ij_variance(forest: &Forest, x: &[f64]) -> Result<VarianceEstimate> {
    if !forest.params.bootstrap {
        return Err(Error::EstimatorUnavailable(
            "infinitesimal jackknife needs bootstrap resample counts; refit with bootstrap on"
                .into(),
        ));
    }
    let preds = forest.tree_predictions(x)?;
    Ok(ij_variance_from_parts(&forest.counts, &preds, forest.n_train))
}

/// The estimator on raw parts; exposed for testing against forests
/// constructed by hand.
pub fn ij_variance_from_parts(counts: &[Vec<u32>], preds: &[f64], n_train: usize) -> VarianceEstimate {
    let b = preds.len();
    let b_f = b as f64;
    let tree_mean = preds.iter().sum::<f64>() / b_f;
    let centered: Vec<f64> = preds.iter().map(|&p| p - tree_mean).collect();

    let mut v_raw = 0.0;
    for i in 0..n_train {
        let mut cov = 0.0;
        for (row, &c) in counts.iter().zip(&centered) {
            cov += (row[i] as f64 - 1.0) * c;
        }
        cov /= b_f;
        v_raw += cov * cov;
    }

    let tree_spread = centered.iter().map(|c| c * c).sum::<f64>() / b_f;
    let v_corrected = v_raw - (n_train as f64 / b_f) * tree_spread;
    VarianceEstimate {
        v_raw,
        v_corrected,
        v_corrected_clamped: v_corrected.max(0.0),
        tree_mean,
        tree_spread,
    }
}

/// Symmetric normal-quantile interval around `center`. The variance must
/// be nonnegative; clamp a corrected estimate before calling.
pub fn prediction_interval(center: f64, variance: f64, coverage: f64) -> Result<PredictionInterval> {
    if variance < 0.0 {
        return Err(Error::Domain(format!("variance {variance} < 0; clamp before interval")));
    }
    if !(0.0..1.0).contains(&coverage) || coverage <= 0.0 {
        return Err(Error::Domain(format!("coverage {coverage} outside (0, 1)")));
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let z = normal.inverse_cdf(0.5 + coverage / 2.0);
    Ok(PredictionInterval { center, half_width: z * variance.sqrt(), coverage })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{Forest, ForestParams};

    #[test]
    fn identical_trees_give_zero_variance() {
        let counts = vec![vec![1, 1, 0], vec![0, 1, 2]];
        let est = ij_variance_from_parts(&counts, &[4.0, 4.0], 3);
        assert_eq!(est.v_raw, 0.0);
        assert_eq!(est.v_corrected, 0.0);
        assert_eq!(est.tree_spread, 0.0);
    }

    #[test]
    fn hand_fixture_b2_n2() {
        // B=2, n=2, N=[[2,0],[0,2]], predictions (1,3)
        let counts = vec![vec![2, 0], vec![0, 2]];
        let est = ij_variance_from_parts(&counts, &[1.0, 3.0], 2);
        assert_eq!(est.tree_mean, 2.0);
        assert_eq!(est.v_raw, 2.0);
        assert_eq!(est.v_corrected, 1.0);
        assert_eq!(est.v_corrected_clamped, 1.0);
    }

    #[test]
    fn duplicating_trees_preserves_v_raw() {
        let counts = vec![vec![2, 1, 0], vec![0, 2, 1], vec![1, 0, 2]];
        let preds = [5.0, 6.5, 4.2];
        let single = ij_variance_from_parts(&counts, &preds, 3);
        let mut doubled_counts = counts.clone();
        doubled_counts.extend(counts.clone());
        let mut doubled_preds = preds.to_vec();
        doubled_preds.extend_from_slice(&preds);
        let doubled = ij_variance_from_parts(&doubled_counts, &doubled_preds, 3);
        assert!((single.v_raw - doubled.v_raw).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_off_forest_is_rejected() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let targets: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let params = ForestParams { n_estimators: 5, ..ForestParams::extra_trees() };
        let forest = Forest::fit(&rows, &targets, &params).unwrap();
        assert!(matches!(ij_variance(&forest, &[1.0]), Err(Error::EstimatorUnavailable(_))));
    }

    #[test]
    fn corrected_at_most_raw_on_fitted_forests() {
        let rows: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64, (i % 5) as f64]).collect();
        let targets: Vec<f64> = (0..25).map(|i| (i as f64 * 0.7).cos() * 3.0 + 7.0).collect();
        let params = ForestParams { n_estimators: 20, seed: 2, ..ForestParams::random_forest() };
        let forest = Forest::fit(&rows, &targets, &params).unwrap();
        for probe in [[0.0, 0.0], [12.0, 3.0], [24.0, 4.0]] {
            let est = ij_variance(&forest, &probe).unwrap();
            assert!(est.v_raw >= 0.0);
            assert!(est.v_corrected <= est.v_raw);
            assert!(est.v_corrected_clamped >= 0.0);
        }
    }

    #[test]
    fn interval_widths() {
        let pi = prediction_interval(5.0, 0.0, 0.95).unwrap();
        assert_eq!(pi.half_width, 0.0);
        let pi = prediction_interval(5.0, 4.0, 0.95).unwrap();
        assert!((pi.half_width - 3.9199).abs() < 1e-3);
        assert!((pi.half_width - 2.0 * 1.959964).abs() < 1e-5);
        let pi = prediction_interval(5.0, 1.0, 0.682_689_492).unwrap();
        assert!((pi.half_width - 1.0).abs() < 1e-6);
    }

    #[test]
    fn interval_monotone_in_variance_and_coverage() {
        let base = prediction_interval(0.0, 1.0, 0.9).unwrap().half_width;
        assert!(prediction_interval(0.0, 2.0, 0.9).unwrap().half_width > base);
        assert!(prediction_interval(0.0, 1.0, 0.95).unwrap().half_width > base);
    }

    #[test]
    fn negative_variance_rejected() {
        assert!(prediction_interval(0.0, -0.1, 0.9).is_err());
    }
}
