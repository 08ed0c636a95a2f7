//! Reference predictors: last observed value, training-set mean, and the
//! time-of-day weighted mean (Context-AVG).

use serde::{Deserialize, Serialize};

use crate::data::{GlucoseEvent, DAY};
use crate::error::Error;
use crate::Result;

/// Latest glucose value observed at or before `t_cutoff`.
pub fn predict_last(glucose: &[GlucoseEvent], t_cutoff: i64) -> Result<f64> {
    glucose
        .iter()
        .take_while(|e| e.t <= t_cutoff)
        .last()
        .map(|e| e.value)
        .ok_or_else(|| Error::NoPrediction("no glucose measurement at or before cutoff".into()))
}

/// Arithmetic mean of the training targets.
pub fn predict_avg(train_values: &[f64]) -> Result<f64> {
    if train_values.is_empty() {
        return Err(Error::NoPrediction("empty training set".into()));
    }
    Ok(train_values.iter().sum::<f64>() / train_values.len() as f64)
}

/// Weighted mean of past glucose values, weighted exponentially
/// decreasing in the circular time-of-day distance to the target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextAvgModel {
    /// (local seconds-of-day, mmol/L) pairs from the training split.
    pub training_points: Vec<(i64, f64)>,
    /// Decay rate per hour of time-of-day distance.
    pub decay_rate: f64,
}

impl ContextAvgModel {
    pub fn new(training_points: Vec<(i64, f64)>, decay_rate: f64) -> Self {
        ContextAvgModel { training_points, decay_rate }
    }
}

/// Circular time-of-day distance in hours, at most 12.
pub fn circular_distance_hours(a: i64, b: i64) -> f64 {
    let d = (a - b).rem_euclid(DAY);
    let d = d.min(DAY - d);
    d as f64 / 3600.0
}

/// Prediction at a target time-of-day: sum(w_i v_i) / sum(w_i) with
/// w_i = exp(-lambda * circular distance in hours).
pub fn predict_context_avg(model: &ContextAvgModel, target_tod: i64) -> Result<f64> {
    if model.training_points.is_empty() {
        return Err(Error::NoPrediction("context-avg model has no training points".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &(tod, value) in &model.training_points {
        let w = (-model.decay_rate * circular_distance_hours(tod, target_tod)).exp();
        num += w * value;
        den += w;
    }
    if den == 0.0 {
        // lambda so large that every weight underflowed: fall back to the
        // nearest time-of-day, earliest training point on ties.
        let nearest = model
            .training_points
            .iter()
            .enumerate()
            .min_by(|(i, (ta, _)), (j, (tb, _))| {
                circular_distance_hours(*ta, target_tod)
                    .partial_cmp(&circular_distance_hours(*tb, target_tod))
                    .unwrap()
                    .then(i.cmp(j))
            })
            .unwrap();
        return Ok(nearest.1 .1);
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_picks_latest_at_or_before_cutoff() {
        let g = |h: f64, v: f64| GlucoseEvent { t: (h * 3600.0) as i64, value: v };
        let events = vec![g(8.0, 5.0), g(10.983, 7.2)];
        assert_eq!(predict_last(&events, 11 * 3600).unwrap(), 7.2);
        assert_eq!(predict_last(&events[..1], 11 * 3600).unwrap(), 5.0);
        assert!(predict_last(&events, 7 * 3600).is_err());
    }

    #[test]
    fn avg_is_arithmetic_mean() {
        assert_eq!(predict_avg(&[5.0]).unwrap(), 5.0);
        assert_eq!(predict_avg(&[4.0, 6.0]).unwrap(), 5.0);
        assert_eq!(predict_avg(&[2.0, 3.0, 10.0]).unwrap(), 5.0);
        assert!(predict_avg(&[]).is_err());
    }

    #[test]
    fn context_avg_with_zero_decay_equals_avg() {
        let model = ContextAvgModel::new(vec![(8 * 3600, 4.0), (20 * 3600, 6.0)], 0.0);
        let p = predict_context_avg(&model, 3 * 3600).unwrap();
        assert!((p - 5.0).abs() < 1e-12);
    }

    #[test]
    fn context_avg_hand_value() {
        // points at 08:00 (5.0) and 20:00 (9.0), target 08:00, lambda 1/h
        let model = ContextAvgModel::new(vec![(8 * 3600, 5.0), (20 * 3600, 9.0)], 1.0);
        let p = predict_context_avg(&model, 8 * 3600).unwrap();
        let w = (-12.0f64).exp();
        let expected = (5.0 + 9.0 * w) / (1.0 + w);
        assert!((p - expected).abs() < 1e-12);
        assert!((p - 5.0000246).abs() < 1e-6);
    }

    #[test]
    fn single_point_dominates() {
        let model = ContextAvgModel::new(vec![(13 * 3600, 6.6)], 3.0);
        for tod in [0, 6 * 3600, 23 * 3600] {
            assert!((predict_context_avg(&model, tod).unwrap() - 6.6).abs() < 1e-12);
        }
    }

    #[test]
    fn circular_distance_properties() {
        assert_eq!(circular_distance_hours(23 * 3600, 3600), 2.0);
        assert_eq!(circular_distance_hours(3600, 23 * 3600), 2.0);
        assert_eq!(circular_distance_hours(0, 12 * 3600), 12.0);
        for (a, b) in [(0, 5 * 3600), (7 * 3600, 19 * 3600), (100, 86_000)] {
            let d = circular_distance_hours(a, b);
            assert!(d <= 12.0);
            assert_eq!(d, circular_distance_hours(b, a));
        }
    }

    #[test]
    fn convex_combination_bounds() {
        let model =
            ContextAvgModel::new(vec![(3 * 3600, 4.0), (9 * 3600, 8.5), (15 * 3600, 6.0)], 0.7);
        for tod in (0..24).map(|h| h * 3600) {
            let p = predict_context_avg(&model, tod).unwrap();
            assert!((4.0..=8.5).contains(&p));
        }
    }

    #[test]
    fn large_decay_converges_to_nearest() {
        let model = ContextAvgModel::new(vec![(8 * 3600, 5.0), (14 * 3600, 9.0)], 1e6);
        let p = predict_context_avg(&model, 13 * 3600).unwrap();
        assert_eq!(p, 9.0);
        // underflow path: distances large enough that all weights are 0
        let p = predict_context_avg(&model, 2 * 3600).unwrap();
        assert_eq!(p, 5.0);
    }
}
