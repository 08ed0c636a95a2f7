//! Selective prediction: sanity, stability (confidence) and night
//! filters, applied individually or combined. A prediction is retained
//! exactly when no enabled filter objects.
//!
//! ```
//! use glycast::filtering::{in_night_window, NightConfig};
//!
//! // a window that wraps midnight: 22:00 to 06:00
//! let night = NightConfig { start: 22 * 3600, end: 6 * 3600 };
//! assert!(in_night_window(23 * 3600, &night));
//! assert!(in_night_window(3 * 3600, &night));
//! assert!(!in_night_window(12 * 3600, &night));
//! ```

use serde::{Deserialize, Serialize};

use crate::confidence::{PredictionInterval, VarianceEstimate};
use crate::data::DAY;
use crate::featurize::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    StaleGlucose,
    ImplausibleValue,
    LowConfidence,
    Night,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceKind {
    Raw,
    Corrected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SanityConfig {
    /// Reject when the newest pre-cutoff glucose is older than this.
    pub max_last_glucose_age: i64,
    /// Reject when that glucose value falls outside this range.
    pub plausible_range: (f64, f64),
}

impl Default for SanityConfig {
    fn default() -> Self {
        SanityConfig {
            max_last_glucose_age: 8 * 3600,
            plausible_range: crate::data::DEFAULT_GLUCOSE_RANGE,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub variance_kind: VarianceKind,
    /// Absolute variance threshold in (mmol/L)^2; strictly above rejects.
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NightConfig {
    /// Local seconds-of-day, window start (inclusive).
    pub start: i64,
    /// Local seconds-of-day, window end (exclusive); may wrap midnight.
    pub end: i64,
}

impl Default for NightConfig {
    fn default() -> Self {
        NightConfig { start: 0, end: 6 * 3600 }
    }
}

/// Enabled filters; an absent section means that filter is off.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FilterConfig {
    pub sanity: Option<SanityConfig>,
    pub stability: Option<StabilityConfig>,
    pub night: Option<NightConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub retained: bool,
    pub reasons: Vec<RejectReason>,
}

impl FilterVerdict {
    fn from_reasons(reasons: Vec<RejectReason>) -> Self {
        FilterVerdict { retained: reasons.is_empty(), reasons }
    }
}

/// One scored prediction with everything the filters need.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub patient_id: String,
    pub t_target: i64,
    pub y_true: f64,
    pub y_pred: f64,
    /// Present for forest models trained with bootstrap.
    pub variance: Option<VarianceEstimate>,
    pub interval: Option<PredictionInterval>,
    pub last_glucose_age: i64,
    pub last_glucose: f64,
    /// Local seconds-of-day of the target time.
    pub target_seconds_of_day: i64,
    pub verdict: Option<FilterVerdict>,
}

/// Sanity fragment: staleness and plausibility of the last glucose input.
pub fn sanity_filter(instance: &Instance, cfg: &SanityConfig) -> Vec<RejectReason> {
    let mut reasons = Vec::new();
    if instance.last_glucose_age > cfg.max_last_glucose_age {
        reasons.push(RejectReason::StaleGlucose);
    }
    let (lo, hi) = cfg.plausible_range;
    if instance.last_glucose < lo || instance.last_glucose > hi {
        reasons.push(RejectReason::ImplausibleValue);
    }
    reasons
}

/// Stability fragment: rejects strictly above the variance threshold.
pub fn stability_filter(estimate: &VarianceEstimate, cfg: &StabilityConfig) -> Vec<RejectReason> {
    let v = match cfg.variance_kind {
        VarianceKind::Raw => estimate.v_raw,
        VarianceKind::Corrected => estimate.v_corrected_clamped,
    };
    if v > cfg.threshold {
        vec![RejectReason::LowConfidence]
    } else {
        vec![]
    }
}

/// True when `sod` falls in `[start, end)` on the 24 h circle.
pub fn in_night_window(sod: i64, cfg: &NightConfig) -> bool {
    let sod = sod.rem_euclid(DAY);
    let (s, e) = (cfg.start.rem_euclid(DAY), cfg.end.rem_euclid(DAY));
    if s <= e {
        (s..e).contains(&sod)
    } else {
        sod >= s || sod < e
    }
}

/// Night fragment on the prediction target's local time-of-day.
pub fn night_filter(target_sod: i64, cfg: &NightConfig) -> Vec<RejectReason> {
    if in_night_window(target_sod, cfg) {
        vec![RejectReason::Night]
    } else {
        vec![]
    }
}

fn verdict_for(record: &PredictionRecord, cfg: &FilterConfig) -> FilterVerdict {
    let mut reasons = Vec::new();
    if let Some(sanity) = &cfg.sanity {
        if record.last_glucose_age > sanity.max_last_glucose_age {
            reasons.push(RejectReason::StaleGlucose);
        }
        let (lo, hi) = sanity.plausible_range;
        if record.last_glucose < lo || record.last_glucose > hi {
            reasons.push(RejectReason::ImplausibleValue);
        }
    }
    if let Some(stability) = &cfg.stability {
        if let Some(estimate) = &record.variance {
            reasons.extend(stability_filter(estimate, stability));
        }
    }
    if let Some(night) = &cfg.night {
        reasons.extend(night_filter(record.target_seconds_of_day, night));
    }
    FilterVerdict::from_reasons(reasons)
}

/// Attaches a verdict to every record and returns the retained subset in
/// the original order.
pub fn apply_filters(
    records: &mut [PredictionRecord],
    cfg: &FilterConfig,
) -> Vec<PredictionRecord> {
    for record in records.iter_mut() {
        record.verdict = Some(verdict_for(record, cfg));
    }
    records
        .iter()
        .filter(|r| r.verdict.as_ref().is_some_and(|v| v.retained))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(age_h: i64, last_glucose: f64, variance: Option<f64>, sod_h: i64) -> PredictionRecord {
        PredictionRecord {
            patient_id: "p1".into(),
            t_target: 0,
            y_true: 6.0,
            y_pred: 6.5,
            variance: variance.map(|v| VarianceEstimate {
                v_raw: v,
                v_corrected: v,
                v_corrected_clamped: v,
                tree_mean: 6.5,
                tree_spread: 0.0,
            }),
            interval: None,
            last_glucose_age: age_h * 3600,
            last_glucose,
            target_seconds_of_day: sod_h * 3600,
            verdict: None,
        }
    }

    #[test]
    fn sanity_boundaries() {
        let cfg = SanityConfig::default();
        let inst = |age_h: i64, lg: f64| crate::featurize::Instance {
            patient_id: "p1".into(),
            t_target: 0,
            t_cutoff: -3600,
            x: vec![],
            y: 6.0,
            last_glucose_age: age_h * 3600,
            last_glucose: lg,
        };
        assert!(sanity_filter(&inst(2, 5.0), &cfg).is_empty());
        assert_eq!(sanity_filter(&inst(9, 5.0), &cfg), vec![RejectReason::StaleGlucose]);
        assert_eq!(sanity_filter(&inst(2, 0.5), &cfg), vec![RejectReason::ImplausibleValue]);
    }

    #[test]
    fn stability_strict_inequality() {
        let cfg = StabilityConfig { variance_kind: VarianceKind::Raw, threshold: 2.0 };
        let est = |v: f64| VarianceEstimate {
            v_raw: v,
            v_corrected: v,
            v_corrected_clamped: v,
            tree_mean: 0.0,
            tree_spread: 0.0,
        };
        assert!(stability_filter(&est(1.0), &cfg).is_empty());
        assert!(stability_filter(&est(2.0), &cfg).is_empty()); // boundary retained
        assert_eq!(stability_filter(&est(5.0), &cfg), vec![RejectReason::LowConfidence]);
        let inf = StabilityConfig { variance_kind: VarianceKind::Raw, threshold: f64::INFINITY };
        assert!(stability_filter(&est(1e12), &inf).is_empty());
    }

    #[test]
    fn night_window_membership() {
        let cfg = NightConfig::default();
        assert!(in_night_window(3 * 3600, &cfg));
        assert!(!in_night_window(12 * 3600, &cfg));
        let wrapping = NightConfig { start: 22 * 3600, end: 6 * 3600 };
        assert!(in_night_window(23 * 3600, &wrapping));
        assert!(in_night_window(2 * 3600, &wrapping));
        assert!(!in_night_window(12 * 3600, &wrapping));
        // boundaries: start inclusive, end exclusive
        assert!(in_night_window(22 * 3600, &wrapping));
        assert!(!in_night_window(6 * 3600, &wrapping));
    }

    #[test]
    fn empty_config_retains_everything() {
        let mut records = vec![record(20, 0.2, Some(1e9), 3)];
        let retained = apply_filters(&mut records, &FilterConfig::default());
        assert_eq!(retained.len(), 1);
    }

    #[test]
    fn union_semantics_collects_all_reasons() {
        let cfg = FilterConfig {
            sanity: Some(SanityConfig::default()),
            stability: Some(StabilityConfig { variance_kind: VarianceKind::Raw, threshold: 2.0 }),
            night: Some(NightConfig::default()),
        };
        let mut records = vec![record(9, 5.0, Some(5.0), 3)];
        let retained = apply_filters(&mut records, &cfg);
        assert!(retained.is_empty());
        let verdict = records[0].verdict.as_ref().unwrap();
        assert_eq!(
            verdict.reasons,
            vec![RejectReason::StaleGlucose, RejectReason::LowConfidence, RejectReason::Night]
        );
    }

    #[test]
    fn order_preserved_and_idempotent() {
        let cfg = FilterConfig {
            stability: Some(StabilityConfig { variance_kind: VarianceKind::Raw, threshold: 2.0 }),
            ..FilterConfig::default()
        };
        let mut records =
            vec![record(1, 5.0, Some(1.0), 9), record(1, 5.0, Some(5.0), 10), record(1, 5.0, Some(2.0), 11)];
        let retained = apply_filters(&mut records, &cfg);
        assert_eq!(retained.len(), 2);
        assert_eq!(retained[0].target_seconds_of_day, 9 * 3600);
        assert_eq!(retained[1].target_seconds_of_day, 11 * 3600);
        let again = apply_filters(&mut records, &cfg);
        assert_eq!(again.len(), 2);
    }

    #[test]
    fn records_without_variance_pass_stability() {
        let cfg = FilterConfig {
            stability: Some(StabilityConfig { variance_kind: VarianceKind::Raw, threshold: 0.1 }),
            ..FilterConfig::default()
        };
        let mut records = vec![record(1, 5.0, None, 9)];
        assert_eq!(apply_filters(&mut records, &cfg).len(), 1);
    }
}
