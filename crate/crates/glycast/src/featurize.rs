//! Regression instance construction under the 1-hour-horizon cutoff.
//!
//! For each glucose measurement with at least one earlier measurement,
//! an [`Instance`] pairs the measured value (the target) with features
//! computed strictly from events at or before `t_target - horizon`.
//!
//! ```
//! use glycast::featurize::{build_instances, FeatureSpec};
//! use glycast::synth::{generate_patient, GeneratorConfig};
//!
//! let profile = glycast::data::parse_profiles(
//!     "patient_id,age,gender,weight,bmi,diabetes_type,years_since_diagnosis,hba1c\n\
//!      p01,34,m,68.5,22.6,1,18,8.2\n",
//! ).unwrap().remove(0);
//! let log = generate_patient(&GeneratorConfig::default(), &profile).unwrap();
//!
//! let spec = FeatureSpec::default();
//! let (instances, skipped) = build_instances(&log, &spec).unwrap();
//! assert!(!instances.is_empty());
//! for inst in &instances {
//!     // the cutoff sits exactly one horizon before the target
//!     assert_eq!(inst.t_cutoff, inst.t_target - spec.horizon);
//! }
//! # let _ = skipped;
//! ```

use serde::{Deserialize, Serialize};

use crate::data::{InsulinKind, PatientLog, DAY};
use crate::Result;

/// Lookback window as (start, end) offsets in seconds before the cutoff.
pub type Window = (i64, i64);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Prediction horizon in seconds.
    pub horizon: i64,
    /// Lookback windows before the cutoff, ordered, non-overlapping.
    pub lookback_windows: Vec<Window>,
    pub last_glucose: bool,
    pub last_glucose_age: bool,
    pub time_of_day_sin_cos: bool,
    pub day_of_week: bool,
    pub carb_sums: bool,
    pub rapid_insulin_sums: bool,
    pub basal_insulin_sums: bool,
    pub active_interval_counts: bool,
    pub profile_context: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            horizon: 3600,
            lookback_windows: vec![(0, 7200), (7200, 14_400), (14_400, 28_800)],
            last_glucose: true,
            last_glucose_age: true,
            time_of_day_sin_cos: true,
            day_of_week: true,
            carb_sums: true,
            rapid_insulin_sums: true,
            basal_insulin_sums: true,
            active_interval_counts: true,
            profile_context: true,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> crate::Result<()> {
        if self.horizon <= 0 {
            return Err(crate::Error::Config("horizon must be > 0".into()));
        }
        let mut prev_end = i64::MIN;
        for &(s, e) in &self.lookback_windows {
            if s >= e || s < prev_end {
                return Err(crate::Error::Config(
                    "lookback windows must be ordered and non-overlapping".into(),
                ));
            }
            prev_end = e;
        }
        Ok(())
    }

    /// Names of the feature dimensions, fixed for a given spec.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.last_glucose {
            names.push("last_glucose".to_string());
        }
        if self.last_glucose_age {
            names.push("last_glucose_age_h".to_string());
        }
        if self.time_of_day_sin_cos {
            names.push("tod_sin".to_string());
            names.push("tod_cos".to_string());
        }
        if self.day_of_week {
            names.push("day_of_week".to_string());
        }
        for (i, _) in self.lookback_windows.iter().enumerate() {
            if self.carb_sums {
                names.push(format!("carb_sum_w{i}"));
            }
            if self.rapid_insulin_sums {
                names.push(format!("rapid_insulin_w{i}"));
            }
            if self.basal_insulin_sums {
                names.push(format!("basal_insulin_w{i}"));
            }
            if self.active_interval_counts {
                names.push(format!("active_intervals_w{i}"));
            }
        }
        if self.profile_context {
            names.push("age".to_string());
            names.push("bmi".to_string());
            names.push("dt_type1".to_string());
            names.push("dt_type1_5".to_string());
            names.push("dt_type2".to_string());
            names.push("years_since_diagnosis".to_string());
        }
        names
    }
}

/// One regression instance: features, target and bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub patient_id: String,
    pub t_target: i64,
    pub t_cutoff: i64,
    pub x: Vec<f64>,
    /// Target glucose in mmol/L.
    pub y: f64,
    /// Seconds from the newest pre-cutoff glucose to `t_target`; carried
    /// for the sanity filter even when not a feature.
    pub last_glucose_age: i64,
    /// The newest pre-cutoff glucose value, for plausibility filtering.
    pub last_glucose: f64,
}

/// Counts of glucose events skipped for lack of a prior measurement.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SkipReport {
    pub no_prior_glucose: usize,
}

/// Local time-of-day encoding: `(sin, cos, hour)`.
pub fn time_of_day_encoding(t: i64, utc_offset: i64) -> (f64, f64, u32) {
    let s = (t + utc_offset).rem_euclid(DAY) as f64;
    let angle = 2.0 * std::f64::consts::PI * s / DAY as f64;
    (angle.sin(), angle.cos(), (s / 3600.0) as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reducer {
    Sum,
    Count,
}

/// Reduces events falling in `(t_cutoff - end, t_cutoff - start]`. The
/// cutoff end is inclusive; the far edge is exclusive so adjacent
/// windows never double count.
pub fn window_aggregate<E>(
    events: &[E],
    t_cutoff: i64,
    window: Window,
    time_of: impl Fn(&E) -> i64,
    value_of: impl Fn(&E) -> f64,
    reducer: Reducer,
) -> f64 {
    let (start, end) = window;
    let lo = t_cutoff - end;
    let hi = t_cutoff - start;
    events
        .iter()
        .filter(|e| {
            let t = time_of(e);
            t > lo && t <= hi
        })
        .map(|e| match reducer {
            Reducer::Sum => value_of(e),
            Reducer::Count => 1.0,
        })
        .sum()
}

/// Builds one instance per glucose event that has at least one earlier
/// glucose measurement at or before its cutoff. Instances are ordered by
/// `t_target`; the feature layout is identical across a run.
pub fn build_instances(log: &PatientLog, spec: &FeatureSpec) -> Result<(Vec<Instance>, SkipReport)> {
    spec.validate()?;
    let mut instances = Vec::new();
    let mut skips = SkipReport::default();
    let offset = log.profile.utc_offset;

    for event in &log.glucose {
        let t_cutoff = event.t - spec.horizon;
        // newest glucose with t <= cutoff
        let prior = match log.glucose.iter().take_while(|e| e.t <= t_cutoff).last() {
            Some(p) => p,
            None => {
                skips.no_prior_glucose += 1;
                continue;
            }
        };

        let mut x = Vec::new();
        if spec.last_glucose {
            x.push(prior.value);
        }
        if spec.last_glucose_age {
            x.push((event.t - prior.t) as f64 / 3600.0);
        }
        if spec.time_of_day_sin_cos {
            let (sin, cos, _) = time_of_day_encoding(event.t, offset);
            x.push(sin);
            x.push(cos);
        }
        if spec.day_of_week {
            // day index modulo 7; a stable weekday proxy
            x.push(log.local_day(event.t).rem_euclid(7) as f64);
        }
        for &window in &spec.lookback_windows {
            if spec.carb_sums {
                x.push(window_aggregate(&log.carbs, t_cutoff, window, |e| e.t, |e| e.grams, Reducer::Sum));
            }
            if spec.rapid_insulin_sums {
                let rapid: Vec<_> =
                    log.insulin.iter().filter(|e| e.kind == InsulinKind::Rapid).collect();
                x.push(window_aggregate(&rapid, t_cutoff, window, |e| e.t, |e| e.units, Reducer::Sum));
            }
            if spec.basal_insulin_sums {
                let basal: Vec<_> =
                    log.insulin.iter().filter(|e| e.kind == InsulinKind::Basal).collect();
                x.push(window_aggregate(&basal, t_cutoff, window, |e| e.t, |e| e.units, Reducer::Sum));
            }
            if spec.active_interval_counts {
                let active: Vec<_> = log.activity.iter().filter(|a| a.steps >= 10).collect();
                x.push(window_aggregate(&active, t_cutoff, window, |a| a.start, |_| 1.0, Reducer::Count));
            }
        }
        if spec.profile_context {
            let p = &log.profile;
            x.push(p.age);
            x.push(p.bmi);
            use crate::data::DiabetesType::*;
            x.push((p.diabetes_type == Type1) as u8 as f64);
            x.push((p.diabetes_type == Type1_5) as u8 as f64);
            x.push((p.diabetes_type == Type2) as u8 as f64);
            x.push(p.years_since_diagnosis);
        }

        instances.push(Instance {
            patient_id: log.profile.patient_id.clone(),
            t_target: event.t,
            t_cutoff,
            x,
            y: event.value,
            last_glucose_age: event.t - prior.t,
            last_glucose: prior.value,
        });
    }
    Ok((instances, skips))
}

/// Writes instances as CSV with named feature columns.
pub fn instances_to_csv(instances: &[Instance], spec: &FeatureSpec) -> String {
    let names = spec.feature_names();
    let mut out = String::from("patient_id,t_target,y,");
    out.push_str(&names.join(","));
    out.push('\n');
    for inst in instances {
        out.push_str(&format!(
            "{},{},{},{}\n",
            inst.patient_id,
            crate::data::format_timestamp(inst.t_target),
            inst.y,
            inst.x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        ));
    }
    out
}
