//! Randomized invariants checked with proptest.

use proptest::prelude::*;

use glycast::data::{
    parse_patient_log, serialize_patient_log, CarbEvent, GlucoseEvent, InsulinEvent,
    InsulinKind, PatientLog, PatientProfile,
};
use glycast::evaluation::compute_metrics;
use glycast::filtering::{in_night_window, NightConfig};

fn profile() -> PatientProfile {
    glycast::data::parse_profiles(
        "patient_id,age,gender,weight,bmi,diabetes_type,years_since_diagnosis,hba1c\nq,33,w,60,21,1,6,-\n",
    )
    .unwrap()
    .remove(0)
}

fn arb_log() -> impl Strategy<Value = PatientLog> {
    let t = 1_488_326_400i64..1_488_326_400 + 7 * 86_400;
    (
        prop::collection::vec((t.clone(), 1.5f64..30.0), 0..40),
        prop::collection::vec((t.clone(), 1.0f64..120.0), 0..20),
        prop::collection::vec((t, 0.5f64..30.0, prop::bool::ANY), 0..20),
    )
        .prop_map(|(g, c, i)| {
            let mut log = PatientLog::empty(profile());
            log.glucose = g
                .into_iter()
                .map(|(t, v)| GlucoseEvent { t, value: (v * 10.0).round() / 10.0 })
                .collect();
            log.carbs = c
                .into_iter()
                .map(|(t, v)| CarbEvent { t, grams: v.round() })
                .collect();
            log.insulin = i
                .into_iter()
                .map(|(t, u, rapid)| InsulinEvent {
                    t,
                    units: (u * 2.0).round() / 2.0,
                    kind: if rapid { InsulinKind::Rapid } else { InsulinKind::Basal },
                })
                .collect();
            log.sort_streams();
            log
        })
}

proptest! {
    /// Serializing a log and parsing it back is the identity.
    #[test]
    fn log_round_trip(log in arb_log()) {
        let csv = serialize_patient_log(&log);
        let back = parse_patient_log(&csv, log.profile.clone()).unwrap();
        prop_assert_eq!(back.glucose, log.glucose);
        prop_assert_eq!(back.carbs, log.carbs);
        prop_assert_eq!(back.insulin, log.insulin);
    }

    /// Error metrics do not depend on the order of the paired samples.
    #[test]
    fn metrics_permutation_invariant(
        pairs in prop::collection::vec((0.0f64..30.0, 0.0f64..30.0), 1..30),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let (y, yhat): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (y2, yhat2): (Vec<f64>, Vec<f64>) = shuffled.into_iter().unzip();
        let a = compute_metrics(&y, &yhat).unwrap();
        let b = compute_metrics(&y2, &yhat2).unwrap();
        prop_assert!((a.mae - b.mae).abs() < 1e-9);
        prop_assert!((a.mdae - b.mdae).abs() < 1e-9);
        prop_assert!((a.rmse - b.rmse).abs() < 1e-9);
        prop_assert!((a.smape - b.smape).abs() < 1e-9);
    }

    /// Every second of the day is either inside or outside the night window,
    /// and complementary windows partition the circle.
    #[test]
    fn night_window_partitions_day(start in 0i64..86_400, end in 0i64..86_400, s in 0i64..86_400) {
        let night = NightConfig { start, end };
        let complement = NightConfig { start: end, end: start };
        if start != end {
            prop_assert_ne!(in_night_window(s, &night), in_night_window(s, &complement));
        }
    }

    /// A forest prediction is bounded by the range of training targets.
    #[test]
    fn forest_prediction_bounded(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 3), 4..20),
        seed in any::<u64>(),
    ) {
        use glycast::forest::{Forest, ForestParams};
        let targets: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
        let params = ForestParams { n_estimators: 10, seed, ..ForestParams::random_forest() };
        let forest = Forest::fit(&rows, &targets, &params).unwrap();
        let lo = targets.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for row in &rows {
            let p = forest.predict(row).unwrap();
            prop_assert!(p >= lo - 1e-9 && p <= hi + 1e-9);
        }
    }
}
