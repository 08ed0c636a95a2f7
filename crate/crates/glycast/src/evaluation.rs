//! Metrics, temporal splits, cross-validation protocols, incremental
//! training curves, confidence-threshold sweeps and cohort aggregation.
//!
//! ```
//! use glycast::evaluation::compute_metrics;
//!
//! let m = compute_metrics(&[5.0, 6.0, 7.0], &[5.5, 6.0, 8.0]).unwrap();
//! assert_eq!(m.mdae, 0.5);
//! assert!((m.mae - 0.5).abs() < 1e-12);
//! assert!(m.rmse >= m.mae);
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::baselines::{predict_avg, predict_context_avg, predict_last, ContextAvgModel};
use crate::confidence::{ij_variance, prediction_interval};
use crate::data::PatientLog;
use crate::error::Error;
use crate::featurize::{build_instances, FeatureSpec, Instance};
use crate::filtering::{apply_filters, FilterConfig, PredictionRecord, VarianceKind};
use crate::forest::{Forest, ForestParams};
use crate::synth::{derive_seed, id_hash};
use crate::Result;

/// Regression metrics over a scored set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    /// Mean absolute error, mmol/L.
    pub mae: f64,
    /// Median absolute error, mmol/L.
    pub mdae: f64,
    /// Root mean squared error, mmol/L.
    pub rmse: f64,
    /// Symmetric mean absolute percentage error, in [0, 200] percent.
    pub smape: f64,
}

/// MAE, MdAE, RMSE and SMAPE of paired truths and predictions.
pub fn compute_metrics(y: &[f64], yhat: &[f64]) -> Result<Metrics> {
    if y.is_empty() || y.len() != yhat.len() {
        return Err(Error::Evaluation(format!(
            "need equal non-zero lengths, got {} and {}",
            y.len(),
            yhat.len()
        )));
    }
    let n = y.len();
    let mut abs_errors: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| (b - a).abs()).collect();
    let mae = abs_errors.iter().sum::<f64>() / n as f64;
    let rmse = (y.iter().zip(yhat).map(|(a, b)| (b - a) * (b - a)).sum::<f64>() / n as f64).sqrt();
    let smape = 100.0 / n as f64
        * y.iter()
            .zip(yhat)
            .map(|(a, b)| {
                let denom = (a.abs() + b.abs()) / 2.0;
                if denom == 0.0 {
                    0.0
                } else {
                    (b - a).abs() / denom
                }
            })
            .sum::<f64>();
    abs_errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mdae = if n % 2 == 1 {
        abs_errors[n / 2]
    } else {
        (abs_errors[n / 2 - 1] + abs_errors[n / 2]) / 2.0
    };
    Ok(Metrics { n, mae, mdae, rmse, smape })
}

/// Splits time-ordered instances into the first `floor(f*n)` for
/// training and the remainder for testing.
pub fn temporal_split(instances: &[Instance], train_fraction: f64) -> Result<(&[Instance], &[Instance])> {
    let n = instances.len();
    if n < 2 {
        return Err(Error::Evaluation(format!("need at least 2 instances to split, got {n}")));
    }
    let n_train = (train_fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Evaluation(format!(
            "fraction {train_fraction} leaves an empty side for n={n}"
        )));
    }
    Ok(instances.split_at(n_train))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Last,
    Avg,
    ContextAvg,
    Rf,
    Et,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Last => "Last",
            ModelKind::Avg => "AVG",
            ModelKind::ContextAvg => "Context-AVG",
            ModelKind::Rf => "RandomForest",
            ModelKind::Et => "ExtraTrees",
        }
    }
}

/// Everything a per-patient evaluation needs beyond the log itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalParams {
    pub train_fraction: f64,
    /// Context-AVG decay rate per hour.
    pub context_decay: f64,
    pub rf: ForestParams,
    pub et: ForestParams,
    /// Compute jackknife variances for forest models.
    pub with_confidence: bool,
    /// Interval coverage probability.
    pub coverage: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            train_fraction: 0.66,
            context_decay: 0.5,
            rf: ForestParams::random_forest(),
            et: ForestParams::extra_trees(),
            with_confidence: true,
            coverage: 0.95,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatientEvaluation {
    pub patient_id: String,
    /// Metrics on the retained predictions; absent when all filtered.
    pub metrics: Option<Metrics>,
    pub n_predictions: usize,
    pub n_retained: usize,
    pub records: Vec<PredictionRecord>,
}

fn forest_params_for(kind: ModelKind, params: &EvalParams, patient_id: &str) -> ForestParams {
    let mut fp = match kind {
        ModelKind::Rf => params.rf.clone(),
        ModelKind::Et => params.et.clone(),
        _ => unreachable!(),
    };
    // Jackknife variance needs resample counts.
    if params.with_confidence {
        fp.bootstrap = true;
    }
    fp.seed = derive_seed(fp.seed, id_hash(patient_id));
    fp
}

/// Fits `kind` on the train split and scores every test instance,
/// without filtering.
pub fn fit_and_predict(
    log: &PatientLog,
    kind: ModelKind,
    train: &[Instance],
    test: &[Instance],
    params: &EvalParams,
) -> Result<Vec<PredictionRecord>> {
    if train.is_empty() {
        return Err(Error::Evaluation("empty training split".into()));
    }
    let train_y: Vec<f64> = train.iter().map(|i| i.y).collect();

    enum Fitted {
        Last,
        Avg(f64),
        ContextAvg(ContextAvgModel),
        Forest(Forest),
    }
    let fitted = match kind {
        ModelKind::Last => Fitted::Last,
        ModelKind::Avg => Fitted::Avg(predict_avg(&train_y)?),
        ModelKind::ContextAvg => {
            let points: Vec<(i64, f64)> = train
                .iter()
                .map(|i| (log.seconds_of_day(i.t_target), i.y))
                .collect();
            Fitted::ContextAvg(ContextAvgModel::new(points, params.context_decay))
        }
        ModelKind::Rf | ModelKind::Et => {
            let rows: Vec<Vec<f64>> = train.iter().map(|i| i.x.clone()).collect();
            let fp = forest_params_for(kind, params, &log.profile.patient_id);
            Fitted::Forest(Forest::fit(&rows, &train_y, &fp)?)
        }
    };

    let mut records = Vec::with_capacity(test.len());
    for inst in test {
        let (y_pred, variance) = match &fitted {
            Fitted::Last => (predict_last(&log.glucose, inst.t_cutoff)?, None),
            Fitted::Avg(mean) => (*mean, None),
            Fitted::ContextAvg(model) => {
                (predict_context_avg(model, log.seconds_of_day(inst.t_target))?, None)
            }
            Fitted::Forest(forest) => {
                let pred = forest.predict(&inst.x)?;
                let variance = if params.with_confidence {
                    Some(ij_variance(forest, &inst.x)?)
                } else {
                    None
                };
                (pred, variance)
            }
        };
        let interval = match &variance {
            Some(v) => Some(prediction_interval(y_pred, v.v_corrected_clamped, params.coverage)?),
            None => None,
        };
        records.push(PredictionRecord {
            patient_id: inst.patient_id.clone(),
            t_target: inst.t_target,
            y_true: inst.y,
            y_pred,
            variance,
            interval,
            last_glucose_age: inst.last_glucose_age,
            last_glucose: inst.last_glucose,
            target_seconds_of_day: log.seconds_of_day(inst.t_target),
            verdict: None,
        });
    }
    Ok(records)
}

fn metrics_of_records(records: &[PredictionRecord]) -> Option<Metrics> {
    if records.is_empty() {
        return None;
    }
    let y: Vec<f64> = records.iter().map(|r| r.y_true).collect();
    let yhat: Vec<f64> = records.iter().map(|r| r.y_pred).collect();
    compute_metrics(&y, &yhat).ok()
}

/// Full per-patient protocol: temporal split, fit, predict, filter,
/// score the retained set.
pub fn evaluate_patient(
    log: &PatientLog,
    kind: ModelKind,
    spec: &FeatureSpec,
    filter_cfg: &FilterConfig,
    params: &EvalParams,
) -> Result<PatientEvaluation> {
    let (instances, _skips) = build_instances(log, spec)?;
    let (train, test) = temporal_split(&instances, params.train_fraction)?;
    let mut records = fit_and_predict(log, kind, train, test, params)?;
    let retained = apply_filters(&mut records, filter_cfg);
    Ok(PatientEvaluation {
        patient_id: log.profile.patient_id.clone(),
        metrics: metrics_of_records(&retained),
        n_predictions: records.len(),
        n_retained: retained.len(),
        records,
    })
}

/// Cohort averages: unweighted arithmetic means of the per-patient
/// metrics (patients with zero retained predictions are excluded from
/// the metric means but counted).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortMetrics {
    pub n_patients: usize,
    pub n_patients_scored: usize,
    pub mae: f64,
    pub mdae: f64,
    pub rmse: f64,
    pub smape: f64,
    pub mean_predictions: f64,
    pub mean_retained: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub protocol: String,
    pub filter_cfg: FilterConfig,
    pub per_patient: BTreeMap<String, PatientEvaluation>,
    pub cohort: CohortMetrics,
}

/// Unweighted per-patient averaging.
pub fn aggregate_cohort(
    reports: Vec<PatientEvaluation>,
    protocol: &str,
    filter_cfg: &FilterConfig,
) -> Result<EvaluationReport> {
    if reports.is_empty() {
        return Err(Error::Evaluation("no patient reports to aggregate".into()));
    }
    let scored: Vec<&Metrics> = reports.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let k = scored.len() as f64;
    let mean = |f: fn(&Metrics) -> f64| {
        if scored.is_empty() {
            f64::NAN
        } else {
            scored.iter().map(|m| f(m)).sum::<f64>() / k
        }
    };
    let cohort = CohortMetrics {
        n_patients: reports.len(),
        n_patients_scored: scored.len(),
        mae: mean(|m| m.mae),
        mdae: mean(|m| m.mdae),
        rmse: mean(|m| m.rmse),
        smape: mean(|m| m.smape),
        mean_predictions: reports.iter().map(|r| r.n_predictions as f64).sum::<f64>()
            / reports.len() as f64,
        mean_retained: reports.iter().map(|r| r.n_retained as f64).sum::<f64>()
            / reports.len() as f64,
    };
    let per_patient =
        reports.into_iter().map(|r| (r.patient_id.clone(), r)).collect::<BTreeMap<_, _>>();
    Ok(EvaluationReport {
        protocol: protocol.to_string(),
        filter_cfg: filter_cfg.clone(),
        per_patient,
        cohort,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveProtocol {
    /// Fixed final test set, training on the latest part of the train split.
    Holdout,
    /// Leave-one-out over the training subset.
    Loo,
    /// k-fold over the training subset; folds are contiguous time blocks
    /// unless shuffling is requested.
    Kfold,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub n_train: usize,
    pub metrics: Metrics,
    /// Standard deviation across folds (k-fold only).
    pub std_dev: Option<MetricsStd>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricsStd {
    pub mae: f64,
    pub mdae: f64,
    pub rmse: f64,
    pub smape: f64,
}

fn metrics_mean_std(per_fold: &[Metrics]) -> (Metrics, MetricsStd) {
    let k = per_fold.len() as f64;
    let mean = |f: fn(&Metrics) -> f64| per_fold.iter().map(&f).sum::<f64>() / k;
    let std = |f: fn(&Metrics) -> f64, mu: f64| {
        (per_fold.iter().map(|m| (f(m) - mu).powi(2)).sum::<f64>() / k).sqrt()
    };
    let (mae, mdae, rmse, smape) = (mean(|m| m.mae), mean(|m| m.mdae), mean(|m| m.rmse), mean(|m| m.smape));
    (
        Metrics { n: per_fold.iter().map(|m| m.n).sum(), mae, mdae, rmse, smape },
        MetricsStd {
            mae: std(|m| m.mae, mae),
            mdae: std(|m| m.mdae, mdae),
            rmse: std(|m| m.rmse, rmse),
            smape: std(|m| m.smape, smape),
        },
    )
}

/// Incremental-training-size curves under one of three protocols. For
/// each fraction the training subset is the *latest* part of the train
/// split; the holdout test set stays fixed.
#[allow(clippy::too_many_arguments)]
pub fn incremental_curve(
    log: &PatientLog,
    kind: ModelKind,
    spec: &FeatureSpec,
    params: &EvalParams,
    fractions: &[f64],
    protocol: CurveProtocol,
    k: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<CurvePoint>> {
    let (instances, _) = build_instances(log, spec)?;
    let (train, test) = temporal_split(&instances, params.train_fraction)?;

    let mut curve = Vec::new();
    for &fraction in fractions {
        if !(0.0..=1.0).contains(&fraction) || fraction == 0.0 {
            return Err(Error::Evaluation(format!("fraction {fraction} outside (0, 1]")));
        }
        let m = (fraction * train.len() as f64).floor() as usize;
        if m == 0 {
            continue; // skipped with notice at the call site
        }
        let subset = &train[train.len() - m..];

        let point = match protocol {
            CurveProtocol::Holdout => {
                let records = fit_and_predict(log, kind, subset, test, params)?;
                let metrics = metrics_of_records(&records)
                    .ok_or_else(|| Error::Evaluation("empty test set".into()))?;
                CurvePoint { fraction, n_train: m, metrics, std_dev: None }
            }
            CurveProtocol::Loo => {
                if m < 2 {
                    continue;
                }
                let mut records = Vec::new();
                for hold in 0..m {
                    let rest: Vec<Instance> = subset
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != hold)
                        .map(|(_, inst)| inst.clone())
                        .collect();
                    let one = std::slice::from_ref(&subset[hold]);
                    records.extend(fit_and_predict(log, kind, &rest, one, params)?);
                }
                let metrics = metrics_of_records(&records).unwrap();
                CurvePoint { fraction, n_train: m, metrics, std_dev: None }
            }
            CurveProtocol::Kfold => {
                if k < 2 || m < k {
                    continue;
                }
                let mut order: Vec<usize> = (0..m).collect();
                if let Some(seed) = shuffle_seed {
                    use rand::seq::SliceRandom;
                    use rand::SeedableRng;
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                    order.shuffle(&mut rng);
                }
                let mut per_fold = Vec::new();
                for fold in 0..k {
                    let test_idx: Vec<usize> =
                        order.iter().skip(fold).step_by(k).copied().collect();
                    let is_test = |i: usize| test_idx.contains(&i);
                    let fold_train: Vec<Instance> = (0..m)
                        .filter(|&i| !is_test(i))
                        .map(|i| subset[i].clone())
                        .collect();
                    let fold_test: Vec<Instance> =
                        test_idx.iter().map(|&i| subset[i].clone()).collect();
                    let records = fit_and_predict(log, kind, &fold_train, &fold_test, params)?;
                    per_fold.push(metrics_of_records(&records).unwrap());
                }
                let (metrics, std_dev) = metrics_mean_std(&per_fold);
                CurvePoint { fraction, n_train: m, metrics, std_dev: Some(std_dev) }
            }
        };
        curve.push(point);
    }
    Ok(curve)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub n_retained: usize,
    pub metrics: Option<Metrics>,
}

/// Variance of a record under the chosen kind, if present.
pub fn record_variance(record: &PredictionRecord, kind: VarianceKind) -> Option<f64> {
    record.variance.map(|v| match kind {
        VarianceKind::Raw => v.v_raw,
        VarianceKind::Corrected => v.v_corrected_clamped,
    })
}

/// Linear-interpolation percentile of the record variances.
pub fn variance_percentile(
    records: &[PredictionRecord],
    kind: VarianceKind,
    pct: f64,
) -> Option<f64> {
    let mut vs: Vec<f64> = records.iter().filter_map(|r| record_variance(r, kind)).collect();
    if vs.is_empty() {
        return None;
    }
    vs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = (pct / 100.0).clamp(0.0, 1.0) * (vs.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(vs[lo] + (vs[hi] - vs[lo]) * (rank - lo as f64))
}

/// One row per threshold: retained count and metrics on the records
/// whose variance does not exceed it.
pub fn threshold_sweep(
    records: &[PredictionRecord],
    kind: VarianceKind,
    thresholds: &[f64],
) -> Vec<SweepRow> {
    thresholds
        .iter()
        .map(|&threshold| {
            let retained: Vec<PredictionRecord> = records
                .iter()
                .filter(|r| record_variance(r, kind).is_none_or(|v| v <= threshold))
                .cloned()
                .collect();
            SweepRow { threshold, n_retained: retained.len(), metrics: metrics_of_records(&retained) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_profile;
    use crate::synth::{generate_patient, GeneratorConfig};

    #[test]
    fn metrics_hand_values() {
        let m = compute_metrics(&[5.0, 6.0], &[5.0, 6.0]).unwrap();
        assert_eq!((m.mae, m.mdae, m.rmse, m.smape), (0.0, 0.0, 0.0, 0.0));

        let m = compute_metrics(&[2.0], &[4.0]).unwrap();
        assert_eq!(m.mae, 2.0);
        assert_eq!(m.mdae, 2.0);
        assert_eq!(m.rmse, 2.0);
        assert!((m.smape - 200.0 / 3.0).abs() < 1e-12);

        let m = compute_metrics(&[0.0], &[5.0]).unwrap();
        assert_eq!(m.smape, 200.0);

        let m = compute_metrics(&[10.0, 10.0], &[12.0, 6.0]).unwrap();
        assert_eq!(m.mdae, 3.0);
        assert_eq!(m.mae, 3.0);
        assert!((m.rmse - 10.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn metrics_errors() {
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn split_floor_rule() {
        let inst = |t: i64| Instance {
            patient_id: "p".into(),
            t_target: t,
            t_cutoff: t - 3600,
            x: vec![],
            y: 5.0,
            last_glucose_age: 3600,
            last_glucose: 5.0,
        };
        let instances: Vec<Instance> = (0..100).map(|i| inst(i * 1000)).collect();
        let (train, test) = temporal_split(&instances, 0.66).unwrap();
        assert_eq!((train.len(), test.len()), (66, 34));

        let three: Vec<Instance> = (0..3).map(|i| inst(i * 1000)).collect();
        let (train, test) = temporal_split(&three, 0.66).unwrap();
        assert_eq!((train.len(), test.len()), (1, 2));

        let (train, test) = temporal_split(&instances, 0.5).unwrap();
        assert!(train.iter().map(|i| i.t_target).max() <= test.iter().map(|i| i.t_target).min());

        assert!(temporal_split(&instances[..1], 0.66).is_err());
        assert!(temporal_split(&instances, 0.001).is_err());
    }

    fn synth_log(seed: u64) -> crate::data::PatientLog {
        generate_patient(
            &GeneratorConfig { seed, ..GeneratorConfig::default() },
            &test_profile("p1"),
        )
        .unwrap()
    }

    fn fast_params() -> EvalParams {
        let mut params = EvalParams::default();
        params.rf.n_estimators = 30;
        params.et.n_estimators = 30;
        params
    }

    #[test]
    fn constant_patient_all_models_zero_mdae() {
        let cfg = GeneratorConfig {
            noise_sd: 0.0,
            carb_effect: 0.0,
            insulin_effect: 0.0,
            circadian_amplitude: 0.0,
            seed: 4,
            ..GeneratorConfig::default()
        };
        let log = generate_patient(&cfg, &test_profile("p1")).unwrap();
        let spec = FeatureSpec::default();
        let params = fast_params();
        for kind in [ModelKind::Last, ModelKind::Avg, ModelKind::ContextAvg, ModelKind::Rf] {
            let eval =
                evaluate_patient(&log, kind, &spec, &FilterConfig::default(), &params).unwrap();
            assert!(eval.metrics.unwrap().mdae < 1e-12, "{kind:?}");
        }
    }

    #[test]
    fn forest_beats_last_on_learnable_patient() {
        let log = synth_log(21);
        let spec = FeatureSpec::default();
        let params = fast_params();
        let rf = evaluate_patient(&log, ModelKind::Rf, &spec, &FilterConfig::default(), &params)
            .unwrap();
        let last =
            evaluate_patient(&log, ModelKind::Last, &spec, &FilterConfig::default(), &params)
                .unwrap();
        assert!(rf.metrics.unwrap().mdae < last.metrics.unwrap().mdae);
    }

    #[test]
    fn infinite_threshold_filter_is_noop() {
        let log = synth_log(9);
        let spec = FeatureSpec::default();
        let params = fast_params();
        let unfiltered =
            evaluate_patient(&log, ModelKind::Rf, &spec, &FilterConfig::default(), &params)
                .unwrap();
        let cfg = FilterConfig {
            stability: Some(crate::filtering::StabilityConfig {
                variance_kind: VarianceKind::Raw,
                threshold: f64::INFINITY,
            }),
            ..FilterConfig::default()
        };
        let filtered = evaluate_patient(&log, ModelKind::Rf, &spec, &cfg, &params).unwrap();
        assert_eq!(unfiltered.metrics.unwrap(), filtered.metrics.unwrap());
        assert_eq!(unfiltered.n_retained, filtered.n_retained);
    }

    #[test]
    fn cohort_aggregation_means() {
        let patient = |id: &str, mdae: f64| PatientEvaluation {
            patient_id: id.into(),
            metrics: Some(Metrics { n: 10, mae: mdae, mdae, rmse: mdae, smape: mdae }),
            n_predictions: 10,
            n_retained: 10,
            records: vec![],
        };
        let report = aggregate_cohort(
            vec![patient("a", 2.0), patient("b", 4.0)],
            "holdout",
            &FilterConfig::default(),
        )
        .unwrap();
        assert_eq!(report.cohort.mdae, 3.0);
        assert_eq!(report.per_patient.len(), 2);

        let single =
            aggregate_cohort(vec![patient("a", 2.0)], "holdout", &FilterConfig::default()).unwrap();
        assert_eq!(single.cohort.mdae, 2.0);

        assert!(aggregate_cohort(vec![], "holdout", &FilterConfig::default()).is_err());
    }

    #[test]
    fn holdout_curve_at_full_fraction_matches_evaluate_patient() {
        let log = synth_log(13);
        let spec = FeatureSpec::default();
        let params = fast_params();
        let curve = incremental_curve(
            &log,
            ModelKind::Rf,
            &spec,
            &params,
            &[0.25, 0.5, 0.75, 1.0],
            CurveProtocol::Holdout,
            5,
            None,
        )
        .unwrap();
        assert_eq!(curve.len(), 4);
        let eval =
            evaluate_patient(&log, ModelKind::Rf, &spec, &FilterConfig::default(), &params)
                .unwrap();
        let full = curve.last().unwrap();
        assert_eq!(full.metrics, eval.metrics.unwrap());
    }

    #[test]
    fn kfold_with_identical_targets_has_zero_std() {
        let cfg = GeneratorConfig {
            noise_sd: 0.0,
            carb_effect: 0.0,
            insulin_effect: 0.0,
            circadian_amplitude: 0.0,
            seed: 2,
            ..GeneratorConfig::default()
        };
        let log = generate_patient(&cfg, &test_profile("p1")).unwrap();
        let curve = incremental_curve(
            &log,
            ModelKind::Avg,
            &FeatureSpec::default(),
            &fast_params(),
            &[1.0],
            CurveProtocol::Kfold,
            5,
            None,
        )
        .unwrap();
        let std = curve[0].std_dev.unwrap();
        assert_eq!(std.mdae, 0.0);
        assert_eq!(std.rmse, 0.0);
    }

    #[test]
    fn threshold_sweep_monotone() {
        let log = synth_log(30);
        let eval = evaluate_patient(
            &log,
            ModelKind::Rf,
            &FeatureSpec::default(),
            &FilterConfig::default(),
            &fast_params(),
        )
        .unwrap();
        let thresholds = [f64::INFINITY, 1.0, 0.5, 0.25, 0.1, 0.0];
        let rows = threshold_sweep(&eval.records, VarianceKind::Raw, &thresholds);
        assert_eq!(rows[0].n_retained, eval.records.len());
        assert!(rows.windows(2).all(|w| w[0].n_retained >= w[1].n_retained));
    }

    #[test]
    fn percentile_mode_retains_expected_share() {
        let log = synth_log(31);
        let eval = evaluate_patient(
            &log,
            ModelKind::Rf,
            &FeatureSpec::default(),
            &FilterConfig::default(),
            &fast_params(),
        )
        .unwrap();
        let n = eval.records.len() as f64;
        for pct in [25.0, 50.0, 75.0, 100.0] {
            let t = variance_percentile(&eval.records, VarianceKind::Raw, pct).unwrap();
            let rows = threshold_sweep(&eval.records, VarianceKind::Raw, &[t]);
            let share = rows[0].n_retained as f64 / n;
            assert!(
                (share - pct / 100.0).abs() <= 0.5 / n.sqrt() + 0.05,
                "pct {pct}: share {share}"
            );
        }
    }
}
