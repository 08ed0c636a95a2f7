use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use glycast::analysis::{
    cross_correlation, entries_per_day, hourly_histogram, meal_delay_histogram,
};
use glycast::config::{ExperimentConfig, ModelSpec};
use glycast::data::{serialize_patient_log, serialize_profiles, PatientLog, Stream};
use glycast::evaluation::{
    aggregate_cohort, evaluate_patient, incremental_curve, threshold_sweep, variance_percentile,
    CurveProtocol, EvaluationReport, ModelKind, PatientEvaluation,
};
use glycast::filtering::{
    apply_filters, FilterConfig, NightConfig, PredictionRecord, StabilityConfig, VarianceKind,
};

#[derive(Parser)]
#[command(name = "glycast", version, about = "Blood glucose forecasting experiments")]
struct Cli {
    /// Experiment config file (JSON).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Restrict to one model kind (last|avg|context_avg|rf|et).
    #[arg(long, global = true)]
    model: Option<String>,

    /// Override the stability-filter variance threshold.
    #[arg(long, global = true)]
    threshold: Option<f64>,

    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Disable internal parallelism.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic cohort and write its CSV logs.
    Synth,
    /// Fit and evaluate every configured model on the cohort.
    Eval,
    /// Incremental-training-size curves (holdout, leave-one-out, k-fold).
    Curves {
        /// holdout | loo | kfold
        #[arg(long, default_value = "holdout")]
        protocol: String,
    },
    /// Per-prediction records with both variance kinds and intervals.
    Confidence,
    /// Confidence-threshold and night-window sweep tables.
    Sweep {
        /// Variance percentiles to sweep over.
        #[arg(long, value_delimiter = ',', default_value = "25,50,75,100")]
        percentiles: Vec<f64>,
    },
    /// Descriptive statistics of the cohort logs.
    Analyze,
}

fn main() {
    let cli = Cli::parse();
    let threads = if cli.sequential { 1 } else { 0 };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let status = pool.install(|| run(&cli));
    if let Err(e) = status {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let config_path = cli.config.as_deref().context("--config is required")?;
    let config_text = fs::read_to_string(config_path)
        .with_context(|| format!("cannot read {}", config_path.display()))?;
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(model) = &cli.model {
        let kind = parse_model_kind(model)?;
        config.models.retain(|m| m.kind == kind);
        if config.models.is_empty() {
            config.models.push(ModelSpec {
                kind,
                n_estimators: None,
                min_leaf: None,
                decay_rate: None,
            });
        }
    }
    if let Some(threshold) = cli.threshold {
        let stability = config.filters.stability.get_or_insert(StabilityConfig {
            variance_kind: VarianceKind::Raw,
            threshold,
        });
        stability.threshold = threshold;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    fs::create_dir_all(&config.output_dir)?;

    let mut outputs: Vec<String> = Vec::new();
    match &cli.command {
        Command::Synth => cmd_synth(&config, &mut outputs)?,
        Command::Eval => cmd_eval(&config, &mut outputs)?,
        Command::Curves { protocol } => cmd_curves(&config, protocol, &mut outputs)?,
        Command::Confidence => cmd_confidence(&config, &mut outputs)?,
        Command::Sweep { percentiles } => cmd_sweep(&config, percentiles, &mut outputs)?,
        Command::Analyze => cmd_analyze(&config, &mut outputs)?,
    }

    write_manifest(&config, &config_text, cli, &outputs)?;
    Ok(())
}

fn parse_model_kind(s: &str) -> anyhow::Result<ModelKind> {
    Ok(match s {
        "last" => ModelKind::Last,
        "avg" => ModelKind::Avg,
        "context_avg" => ModelKind::ContextAvg,
        "rf" => ModelKind::Rf,
        "et" => ModelKind::Et,
        other => bail!("unknown model kind `{other}`"),
    })
}

fn command_name(cli: &Cli) -> &'static str {
    match cli.command {
        Command::Synth => "synth",
        Command::Eval => "eval",
        Command::Curves { .. } => "curves",
        Command::Confidence => "confidence",
        Command::Sweep { .. } => "sweep",
        Command::Analyze => "analyze",
    }
}

/// Every run leaves a manifest sufficient to regenerate its outputs.
fn write_manifest(
    config: &ExperimentConfig,
    config_text: &str,
    cli: &Cli,
    outputs: &[String],
) -> anyhow::Result<()> {
    #[derive(serde::Serialize)]
    struct Manifest<'a> {
        command: &'a str,
        crate_version: &'a str,
        config_sha256: String,
        effective_seed: u64,
        overrides: BTreeMap<&'a str, String>,
        outputs: &'a [String],
    }
    let mut overrides = BTreeMap::new();
    if let Some(s) = cli.seed {
        overrides.insert("seed", s.to_string());
    }
    if let Some(m) = &cli.model {
        overrides.insert("model", m.clone());
    }
    if let Some(t) = cli.threshold {
        overrides.insert("threshold", t.to_string());
    }
    let manifest = Manifest {
        command: command_name(cli),
        crate_version: env!("CARGO_PKG_VERSION"),
        config_sha256: hex_digest(config_text),
        effective_seed: config.seed,
        overrides,
        outputs,
    };
    let path = config.output_dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn hex_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_output(
    dir: &Path,
    name: &str,
    content: &str,
    outputs: &mut Vec<String>,
) -> anyhow::Result<()> {
    fs::write(dir.join(name), content)?;
    outputs.push(name.to_string());
    Ok(())
}

fn cmd_synth(config: &ExperimentConfig, outputs: &mut Vec<String>) -> anyhow::Result<()> {
    let logs = config.load_logs()?;
    let profiles: Vec<_> = logs.iter().map(|l| l.profile.clone()).collect();
    write_output(&config.output_dir, "profiles.csv", &serialize_profiles(&profiles), outputs)?;
    for log in &logs {
        let name = format!("{}.csv", log.profile.patient_id);
        write_output(&config.output_dir, &name, &serialize_patient_log(log), outputs)?;
    }
    println!("wrote {} patient logs to {}", logs.len(), config.output_dir.display());
    Ok(())
}

fn evaluate_model(
    config: &ExperimentConfig,
    logs: &[PatientLog],
    model: &ModelSpec,
    filters: &FilterConfig,
) -> anyhow::Result<EvaluationReport> {
    let params = config.eval_params(model);
    let per_patient: Vec<PatientEvaluation> = logs
        .iter()
        .map(|log| evaluate_patient(log, model.kind, &config.features, filters, &params))
        .collect::<Result<_, _>>()?;
    let protocol = format!("holdout f={}", config.protocol.train_fraction);
    Ok(aggregate_cohort(per_patient, &protocol, filters)?)
}

fn cohort_csv(reports: &[(ModelKind, EvaluationReport)]) -> String {
    let mut out = String::from("Method,MdAE,RMSE,SMAPE,n_predictions,MAE\n");
    for (kind, report) in reports {
        let c = &report.cohort;
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.2},{:.4}\n",
            kind.name(),
            c.mdae,
            c.rmse,
            c.smape,
            c.mean_retained,
            c.mae
        ));
    }
    out
}

fn records_csv(records: &[&PredictionRecord]) -> String {
    let mut out = String::from(
        "patient_id,t_target,y_true,y_pred,v_raw,v_corrected,interval_lo,interval_hi,retained,reasons\n",
    );
    for r in records {
        let (v_raw, v_corr) = match &r.variance {
            Some(v) => (format!("{:.6}", v.v_raw), format!("{:.6}", v.v_corrected)),
            None => (String::new(), String::new()),
        };
        let (lo, hi) = match &r.interval {
            Some(i) => (format!("{:.4}", i.lo()), format!("{:.4}", i.hi())),
            None => (String::new(), String::new()),
        };
        let (retained, reasons) = match &r.verdict {
            Some(v) => (
                v.retained.to_string(),
                v.reasons.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join("|"),
            ),
            None => ("true".to_string(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{:.4},{},{},{},{},{},{}\n",
            r.patient_id,
            glycast::data::format_timestamp(r.t_target),
            r.y_true,
            r.y_pred,
            v_raw,
            v_corr,
            lo,
            hi,
            retained,
            reasons
        ));
    }
    out
}

fn cmd_eval(config: &ExperimentConfig, outputs: &mut Vec<String>) -> anyhow::Result<()> {
    let logs = config.load_logs()?;
    let mut reports = Vec::new();
    for model in &config.models {
        let report = evaluate_model(config, &logs, model, &config.filters)?;
        reports.push((model.kind, report));
    }
    let json = serde_json::to_string_pretty(
        &reports
            .iter()
            .map(|(kind, r)| (kind.name().to_string(), r))
            .collect::<BTreeMap<_, _>>(),
    )?;
    write_output(&config.output_dir, "report.json", &json, outputs)?;
    write_output(&config.output_dir, "cohort.csv", &cohort_csv(&reports), outputs)?;
    let all_records: Vec<&PredictionRecord> = reports
        .iter()
        .flat_map(|(_, r)| r.per_patient.values())
        .flat_map(|p| p.records.iter())
        .collect();
    write_output(&config.output_dir, "predictions.csv", &records_csv(&all_records), outputs)?;
    print!("{}", cohort_csv(&reports));
    Ok(())
}

fn cmd_curves(
    config: &ExperimentConfig,
    protocol: &str,
    outputs: &mut Vec<String>,
) -> anyhow::Result<()> {
    let proto = match protocol {
        "holdout" => CurveProtocol::Holdout,
        "loo" => CurveProtocol::Loo,
        "kfold" => CurveProtocol::Kfold,
        other => bail!("unknown curve protocol `{other}`"),
    };
    let logs = config.load_logs()?;
    let shuffle = config.protocol.shuffle_folds.then_some(config.seed);
    let mut out = String::from(
        "model,patient_id,fraction,n_train,n,mae,mdae,rmse,smape,std_mae,std_mdae,std_rmse,std_smape\n",
    );
    for model in &config.models {
        let params = config.eval_params(model);
        for log in &logs {
            let curve = incremental_curve(
                log,
                model.kind,
                &config.features,
                &params,
                &config.protocol.fractions,
                proto,
                config.protocol.k,
                shuffle,
            )?;
            for point in curve {
                let std = point
                    .std_dev
                    .map(|s| format!("{:.4},{:.4},{:.4},{:.4}", s.mae, s.mdae, s.rmse, s.smape))
                    .unwrap_or_else(|| ",,,".to_string());
                out.push_str(&format!(
                    "{},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{}\n",
                    model.kind.name(),
                    log.profile.patient_id,
                    point.fraction,
                    point.n_train,
                    point.metrics.n,
                    point.metrics.mae,
                    point.metrics.mdae,
                    point.metrics.rmse,
                    point.metrics.smape,
                    std
                ));
            }
        }
    }
    write_output(&config.output_dir, &format!("curves_{protocol}.csv"), &out, outputs)?;
    Ok(())
}

fn forest_models(config: &ExperimentConfig) -> Vec<ModelSpec> {
    let forests: Vec<ModelSpec> = config
        .models
        .iter()
        .filter(|m| matches!(m.kind, ModelKind::Rf | ModelKind::Et))
        .cloned()
        .collect();
    if forests.is_empty() {
        vec![ModelSpec { kind: ModelKind::Rf, n_estimators: None, min_leaf: None, decay_rate: None }]
    } else {
        forests
    }
}

fn cmd_confidence(config: &ExperimentConfig, outputs: &mut Vec<String>) -> anyhow::Result<()> {
    let logs = config.load_logs()?;
    for model in forest_models(config) {
        let report = evaluate_model(config, &logs, &model, &config.filters)?;
        let records: Vec<&PredictionRecord> =
            report.per_patient.values().flat_map(|p| p.records.iter()).collect();
        let name = format!("confidence_{}.csv", model.kind.name().to_lowercase());
        write_output(&config.output_dir, &name, &records_csv(&records), outputs)?;
    }
    Ok(())
}

fn cmd_sweep(
    config: &ExperimentConfig,
    percentiles: &[f64],
    outputs: &mut Vec<String>,
) -> anyhow::Result<()> {
    let logs = config.load_logs()?;
    for model in forest_models(config) {
        // unfiltered run supplies the variances to sweep over
        let report = evaluate_model(config, &logs, &model, &FilterConfig::default())?;

        let mut out = String::from(
            "patient_id,variance_kind,percentile,threshold,n_total,n_retained,mae,mdae,rmse,smape\n",
        );
        for (id, patient) in &report.per_patient {
            for kind in [VarianceKind::Raw, VarianceKind::Corrected] {
                for &pct in percentiles {
                    let Some(threshold) = variance_percentile(&patient.records, kind, pct) else {
                        continue;
                    };
                    let rows = threshold_sweep(&patient.records, kind, &[threshold]);
                    let row = &rows[0];
                    let m = row.metrics.as_ref();
                    out.push_str(&format!(
                        "{},{:?},{},{:.6},{},{},{},{},{},{}\n",
                        id,
                        kind,
                        pct,
                        row.threshold,
                        patient.records.len(),
                        row.n_retained,
                        m.map(|m| format!("{:.4}", m.mae)).unwrap_or_default(),
                        m.map(|m| format!("{:.4}", m.mdae)).unwrap_or_default(),
                        m.map(|m| format!("{:.4}", m.rmse)).unwrap_or_default(),
                        m.map(|m| format!("{:.4}", m.smape)).unwrap_or_default(),
                    ));
                }
            }
        }
        let name = format!("threshold_sweep_{}.csv", model.kind.name().to_lowercase());
        write_output(&config.output_dir, &name, &out, outputs)?;

        // night-window sweep: grow the window end hour
        let mut night = String::from("patient_id,night_end_hour,n_total,n_retained,mae,mdae\n");
        for (id, patient) in &report.per_patient {
            for end_hour in 1..=8i64 {
                let cfg = FilterConfig {
                    night: Some(NightConfig { start: 0, end: end_hour * 3600 }),
                    ..FilterConfig::default()
                };
                let mut records = patient.records.clone();
                let retained = apply_filters(&mut records, &cfg);
                let metrics = if retained.is_empty() {
                    None
                } else {
                    let y: Vec<f64> = retained.iter().map(|r| r.y_true).collect();
                    let yhat: Vec<f64> = retained.iter().map(|r| r.y_pred).collect();
                    glycast::evaluation::compute_metrics(&y, &yhat).ok()
                };
                night.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    id,
                    end_hour,
                    records.len(),
                    retained.len(),
                    metrics.map(|m| format!("{:.4}", m.mae)).unwrap_or_default(),
                    metrics.map(|m| format!("{:.4}", m.mdae)).unwrap_or_default(),
                ));
            }
        }
        let name = format!("night_sweep_{}.csv", model.kind.name().to_lowercase());
        write_output(&config.output_dir, &name, &night, outputs)?;
    }
    Ok(())
}

fn cmd_analyze(config: &ExperimentConfig, outputs: &mut Vec<String>) -> anyhow::Result<()> {
    let logs = config.load_logs()?;

    let mut daily = String::from(
        "patient_id,n_days,glucose_median,glucose_mean,glucose_std,carbs_median,carbs_mean,carbs_std,insulin_median,insulin_mean,insulin_std,active_median,active_mean,active_std\n",
    );
    for log in &logs {
        let s = entries_per_day(log)?;
        daily.push_str(&format!(
            "{},{},{},{:.2},{:.2},{},{:.2},{:.2},{},{:.2},{:.2},{},{:.2},{:.2}\n",
            log.profile.patient_id,
            s.n_days,
            s.glucose.median,
            s.glucose.mean,
            s.glucose.std_dev,
            s.carbs.median,
            s.carbs.mean,
            s.carbs.std_dev,
            s.insulin.median,
            s.insulin.mean,
            s.insulin.std_dev,
            s.active_intervals.median,
            s.active_intervals.mean,
            s.active_intervals.std_dev,
        ));
    }
    write_output(&config.output_dir, "daily_stats.csv", &daily, outputs)?;

    let mut hourly = String::from("patient_id,stream,hour,count,value_sum\n");
    for log in &logs {
        for stream in [Stream::Glucose, Stream::Carb, Stream::Insulin, Stream::Activity] {
            let hist = hourly_histogram(log, stream);
            for hour in 0..24 {
                hourly.push_str(&format!(
                    "{},{:?},{},{},{:.2}\n",
                    log.profile.patient_id, stream, hour, hist.counts[hour], hist.value_sums[hour]
                ));
            }
        }
    }
    write_output(&config.output_dir, "hourly_histograms.csv", &hourly, outputs)?;

    let edges = [15.0, 30.0, 60.0, 120.0, 240.0, 480.0];
    let mut delays =
        String::from("patient_id,bin,since_last,to_next_measured,to_next_unmeasured\n");
    for log in &logs {
        let hist = meal_delay_histogram(log, 1800, &edges);
        for (i, label) in edges
            .iter()
            .map(|e| format!("<{e}min"))
            .chain(std::iter::once("open".to_string()))
            .enumerate()
        {
            delays.push_str(&format!(
                "{},{},{},{},{}\n",
                log.profile.patient_id,
                label,
                hist.since_last_bins[i],
                hist.to_next_bins_measured[i],
                hist.to_next_bins_unmeasured[i],
            ));
        }
    }
    write_output(&config.output_dir, "meal_delays.csv", &delays, outputs)?;

    let mut corr = String::from("patient_id,pair,lag,r\n");
    for log in &logs {
        let glucose: Vec<(i64, f64)> = log.glucose.iter().map(|e| (e.t, e.value)).collect();
        let carbs: Vec<(i64, f64)> = log.carbs.iter().map(|e| (e.t, e.grams)).collect();
        let insulin: Vec<(i64, f64)> = log.insulin.iter().map(|e| (e.t, e.units)).collect();
        for (pair, a, b) in [
            ("glucose_carb", &glucose, &carbs),
            ("glucose_insulin", &glucose, &insulin),
        ] {
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let lc = cross_correlation(a, b, 3600, 8)?;
            for (lag, r) in lc.lags {
                corr.push_str(&format!("{},{},{},{:.4}\n", log.profile.patient_id, pair, lag, r));
            }
        }
    }
    write_output(&config.output_dir, "cross_correlation.csv", &corr, outputs)?;
    Ok(())
}
