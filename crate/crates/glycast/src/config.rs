//! Experiment configuration: a single JSON file driving the CLI.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{parse_patient_log, parse_profiles, PatientLog};
use crate::error::Error;
use crate::evaluation::{EvalParams, ModelKind};
use crate::featurize::FeatureSpec;
use crate::filtering::FilterConfig;
use crate::forest::ForestParams;
use crate::synth::{generate_cohort, CohortEntry, CohortSpec};
use crate::Result;

/// Where patient logs come from: a generated cohort or a directory of
/// event-log CSVs (one `<patient_id>.csv` per patient) plus a profile
/// file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic { cohort_seed: u64, patients: Vec<CohortEntry> },
    LogsDir { dir: PathBuf, profiles: PathBuf },
}

/// One model to evaluate, with optional overrides of the defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub n_estimators: Option<usize>,
    #[serde(default)]
    pub min_leaf: Option<usize>,
    /// Context-AVG decay rate per hour.
    #[serde(default)]
    pub decay_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolConfig {
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_coverage")]
    pub coverage: f64,
    #[serde(default)]
    pub shuffle_folds: bool,
}

fn default_train_fraction() -> f64 {
    0.66
}
fn default_fractions() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}
fn default_k() -> usize {
    5
}
fn default_coverage() -> f64 {
    0.95
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            train_fraction: default_train_fraction(),
            fractions: default_fractions(),
            k: default_k(),
            coverage: default_coverage(),
            shuffle_folds: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default)]
    pub features: FeatureSpec,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub filters: FilterConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

fn default_parallel() -> bool {
    true
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("at least one model required".into()));
        }
        self.features.validate()?;
        if let DataSource::LogsDir { dir, profiles } = &self.data {
            if !dir.is_dir() {
                return Err(Error::Config(format!("log directory {} not found", dir.display())));
            }
            if !profiles.is_file() {
                return Err(Error::Config(format!("profile file {} not found", profiles.display())));
            }
        }
        Ok(())
    }

    /// Loads or generates the cohort's logs.
    pub fn load_logs(&self) -> Result<Vec<PatientLog>> {
        match &self.data {
            DataSource::Synthetic { cohort_seed, patients } => {
                let spec = CohortSpec { patients: patients.clone() }.with_derived_seeds(*cohort_seed);
                generate_cohort(&spec)
            }
            DataSource::LogsDir { dir, profiles } => {
                let profiles = parse_profiles(&std::fs::read_to_string(profiles)?)?;
                profiles
                    .into_iter()
                    .map(|profile| {
                        let path = dir.join(format!("{}.csv", profile.patient_id));
                        let text = std::fs::read_to_string(&path).map_err(|e| {
                            Error::Config(format!("cannot read {}: {e}", path.display()))
                        })?;
                        parse_patient_log(&text, profile)
                    })
                    .collect()
            }
        }
    }

    /// Evaluation parameters for one model entry, with the experiment
    /// seed folded into the forest seeds.
    pub fn eval_params(&self, model: &ModelSpec) -> EvalParams {
        let mut params = EvalParams {
            train_fraction: self.protocol.train_fraction,
            coverage: self.protocol.coverage,
            ..EvalParams::default()
        };
        if let Some(d) = model.decay_rate {
            params.context_decay = d;
        }
        let apply = |fp: &mut ForestParams, seed: u64| {
            fp.seed = seed;
            if let Some(n) = model.n_estimators {
                fp.n_estimators = n;
            }
            if let Some(m) = model.min_leaf {
                fp.min_leaf = m;
            }
        };
        apply(&mut params.rf, self.seed);
        apply(&mut params.et, self.seed);
        params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let json = r#"{
            "data": {"synthetic": {"cohort_seed": 42, "patients": []}},
            "models": [{"kind": "rf"}],
            "output_dir": "out"
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.protocol.train_fraction, 0.66);
        assert_eq!(cfg.protocol.k, 5);
        assert!(cfg.parallel);
        assert!(cfg.filters.sanity.is_none());
    }

    #[test]
    fn empty_model_list_rejected() {
        let json = r#"{
            "data": {"synthetic": {"cohort_seed": 1, "patients": []}},
            "models": [],
            "output_dir": "out"
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert!(cfg.validate().is_err());
    }
}
