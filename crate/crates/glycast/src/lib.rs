//! One-hour-ahead blood glucose forecasting from sparse self-monitoring logs.
//!
//! The crate covers the full pipeline: event-log ingestion ([`data`]),
//! seeded synthetic cohorts ([`synth`]), instance construction under a
//! strict information cutoff ([`featurize`]), reference predictors
//! ([`baselines`]), from-scratch regression forests ([`forest`]),
//! infinitesimal-jackknife prediction intervals ([`confidence`]),
//! selective prediction ([`filtering`]), the evaluation protocols
//! ([`evaluation`]) and descriptive statistics ([`analysis`]).
//!
//! ```
//! use glycast::forest::{Forest, ForestParams, SplitMode};
//! use glycast::confidence::ij_variance;
//!
//! let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
//! let targets: Vec<f64> = (0..20).map(|i| if i < 10 { 5.0 } else { 9.0 }).collect();
//! let params = ForestParams { n_estimators: 50, min_leaf: 1, ..ForestParams::default() };
//! let forest = Forest::fit(&rows, &targets, &params).unwrap();
//!
//! let low = forest.predict(&[2.0]).unwrap();
//! let high = forest.predict(&[17.0]).unwrap();
//! assert!(low < 6.0 && high > 8.0);
//!
//! // Every prediction carries a variance estimate.
//! let est = ij_variance(&forest, &[2.0]).unwrap();
//! assert!(est.v_raw >= 0.0);
//! ```

pub mod analysis;
pub mod baselines;
pub mod config;
pub mod confidence;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod featurize;
pub mod filtering;
pub mod forest;
pub mod synth;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
