//! Symmetric FastICA with a score nonlinearity learned from binned, dithered
//! empirical characteristic functions of random 1-D projections.
//!
//! The pipeline is: [`preprocess`] (centering, whitening) → [`score`]
//! (learned score table from [`ecf`] probes) → [`fastica`] (fixed-point
//! iteration with any [`nonlinearity::Contrast`]) → [`metrics`] (Amari error).
//! [`synth`] and [`campaign`] drive seeded Monte-Carlo comparisons.

// `!(x > y)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod ecf;
pub mod error;
pub mod fastica;
pub mod metrics;
pub mod nonlinearity;
pub mod par;
pub mod preprocess;
pub mod rng;
pub mod score;
pub mod stats;
pub mod synth;

pub use campaign::{run_campaign, ExperimentConfig, ScenarioSpec, TrialRecord};
pub use error::{Error, Result};
pub use fastica::{run_fastica, FasticaConfig, SeparationResult};
pub use metrics::{amari_error, gain_matrix};
pub use nonlinearity::{Contrast, Nonlinearity, NonlinearityKind};
pub use par::Exec;
pub use preprocess::{fit_whitening, DataMatrix, WhiteningModel};
pub use score::{tabulate_score, PbecfParams, ScoreTable};
pub use synth::{make_dataset, Scenario, SourceFamily};
