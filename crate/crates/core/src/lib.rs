//! Desk-scale federated-learning simulator with validation-free contribution
//! assessment.
//!
//! The crate simulates round-based federated training of a small dense
//! classifier on procedurally generated image data, then scores each client's
//! contribution with several methods:
//!
//! - cross-round valuation: layer-wise ternary pruning of client updates plus
//!   sign-similarity against the global update direction of the following
//!   rounds ([`crossround`]), with no validation data required;
//! - exact per-round Shapley value and leave-one-out over a validation set,
//!   and gradient-cosine scoring ([`baselines`]).
//!
//! Client datasets are degraded with a known quality ordering ([`synthdata`]),
//! so every method's predicted ranking can be compared against ground truth
//! via Spearman correlation ([`report`]).
//!
//! All randomness flows from a single master seed through splitmix-derived
//! streams ([`rng`]); identical configs produce bit-identical round logs and
//! reports.

pub mod baselines;
pub mod config;
pub mod crossround;
pub mod engine;
pub mod error;
pub mod model;
pub mod oracle;
pub mod params;
pub mod report;
pub mod rng;
pub mod storage;
pub mod synthdata;

pub use config::ExperimentConfig;
pub use crossround::{PruneConfig, ScoreBoard, ValuationConfig};
pub use engine::{AggregationMode, RoundLog};
pub use error::{Error, Result};
pub use params::{Architecture, LayeredParams};
pub use synthdata::{ClientDataset, GroundTruth, SettingKind};
