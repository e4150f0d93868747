//! Fuel-consumption anomaly detection for generator telemetry.
//!
//! Records are labelled by three physical rules, scaled to `[0, 1]`, and
//! reconstructed by a small dense autoencoder trained on normal records
//! only. The reconstruction error of a priority feature (running time per
//! day by default) is thresholded to flag anomalies, and a label-assistance
//! controller tunes that threshold and the training hyper-parameters
//! against a labelled validation split.
//!
//! Modules, bottom-up:
//!
//! - [`metrics`]: confusion counts and detection metrics
//! - [`dataset`]: telemetry records, rules, CSV I/O, synthetic data
//! - [`preprocess`]: min-max scaling and splitting
//! - [`neuralnet`]: the autoencoder and its training loop
//! - [`detector`]: scoring, threshold sweep, severity classes
//! - [`assist`]: the label-assistance loop
//! - [`analysis`]: random-forest importance and correlation

pub mod analysis;
pub mod assist;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod metrics;
pub mod neuralnet;
pub mod preprocess;

pub use error::{Error, Result};
