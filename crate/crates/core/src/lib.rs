//! Leakage-aware concept bottleneck models over precomputed embeddings.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: matrices, seeded RNG, Adam, annealing schedules, gradient checks.
//! * [`density`]: KDE and binned information estimators plus the leakage loss.
//! * [`model`]: the bottleneck layer, KAN and linear heads, checkpoints.
//! * [`data`]: dataset schema, ingestion, concept annotation, synthetic generator.
//! * [`training`]: joint / independent / sequential regimes and the total objective.
//! * [`evaluation`]: faithfulness report, statistics, intervention and exports.
//! * [`wire`]: JSON shapes shared by the HTTP service and its client.

pub mod data;
pub mod density;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod training;
pub mod wire;

pub use error::{Error, Result};

/// Version string embedded in every artifact this crate writes.
pub const TOOL_VERSION: &str = concat!("fcbm/", env!("CARGO_PKG_VERSION"));
