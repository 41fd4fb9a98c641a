//! Command-line front end for distance-constrained style transfer: single
//! runs, parameter sweeps, distance-field previews and weight file checks.

pub mod error;
pub mod grid;
pub mod manifest;
pub mod pipeline;

pub use error::CliError;
pub use manifest::{Entries, RunManifest};
pub use pipeline::{
    check_weights, distance_debug, generate, sweep, Axis, DebugRequest, GenerateReport,
};
