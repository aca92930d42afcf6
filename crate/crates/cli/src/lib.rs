//! Experiment orchestration for the `cosetap` command: manifests, runners and
//! CSV/JSON output.

pub mod error;
pub mod experiments;
pub mod manifest;
pub mod output;

pub use error::{CliError, CliResult};
pub use experiments::{run, Outputs};
pub use manifest::{ExperimentKind, ExperimentManifest};
