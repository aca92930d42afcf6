//! Compressive averaged periodogram (CAP) reconstruction from multi-coset samples.
//!
//! The crate is organised around the reconstruction pipeline:
//!
//! - [`ruler`]: coset pattern design (circular sparse rulers, pair-covering families)
//! - [`sysmat`]: the structured matrices of the model and their index representations
//! - [`sensing`]: scenario synthesis and multi-coset acquisition
//! - [`estimator`]: sample covariances, least-squares inversion and CAP assembly
//! - [`analysis`]: Nyquist-rate baseline, error metrics, variance formulas, ROC harness

pub mod analysis;
pub mod error;
pub mod estimator;
pub mod rng;
pub mod ruler;
pub mod sensing;
pub mod sysmat;

mod sum;

pub use error::{Error, Result};

pub use ruler::{CosetPattern, ModularDifferenceSet, PatternFamily};
pub use estimator::{CosetCorrelation, CovarianceStack, EstimatorKind, Periodogram};
pub use sensing::{CosetObservationSet, ScenarioConfig, UserSpec};
pub use sysmat::{ModulationMatrix, PsiMatrix, RepetitionMatrix, SystemMatrix};

pub use num_complex::Complex64;
