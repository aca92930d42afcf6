//! Baselines and statistics: the Nyquist-rate averaged periodogram, error
//! metrics, second-order analysis of the CAP for Gaussian inputs, detection
//! curves and Monte Carlo drivers.

mod experiments;
mod roc;
mod variance;

pub use experiments::{inverse_gamma_sum, nmse_sweep, white_noise_monte_carlo, NmseRow, NmseSweep, VarianceReport, WhiteNoiseExperiment};
pub use roc::{auc_mann_whitney, block_statistics, roc_harness, DetectorConfig, RocCurve};
pub use variance::{
    analytical_gaussian_covariance, propagate_variance, whitenoise_variance_closed_form, GaussianMoments,
    SingleBinMoments, WhiteNoiseMoments, WhiteNoiseVariance,
};

use crate::error::{Error, Result};
use crate::estimator::{EstimatorKind, Periodogram};
use crate::sensing::CosetObservationSet;
use crate::sum::pairwise_sum;

/// Averaged periodogram `(1/(Ñτ)) Σ_t |X_t(ϑ)|²` from retained full-rate spectra.
pub fn nyquist_ap(observations: &CosetObservationSet) -> Result<Periodogram> {
    let tau = observations.len();
    if tau == 0 {
        return Err(Error::EmptyObservations);
    }
    let grid = observations.grid_len();
    let spectra = observations
        .sensors()
        .iter()
        .map(|s| s.full_spectrum.as_deref().ok_or(Error::MissingFullRate))
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 / (grid * tau) as f64;
    let values = (0..grid)
        .map(|k| {
            let col: Vec<f64> = spectra.iter().map(|x| x[k].norm_sqr()).collect();
            pairwise_sum(&col) * scale
        })
        .collect();
    Ok(Periodogram {
        values,
        kind: EstimatorKind::Nap,
        period: observations.period(),
        blocks: observations.blocks(),
        tau,
        clusters: 1,
        sampling: "full".into(),
        imag_residue: 0.0,
    })
}

/// Cluster-averaged Nyquist-rate periodogram.
pub fn nyquist_ap_clusters(clusters: &[CosetObservationSet]) -> Result<Periodogram> {
    let per = clusters.iter().map(nyquist_ap).collect::<Result<Vec<_>>>()?;
    Periodogram::mean(&per)
}

/// `Σ_ϑ (P̂ - P_ref)² / Σ_ϑ P_ref²`.
pub fn nmse(estimate: &Periodogram, reference: &Periodogram) -> Result<f64> {
    nmse_values(&estimate.values, &reference.values)
}

pub(crate) fn nmse_values(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::GridMismatch(format!("{} vs {} grid points", estimate.len(), reference.len())));
    }
    let num: Vec<f64> = estimate.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).collect();
    let den: Vec<f64> = reference.iter().map(|b| b * b).collect();
    let den = pairwise_sum(&den);
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(pairwise_sum(&num) / den)
}

/// Mean and unbiased variance of a sample.
pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, pairwise_sum(&sq) / (n - 1.0))
}
