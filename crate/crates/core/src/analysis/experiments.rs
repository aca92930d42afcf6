//! Monte Carlo drivers. Runs are independent jobs keyed by their index;
//! results are gathered in run order and reduced with fixed pairwise trees.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_var, nmse, nmse_values, nyquist_ap_clusters, whitenoise_variance_closed_form};
use crate::error::{Error, Result};
use crate::estimator::{estimate_cap, estimate_multicluster};
use crate::ruler::{modular_difference_set, CosetPattern};
use crate::sensing::{BinMode, Sampling, ScenarioConfig, SyncMode, Synthesizer};
use crate::sum::pairwise_sum;
use crate::sysmat::build_system_matrix;

/// White-noise-only Monte Carlo setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteNoiseExperiment {
    pub pattern: CosetPattern,
    pub blocks: usize,
    pub noise_dbm: f64,
    pub tau: usize,
    pub runs: usize,
    pub seed: u64,
}

impl WhiteNoiseExperiment {
    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            period: self.pattern.period(),
            blocks: self.blocks,
            users: vec![],
            noise_dbm: Some(self.noise_dbm),
            clusters: 1,
            sensors_per_cluster: self.tau,
            sync: SyncMode::Unsynchronized,
            bins: BinMode::Uncorrelated,
            sampling: Sampling::Pattern { pattern: self.pattern.marks().to_vec() },
            seed: self.seed,
        }
    }
}

/// Closed-form against Monte Carlo CAP statistics for white noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub pattern: CosetPattern,
    pub gamma: Vec<usize>,
    pub period: usize,
    pub blocks: usize,
    pub tau: usize,
    pub runs: usize,
    pub sigma2: f64,
    /// Closed-form per-bin variance (the same at every grid point).
    pub analytical: f64,
    /// Per-bin mean over runs.
    pub mean: Vec<f64>,
    /// Per-bin unbiased variance over runs.
    pub variance: Vec<f64>,
    /// Standard error of each per-bin variance, from the fourth central moment.
    pub variance_se: Vec<f64>,
    pub nmse_empirical: f64,
    pub nmse_analytical: f64,
}

impl VarianceReport {
    pub fn grid_len(&self) -> usize {
        self.variance.len()
    }

    pub fn theta(&self, k: usize) -> f64 {
        k as f64 / self.variance.len() as f64
    }

    /// Standard error of a per-bin mean.
    pub fn mean_se(&self, k: usize) -> f64 {
        (self.variance[k] / self.runs as f64).sqrt()
    }

    /// Grid-wide average of a per-bin quantity and its standard error. Bins
    /// sharing a grid point `ϑ_l` are correlated, so the error is computed
    /// across the `L` independent grid-point averages.
    fn pooled(&self, values: &[f64]) -> (f64, f64) {
        let (n, l) = (self.period, self.blocks);
        let groups: Vec<f64> = (0..l).map(|g| (0..n).map(|i| values[i * l + g]).sum::<f64>() / n as f64).collect();
        let (mean, var) = mean_var(&groups);
        (mean, (var / l as f64).sqrt())
    }

    /// Grid-averaged variance and its standard error.
    pub fn pooled_variance(&self) -> (f64, f64) {
        self.pooled(&self.variance)
    }

    /// Grid-averaged mean and its standard error.
    pub fn pooled_mean(&self) -> (f64, f64) {
        self.pooled(&self.mean)
    }

    /// Fraction of bins whose variance is within `k` standard errors of the
    /// closed form.
    pub fn variance_coverage(&self, k: f64) -> f64 {
        let hits = (0..self.grid_len())
            .filter(|&b| (self.variance[b] - self.analytical).abs() <= k * self.variance_se[b])
            .count();
        hits as f64 / self.grid_len() as f64
    }

    /// Fraction of bins whose mean is within `k` standard errors of σ².
    pub fn mean_coverage(&self, k: f64) -> f64 {
        let hits = (0..self.grid_len()).filter(|&b| (self.mean[b] - self.sigma2).abs() <= k * self.mean_se(b)).count();
        hits as f64 / self.grid_len() as f64
    }
}

/// Monte Carlo CAP statistics for circular white Gaussian noise.
pub fn white_noise_monte_carlo(exp: &WhiteNoiseExperiment) -> Result<VarianceReport> {
    if exp.runs < 2 {
        return Err(Error::InvalidScenario("variance needs at least two runs".into()));
    }
    let system = build_system_matrix(&exp.pattern);
    system.require_identifiable()?;
    let scenario = exp.scenario();
    let synth = Synthesizer::new(&scenario)?;
    let sigma2 = scenario.noise_variance();
    let caps: Vec<Vec<f64>> = (0..exp.runs as u64)
        .into_par_iter()
        .map(|run| {
            let acq = synth.acquire(run, false)?;
            Ok(estimate_cap(&acq.sets[0], &system)?.values)
        })
        .collect::<Result<_>>()?;
    let grid = scenario.grid_len();
    let r = exp.runs as f64;
    let mut mean = Vec::with_capacity(grid);
    let mut variance = Vec::with_capacity(grid);
    let mut variance_se = Vec::with_capacity(grid);
    let mut column = vec![0.0; exp.runs];
    for k in 0..grid {
        for (c, cap) in column.iter_mut().zip(&caps) {
            *c = cap[k];
        }
        let (m, v) = mean_var(&column);
        let m4: Vec<f64> = column.iter().map(|x| (x - m).powi(4)).collect();
        let m4 = pairwise_sum(&m4) / r;
        mean.push(m);
        variance.push(v);
        variance_se.push(((m4 - v * v).max(0.0) / r).sqrt());
    }
    let reference = vec![sigma2; grid];
    let per_run = caps.iter().map(|c| nmse_values(c, &reference)).collect::<Result<Vec<_>>>()?;
    let closed = whitenoise_variance_closed_form(&exp.pattern, sigma2, exp.tau);
    Ok(VarianceReport {
        pattern: exp.pattern.clone(),
        gamma: system.gamma().to_vec(),
        period: exp.pattern.period(),
        blocks: exp.blocks,
        tau: exp.tau,
        runs: exp.runs,
        sigma2,
        analytical: closed.variance,
        mean,
        variance,
        variance_se,
        nmse_empirical: pairwise_sum(&per_run) / r,
        nmse_analytical: closed.nmse,
    })
}

/// NMSE of the CAP against the NAP over a grid of settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseSweep {
    pub scenario: ScenarioConfig,
    /// Patterns compared on the same acquisitions.
    pub patterns: Vec<CosetPattern>,
    pub taus: Vec<usize>,
    pub noise_dbm: Vec<f64>,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseRow {
    pub tau: usize,
    pub rate: f64,
    pub pattern: String,
    pub sigma2_dbm: f64,
    /// Mean NMSE over runs.
    pub nmse: f64,
    /// Standard error of the mean NMSE.
    pub nmse_se: f64,
}

/// For every noise level and `τ`, acquires each run once on the union of the
/// patterns and evaluates every pattern against the Nyquist-rate baseline.
pub fn nmse_sweep(sweep: &NmseSweep) -> Result<Vec<NmseRow>> {
    if sweep.patterns.is_empty() || sweep.taus.is_empty() || sweep.noise_dbm.is_empty() {
        return Err(Error::InvalidScenario("sweep axes must be non-empty".into()));
    }
    if sweep.runs == 0 {
        return Err(Error::InvalidScenario("at least one run is needed".into()));
    }
    let period = sweep.scenario.period;
    let mut union: Vec<usize> = sweep.patterns.iter().flat_map(|p| p.marks().iter().copied()).collect();
    union.sort_unstable();
    union.dedup();
    let union = CosetPattern::new(period, union)?;
    let systems: Vec<_> = sweep.patterns.iter().map(build_system_matrix).collect();
    for s in &systems {
        s.require_identifiable()?;
    }
    let mut rows = Vec::new();
    for &sigma in &sweep.noise_dbm {
        for &tau in &sweep.taus {
            let mut cfg = sweep.scenario.clone();
            cfg.noise_dbm = Some(sigma);
            cfg.sensors_per_cluster = tau;
            cfg.sampling = Sampling::Pattern { pattern: union.marks().to_vec() };
            let synth = Synthesizer::new(&cfg)?;
            let per_run: Vec<Vec<f64>> = (0..sweep.runs as u64)
                .into_par_iter()
                .map(|run| {
                    let acq = synth.acquire(run, true)?;
                    let nap = nyquist_ap_clusters(&acq.sets)?;
                    let lean: Vec<_> = acq.sets.into_iter().map(|s| s.without_full_rate()).collect();
                    sweep
                        .patterns
                        .iter()
                        .zip(&systems)
                        .map(|(p, sys)| {
                            let sets = lean.iter().map(|s| s.select(p)).collect::<Result<Vec<_>>>()?;
                            nmse(&estimate_multicluster(&sets, sys)?.average, &nap)
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            for (j, p) in sweep.patterns.iter().enumerate() {
                let xs: Vec<f64> = per_run.iter().map(|r| r[j]).collect();
                let (m, v) = mean_var(&xs);
                rows.push(NmseRow {
                    tau,
                    rate: p.rate(),
                    pattern: p.to_string(),
                    sigma2_dbm: sigma,
                    nmse: m,
                    nmse_se: (v / xs.len() as f64).sqrt(),
                });
            }
        }
    }
    Ok(rows)
}

/// `Σ_{κ≥1} 1/γ_κ` of a pattern, the part of the white-noise NMSE that
/// depends on the pattern beyond its size.
pub fn inverse_gamma_sum(pattern: &CosetPattern) -> f64 {
    modular_difference_set(pattern).multiplicity()[1..].iter().map(|&g| 1.0 / g as f64).sum()
}
