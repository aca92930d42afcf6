//! Reconstruction pipeline: per-grid-point sample covariances, least-squares
//! inversion through the γ-diagonal, and CAP assembly.
//!
//! Matrices are stored column-major: entry `(m, m')` of an `M × M` matrix sits
//! at `m' M + m`, the same order as `vec(·)`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ruler::CosetPattern;
use crate::sensing::CosetObservationSet;
use crate::sum::pairwise_vec_sum;
use crate::sysmat::{PsiMatrix, SystemMatrix};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Which estimator produced a periodogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Compressive AP under uncorrelated bins.
    #[serde(rename = "CAP-UB")]
    CapUb,
    /// Compressive AP with correlated bins (pattern family).
    #[serde(rename = "CAP-CB")]
    CapCb,
    /// Nyquist-rate averaged periodogram.
    #[serde(rename = "NAP")]
    Nap,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::CapUb => "CAP-UB",
            EstimatorKind::CapCb => "CAP-CB",
            EstimatorKind::Nap => "NAP",
        })
    }
}

/// Per-grid-point `M × M` sample covariances `R̂_ȳ(ϑ_l)`, `l < L`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceStack {
    order: usize,
    blocks: usize,
    tau: usize,
    data: Vec<Complex64>,
}

impl CovarianceStack {
    /// Wraps precomputed matrices, `L` blocks of `M²` column-major entries.
    pub fn from_matrices(order: usize, blocks: usize, tau: usize, data: Vec<Complex64>) -> Result<Self> {
        let expected = order * order * blocks;
        if data.len() != expected {
            return Err(Error::LengthMismatch { expected, actual: data.len() });
        }
        Ok(Self { order, blocks, tau, data })
    }

    /// Matrix size `M`.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// Number of averaged outer products.
    pub fn tau(&self) -> usize {
        self.tau
    }

    /// Column-major `R̂_ȳ(ϑ_l)`.
    pub fn matrix(&self, l: usize) -> &[Complex64] {
        let mm = self.order * self.order;
        &self.data[l * mm..(l + 1) * mm]
    }

    pub fn get(&self, l: usize, row: usize, col: usize) -> Complex64 {
        self.matrix(l)[col * self.order + row]
    }

    /// Largest `|R[m,m'] - conj(R[m',m])|` over the stack.
    pub fn hermitian_defect(&self) -> f64 {
        let m = self.order;
        (0..self.blocks)
            .flat_map(|l| {
                let r = self.matrix(l);
                (0..m).flat_map(move |a| (0..m).map(move |b| (r[b * m + a] - r[a * m + b].conj()).norm()))
            })
            .fold(0.0, f64::max)
    }
}

/// `R̂_ȳ(ϑ) = (1/τ) Σ_t ȳ_t(ϑ) ȳ_tᴴ(ϑ)` at every grid point. The sum over `t`
/// is a fixed pairwise tree, so the result does not depend on scheduling.
pub fn sample_covariance(observations: &CosetObservationSet) -> Result<CovarianceStack> {
    let tau = observations.len();
    if tau == 0 {
        return Err(Error::EmptyObservations);
    }
    let m = observations.pattern().len();
    let blocks = observations.blocks();
    let mm = m * m;
    let sensors = observations.sensors();
    let fill = |t: usize, acc: &mut [Complex64]| {
        let s = &sensors[t].coset_spectra;
        for l in 0..blocks {
            let out = &mut acc[l * mm..(l + 1) * mm];
            for col in 0..m {
                let yc = s[col * blocks + l].conj();
                for row in 0..m {
                    out[col * m + row] += s[row * blocks + l] * yc;
                }
            }
        }
    };
    let mut data = pairwise_vec_sum(tau, mm * blocks, &fill);
    let scale = 1.0 / tau as f64;
    for v in &mut data {
        *v *= scale;
    }
    Ok(CovarianceStack { order: m, blocks, tau, data })
}

/// First columns `r̂_x̄(ϑ_l)` of the circulant coset correlation, one length-`N`
/// vector per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct CosetCorrelation {
    period: usize,
    blocks: usize,
    tau: usize,
    data: Vec<Complex64>,
}

impl CosetCorrelation {
    pub fn from_vectors(period: usize, blocks: usize, tau: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != period * blocks {
            return Err(Error::LengthMismatch { expected: period * blocks, actual: data.len() });
        }
        Ok(Self { period, blocks, tau, data })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    /// `r̂_x̄(ϑ_l)`, indexed by lag.
    pub fn vector(&self, l: usize) -> &[Complex64] {
        &self.data[l * self.period..(l + 1) * self.period]
    }

    /// Entry-wise mean of several correlations on one grid.
    pub fn mean(items: &[CosetCorrelation]) -> Result<Self> {
        let first = items.first().ok_or(Error::EmptyObservations)?;
        if items.iter().any(|c| c.period != first.period || c.blocks != first.blocks) {
            return Err(Error::GridMismatch("correlations on different grids".into()));
        }
        let scale = 1.0 / items.len() as f64;
        let data = pairwise_vec_sum(items.len(), first.data.len(), &|k, acc: &mut [Complex64]| {
            for (a, v) in acc.iter_mut().zip(&items[k].data) {
                *a += v;
            }
        })
        .into_iter()
        .map(|v| v * scale)
        .collect();
        Ok(Self { period: first.period, blocks: first.blocks, tau: first.tau, data })
    }
}

/// Least-squares `r̂_x̄ = (R_cᵀR_c)⁻¹R_cᵀ vec(R̂_ȳ)`: each lag is the mean of the
/// covariance entries realising it.
pub fn ls_reconstruct(stack: &CovarianceStack, system: &SystemMatrix) -> Result<CosetCorrelation> {
    system.require_identifiable()?;
    let m = system.pattern().len();
    if stack.order() != m {
        return Err(Error::LengthMismatch { expected: m, actual: stack.order() });
    }
    let n = system.period();
    let row_map = system.row_map();
    let inv_gamma: Vec<f64> = system.gamma().iter().map(|&g| 1.0 / g as f64).collect();
    let mut data = vec![ZERO; n * stack.blocks()];
    for (l, out) in data.chunks_mut(n).enumerate() {
        for (&lag, &v) in row_map.iter().zip(stack.matrix(l)) {
            out[lag] += v;
        }
        for (o, &w) in out.iter_mut().zip(&inv_gamma) {
            *o *= w;
        }
    }
    Ok(CosetCorrelation { period: n, blocks: stack.blocks(), tau: stack.tau(), data })
}

/// Power values on the full `Ñ`-point grid; index `k` is `ϑ = k/Ñ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Periodogram {
    pub values: Vec<f64>,
    pub kind: EstimatorKind,
    pub period: usize,
    pub blocks: usize,
    /// Averaged outer products per cluster.
    pub tau: usize,
    pub clusters: usize,
    /// Pattern or family the estimate was computed from, as text.
    pub sampling: String,
    /// Largest discarded imaginary part relative to the largest magnitude.
    pub imag_residue: f64,
}

impl Periodogram {
    pub fn grid_len(&self) -> usize {
        self.values.len()
    }

    pub fn theta(&self, k: usize) -> f64 {
        k as f64 / self.values.len() as f64
    }

    /// Values below zero; kept rather than clipped.
    pub fn negative_count(&self) -> usize {
        self.values.iter().filter(|&&v| v < 0.0).count()
    }

    /// Bin-wise mean of periodograms on one grid.
    pub fn mean(items: &[Periodogram]) -> Result<Self> {
        let first = items.first().ok_or(Error::EmptyObservations)?;
        if items.iter().any(|p| p.values.len() != first.values.len()) {
            return Err(Error::GridMismatch("periodograms on different grids".into()));
        }
        let d = items.len() as f64;
        let values = (0..first.values.len())
            .map(|k| {
                let col: Vec<f64> = items.iter().map(|p| p.values[k]).collect();
                crate::sum::pairwise_sum(&col) / d
            })
            .collect();
        Ok(Self {
            values,
            clusters: items.iter().map(|p| p.clusters).sum(),
            imag_residue: items.iter().map(|p| p.imag_residue).fold(0.0, f64::max),
            ..first.clone()
        })
    }
}

fn realize(diag: Vec<Complex64>) -> (Vec<f64>, f64) {
    let scale = diag.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let worst = diag.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let residue = if scale > 0.0 { worst / scale } else { 0.0 };
    (diag.into_iter().map(|v| v.re).collect(), residue)
}

/// CAP from the coset correlation: `P̂(ϑ_l + i/N) = (1/L) Σ_κ r̂_x̄(ϑ_l)[κ] e^{-j2πiκ/N}`,
/// the diagonal of `N² Bᴴ R̂_x̄ B / Ñ` for circulant `R̂_x̄`.
pub fn assemble_cap(rbar: &CosetCorrelation, sampling: &str) -> Periodogram {
    let n = rbar.period();
    let blocks = rbar.blocks();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let scale = 1.0 / blocks as f64;
    let mut diag = vec![ZERO; n * blocks];
    let mut buf = vec![ZERO; n];
    for l in 0..blocks {
        buf.copy_from_slice(rbar.vector(l));
        fft.process(&mut buf);
        for (i, v) in buf.iter().enumerate() {
            diag[i * blocks + l] = v * scale;
        }
    }
    let (values, imag_residue) = realize(diag);
    Periodogram {
        values,
        kind: EstimatorKind::CapUb,
        period: n,
        blocks,
        tau: rbar.tau(),
        clusters: 1,
        sampling: sampling.to_string(),
        imag_residue,
    }
}

/// Full uncorrelated-bins pipeline for one cluster.
pub fn estimate_cap(observations: &CosetObservationSet, system: &SystemMatrix) -> Result<Periodogram> {
    if observations.pattern() != system.pattern() {
        return Err(Error::GridMismatch("observations and system matrix use different patterns".into()));
    }
    let stack = sample_covariance(observations)?;
    let rbar = ls_reconstruct(&stack, system)?;
    Ok(assemble_cap(&rbar, &observations.pattern().to_string()))
}

/// Per-cluster CAPs and their average.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlusterEstimate {
    pub per_cluster: Vec<Periodogram>,
    pub average: Periodogram,
}

/// Runs the pipeline on every cluster and averages the CAPs.
pub fn estimate_multicluster(clusters: &[CosetObservationSet], system: &SystemMatrix) -> Result<MulticlusterEstimate> {
    if clusters.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let per_cluster = clusters.iter().map(|c| estimate_cap(c, system)).collect::<Result<Vec<_>>>()?;
    let average = Periodogram::mean(&per_cluster)?;
    Ok(MulticlusterEstimate { per_cluster, average })
}

/// `diag(Bᴴ R B) N²` for a full column-major `N × N` matrix, via transforms
/// along both axes: `Σ_{n,n'} e^{-j2πni/N} R[n,n'] e^{j2πn'i/N}`.
fn modulated_diagonal(r: &[Complex64], n: usize, fft: &dyn rustfft::Fft<f64>) -> Vec<Complex64> {
    let mut cols = r.to_vec();
    for col in cols.chunks_mut(n) {
        fft.process(col);
    }
    (0..n)
        .map(|i| {
            (0..n)
                .map(|c| cols[c * n + i] * Complex64::from_polar(1.0, 2.0 * PI * ((c * i) % n) as f64 / n as f64))
                .sum()
        })
        .collect()
}

/// Full `N × N` estimates `R̂_x̄(ϑ_l)` from the correlated-bins system.
#[derive(Debug, Clone, PartialEq)]
pub struct CosetCovariance {
    period: usize,
    blocks: usize,
    tau: usize,
    data: Vec<Complex64>,
}

impl CosetCovariance {
    pub fn from_matrices(period: usize, blocks: usize, tau: usize, data: Vec<Complex64>) -> Result<Self> {
        let expected = period * period * blocks;
        if data.len() != expected {
            return Err(Error::LengthMismatch { expected, actual: data.len() });
        }
        Ok(Self { period, blocks, tau, data })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// Column-major `R̂_x̄(ϑ_l)`.
    pub fn matrix(&self, l: usize) -> &[Complex64] {
        let nn = self.period * self.period;
        &self.data[l * nn..(l + 1) * nn]
    }
}

/// Ψ least squares: every entry of `vec(R̂_x̄)` is the mean of the group
/// covariance entries observing that ordered coset pair.
pub fn psi_reconstruct(groups: &[CovarianceStack], psi: &PsiMatrix) -> Result<CosetCovariance> {
    psi.require_identifiable()?;
    let patterns = psi.family().patterns();
    if groups.len() != patterns.len() {
        return Err(Error::LengthMismatch { expected: patterns.len(), actual: groups.len() });
    }
    let n = psi.period();
    let blocks = groups[0].blocks();
    for (g, p) in groups.iter().zip(patterns) {
        if g.order() != p.len() {
            return Err(Error::LengthMismatch { expected: p.len(), actual: g.order() });
        }
        if g.blocks() != blocks {
            return Err(Error::GridMismatch("groups on different grids".into()));
        }
    }
    let nn = n * n;
    let mut data = vec![ZERO; nn * blocks];
    for (g, p) in groups.iter().zip(patterns) {
        let marks = p.marks();
        let m = marks.len();
        for l in 0..blocks {
            let src = g.matrix(l);
            let dst = &mut data[l * nn..(l + 1) * nn];
            for (b, &col) in marks.iter().enumerate() {
                for (a, &row) in marks.iter().enumerate() {
                    dst[col * n + row] += src[b * m + a];
                }
            }
        }
    }
    let inv: Vec<f64> = psi.pair_counts().iter().map(|&c| 1.0 / c as f64).collect();
    for block in data.chunks_mut(nn) {
        for (v, &w) in block.iter_mut().zip(&inv) {
            *v *= w;
        }
    }
    let tau = groups.iter().map(|g| g.tau()).sum();
    Ok(CosetCovariance { period: n, blocks, tau, data })
}

/// CAP from full coset covariances: `diag(N² Bᴴ R̂_x̄ B) / Ñ`.
pub fn assemble_cap_full(cov: &CosetCovariance, sampling: &str) -> Periodogram {
    let n = cov.period();
    let blocks = cov.blocks();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let scale = 1.0 / (n * blocks) as f64;
    let mut diag = vec![ZERO; n * blocks];
    for l in 0..blocks {
        for (i, v) in modulated_diagonal(cov.matrix(l), n, fft.as_ref()).into_iter().enumerate() {
            diag[i * blocks + l] = v * scale;
        }
    }
    let (values, imag_residue) = realize(diag);
    Periodogram {
        values,
        kind: EstimatorKind::CapCb,
        period: n,
        blocks,
        tau: cov.tau,
        clusters: 1,
        sampling: sampling.to_string(),
        imag_residue,
    }
}

/// Correlated-bins CAP from observations grouped by pattern `z`.
pub fn estimate_correlated_bins(groups: &[CosetObservationSet], psi: &PsiMatrix) -> Result<Periodogram> {
    psi.require_identifiable()?;
    let patterns = psi.family().patterns();
    if groups.len() != patterns.len() {
        return Err(Error::LengthMismatch { expected: patterns.len(), actual: groups.len() });
    }
    for (g, p) in groups.iter().zip(patterns) {
        if g.pattern() != p {
            return Err(Error::GridMismatch(format!("group observed {} but the family expects {}", g.pattern(), p)));
        }
    }
    let stacks = groups.iter().map(sample_covariance).collect::<Result<Vec<_>>>()?;
    let cov = psi_reconstruct(&stacks, psi)?;
    let sampling: Vec<String> = patterns.iter().map(|p| format!("{{{p}}}")).collect();
    Ok(assemble_cap_full(&cov, &sampling.join(" ")))
}

/// Population (exact) covariances for synthetic checks of the pipeline.
pub mod population {
    use super::*;

    /// `R_x̄ = B R_x Bᴴ` for a column-major `N × N` bin covariance `R_x`.
    pub fn coset_covariance(rx: &[Complex64], n: usize) -> Vec<Complex64> {
        let b = |row: usize, i: usize| Complex64::from_polar(1.0 / n as f64, 2.0 * PI * ((row * i) % n) as f64 / n as f64);
        let mut out = vec![ZERO; n * n];
        for c in 0..n {
            for r in 0..n {
                let mut acc = ZERO;
                for i in 0..n {
                    for j in 0..n {
                        acc += b(r, i) * rx[j * n + i] * b(c, j).conj();
                    }
                }
                out[c * n + r] = acc;
            }
        }
        out
    }

    /// `R_x = diag(d)` as a column-major matrix.
    pub fn diagonal(d: &[f64]) -> Vec<Complex64> {
        let n = d.len();
        let mut out = vec![ZERO; n * n];
        for (i, &v) in d.iter().enumerate() {
            out[i * n + i] = Complex64::new(v, 0.0);
        }
        out
    }

    /// `C R Cᵀ`: the rows and columns of the active cosets.
    pub fn compress(rxbar: &[Complex64], pattern: &CosetPattern) -> Vec<Complex64> {
        let n = pattern.period();
        let marks = pattern.marks();
        marks.iter().flat_map(|&c| marks.iter().map(move |&r| rxbar[c * n + r])).collect()
    }
}
