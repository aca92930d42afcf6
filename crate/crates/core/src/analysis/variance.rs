//! Second-order statistics of the CAP for jointly Gaussian inputs.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ruler::CosetPattern;
use crate::sysmat::{build_system_matrix, SystemMatrix};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Second-order moments of the bin values `X_{t,i}(ϑ)` at one grid point.
pub trait GaussianMoments {
    /// `E[X_{t,i} X*_{t',b}]`.
    fn covariance(&self, t: usize, i: usize, t2: usize, b: usize) -> Complex64;

    /// `E[X_{t,i} X_{t',b}]`; zero for circular signals.
    fn pseudo_covariance(&self, _t: usize, _i: usize, _t2: usize, _b: usize) -> Complex64 {
        ZERO
    }

    /// When true, moments between distinct `t` are zero and are skipped.
    fn independent_sensors(&self) -> bool {
        true
    }
}

/// Circular white noise of variance σ² on an `Ñ`-point grid:
/// `E[X_{t,i} X*_{t',b}] = Ñ σ² δ[i-b] δ[t-t']`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteNoiseMoments {
    pub sigma2: f64,
    pub grid_len: usize,
}

impl GaussianMoments for WhiteNoiseMoments {
    fn covariance(&self, t: usize, i: usize, t2: usize, b: usize) -> Complex64 {
        if t == t2 && i == b {
            Complex64::new(self.grid_len as f64 * self.sigma2, 0.0)
        } else {
            ZERO
        }
    }
}

/// A single occupied bin `i₀` with power density `P`, independent across `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleBinMoments {
    pub bin: usize,
    pub power: f64,
    pub grid_len: usize,
}

impl GaussianMoments for SingleBinMoments {
    fn covariance(&self, t: usize, i: usize, t2: usize, b: usize) -> Complex64 {
        if t == t2 && i == self.bin && b == self.bin {
            Complex64::new(self.grid_len as f64 * self.power, 0.0)
        } else {
            ZERO
        }
    }
}

/// `M² × M²` covariance of `vec(R̂_ȳ(ϑ))`, row `m' M + m`, column `a' M + a`.
///
/// The quadruple sum over bins separates into
/// `F₁(m,a) conj(F₁(m',a')) + F₂(m,a') conj(F₂(m',a))` per sensor pair, where
/// `F₁ = E K Eᴴ`, `F₂ = E K̃ Eᵀ` and `E[m,i] = e^{j2π n_m i/N}`.
pub fn analytical_gaussian_covariance(
    moments: &dyn GaussianMoments,
    pattern: &CosetPattern,
    tau: usize,
) -> DMatrix<Complex64> {
    let n = pattern.period();
    let marks = pattern.marks();
    let m = marks.len();
    let e = DMatrix::from_fn(m, n, |r, i| Complex64::from_polar(1.0, 2.0 * PI * ((marks[r] * i) % n) as f64 / n as f64));
    let mut sigma = DMatrix::from_element(m * m, m * m, ZERO);
    let pairs: Vec<(usize, usize)> = if moments.independent_sensors() {
        (0..tau).map(|t| (t, t)).collect()
    } else {
        (0..tau).flat_map(|t| (0..tau).map(move |u| (t, u))).collect()
    };
    for (t, u) in pairs {
        let k1 = DMatrix::from_fn(n, n, |i, b| moments.covariance(t, i, u, b));
        let k2 = DMatrix::from_fn(n, n, |i, b| moments.pseudo_covariance(t, i, u, b));
        let f1 = &e * k1 * e.adjoint();
        let f2 = &e * k2 * e.transpose();
        for mp in 0..m {
            for mm in 0..m {
                for ap in 0..m {
                    for a in 0..m {
                        sigma[(mp * m + mm, ap * m + a)] +=
                            f1[(mm, a)] * f1[(mp, ap)].conj() + f2[(mm, ap)] * f2[(mp, a)].conj();
                    }
                }
            }
        }
    }
    let scale = 1.0 / ((n as f64).powi(4) * (tau as f64).powi(2));
    sigma * Complex64::new(scale, 0.0)
}

/// Per-bin CAP variance from the covariance of `vec(R̂_ȳ(ϑ))`: LS propagation
/// to the lag domain, then the diagonal of the bin-domain covariance scaled
/// by `1/Ñ²`. Index `i` is the bin `ϑ + i/N`.
pub fn propagate_variance(sigma: &DMatrix<Complex64>, system: &SystemMatrix, blocks: usize) -> Result<Vec<f64>> {
    system.require_identifiable()?;
    let n = system.period();
    let mm = system.row_map().len();
    if sigma.nrows() != mm || sigma.ncols() != mm {
        return Err(Error::LengthMismatch { expected: mm, actual: sigma.nrows() });
    }
    let row_map = system.row_map();
    let gamma = system.gamma();
    let mut lagged = DMatrix::from_element(n, n, ZERO);
    for q in 0..mm {
        for p in 0..mm {
            lagged[(row_map[q], row_map[p])] += sigma[(q, p)];
        }
    }
    for k in 0..n {
        for k2 in 0..n {
            lagged[(k, k2)] /= (gamma[k] * gamma[k2]) as f64;
        }
    }
    let scale = 1.0 / (blocks * blocks) as f64;
    Ok((0..n)
        .map(|i| {
            let w = DMatrix::from_fn(n, 1, |k, _| Complex64::from_polar(1.0, -2.0 * PI * ((i * k) % n) as f64 / n as f64));
            let v = (w.transpose() * &lagged * w.map(|c| c.conj()))[(0, 0)];
            v.re * scale
        })
        .collect())
}

/// Closed-form white-noise CAP variance and the matching NMSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteNoiseVariance {
    /// `σ⁴/(Mτ) + (σ⁴/τ) Σ_{κ≥1} 1/γ_κ`; `+∞` for non-identifiable patterns.
    pub variance: f64,
    /// `(1/τ)(1/M + Σ_{κ≥1} 1/γ_κ)`.
    pub nmse: f64,
    pub identifiable: bool,
}

pub fn whitenoise_variance_closed_form(pattern: &CosetPattern, sigma2: f64, tau: usize) -> WhiteNoiseVariance {
    let system = build_system_matrix(pattern);
    let gamma = system.gamma();
    if !system.is_identifiable() {
        return WhiteNoiseVariance { variance: f64::INFINITY, nmse: f64::INFINITY, identifiable: false };
    }
    let sum: f64 = 1.0 / pattern.len() as f64 + gamma[1..].iter().map(|&g| 1.0 / g as f64).sum::<f64>();
    let nmse = sum / tau as f64;
    WhiteNoiseVariance { variance: sigma2 * sigma2 * nmse, nmse, identifiable: true }
}
