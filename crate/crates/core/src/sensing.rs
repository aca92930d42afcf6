//! Scenario synthesis and multi-coset acquisition.
//!
//! Each sensor (or time index) `t` observes `Ñ = N L` Nyquist-grid samples of a
//! sum of faded user signals plus white noise, but only keeps the `L` samples
//! of each active coset. From those it forms per-coset DTFT values on the grid
//! `ϑ_l = l / Ñ`, `l = 0..L`, which is all the estimator sees.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Role};
use crate::ruler::{CosetPattern, PatternFamily};

/// Taps of the user band-shaping filters.
pub const FIR_TAPS: usize = 200;

/// dB value to linear power; `-inf` maps to 0.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One user's occupied band, in-band power density and per-cluster path loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    /// `[lo, hi)` in normalized frequency (cycles/sample); values in
    /// `[-0.5, 1)` are accepted and wrapped to `[0, 1)`.
    pub band: [f64; 2],
    /// In-band level of the power spectrum, dB relative to the noise reference.
    pub power_dbm: f64,
    /// Path loss towards each cluster in dB (negative values attenuate).
    #[serde(default)]
    pub path_loss_db: Vec<f64>,
}

impl UserSpec {
    pub fn width(&self) -> f64 {
        self.band[1] - self.band[0]
    }

    pub fn power(&self) -> f64 {
        db_to_linear(self.power_dbm)
    }

    /// Linear path-loss gain towards `cluster`; 1 when unspecified.
    pub fn path_gain(&self, cluster: usize) -> f64 {
        self.path_loss_db.get(cluster).map_or(1.0, |&db| db_to_linear(db))
    }

    fn validate(&self) -> Result<()> {
        let [lo, hi] = self.band;
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::InvalidScenario(format!("band [{lo}, {hi}) has no width")));
        }
        if lo < -0.5 || hi > 1.0 || hi - lo > 1.0 {
            return Err(Error::InvalidScenario(format!("band [{lo}, {hi}) outside [-0.5, 1)")));
        }
        if self.power_dbm.is_nan() || self.power_dbm == f64::INFINITY {
            return Err(Error::InvalidScenario("user power must be finite or -inf".into()));
        }
        Ok(())
    }

    /// Whether full-grid index `k` (of `grid`) lies in the band.
    pub fn contains_grid_point(&self, k: usize, grid: usize) -> bool {
        let f = k as f64 / grid as f64;
        let [lo, hi] = self.band;
        let lo_w = lo.rem_euclid(1.0);
        let span = hi - lo;
        let off = (f - lo_w).rem_euclid(1.0);
        off < span
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SyncMode {
    /// One user-signal realization shared by every sensor.
    Synchronized,
    /// Independent user-signal realizations per sensor.
    #[default]
    Unsynchronized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BinMode {
    /// Users are filtered Gaussian noise; spectra in distinct bins are uncorrelated.
    #[default]
    Uncorrelated,
    /// Each user puts one symbol on all its frequency points (fully correlated band).
    Correlated,
}

/// How sensors sample: one shared pattern, or one pattern per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sampling {
    Pattern {
        pattern: Vec<usize>,
    },
    Family {
        groups: Vec<Vec<usize>>,
        sensors_per_group: usize,
    },
}

/// Everything needed to synthesize one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Number of cosets `N` (bins).
    pub period: usize,
    /// Samples per coset `L`; `Ñ = N L`.
    pub blocks: usize,
    #[serde(default)]
    pub users: Vec<UserSpec>,
    /// White-noise variance σ² in dB; absent means noiseless.
    #[serde(default)]
    pub noise_dbm: Option<f64>,
    /// Number of clusters `D`.
    #[serde(default = "one")]
    pub clusters: usize,
    /// Sensors (time indices) per cluster `τ`.
    pub sensors_per_cluster: usize,
    #[serde(default)]
    pub sync: SyncMode,
    #[serde(default)]
    pub bins: BinMode,
    pub sampling: Sampling,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Full grid size `Ñ`.
    pub fn grid_len(&self) -> usize {
        self.period * self.blocks
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_dbm.map_or(0.0, db_to_linear)
    }

    /// Total sensors `D τ`.
    pub fn total_sensors(&self) -> usize {
        self.clusters * self.sensors_per_cluster
    }

    pub fn pattern(&self) -> Result<Option<CosetPattern>> {
        match &self.sampling {
            Sampling::Pattern { pattern } => Ok(Some(CosetPattern::new(self.period, pattern.clone())?)),
            Sampling::Family { .. } => Ok(None),
        }
    }

    pub fn family(&self) -> Result<Option<PatternFamily>> {
        match &self.sampling {
            Sampling::Pattern { .. } => Ok(None),
            Sampling::Family { groups, .. } => {
                let patterns = groups
                    .iter()
                    .map(|g| CosetPattern::new(self.period, g.clone()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Some(PatternFamily::new(patterns)?))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.period == 0 || self.blocks == 0 {
            return Err(Error::InvalidScenario("period and blocks must be positive".into()));
        }
        if self.clusters == 0 || self.sensors_per_cluster == 0 {
            return Err(Error::InvalidScenario("need at least one cluster and one sensor".into()));
        }
        if let Some(db) = self.noise_dbm {
            if db.is_nan() || db == f64::INFINITY {
                return Err(Error::InvalidScenario("noise level must be finite".into()));
            }
        }
        for u in &self.users {
            u.validate()?;
            if !u.path_loss_db.is_empty() && u.path_loss_db.len() < self.clusters {
                return Err(Error::InvalidScenario(format!(
                    "user band {:?} lists {} path losses for {} clusters",
                    u.band,
                    u.path_loss_db.len(),
                    self.clusters
                )));
            }
        }
        self.pattern()?;
        if let (Some(family), Sampling::Family { sensors_per_group, .. }) = (self.family()?, &self.sampling) {
            if self.clusters != 1 {
                return Err(Error::InvalidScenario("pattern families use a single cluster".into()));
            }
            if family.len() * sensors_per_group != self.sensors_per_cluster {
                return Err(Error::InvalidScenario(format!(
                    "{} groups x {} sensors != {} sensors",
                    family.len(),
                    sensors_per_group,
                    self.sensors_per_cluster
                )));
            }
        }
        Ok(())
    }

    /// Users wider than one bin `1/N` in uncorrelated-bins mode; such
    /// scenarios break the diagonal bin-correlation assumption.
    pub fn bin_width_violations(&self) -> Vec<usize> {
        if self.bins != BinMode::Uncorrelated {
            return Vec::new();
        }
        let bin = 1.0 / self.period as f64;
        (0..self.users.len()).filter(|&k| self.users[k].width() > bin + 1e-12).collect()
    }
}

/// Hamming-windowed sinc bandpass (complex, single-sided) with unit peak
/// passband gain on a `grid`-point frequency grid. Returns the `grid`-point
/// frequency response of the zero-padded filter, i.e. the transfer function
/// of circular convolution.
pub fn bandpass_response(band: [f64; 2], grid: usize) -> Vec<Complex64> {
    let width = band[1] - band[0];
    if width >= 1.0 {
        return vec![Complex64::new(1.0, 0.0); grid];
    }
    let centre = 0.5 * (band[0] + band[1]);
    let mid = (FIR_TAPS - 1) as f64 / 2.0;
    let mut taps = vec![Complex64::new(0.0, 0.0); grid];
    for (n, tap) in taps.iter_mut().take(FIR_TAPS.min(grid)).enumerate() {
        let x = n as f64 - mid;
        let window = 0.54 - 0.46 * (2.0 * PI * n as f64 / (FIR_TAPS - 1) as f64).cos();
        let sinc = if x == 0.0 { 1.0 } else { (PI * width * x).sin() / (PI * width * x) };
        *tap = Complex64::from_polar(width * sinc * window, 2.0 * PI * centre * x);
    }
    let fft = FftPlanner::new().plan_fft_forward(grid);
    fft.process(&mut taps);
    let spec = UserSpec { band, power_dbm: 0.0, path_loss_db: vec![] };
    let peak = (0..grid)
        .filter(|&k| spec.contains_grid_point(k, grid))
        .map(|k| taps[k].norm())
        .fold(0.0, f64::max);
    let peak = if peak > 0.0 { peak } else { taps.iter().map(|c| c.norm()).fold(0.0, f64::max) };
    for t in &mut taps {
        *t /= peak;
    }
    taps
}

fn complex_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Planned transforms for one grid geometry.
#[derive(Clone)]
pub struct Transforms {
    period: usize,
    blocks: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    coset_forward: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Transforms {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transforms").field("period", &self.period).field("blocks", &self.blocks).finish()
    }
}

impl Transforms {
    pub fn new(period: usize, blocks: usize) -> Self {
        let mut planner = FftPlanner::new();
        let grid = period * blocks;
        Self {
            period,
            blocks,
            forward: planner.plan_fft_forward(grid),
            inverse: planner.plan_fft_inverse(grid),
            coset_forward: planner.plan_fft_forward(blocks),
        }
    }

    pub fn grid_len(&self) -> usize {
        self.period * self.blocks
    }

    /// `X(k/Ñ) = Σ x[n] e^{-j2πkn/Ñ}`.
    pub fn spectrum(&self, samples: &[Complex64]) -> Vec<Complex64> {
        let mut buf = samples.to_vec();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse of [`Transforms::spectrum`].
    pub fn samples(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let mut buf = spectrum.to_vec();
        self.inverse.process(&mut buf);
        let scale = 1.0 / buf.len() as f64;
        for v in &mut buf {
            *v *= scale;
        }
        buf
    }

    /// DTFT of coset `coset` of `samples` on the grid `ϑ_l = l/Ñ`, `l < L`.
    pub fn coset_dtft_of(&self, samples: &[Complex64], coset: usize) -> Vec<Complex64> {
        let coset_samples: Vec<Complex64> =
            (0..self.blocks).map(|l| samples[l * self.period + coset]).collect();
        self.coset_dtft(&coset_samples, coset)
    }

    /// Per-coset DTFT from the `L` samples `x[l' N + coset]`.
    pub fn coset_dtft(&self, coset_samples: &[Complex64], coset: usize) -> Vec<Complex64> {
        let mut buf = coset_samples.to_vec();
        self.coset_forward.process(&mut buf);
        let grid = self.grid_len();
        for (l, v) in buf.iter_mut().enumerate() {
            let phase = -2.0 * PI * ((l * coset) % grid) as f64 / grid as f64;
            *v *= Complex64::from_polar(1.0, phase);
        }
        buf
    }
}

/// `X̄_n(ϑ_l) = Σ_{l'} x[l'N + n] e^{-j2πϑ_l(l'N + n)}` for `ϑ_l = l/(NL)`.
pub fn coset_dtft(coset_samples: &[Complex64], coset: usize, period: usize, blocks: usize) -> Result<Vec<Complex64>> {
    if coset_samples.len() != blocks {
        return Err(Error::LengthMismatch { expected: blocks, actual: coset_samples.len() });
    }
    if coset >= period {
        return Err(Error::InvalidPattern(format!("coset {coset} not below period {period}")));
    }
    Ok(Transforms::new(period, blocks).coset_dtft(coset_samples, coset))
}

/// One user's signal: circular complex white Gaussian noise of variance equal
/// to the in-band power density, circularly filtered by the band's 200-tap
/// bandpass. A `-inf` power gives an all-zero sequence.
pub fn generate_user_signal(spec: &UserSpec, length: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Complex64>> {
    spec.validate()?;
    let transforms = Transforms::new(1, length);
    let response = bandpass_response(spec.band, length);
    let spectrum = filtered_noise_spectrum(&transforms, &response, spec.power(), rng);
    Ok(transforms.samples(&spectrum))
}

fn filtered_noise_spectrum(
    transforms: &Transforms,
    response: &[Complex64],
    power: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Complex64> {
    let white: Vec<Complex64> = (0..transforms.grid_len()).map(|_| complex_gaussian(rng, power)).collect();
    let mut spec = transforms.spectrum(&white);
    for (s, h) in spec.iter_mut().zip(response) {
        *s *= h;
    }
    spec
}

/// What one sensor delivers: per-coset DTFT values and, optionally, the
/// full-rate spectrum for baselines and checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorObservation {
    /// Global sensor index `t`.
    pub index: usize,
    pub cluster: usize,
    /// Group `z` for pattern families (0 otherwise).
    pub group: usize,
    /// `M × L`, coset-major: entry `m L + l` is `X̄_{t, n_m}(ϑ_l)`.
    pub coset_spectra: Vec<Complex64>,
    /// The `Ñ`-point spectrum `X_t(k/Ñ)`, when retained.
    pub full_spectrum: Option<Vec<Complex64>>,
}

/// Observations of a set of sensors sharing one coset pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CosetObservationSet {
    pattern: CosetPattern,
    blocks: usize,
    sensors: Vec<SensorObservation>,
}

impl CosetObservationSet {
    pub fn new(pattern: CosetPattern, blocks: usize, sensors: Vec<SensorObservation>) -> Result<Self> {
        let expected = pattern.len() * blocks;
        for s in &sensors {
            if s.coset_spectra.len() != expected {
                return Err(Error::LengthMismatch { expected, actual: s.coset_spectra.len() });
            }
            if let Some(full) = &s.full_spectrum {
                if full.len() != pattern.period() * blocks {
                    return Err(Error::LengthMismatch { expected: pattern.period() * blocks, actual: full.len() });
                }
            }
        }
        Ok(Self { pattern, blocks, sensors })
    }

    pub fn pattern(&self) -> &CosetPattern {
        &self.pattern
    }

    pub fn period(&self) -> usize {
        self.pattern.period()
    }

    /// Grid points per bin `L`.
    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn grid_len(&self) -> usize {
        self.period() * self.blocks
    }

    pub fn sensors(&self) -> &[SensorObservation] {
        &self.sensors
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    /// `ȳ_t(ϑ_l)`, the `M`-vector of active coset values of sensor `t`.
    pub fn y(&self, sensor: usize, l: usize) -> Vec<Complex64> {
        let s = &self.sensors[sensor];
        (0..self.pattern.len()).map(|m| s.coset_spectra[m * self.blocks + l]).collect()
    }

    /// Restricts every sensor to a sub-pattern of the observed cosets.
    pub fn select(&self, pattern: &CosetPattern) -> Result<Self> {
        if pattern.period() != self.period() {
            return Err(Error::GridMismatch("pattern period differs from observations".into()));
        }
        let rows: Vec<usize> = pattern
            .marks()
            .iter()
            .map(|&c| {
                self.pattern
                    .position(c)
                    .ok_or_else(|| Error::InvalidPattern(format!("coset {c} was not observed")))
            })
            .collect::<Result<_>>()?;
        let l = self.blocks;
        let sensors = self
            .sensors
            .iter()
            .map(|s| SensorObservation {
                coset_spectra: rows.iter().flat_map(|&r| s.coset_spectra[r * l..(r + 1) * l].iter().copied()).collect(),
                ..s.clone()
            })
            .collect();
        Ok(Self { pattern: pattern.clone(), blocks: l, sensors })
    }

    /// Sensors satisfying `keep`.
    pub fn filter(&self, keep: impl Fn(&SensorObservation) -> bool) -> Self {
        Self {
            pattern: self.pattern.clone(),
            blocks: self.blocks,
            sensors: self.sensors.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }

    /// Drops retained full-rate spectra.
    pub fn without_full_rate(mut self) -> Self {
        for s in &mut self.sensors {
            s.full_spectrum = None;
        }
        self
    }
}

/// Observation sets from one run: one per cluster, or one per group for
/// pattern families.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub sets: Vec<CosetObservationSet>,
    /// Users violating the one-bin width limit in uncorrelated-bins mode.
    pub bin_width_violations: Vec<usize>,
}

/// Seeded scenario synthesizer. Streams are keyed by
/// `(seed, run, cluster, sensor, user, role)`.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    config: ScenarioConfig,
    transforms: Transforms,
    responses: Vec<Vec<Complex64>>,
    pattern: Option<CosetPattern>,
    family: Option<PatternFamily>,
}

impl Synthesizer {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid_len();
        let responses = match config.bins {
            BinMode::Uncorrelated => config.users.iter().map(|u| bandpass_response(u.band, grid)).collect(),
            BinMode::Correlated => config
                .users
                .iter()
                .map(|u| {
                    (0..grid)
                        .map(|k| {
                            if u.contains_grid_point(k, grid) {
                                Complex64::new(1.0, 0.0)
                            } else {
                                Complex64::new(0.0, 0.0)
                            }
                        })
                        .collect()
                })
                .collect(),
        };
        Ok(Self {
            config: config.clone(),
            transforms: Transforms::new(config.period, config.blocks),
            responses,
            pattern: config.pattern()?,
            family: config.family()?,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn transforms(&self) -> &Transforms {
        &self.transforms
    }

    fn run_seed(&self, run: u64) -> u64 {
        rng::derive_seed(self.config.seed, &[run])
    }

    /// Spectrum of user `k`'s transmitted signal for the given realization key.
    fn user_spectrum(&self, run_seed: u64, k: usize, key: &[u64]) -> Vec<Complex64> {
        let user = &self.config.users[k];
        let power = user.power();
        let grid = self.transforms.grid_len();
        if power == 0.0 {
            return vec![Complex64::new(0.0, 0.0); grid];
        }
        match self.config.bins {
            BinMode::Uncorrelated => {
                let mut path = key.to_vec();
                path.extend([k as u64, Role::Signal as u64]);
                let mut r = rng::stream(run_seed, &path);
                filtered_noise_spectrum(&self.transforms, &self.responses[k], power, &mut r)
            }
            BinMode::Correlated => {
                let mut path = key.to_vec();
                path.extend([k as u64, Role::Symbol as u64]);
                let symbol = complex_gaussian(&mut rng::stream(run_seed, &path), 1.0);
                // |X|²/Ñ equals the power density in the band
                let amplitude = (grid as f64 * power).sqrt();
                self.responses[k].iter().map(|h| h * symbol * amplitude).collect()
            }
        }
    }

    fn shared_spectra(&self, run_seed: u64) -> Option<Vec<Vec<Complex64>>> {
        match self.config.sync {
            SyncMode::Synchronized => {
                Some((0..self.config.users.len()).map(|k| self.user_spectrum(run_seed, k, &[u64::MAX])).collect())
            }
            SyncMode::Unsynchronized => None,
        }
    }

    fn sensor_samples_with(
        &self,
        run_seed: u64,
        shared: Option<&[Vec<Complex64>]>,
        cluster: usize,
        sensor: usize,
    ) -> Vec<Complex64> {
        let grid = self.transforms.grid_len();
        let key = [cluster as u64, sensor as u64];
        let mut samples = if self.config.users.is_empty() {
            vec![Complex64::new(0.0, 0.0); grid]
        } else {
            let mut total = vec![Complex64::new(0.0, 0.0); grid];
            for (k, user) in self.config.users.iter().enumerate() {
                if user.power() == 0.0 {
                    continue;
                }
                let gain = complex_gaussian(
                    &mut rng::stream(run_seed, &[key[0], key[1], k as u64, Role::Fading as u64]),
                    user.path_gain(cluster),
                );
                let own;
                let spec = match shared {
                    Some(s) => &s[k],
                    None => {
                        own = self.user_spectrum(run_seed, k, &key);
                        &own
                    }
                };
                for (acc, s) in total.iter_mut().zip(spec) {
                    *acc += gain * s;
                }
            }
            self.transforms.samples(&total)
        };
        let sigma2 = self.config.noise_variance();
        if sigma2 > 0.0 {
            let mut r = rng::stream(run_seed, &[key[0], key[1], u64::MAX, Role::Noise as u64]);
            for s in &mut samples {
                *s += complex_gaussian(&mut r, sigma2);
            }
        }
        samples
    }

    /// Time-domain samples `x_t[ñ]` of one sensor in one run.
    pub fn sensor_samples(&self, run: u64, cluster: usize, sensor: usize) -> Vec<Complex64> {
        let seed = self.run_seed(run);
        let shared = self.shared_spectra(seed);
        self.sensor_samples_with(seed, shared.as_deref(), cluster, sensor)
    }

    /// Acquires every sensor with the configured sampling.
    pub fn acquire(&self, run: u64, retain_full: bool) -> Result<Acquisition> {
        match (&self.pattern, &self.family) {
            (Some(p), _) => self.acquire_cosets(run, &p.clone(), retain_full),
            (None, Some(f)) => {
                let all = CosetPattern::full(self.config.period)?;
                let acq = self.acquire_cosets(run, &all, retain_full)?;
                let everyone = &acq.sets[0];
                let sets = f
                    .patterns()
                    .iter()
                    .enumerate()
                    .map(|(z, p)| everyone.filter(|s| s.group == z).select(p))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Acquisition { sets, bin_width_violations: acq.bin_width_violations })
            }
            (None, None) => unreachable!("validated sampling"),
        }
    }

    /// Acquires every sensor on an explicit coset set (e.g. a superset of
    /// several patterns to be compared on the same data). Returns one set per
    /// cluster.
    pub fn acquire_cosets(&self, run: u64, cosets: &CosetPattern, retain_full: bool) -> Result<Acquisition> {
        if cosets.period() != self.config.period {
            return Err(Error::GridMismatch("coset set period differs from scenario".into()));
        }
        let seed = self.run_seed(run);
        let shared = self.shared_spectra(seed);
        let tau = self.config.sensors_per_cluster;
        let groups = match &self.config.sampling {
            Sampling::Family { groups, .. } => groups.len(),
            Sampling::Pattern { .. } => 1,
        };
        let sensors: Vec<SensorObservation> = (0..self.config.total_sensors())
            .into_par_iter()
            .map(|t| {
                let cluster = t / tau;
                let samples = self.sensor_samples_with(seed, shared.as_deref(), cluster, t);
                let coset_spectra =
                    cosets.marks().iter().flat_map(|&n| self.transforms.coset_dtft_of(&samples, n)).collect();
                SensorObservation {
                    index: t,
                    cluster,
                    group: t % groups,
                    coset_spectra,
                    full_spectrum: retain_full.then(|| self.transforms.spectrum(&samples)),
                }
            })
            .collect();
        let blocks = self.config.blocks;
        let all = CosetObservationSet::new(cosets.clone(), blocks, sensors)?;
        let sets = (0..self.config.clusters).map(|d| all.filter(|s| s.cluster == d)).collect();
        Ok(Acquisition { sets, bin_width_violations: self.config.bin_width_violations() })
    }
}

/// One-shot acquisition of run 0 with the configured sampling.
pub fn synthesize_observations(config: &ScenarioConfig, retain_full: bool) -> Result<Acquisition> {
    Synthesizer::new(config)?.acquire(0, retain_full)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn white(period: usize, blocks: usize, noise_dbm: Option<f64>, tau: usize) -> ScenarioConfig {
        ScenarioConfig {
            period,
            blocks,
            users: vec![],
            noise_dbm,
            clusters: 1,
            sensors_per_cluster: tau,
            sync: SyncMode::Unsynchronized,
            bins: BinMode::Uncorrelated,
            sampling: Sampling::Pattern { pattern: (0..period).collect() },
            seed: 11,
        }
    }

    #[test]
    fn coset_dtft_of_zeros_and_impulse() {
        let (n, l) = (6, 8);
        let zeros = coset_dtft(&vec![Complex64::new(0.0, 0.0); l], 2, n, l).unwrap();
        assert!(zeros.iter().all(|v| v.norm() == 0.0));
        let mut impulse = vec![Complex64::new(0.0, 0.0); l];
        impulse[0] = Complex64::new(1.0, 0.0);
        let coset = 4;
        let out = coset_dtft(&impulse, coset, n, l).unwrap();
        for (i, v) in out.iter().enumerate() {
            let theta = i as f64 / (n * l) as f64;
            let want = Complex64::from_polar(1.0, -2.0 * PI * theta * coset as f64);
            assert!((v - want).norm() < 1e-12);
        }
        assert!(matches!(coset_dtft(&impulse[..3], 0, n, l), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn zero_width_band_rejected() {
        let spec = UserSpec { band: [0.2, 0.2], power_dbm: 0.0, path_loss_db: vec![] };
        assert!(generate_user_signal(&spec, 64, &mut rng::stream(1, &[])).is_err());
    }

    #[test]
    fn silent_user_is_all_zero() {
        let spec = UserSpec { band: [0.1, 0.2], power_dbm: f64::NEG_INFINITY, path_loss_db: vec![] };
        let x = generate_user_signal(&spec, 3060, &mut rng::stream(1, &[])).unwrap();
        assert!(x.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn full_band_user_keeps_input_variance() {
        let spec = UserSpec { band: [0.0, 1.0], power_dbm: 0.0, path_loss_db: vec![] };
        let x = generate_user_signal(&spec, 3060, &mut rng::stream(2, &[])).unwrap();
        let var = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn bandpass_user_energy_stays_in_band() {
        let grid = 3060;
        let spec = UserSpec { band: [0.205, 0.245], power_dbm: 0.0, path_loss_db: vec![] };
        let x = generate_user_signal(&spec, grid, &mut rng::stream(3, &[])).unwrap();
        let t = Transforms::new(1, grid);
        let spectrum = t.spectrum(&x);
        let transition = 3.3 / FIR_TAPS as f64;
        let wide = UserSpec { band: [0.205 - transition, 0.245 + transition], ..spec.clone() };
        let total: f64 = spectrum.iter().map(|v| v.norm_sqr()).sum();
        let inside: f64 =
            (0..grid).filter(|&k| wide.contains_grid_point(k, grid)).map(|k| spectrum[k].norm_sqr()).sum();
        assert!(inside / total >= 0.95, "fraction {}", inside / total);
    }

    #[test]
    fn passband_gain_is_unit_peak() {
        let grid = 3060;
        let h = bandpass_response([0.055, 0.095], grid);
        let spec = UserSpec { band: [0.055, 0.095], power_dbm: 0.0, path_loss_db: vec![] };
        let peak = (0..grid).filter(|&k| spec.contains_grid_point(k, grid)).map(|k| h[k].norm()).fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-12);
        // mid-band gain is flat to within a fraction of a dB
        let mid = (0.075 * grid as f64) as usize;
        assert!((h[mid].norm() - 1.0).abs() < 0.02);
    }

    #[test]
    fn wrapped_band_membership() {
        let u = UserSpec { band: [-0.345, -0.305], power_dbm: 0.0, path_loss_db: vec![] };
        assert!(u.contains_grid_point(2000, 3000)); // 0.6667
        assert!(!u.contains_grid_point(1000, 3000));
    }

    #[test]
    fn noise_only_sample_variance() {
        let cfg = white(18, 170, Some(7.0), 100);
        let synth = Synthesizer::new(&cfg).unwrap();
        let sigma2 = cfg.noise_variance();
        let mut acc = 0.0;
        for t in 0..100 {
            let x = synth.sensor_samples(0, 0, t);
            acc += x.iter().map(|v| v.norm_sqr()).sum::<f64>();
        }
        let var = acc / (100.0 * 3060.0);
        assert!((var / sigma2 - 1.0).abs() < 0.03, "{var} vs {sigma2}");
    }

    #[test]
    fn synchronized_sensors_share_user_signal() {
        let mut cfg = white(4, 16, None, 2);
        cfg.users = vec![UserSpec { band: [0.1, 0.2], power_dbm: 10.0, path_loss_db: vec![0.0] }];
        cfg.sync = SyncMode::Synchronized;
        let synth = Synthesizer::new(&cfg).unwrap();
        let a = synth.sensor_samples(0, 0, 0);
        let b = synth.sensor_samples(0, 0, 1);
        // identical up to the (different) flat fading gains
        let ratio = a[3] / b[3];
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y * ratio).norm() < 1e-9 * x.norm().max(1.0));
        }
        cfg.sync = SyncMode::Unsynchronized;
        let synth = Synthesizer::new(&cfg).unwrap();
        let a = synth.sensor_samples(0, 0, 0);
        let b = synth.sensor_samples(0, 0, 1);
        let ratio = a[3] / b[3];
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y * ratio).norm() > 1e-6));
    }

    #[test]
    fn acquisition_is_reproducible_and_order_independent() {
        let mut cfg = white(6, 10, Some(0.0), 4);
        cfg.clusters = 2;
        cfg.sampling = Sampling::Pattern { pattern: vec![0, 1, 3] };
        let synth = Synthesizer::new(&cfg).unwrap();
        let a = synth.acquire(5, true).unwrap();
        let b = synth.acquire(5, true).unwrap();
        assert_eq!(a.sets, b.sets);
        assert_eq!(a.sets.len(), 2);
        assert_eq!(a.sets[1].sensors()[0].index, 4);
        let direct = synth.sensor_samples(5, 1, 5);
        let t = synth.transforms();
        assert_eq!(a.sets[1].sensors()[1].full_spectrum.as_ref().unwrap(), &t.spectrum(&direct));
    }

    #[test]
    fn select_restricts_cosets() {
        let cfg = white(6, 10, Some(0.0), 3);
        let synth = Synthesizer::new(&cfg).unwrap();
        let all = synth.acquire(0, false).unwrap().sets.remove(0);
        let sub = all.select(&CosetPattern::new(6, vec![1, 4]).unwrap()).unwrap();
        assert_eq!(sub.y(2, 7), vec![all.y(2, 7)[1], all.y(2, 7)[4]]);
        let narrow = sub.select(&CosetPattern::new(6, vec![1]).unwrap()).unwrap();
        assert_eq!(narrow.pattern().marks(), &[1]);
        assert!(sub.select(&CosetPattern::new(6, vec![2]).unwrap()).is_err());
    }

    #[test]
    fn scenario_validation() {
        let mut cfg = white(18, 10, None, 2);
        cfg.users = vec![UserSpec { band: [0.1, 0.2], power_dbm: 0.0, path_loss_db: vec![] }];
        assert_eq!(cfg.bin_width_violations(), vec![0]);
        cfg.sensors_per_cluster = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = white(5, 10, None, 8);
        cfg.sampling = Sampling::Family { groups: vec![vec![0, 1, 2], vec![2, 3, 4]], sensors_per_group: 3 };
        assert!(cfg.validate().is_err());
    }
}
