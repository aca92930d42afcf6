//! Experiment manifests: a TOML file naming the scenario, the experiment kind,
//! sweep axes and where to write results. Relative paths are resolved against
//! the manifest's directory.

use std::fmt;
use std::path::{Path, PathBuf};

use cosetap::sensing::SyncMode;
use cosetap::{CosetPattern, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Reconstruct,
    NmseSweep,
    Roc,
    VarianceCheck,
    Design,
    Bench,
}

impl ExperimentKind {
    /// Kinds whose output depends on random draws.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Self::Reconstruct | Self::NmseSweep | Self::Roc | Self::VarianceCheck)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Reconstruct => "reconstruct",
            Self::NmseSweep => "nmse-sweep",
            Self::Roc => "roc",
            Self::VarianceCheck => "variance-check",
            Self::Design => "design",
            Self::Bench => "bench",
        })
    }
}

/// Values swept by `nmse-sweep`, `roc` and `variance-check`. Absent axes fall
/// back to the scenario's own setting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub tau: Option<Vec<usize>>,
    pub noise_dbm: Option<Vec<f64>>,
    /// Coset patterns, one per compression rate.
    pub patterns: Option<Vec<Vec<usize>>>,
    /// Only used by `roc`.
    pub sync: Option<Vec<SyncMode>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructOptions {
    /// Keep full-rate spectra and emit the Nyquist-rate baseline.
    #[serde(default = "yes")]
    pub retain_full: bool,
    /// For family scenarios: also run the uncorrelated-bins estimator with
    /// this single pattern on the same signals.
    pub ub_pattern: Option<Vec<usize>>,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self { retain_full: true, ub_pattern: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorOptions {
    #[serde(default = "default_avg_width")]
    pub avg_width: usize,
    /// Consecutive grid points tested in each occupied band.
    #[serde(default = "default_per_band")]
    pub per_band: usize,
    /// Occupied bands; defaults to the scenario's user bands.
    pub active_bands: Option<Vec<[f64; 2]>>,
    pub quiet_band: [f64; 2],
    #[serde(default = "default_quiet_points")]
    pub quiet_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignOptions {
    pub period: usize,
    /// Marks per pattern; requests a pair-covering family when present.
    pub marks: Option<usize>,
    #[serde(default)]
    pub exhaustive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchOptions {
    /// Sensor counts for the covariance stage.
    #[serde(default = "default_bench_tau")]
    pub tau: Vec<usize>,
    /// Periods for the reconstruction stage.
    #[serde(default = "default_bench_periods")]
    pub periods: Vec<usize>,
    #[serde(default = "default_bench_blocks")]
    pub blocks: usize,
    #[serde(default = "default_bench_repeats")]
    pub repeats: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            tau: default_bench_tau(),
            periods: default_bench_periods(),
            blocks: default_bench_blocks(),
            repeats: default_bench_repeats(),
        }
    }
}

fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn default_avg_width() -> usize {
    11
}
fn default_per_band() -> usize {
    121
}
fn default_quiet_points() -> usize {
    363
}
fn default_bench_tau() -> Vec<usize> {
    vec![100, 200]
}
fn default_bench_periods() -> Vec<usize> {
    vec![18, 36]
}
fn default_bench_blocks() -> usize {
    170
}
fn default_bench_repeats() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub kind: ExperimentKind,
    /// Scenario TOML; required by every kind except `design` and `bench`.
    pub scenario: Option<PathBuf>,
    /// Output directory, created if missing.
    pub output: PathBuf,
    /// Replaces the scenario seed; required for stochastic kinds.
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub runs: usize,
    /// Worker threads; the global pool when absent.
    pub threads: Option<usize>,
    pub sweep: Option<SweepAxes>,
    pub reconstruct: Option<ReconstructOptions>,
    pub detector: Option<DetectorOptions>,
    pub design: Option<DesignOptions>,
    pub bench: Option<BenchOptions>,
}

impl ExperimentManifest {
    /// A manifest with every optional section empty.
    pub fn new(kind: ExperimentKind, output: impl Into<PathBuf>) -> Self {
        Self {
            kind,
            scenario: None,
            output: output.into(),
            seed: None,
            runs: 1,
            threads: None,
            sweep: None,
            reconstruct: None,
            detector: None,
            design: None,
            bench: None,
        }
    }

    /// Parses manifest text, resolving relative paths against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> CliResult<Self> {
        let mut m: Self = toml::from_str(text).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
        if let Some(s) = &m.scenario {
            m.scenario = Some(base.join(s));
        }
        m.output = base.join(&m.output);
        Ok(m)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.runs == 0 {
            return Err(CliError::Config("runs must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be positive".into()));
        }
        if self.kind.is_stochastic() {
            if self.seed.is_none() {
                return Err(CliError::Config(format!("a seed is required for {}", self.kind)));
            }
            if self.scenario.is_none() {
                return Err(CliError::Config(format!("a scenario file is required for {}", self.kind)));
            }
        }
        if let Some(sweep) = &self.sweep {
            let empty = [
                ("tau", sweep.tau.as_ref().map(Vec::len)),
                ("noise_dbm", sweep.noise_dbm.as_ref().map(Vec::len)),
                ("patterns", sweep.patterns.as_ref().map(Vec::len)),
                ("sync", sweep.sync.as_ref().map(Vec::len)),
            ];
            if let Some((axis, _)) = empty.iter().find(|(_, n)| *n == Some(0)) {
                return Err(CliError::Config(format!("sweep axis {axis} is empty")));
            }
            if sweep.sync.is_some() && self.kind != ExperimentKind::Roc {
                return Err(CliError::Config("the sync axis is only swept by roc".into()));
            }
        }
        match self.kind {
            ExperimentKind::NmseSweep if self.sweep.is_none() => {
                Err(CliError::Config("nmse-sweep needs a [sweep] section".into()))
            }
            ExperimentKind::NmseSweep if self.runs < 2 => {
                Err(CliError::Config("nmse-sweep needs at least two runs".into()))
            }
            ExperimentKind::VarianceCheck if self.runs < 2 => {
                Err(CliError::Config("variance-check needs at least two runs".into()))
            }
            ExperimentKind::Roc if self.detector.is_none() => {
                Err(CliError::Config("roc needs a [detector] section".into()))
            }
            ExperimentKind::Design if self.design.is_none() => {
                Err(CliError::Config("design needs a [design] section".into()))
            }
            ExperimentKind::Bench => {
                let b = self.bench.clone().unwrap_or_default();
                if b.tau.is_empty() || b.periods.is_empty() {
                    Err(CliError::Config("bench sweep is empty".into()))
                } else if b.repeats == 0 || b.blocks == 0 {
                    Err(CliError::Config("bench repeats and blocks must be positive".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Loads the scenario with the manifest seed applied.
    pub fn scenario_config(&self) -> CliResult<ScenarioConfig> {
        let path = self.scenario.as_ref().ok_or_else(|| CliError::Config("no scenario file given".into()))?;
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = ScenarioConfig::from_toml_str(&text)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    pub fn sweep_axes(&self) -> SweepAxes {
        self.sweep.clone().unwrap_or_default()
    }

    /// Sweep patterns, or the scenario's own pattern.
    pub fn sweep_patterns(&self, cfg: &ScenarioConfig) -> CliResult<Vec<CosetPattern>> {
        match &self.sweep_axes().patterns {
            Some(list) => Ok(list
                .iter()
                .map(|p| CosetPattern::new(cfg.period, p.clone()))
                .collect::<cosetap::Result<Vec<_>>>()?),
            None => match cfg.pattern()? {
                Some(p) => Ok(vec![p]),
                None => Err(CliError::Config(format!("{} needs a single-pattern scenario or sweep patterns", self.kind))),
            },
        }
    }
}
