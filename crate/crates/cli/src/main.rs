use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cosetap::analysis::inverse_gamma_sum;
use cosetap::sensing::SyncMode;
use cosetap::sysmat::build_system_matrix;
use cosetap::CosetPattern;
use cosetap_cli::experiments::{describe_family, describe_ruler};
use cosetap_cli::manifest::{BenchOptions, DetectorOptions, ReconstructOptions, SweepAxes};
use cosetap_cli::{run, CliError, CliResult, ExperimentKind, ExperimentManifest};

#[derive(Parser)]
#[command(name = "cosetap", version, about = "Compressive averaged periodogram experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimal circular sparse ruler for a period.
    DesignRuler {
        #[arg(long)]
        period: usize,
        /// Plain enumeration instead of branch and bound.
        #[arg(long)]
        exhaustive: bool,
    },
    /// Pattern family covering every coset pair.
    DesignFamily {
        #[arg(long)]
        period: usize,
        #[arg(long)]
        marks: usize,
    },
    /// Lag multiplicities and identifiability of a pattern.
    InspectPattern {
        #[arg(long)]
        period: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        marks: Vec<usize>,
    },
    /// Single-scenario reconstruction: cap.csv, nap.csv, summary.json.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        /// Skip the full-rate baseline.
        #[arg(long)]
        no_full_rate: bool,
        /// Also reconstruct a family scenario with this single pattern.
        #[arg(long, value_delimiter = ',')]
        ub_pattern: Option<Vec<usize>>,
    },
    /// NMSE against the Nyquist-rate baseline over τ, rate and noise.
    NmseSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Detection ROC of block-averaged CAP energy.
    Roc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        sweep: SweepArgs,
        /// Synchronization modes to compare.
        #[arg(long, value_delimiter = ',')]
        sync: Option<Vec<String>>,
        #[arg(long)]
        avg_width: Option<usize>,
        #[arg(long)]
        per_band: Option<usize>,
        /// Quiet band as `lo,hi` in normalized frequency.
        #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true)]
        quiet_band: Option<Vec<f64>>,
        #[arg(long)]
        quiet_points: Option<usize>,
    },
    /// White-noise Monte Carlo against the closed-form variance.
    VarianceCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Stage timings of the reconstruction pipeline.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        tau: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        periods: Option<Vec<usize>>,
        #[arg(long)]
        repeats: Option<usize>,
    },
}

/// Flags shared by experiment subcommands; each overrides the manifest key
/// of the same name.
#[derive(Args)]
struct Common {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    noise_dbm: Option<Vec<f64>>,
    /// Comma-separated marks; repeat for several patterns.
    #[arg(long = "pattern", value_parser = parse_marks)]
    patterns: Option<Vec<Vec<usize>>>,
}

fn parse_marks(text: &str) -> Result<Vec<usize>, String> {
    text.split(',').map(|m| m.trim().parse::<usize>().map_err(|e| format!("{m:?}: {e}"))).collect()
}

impl Common {
    fn manifest(self, kind: ExperimentKind) -> CliResult<ExperimentManifest> {
        let mut m = match &self.manifest {
            Some(path) => {
                let m = ExperimentManifest::load(path)?;
                if m.kind != kind {
                    return Err(CliError::Config(format!("manifest kind is {}, not {kind}", m.kind)));
                }
                m
            }
            None => {
                let output =
                    self.output.clone().ok_or_else(|| CliError::Config("--output or --manifest is required".into()))?;
                ExperimentManifest::new(kind, output)
            }
        };
        if let Some(s) = self.scenario {
            m.scenario = Some(s);
        }
        if let Some(o) = self.output {
            m.output = o;
        }
        if let Some(r) = self.runs {
            m.runs = r;
        }
        if self.threads.is_some() {
            m.threads = self.threads;
        }
        Ok(m)
    }
}

impl SweepArgs {
    fn apply(self, m: &mut ExperimentManifest) {
        if self.tau.is_none() && self.noise_dbm.is_none() && self.patterns.is_none() {
            return;
        }
        let axes = m.sweep.get_or_insert_with(SweepAxes::default);
        if self.tau.is_some() {
            axes.tau = self.tau;
        }
        if self.noise_dbm.is_some() {
            axes.noise_dbm = self.noise_dbm;
        }
        if self.patterns.is_some() {
            axes.patterns = self.patterns;
        }
    }
}

fn parse_sync(name: &str) -> CliResult<SyncMode> {
    match name {
        "synchronized" => Ok(SyncMode::Synchronized),
        "unsynchronized" => Ok(SyncMode::Unsynchronized),
        other => Err(CliError::Config(format!("unknown sync mode {other:?}"))),
    }
}

fn inspect(period: usize, marks: Vec<usize>) -> CliResult<String> {
    let pattern = CosetPattern::new(period, marks)?;
    let system = build_system_matrix(&pattern);
    let gamma: Vec<String> = system.gamma().iter().map(usize::to_string).collect();
    let missing: Vec<String> = system.missing_lags().iter().map(usize::to_string).collect();
    Ok(format!(
        "pattern={pattern}\nperiod={period}\nmarks={}\nrate={}\ngamma={}\nidentifiable={}\nmissing_lags={}\ninverse_gamma_sum={}\n",
        pattern.len(),
        pattern.rate(),
        gamma.join(","),
        system.is_identifiable(),
        missing.join(","),
        if system.is_identifiable() { inverse_gamma_sum(&pattern) } else { f64::INFINITY },
    ))
}

fn experiment(m: ExperimentManifest) -> CliResult<String> {
    let out = run(&m)?;
    Ok(out.files.iter().map(|f| format!("wrote {}\n", f.display())).collect())
}

fn execute(command: Command) -> CliResult<String> {
    match command {
        Command::DesignRuler { period, exhaustive } => describe_ruler(period, exhaustive),
        Command::DesignFamily { period, marks } => describe_family(period, marks),
        Command::InspectPattern { period, marks } => inspect(period, marks),
        Command::Reconstruct { common, seed, no_full_rate, ub_pattern } => {
            let mut m = common.manifest(ExperimentKind::Reconstruct)?;
            m.seed = Some(seed);
            let opts = m.reconstruct.get_or_insert_with(ReconstructOptions::default);
            if no_full_rate {
                opts.retain_full = false;
            }
            if ub_pattern.is_some() {
                opts.ub_pattern = ub_pattern;
            }
            experiment(m)
        }
        Command::NmseSweep { common, seed, sweep } => {
            let mut m = common.manifest(ExperimentKind::NmseSweep)?;
            m.seed = Some(seed);
            sweep.apply(&mut m);
            experiment(m)
        }
        Command::Roc { common, seed, sweep, sync, avg_width, per_band, quiet_band, quiet_points } => {
            let mut m = common.manifest(ExperimentKind::Roc)?;
            m.seed = Some(seed);
            sweep.apply(&mut m);
            if let Some(names) = sync {
                let modes = names.iter().map(|s| parse_sync(s)).collect::<CliResult<Vec<_>>>()?;
                m.sweep.get_or_insert_with(SweepAxes::default).sync = Some(modes);
            }
            if m.detector.is_none() {
                let band = quiet_band
                    .as_deref()
                    .ok_or_else(|| CliError::Config("--quiet-band or a [detector] section is required".into()))?;
                m.detector = Some(DetectorOptions {
                    avg_width: 11,
                    per_band: 121,
                    active_bands: None,
                    quiet_band: [band[0], band[1]],
                    quiet_points: 363,
                });
            }
            let d = m.detector.as_mut().expect("set above");
            if let Some(band) = quiet_band {
                d.quiet_band = [band[0], band[1]];
            }
            if let Some(w) = avg_width {
                d.avg_width = w;
            }
            if let Some(p) = per_band {
                d.per_band = p;
            }
            if let Some(q) = quiet_points {
                d.quiet_points = q;
            }
            experiment(m)
        }
        Command::VarianceCheck { common, seed, sweep } => {
            let mut m = common.manifest(ExperimentKind::VarianceCheck)?;
            m.seed = Some(seed);
            sweep.apply(&mut m);
            experiment(m)
        }
        Command::Bench { common, seed, tau, periods, repeats } => {
            let mut m = common.manifest(ExperimentKind::Bench)?;
            if seed.is_some() {
                m.seed = seed;
            }
            let b = m.bench.get_or_insert_with(BenchOptions::default);
            if let Some(t) = tau {
                b.tau = t;
            }
            if let Some(p) = periods {
                b.periods = p;
            }
            if let Some(r) = repeats {
                b.repeats = r;
            }
            experiment(m)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
