//! Experiment runners. Each reads a validated manifest, computes everything in
//! memory and then writes its files from a single thread.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use cosetap::analysis::{
    nmse, nmse_sweep, nyquist_ap_clusters, roc_harness, white_noise_monte_carlo, DetectorConfig, NmseSweep,
    WhiteNoiseExperiment,
};
use cosetap::estimator::{assemble_cap, estimate_correlated_bins, estimate_multicluster, ls_reconstruct, sample_covariance};
use cosetap::ruler::{
    construct_ruler, design_pair_cover_family, exhaustive_minimal_ruler, is_circular_sparse_ruler,
    minimal_circular_sparse_ruler, verify_pair_coverage,
};
use cosetap::sensing::{Sampling, ScenarioConfig, SyncMode, Synthesizer};
use cosetap::sysmat::{build_psi, build_system_matrix, PsiMatrix, SystemMatrix};
use cosetap::{CosetPattern, EstimatorKind, Periodogram};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::{ExperimentKind, ExperimentManifest};
use crate::output::{write_csv, write_json, write_text};

/// Files written by one experiment, in write order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outputs {
    pub files: Vec<PathBuf>,
}

/// Validates the manifest and runs it, inside a dedicated pool when a thread
/// count is given.
pub fn run(manifest: &ExperimentManifest) -> CliResult<Outputs> {
    manifest.validate()?;
    match manifest.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(|| dispatch(manifest)),
        None => dispatch(manifest),
    }
}

fn dispatch(m: &ExperimentManifest) -> CliResult<Outputs> {
    match m.kind {
        ExperimentKind::Reconstruct => run_reconstruct(m),
        ExperimentKind::NmseSweep => run_nmse_sweep(m),
        ExperimentKind::Roc => run_roc(m),
        ExperimentKind::VarianceCheck => run_variance_check(m),
        ExperimentKind::Design => run_design(m),
        ExperimentKind::Bench => run_bench(m),
    }
}

#[derive(Serialize)]
struct PeriodogramRow {
    theta: f64,
    value: f64,
    estimator: EstimatorKind,
    run_id: u64,
}

fn periodogram_rows(estimates: &[(u64, &Periodogram)]) -> Vec<PeriodogramRow> {
    let mut rows = Vec::new();
    for &(run_id, p) in estimates {
        rows.extend(p.values.iter().enumerate().map(|(k, &value)| PeriodogramRow {
            theta: p.theta(k),
            value,
            estimator: p.kind,
            run_id,
        }));
    }
    rows
}

/// NMSE, or `None` when the reference is identically zero.
fn optional_nmse(estimate: &Periodogram, reference: &Periodogram) -> CliResult<Option<f64>> {
    match nmse(estimate, reference) {
        Ok(v) => Ok(Some(v)),
        Err(cosetap::Error::ZeroReference) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

enum Reconstructor {
    Ub(SystemMatrix),
    Cb(PsiMatrix),
}

impl Reconstructor {
    fn for_scenario(cfg: &ScenarioConfig) -> CliResult<Self> {
        if let Some(p) = cfg.pattern()? {
            let system = build_system_matrix(&p);
            system.require_identifiable()?;
            return Ok(Self::Ub(system));
        }
        let family = cfg.family()?.ok_or_else(|| CliError::Config("scenario has no sampling".into()))?;
        let psi = build_psi(&family);
        psi.require_identifiable()?;
        Ok(Self::Cb(psi))
    }

    fn estimate(&self, sets: &[cosetap::CosetObservationSet]) -> cosetap::Result<Periodogram> {
        match self {
            Self::Ub(system) => Ok(estimate_multicluster(sets, system)?.average),
            Self::Cb(psi) => estimate_correlated_bins(sets, psi),
        }
    }
}

struct RunEstimates {
    cap: Periodogram,
    nap: Option<Periodogram>,
    ub: Option<Periodogram>,
}

#[derive(Serialize)]
struct RunSummary {
    run_id: u64,
    estimator: EstimatorKind,
    nmse: Option<f64>,
    negative_count: usize,
    imag_residue: f64,
    ub_nmse: Option<f64>,
    ub_negative_count: Option<usize>,
}

#[derive(Serialize)]
struct ReconstructSummary {
    kind: ExperimentKind,
    seed: u64,
    period: usize,
    blocks: usize,
    grid_len: usize,
    clusters: usize,
    sensors_per_cluster: usize,
    sampling: String,
    ub_pattern: Option<String>,
    retain_full: bool,
    bin_width_violations: Vec<usize>,
    runs: Vec<RunSummary>,
}

pub fn run_reconstruct(m: &ExperimentManifest) -> CliResult<Outputs> {
    let cfg = m.scenario_config()?;
    let opts = m.reconstruct.clone().unwrap_or_default();
    let reconstructor = Reconstructor::for_scenario(&cfg)?;
    let ub = match &opts.ub_pattern {
        Some(marks) => {
            let p = CosetPattern::new(cfg.period, marks.clone())?;
            let system = build_system_matrix(&p);
            system.require_identifiable()?;
            Some((p, system))
        }
        None => None,
    };
    let synth = Synthesizer::new(&cfg)?;
    let results: Vec<RunEstimates> = (0..m.runs as u64)
        .into_par_iter()
        .map(|run| {
            let acq = synth.acquire(run, opts.retain_full)?;
            let nap = if opts.retain_full { Some(nyquist_ap_clusters(&acq.sets)?) } else { None };
            let sets: Vec<_> = acq.sets.into_iter().map(|s| s.without_full_rate()).collect();
            let cap = reconstructor.estimate(&sets)?;
            let ub = match &ub {
                Some((p, system)) => {
                    let acq = synth.acquire_cosets(run, p, false)?;
                    Some(estimate_multicluster(&acq.sets, system)?.average)
                }
                None => None,
            };
            Ok(RunEstimates { cap, nap, ub })
        })
        .collect::<cosetap::Result<_>>()?;

    let mut runs = Vec::with_capacity(results.len());
    for (run_id, r) in (0u64..).zip(&results) {
        let (nmse, ub_nmse) = match &r.nap {
            Some(nap) => (
                optional_nmse(&r.cap, nap)?,
                r.ub.as_ref().map(|u| optional_nmse(u, nap)).transpose()?.flatten(),
            ),
            None => (None, None),
        };
        runs.push(RunSummary {
            run_id,
            estimator: r.cap.kind,
            nmse,
            negative_count: r.cap.negative_count(),
            imag_residue: r.cap.imag_residue,
            ub_nmse,
            ub_negative_count: r.ub.as_ref().map(Periodogram::negative_count),
        });
    }
    let summary = ReconstructSummary {
        kind: m.kind,
        seed: cfg.seed,
        period: cfg.period,
        blocks: cfg.blocks,
        grid_len: cfg.grid_len(),
        clusters: cfg.clusters,
        sensors_per_cluster: cfg.sensors_per_cluster,
        sampling: results[0].cap.sampling.clone(),
        ub_pattern: ub.as_ref().map(|(p, _)| p.to_string()),
        retain_full: opts.retain_full,
        bin_width_violations: cfg.bin_width_violations(),
        runs,
    };

    let tagged = |f: fn(&RunEstimates) -> Option<&Periodogram>| -> Vec<(u64, &Periodogram)> {
        (0u64..).zip(&results).filter_map(|(i, r)| f(r).map(|p| (i, p))).collect()
    };
    let mut files = vec![write_csv(&m.output, "cap.csv", &periodogram_rows(&tagged(|r| Some(&r.cap))))?];
    if opts.retain_full {
        files.push(write_csv(&m.output, "nap.csv", &periodogram_rows(&tagged(|r| r.nap.as_ref())))?);
    }
    if ub.is_some() {
        files.push(write_csv(&m.output, "cap_ub.csv", &periodogram_rows(&tagged(|r| r.ub.as_ref())))?);
    }
    files.push(write_json(&m.output, "summary.json", &summary)?);
    Ok(Outputs { files })
}

#[derive(Serialize)]
struct NmseCsvRow {
    tau: usize,
    rate: f64,
    sigma2: f64,
    nmse: f64,
    nmse_se: f64,
    pattern: String,
}

pub fn run_nmse_sweep(m: &ExperimentManifest) -> CliResult<Outputs> {
    let cfg = m.scenario_config()?;
    let axes = m.sweep_axes();
    let sweep = NmseSweep {
        patterns: m.sweep_patterns(&cfg)?,
        taus: axes.tau.unwrap_or_else(|| vec![cfg.sensors_per_cluster]),
        noise_dbm: match axes.noise_dbm {
            Some(v) => v,
            None => vec![cfg.noise_dbm.ok_or_else(|| CliError::Config("no noise level to sweep".into()))?],
        },
        runs: m.runs,
        scenario: cfg,
    };
    let rows: Vec<NmseCsvRow> = nmse_sweep(&sweep)?
        .into_iter()
        .map(|r| NmseCsvRow {
            tau: r.tau,
            rate: r.rate,
            sigma2: r.sigma2_dbm,
            nmse: r.nmse,
            nmse_se: r.nmse_se,
            pattern: r.pattern,
        })
        .collect();
    Ok(Outputs { files: vec![write_csv(&m.output, "nmse.csv", &rows)?] })
}

#[derive(Serialize)]
struct RocCsvRow {
    threshold: f64,
    pfa: f64,
    pd: f64,
    tau: usize,
    sigma2: Option<f64>,
    sync: SyncMode,
}

#[derive(Serialize)]
struct RocSummary {
    tau: usize,
    sigma2: Option<f64>,
    sync: SyncMode,
    auc: f64,
    runs: usize,
    avg_width: usize,
    active_points: usize,
    quiet_points: usize,
}

pub fn run_roc(m: &ExperimentManifest) -> CliResult<Outputs> {
    let cfg = m.scenario_config()?;
    let opts = m.detector.clone().ok_or_else(|| CliError::Config("roc needs a [detector] section".into()))?;
    let bands = opts.active_bands.clone().unwrap_or_else(|| cfg.users.iter().map(|u| u.band).collect());
    if bands.is_empty() {
        return Err(CliError::Config("no occupied bands to test".into()));
    }
    let detector =
        DetectorConfig::centered(cfg.grid_len(), &bands, opts.per_band, opts.quiet_band, opts.quiet_points, opts.avg_width)?;
    let axes = m.sweep_axes();
    let noises: Vec<Option<f64>> = match axes.noise_dbm {
        Some(v) => v.into_iter().map(Some).collect(),
        None => vec![cfg.noise_dbm],
    };
    let taus = axes.tau.unwrap_or_else(|| vec![cfg.sensors_per_cluster]);
    let syncs = axes.sync.unwrap_or_else(|| vec![cfg.sync]);

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for &sync in &syncs {
        for &noise in &noises {
            for &tau in &taus {
                let mut c = cfg.clone();
                c.sync = sync;
                c.noise_dbm = noise;
                c.sensors_per_cluster = tau;
                let roc = roc_harness(&c, &detector, m.runs)?;
                rows.extend(roc.thresholds.iter().zip(&roc.pfa).zip(&roc.pd).map(|((&threshold, &pfa), &pd)| {
                    RocCsvRow { threshold, pfa, pd, tau, sigma2: noise, sync }
                }));
                curves.push(RocSummary {
                    tau,
                    sigma2: noise,
                    sync,
                    auc: roc.auc,
                    runs: roc.runs,
                    avg_width: roc.avg_width,
                    active_points: roc.active_points,
                    quiet_points: roc.quiet_points,
                });
            }
        }
    }
    Ok(Outputs {
        files: vec![write_csv(&m.output, "roc.csv", &rows)?, write_json(&m.output, "summary.json", &curves)?],
    })
}

#[derive(Serialize)]
struct VarianceRow {
    pattern: String,
    rate: f64,
    tau: usize,
    runs: usize,
    inverse_gamma_sum: f64,
    analytical_nmse: f64,
    empirical_nmse: f64,
    relative_gap: f64,
    analytical_variance: f64,
    pooled_variance: f64,
    pooled_variance_se: f64,
    variance_coverage: f64,
    mean_coverage: f64,
}

#[derive(Serialize)]
struct VarianceBinRow {
    theta: f64,
    analytical: f64,
    empirical: f64,
    empirical_se: f64,
    mean: f64,
    pattern: String,
    tau: usize,
}

/// Rejects anything but circular white Gaussian noise observed by one
/// cluster through a single pattern.
fn require_white(cfg: &ScenarioConfig) -> CliResult<()> {
    if !cfg.users.is_empty() || cfg.noise_dbm.is_none() {
        return Err(CliError::Config("variance-check needs a white-noise-only scenario".into()));
    }
    if cfg.clusters != 1 || !matches!(cfg.sampling, Sampling::Pattern { .. }) {
        return Err(CliError::Config("variance-check needs one cluster and a single pattern".into()));
    }
    Ok(())
}

pub fn run_variance_check(m: &ExperimentManifest) -> CliResult<Outputs> {
    let cfg = m.scenario_config()?;
    require_white(&cfg)?;
    let axes = m.sweep_axes();
    if axes.noise_dbm.is_some() {
        return Err(CliError::Config("variance-check takes its noise level from the scenario".into()));
    }
    let patterns = m.sweep_patterns(&cfg)?;
    let taus = axes.tau.unwrap_or_else(|| vec![cfg.sensors_per_cluster]);
    let mut rows = Vec::new();
    let mut bins = Vec::new();
    for pattern in &patterns {
        for &tau in &taus {
            let exp = WhiteNoiseExperiment {
                pattern: pattern.clone(),
                blocks: cfg.blocks,
                noise_dbm: cfg.noise_dbm.expect("checked white"),
                tau,
                runs: m.runs,
                seed: cfg.seed,
            };
            let rep = white_noise_monte_carlo(&exp)?;
            let (pv, pv_se) = rep.pooled_variance();
            let label = pattern.to_string();
            rows.push(VarianceRow {
                pattern: label.clone(),
                rate: pattern.rate(),
                tau,
                runs: rep.runs,
                inverse_gamma_sum: cosetap::analysis::inverse_gamma_sum(pattern),
                analytical_nmse: rep.nmse_analytical,
                empirical_nmse: rep.nmse_empirical,
                relative_gap: (rep.nmse_empirical - rep.nmse_analytical).abs() / rep.nmse_analytical,
                analytical_variance: rep.analytical,
                pooled_variance: pv,
                pooled_variance_se: pv_se,
                variance_coverage: rep.variance_coverage(3.0),
                mean_coverage: rep.mean_coverage(3.0),
            });
            bins.extend((0..rep.grid_len()).map(|k| VarianceBinRow {
                theta: rep.theta(k),
                analytical: rep.analytical,
                empirical: rep.variance[k],
                empirical_se: rep.variance_se[k],
                mean: rep.mean[k],
                pattern: label.clone(),
                tau,
            }));
        }
    }
    Ok(Outputs {
        files: vec![write_csv(&m.output, "variance.csv", &rows)?, write_csv(&m.output, "variance_bins.csv", &bins)?],
    })
}

/// Lines describing a ruler: marks, cardinality and verification status.
pub fn describe_ruler(period: usize, exhaustive: bool) -> CliResult<String> {
    let (pattern, minimal) = if exhaustive {
        (exhaustive_minimal_ruler(period)?, true)
    } else {
        let d = minimal_circular_sparse_ruler(period)?;
        (d.pattern, d.minimal)
    };
    Ok(format!(
        "{} cardinality={} verified={} minimal={}\n",
        pattern,
        pattern.len(),
        is_circular_sparse_ruler(&pattern),
        minimal
    ))
}

/// Lines describing a pair-covering family, one per pattern plus a status line.
pub fn describe_family(period: usize, marks: usize) -> CliResult<String> {
    let family = design_pair_cover_family(period, marks)?;
    let mut out = String::new();
    for p in family.patterns() {
        out.push_str(&format!("{} cardinality={}\n", p, p.len()));
    }
    out.push_str(&format!("patterns={} verified={}\n", family.len(), verify_pair_coverage(&family)));
    Ok(out)
}

pub fn run_design(m: &ExperimentManifest) -> CliResult<Outputs> {
    let d = m.design.clone().ok_or_else(|| CliError::Config("design needs a [design] section".into()))?;
    let text = match d.marks {
        Some(marks) => describe_family(d.period, marks)?,
        None => describe_ruler(d.period, d.exhaustive)?,
    };
    Ok(Outputs { files: vec![write_text(&m.output, "design.txt", &text)?] })
}

#[derive(Serialize)]
struct CovarianceTiming {
    tau: usize,
    seconds: f64,
}

#[derive(Serialize)]
struct ReconstructionTiming {
    period: usize,
    marks: usize,
    tau: usize,
    /// Least-squares inversion plus assembly, per grid point `ϑ_l`.
    seconds_per_bin: f64,
    ls_seconds: f64,
    assemble_seconds: f64,
}

#[derive(Serialize)]
struct StageTimes {
    synthesize: f64,
    covariance: f64,
    reconstruct: f64,
    assemble: f64,
}

#[derive(Serialize)]
struct BenchReport {
    blocks: usize,
    repeats: usize,
    stages: StageTimes,
    covariance: Vec<CovarianceTiming>,
    /// Time ratio between the largest and smallest τ.
    covariance_ratio: f64,
    tau_ratio: f64,
    /// Ratio within 30% of the τ ratio.
    covariance_linear: bool,
    reconstruction_vs_period: Vec<ReconstructionTiming>,
    /// Per-bin time ratio between the largest and smallest period.
    reconstruction_growth: f64,
    /// Growth at most the square of the period ratio.
    reconstruction_within_bound: bool,
    reconstruction_vs_tau: Vec<ReconstructionTiming>,
    reconstruction_tau_ratio: f64,
    /// Reconstruction time ratio within 30% of 1 across τ.
    reconstruction_tau_independent: bool,
}

fn best_of<T>(repeats: usize, mut f: impl FnMut() -> T) -> (Duration, T) {
    let mut best = Duration::MAX;
    let mut last = None;
    for _ in 0..repeats {
        let t = Instant::now();
        let out = f();
        best = best.min(t.elapsed());
        last = Some(out);
    }
    (best, last.expect("at least one repeat"))
}

fn bench_scenario(pattern: &CosetPattern, blocks: usize, tau: usize, seed: u64) -> ScenarioConfig {
    WhiteNoiseExperiment { pattern: pattern.clone(), blocks, noise_dbm: 0.0, tau, runs: 1, seed }.scenario()
}

fn time_reconstruction(
    pattern: &CosetPattern,
    blocks: usize,
    tau: usize,
    seed: u64,
    repeats: usize,
) -> CliResult<ReconstructionTiming> {
    let set = Synthesizer::new(&bench_scenario(pattern, blocks, tau, seed))?.acquire(0, false)?.sets.remove(0);
    let stack = sample_covariance(&set)?;
    let system = build_system_matrix(pattern);
    system.require_identifiable()?;
    let (ls, rbar) = best_of(repeats, || ls_reconstruct(&stack, &system));
    let rbar = rbar?;
    let (asm, _) = best_of(repeats, || assemble_cap(&rbar, "bench"));
    Ok(ReconstructionTiming {
        period: pattern.period(),
        marks: pattern.len(),
        tau,
        seconds_per_bin: (ls + asm).as_secs_f64() / blocks as f64,
        ls_seconds: ls.as_secs_f64(),
        assemble_seconds: asm.as_secs_f64(),
    })
}

/// Wall-clock timings of the pipeline stages. Scaling checks are reported,
/// not enforced, since timings depend on the machine.
pub fn run_bench(m: &ExperimentManifest) -> CliResult<Outputs> {
    let b = m.bench.clone().unwrap_or_default();
    let seed = m.seed.unwrap_or(0);
    let base = construct_ruler(b.periods[0])?;
    let tau_lo = *b.tau.iter().min().expect("validated");
    let tau_hi = *b.tau.iter().max().expect("validated");

    let mut covariance = Vec::new();
    let mut stages = None;
    for &tau in &b.tau {
        let synth = Synthesizer::new(&bench_scenario(&base, b.blocks, tau, seed))?;
        let (syn, acq) = best_of(1, || synth.acquire(0, false));
        let set = acq?.sets.remove(0);
        let (cov, stack) = best_of(b.repeats, || sample_covariance(&set));
        covariance.push(CovarianceTiming { tau, seconds: cov.as_secs_f64() });
        if stages.is_none() {
            let stack = stack?;
            let system = build_system_matrix(&base);
            let (ls, rbar) = best_of(b.repeats, || ls_reconstruct(&stack, &system));
            let rbar = rbar?;
            let (asm, _) = best_of(b.repeats, || assemble_cap(&rbar, "bench"));
            stages = Some(StageTimes {
                synthesize: syn.as_secs_f64(),
                covariance: cov.as_secs_f64(),
                reconstruct: ls.as_secs_f64(),
                assemble: asm.as_secs_f64(),
            });
        }
    }
    let time_at = |tau: usize| covariance.iter().find(|c| c.tau == tau).map_or(f64::NAN, |c| c.seconds);
    let covariance_ratio = time_at(tau_hi) / time_at(tau_lo);
    let tau_ratio = tau_hi as f64 / tau_lo as f64;

    let mut by_period = Vec::new();
    for &period in &b.periods {
        by_period.push(time_reconstruction(&construct_ruler(period)?, b.blocks, tau_lo, seed, b.repeats)?);
    }
    let (p_lo, p_hi) = (
        by_period.iter().min_by_key(|r| r.period).expect("validated"),
        by_period.iter().max_by_key(|r| r.period).expect("validated"),
    );
    let reconstruction_growth = p_hi.seconds_per_bin / p_lo.seconds_per_bin;
    let period_ratio = p_hi.period as f64 / p_lo.period as f64;

    let by_tau = [tau_lo, tau_hi]
        .iter()
        .map(|&tau| time_reconstruction(&base, b.blocks, tau, seed, b.repeats))
        .collect::<CliResult<Vec<_>>>()?;
    let reconstruction_tau_ratio = by_tau[1].seconds_per_bin / by_tau[0].seconds_per_bin;

    let report = BenchReport {
        blocks: b.blocks,
        repeats: b.repeats,
        stages: stages.expect("non-empty tau sweep"),
        covariance,
        covariance_ratio,
        tau_ratio,
        covariance_linear: (covariance_ratio / tau_ratio - 1.0).abs() <= 0.3,
        reconstruction_vs_period: by_period,
        reconstruction_growth,
        reconstruction_within_bound: reconstruction_growth <= period_ratio * period_ratio,
        reconstruction_vs_tau: by_tau,
        reconstruction_tau_ratio,
        reconstruction_tau_independent: (reconstruction_tau_ratio - 1.0).abs() <= 0.3,
    };
    Ok(Outputs { files: vec![write_json(&m.output, "bench.json", &report)?] })
}
