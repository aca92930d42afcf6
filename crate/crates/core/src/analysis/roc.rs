//! Energy detection on block-averaged CAP values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::estimate_multicluster;
use crate::sensing::{ScenarioConfig, Synthesizer};
use crate::sysmat::build_system_matrix;

/// Grid points tested for detections and for false alarms, and the width of
/// the non-overlapping averaging blocks applied to each run of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub avg_width: usize,
    /// Runs of consecutive grid indices inside the occupied bands.
    pub active: Vec<Vec<usize>>,
    /// Runs of consecutive grid indices inside the quiet band(s).
    pub quiet: Vec<Vec<usize>>,
}

fn centered_run(band: [f64; 2], count: usize, grid: usize) -> Result<Vec<usize>> {
    let [lo, hi] = band;
    if hi <= lo {
        return Err(Error::InvalidDetector(format!("band [{lo}, {hi}) has no width")));
    }
    let first = (lo * grid as f64).ceil() as i64;
    let last = (hi * grid as f64).ceil() as i64 - 1;
    let available = (last - first + 1).max(0) as usize;
    if available < count {
        return Err(Error::InvalidDetector(format!(
            "band [{lo}, {hi}) holds {available} grid points, {count} requested"
        )));
    }
    let start = first + ((available - count) / 2) as i64;
    Ok((0..count as i64).map(|j| (start + j).rem_euclid(grid as i64) as usize).collect())
}

impl DetectorConfig {
    /// `per_active` consecutive points centred in each active band and
    /// `quiet_points` centred in the quiet band. Bands are in normalized
    /// frequency and may start below zero.
    pub fn centered(
        grid: usize,
        active_bands: &[[f64; 2]],
        per_active: usize,
        quiet_band: [f64; 2],
        quiet_points: usize,
        avg_width: usize,
    ) -> Result<Self> {
        let active = active_bands.iter().map(|&b| centered_run(b, per_active, grid)).collect::<Result<Vec<_>>>()?;
        let quiet = vec![centered_run(quiet_band, quiet_points, grid)?];
        let cfg = Self { avg_width, active, quiet };
        cfg.validate(grid)?;
        Ok(cfg)
    }

    pub fn validate(&self, grid: usize) -> Result<()> {
        if self.avg_width == 0 {
            return Err(Error::InvalidDetector("averaging width must be positive".into()));
        }
        if self.active.iter().all(|r| r.is_empty()) || self.quiet.iter().all(|r| r.is_empty()) {
            return Err(Error::InvalidDetector("need active and quiet points".into()));
        }
        for run in self.active.iter().chain(&self.quiet) {
            if run.len() % self.avg_width != 0 {
                return Err(Error::InvalidDetector(format!(
                    "run of {} points is not a multiple of the averaging width {}",
                    run.len(),
                    self.avg_width
                )));
            }
            if let Some(&k) = run.iter().find(|&&k| k >= grid) {
                return Err(Error::InvalidDetector(format!("grid index {k} outside {grid} points")));
            }
        }
        let mut seen = vec![false; grid];
        for &k in self.active.iter().flatten() {
            seen[k] = true;
        }
        if let Some(&k) = self.quiet.iter().flatten().find(|&&k| seen[k]) {
            return Err(Error::InvalidDetector(format!("active and quiet bands overlap at grid index {k}")));
        }
        Ok(())
    }

    pub fn active_points(&self) -> usize {
        self.active.iter().map(Vec::len).sum()
    }

    pub fn quiet_points(&self) -> usize {
        self.quiet.iter().map(Vec::len).sum()
    }
}

/// Means of consecutive `width`-point blocks of `values` along each run.
pub fn block_statistics(values: &[f64], runs: &[Vec<usize>], width: usize) -> Vec<f64> {
    runs.iter()
        .flat_map(|run| run.chunks(width).map(|c| c.iter().map(|&k| values[k]).sum::<f64>() / c.len() as f64))
        .collect()
}

/// Receiver operating characteristic of a threshold detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Decreasing thresholds; the first is `+∞`, the last `-∞`.
    pub thresholds: Vec<f64>,
    pub pfa: Vec<f64>,
    pub pd: Vec<f64>,
    pub auc: f64,
    pub avg_width: usize,
    pub active_points: usize,
    pub quiet_points: usize,
    pub runs: usize,
}

impl RocCurve {
    /// Curve of the detector "statistic > threshold" over all distinct
    /// statistic values.
    pub fn from_statistics(active: &[f64], quiet: &[f64]) -> Self {
        let mut all: Vec<(f64, bool)> =
            active.iter().map(|&v| (v, true)).chain(quiet.iter().map(|&v| (v, false))).collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0));
        let (na, nq) = (active.len() as f64, quiet.len() as f64);
        let mut thresholds = vec![f64::INFINITY];
        let mut pd = vec![0.0];
        let mut pfa = vec![0.0];
        let (mut hits, mut alarms) = (0usize, 0usize);
        let mut j = 0;
        while j < all.len() {
            let v = all[j].0;
            while j < all.len() && all[j].0 == v {
                if all[j].1 {
                    hits += 1;
                } else {
                    alarms += 1;
                }
                j += 1;
            }
            // statistic > threshold for every value down to v
            thresholds.push(all.get(j).map_or(f64::NEG_INFINITY, |next| (v + next.0) / 2.0));
            pd.push(hits as f64 / na);
            pfa.push(alarms as f64 / nq);
        }
        if *thresholds.last().unwrap() != f64::NEG_INFINITY {
            thresholds.push(f64::NEG_INFINITY);
            pd.push(1.0);
            pfa.push(1.0);
        }
        Self {
            thresholds,
            pfa,
            pd,
            auc: auc_mann_whitney(active, quiet),
            avg_width: 1,
            active_points: active.len(),
            quiet_points: quiet.len(),
            runs: 1,
        }
    }

    /// Area under the piecewise-linear curve.
    pub fn trapezoid_auc(&self) -> f64 {
        self.pfa.windows(2).zip(self.pd.windows(2)).map(|(f, d)| (f[1] - f[0]) * (d[1] + d[0]) / 2.0).sum()
    }
}

/// `P(active > quiet) + P(tie)/2`, from mid-ranks.
pub fn auc_mann_whitney(active: &[f64], quiet: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> =
        active.iter().map(|&v| (v, true)).chain(quiet.iter().map(|&v| (v, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut j = 0;
    while j < all.len() {
        let mut k = j;
        while k < all.len() && all[k].0 == all[j].0 {
            k += 1;
        }
        let mid = (j + k + 1) as f64 / 2.0;
        rank_sum += mid * all[j..k].iter().filter(|e| e.1).count() as f64;
        j = k;
    }
    let (na, nq) = (active.len() as f64, quiet.len() as f64);
    (rank_sum - na * (na + 1.0) / 2.0) / (na * nq)
}

/// Monte Carlo ROC of energy detection on the cluster-averaged CAP.
pub fn roc_harness(scenario: &ScenarioConfig, detector: &DetectorConfig, runs: usize) -> Result<RocCurve> {
    detector.validate(scenario.grid_len())?;
    if runs == 0 {
        return Err(Error::InvalidDetector("at least one run is needed".into()));
    }
    let pattern = scenario
        .pattern()?
        .ok_or_else(|| Error::InvalidScenario("detection uses a single coset pattern".into()))?;
    let system = build_system_matrix(&pattern);
    system.require_identifiable()?;
    let synth = Synthesizer::new(scenario)?;
    let per_run: Vec<(Vec<f64>, Vec<f64>)> = (0..runs as u64)
        .into_par_iter()
        .map(|run| {
            let acq = synth.acquire(run, false)?;
            let cap = estimate_multicluster(&acq.sets, &system)?.average;
            Ok((
                block_statistics(&cap.values, &detector.active, detector.avg_width),
                block_statistics(&cap.values, &detector.quiet, detector.avg_width),
            ))
        })
        .collect::<Result<_>>()?;
    let active: Vec<f64> = per_run.iter().flat_map(|r| r.0.iter().copied()).collect();
    let quiet: Vec<f64> = per_run.iter().flat_map(|r| r.1.iter().copied()).collect();
    Ok(RocCurve {
        avg_width: detector.avg_width,
        active_points: detector.active_points(),
        quiet_points: detector.quiet_points(),
        runs,
        ..RocCurve::from_statistics(&active, &quiet)
    })
}
