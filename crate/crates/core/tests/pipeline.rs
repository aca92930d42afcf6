use cosetap::analysis::{
    inverse_gamma_sum, nmse, nyquist_ap_clusters, white_noise_monte_carlo, WhiteNoiseExperiment,
};
use cosetap::estimator::{estimate_correlated_bins, estimate_multicluster};
use cosetap::sensing::{Synthesizer, UserSpec};
use cosetap::sysmat::{build_psi, build_system_matrix};
use cosetap::{CosetPattern, ScenarioConfig};

fn fixture(name: &str) -> ScenarioConfig {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    ScenarioConfig::from_toml_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn ruler18() -> CosetPattern {
    CosetPattern::new(18, vec![0, 1, 4, 7, 9]).unwrap()
}

fn band_mean(values: &[f64], band: [f64; 2]) -> f64 {
    let grid = values.len() as f64;
    let picked: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let theta = *k as f64 / grid;
            let theta = if theta >= 0.5 { theta - 1.0 } else { theta };
            theta > band[0] + 0.005 && theta < band[1] - 0.005
        })
        .map(|(_, v)| *v)
        .collect();
    picked.iter().sum::<f64>() / picked.len() as f64
}

fn occupied(users: &[UserSpec], k: usize, grid: usize) -> bool {
    users.iter().any(|u| u.contains_grid_point(k, grid))
}

#[test]
fn six_user_scenario_shows_every_band() {
    let cfg = fixture("exp1.toml");
    let acq = Synthesizer::new(&cfg).unwrap().acquire(0, true).unwrap();
    let cap = estimate_multicluster(&acq.sets, &build_system_matrix(&ruler18())).unwrap().average;
    let nap = nyquist_ap_clusters(&acq.sets).unwrap();
    assert_eq!(cap.values.len(), 3060);
    let grid = cap.values.len();
    let floor: Vec<f64> = (0..grid).filter(|&k| !occupied(&cfg.users, k, grid)).map(|k| cap.values[k]).collect();
    let floor = floor.iter().sum::<f64>() / floor.len() as f64;
    for u in &cfg.users {
        let level = band_mean(&cap.values, u.band);
        assert!(level > 3.0 * floor, "band {:?}: {level} vs floor {floor}", u.band);
        let reference = band_mean(&nap.values, u.band);
        assert!((level / reference - 1.0).abs() < 0.25, "band {:?}: CAP {level} NAP {reference}", u.band);
    }
    assert!(nmse(&cap, &nap).unwrap() < 0.1);
}

#[test]
fn correlated_bins_need_the_pattern_family() {
    let cfg = fixture("exp7.toml");
    let synth = Synthesizer::new(&cfg).unwrap();
    let acq = synth.acquire(0, true).unwrap();
    let nap = nyquist_ap_clusters(&acq.sets).unwrap();
    let family = cfg.family().unwrap().unwrap();
    let cb = estimate_correlated_bins(&acq.sets, &build_psi(&family)).unwrap();
    let ub_pattern = CosetPattern::new(40, vec![0, 1, 2, 3, 4, 9, 10, 15, 16, 18, 20, 30, 33, 37]).unwrap();
    let ub_acq = synth.acquire_cosets(0, &ub_pattern, false).unwrap();
    let ub = estimate_multicluster(&ub_acq.sets, &build_system_matrix(&ub_pattern)).unwrap().average;
    let (cb_err, ub_err) = (nmse(&cb, &nap).unwrap(), nmse(&ub, &nap).unwrap());
    assert!(cb_err < 0.05, "CB {cb_err}");
    assert!(ub_err > 10.0 * cb_err, "UB {ub_err} vs CB {cb_err}");
}

fn white(clusters: usize, tau: usize, seed: u64) -> ScenarioConfig {
    let mut cfg = WhiteNoiseExperiment { pattern: ruler18(), blocks: 60, noise_dbm: 3.0, tau, runs: 1, seed }.scenario();
    cfg.clusters = clusters;
    cfg
}

fn mean_nmse(cfg: &ScenarioConfig, runs: u64) -> f64 {
    let synth = Synthesizer::new(cfg).unwrap();
    let sys = build_system_matrix(&ruler18());
    let truth = cfg.noise_variance();
    let total: f64 = (0..runs)
        .map(|run| {
            let cap = estimate_multicluster(&synth.acquire(run, false).unwrap().sets, &sys).unwrap().average;
            cap.values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / (truth * truth * cap.values.len() as f64)
        })
        .sum();
    total / runs as f64
}

#[test]
fn averaging_two_clusters_halves_white_noise_error() {
    let one = mean_nmse(&white(1, 10, 2), 40);
    let two = mean_nmse(&white(2, 10, 2), 40);
    assert!((two / one - 0.5).abs() < 0.1, "{one} -> {two}");
}

fn experiment(pattern: CosetPattern, tau: usize, runs: usize) -> WhiteNoiseExperiment {
    WhiteNoiseExperiment { pattern, blocks: 170, noise_dbm: 7.0, tau, runs, seed: 13 }
}

#[test]
fn quadrupling_sensors_quarters_nmse() {
    let a = white_noise_monte_carlo(&experiment(ruler18(), 5, 200)).unwrap();
    let b = white_noise_monte_carlo(&experiment(ruler18(), 20, 200)).unwrap();
    let ratio = b.nmse_empirical / a.nmse_empirical;
    assert!((ratio / 0.25 - 1.0).abs() < 0.15, "ratio {ratio}");
}

#[test]
fn half_rate_patterns_order_by_inverse_gamma_sum() {
    let ruler = ruler18();
    let patterns: Vec<CosetPattern> =
        [[17, 11, 2, 6], [3, 5, 6, 8], [2, 3, 5, 6]].iter().map(|extra| ruler.extended(extra).unwrap()).collect();
    let mut rows: Vec<(f64, f64, f64)> = patterns
        .iter()
        .map(|p| {
            assert_eq!(p.len(), 9);
            let rep = white_noise_monte_carlo(&experiment(p.clone(), 20, 200)).unwrap();
            (inverse_gamma_sum(p), rep.nmse_empirical, rep.nmse_analytical)
        })
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(rows.windows(2).all(|w| w[0].0 < w[1].0), "sums must be distinct: {rows:?}");
    assert!(rows.windows(2).all(|w| w[0].1 < w[1].1), "empirical NMSE not ordered: {rows:?}");
    for (_, empirical, analytical) in &rows {
        assert!((empirical / analytical - 1.0).abs() < 0.1);
    }
}

#[test]
fn closed_form_nmse_matches_monte_carlo() {
    let ruler = ruler18();
    for pattern in [ruler.clone(), ruler.extended(&[17, 11]).unwrap(), ruler.extended(&[17, 11, 2, 6]).unwrap()] {
        for tau in [10, 40] {
            let rep = white_noise_monte_carlo(&experiment(pattern.clone(), tau, 150)).unwrap();
            let gap = (rep.nmse_empirical - rep.nmse_analytical).abs() / rep.nmse_analytical;
            assert!(gap < 0.1, "{{{pattern}}} tau {tau}: {} vs {}", rep.nmse_empirical, rep.nmse_analytical);
        }
    }
}

#[test]
fn bin_width_violations_are_flagged() {
    let cfg = fixture("exp7.toml");
    assert!(cfg.bin_width_violations().is_empty(), "correlated-bins scenarios are exempt");
    let mut wide = fixture("exp1.toml");
    wide.users[0].band = [0.0, 0.2];
    assert_eq!(wide.bin_width_violations(), vec![0]);
    assert!(fixture("exp1.toml").bin_width_violations().is_empty());
}
