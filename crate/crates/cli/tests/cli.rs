use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cosetap"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn design_ruler_prints_marks_and_status() {
    let out = run(&["design-ruler", "--period", "18"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let line = text.lines().next().unwrap();
    assert!(line.contains("cardinality=5"), "{line}");
    assert!(line.contains("verified=true"));
    let marks: Vec<usize> = line.split_whitespace().next().unwrap().split(',').map(|m| m.parse().unwrap()).collect();
    assert_eq!(marks.len(), 5);
}

#[test]
fn design_family_covers_all_pairs() {
    let out = run(&["design-family", "--period", "8", "--marks", "4"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.lines().last().unwrap().ends_with("verified=true"));
    assert!(text.lines().filter(|l| l.contains("cardinality=4")).count() >= 4);
}

#[test]
fn inspect_reports_gamma_and_identifiability() {
    let out = run(&["inspect-pattern", "--period", "18", "--marks", "0,1,4,7,9"]);
    let text = stdout(&out);
    assert!(text.contains("gamma=5,1,1,2,1,1,1,1,1,2,1,1,1,1,1,2,1,1"), "{text}");
    assert!(text.contains("identifiable=true"));
    let out = run(&["inspect-pattern", "--period", "6", "--marks", "0,3"]);
    assert!(stdout(&out).contains("identifiable=false"));
}

#[test]
fn reconstruct_writes_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("exp1");
    let out = run(&[
        "reconstruct",
        "--scenario",
        fixture("exp1.toml").to_str().unwrap(),
        "--output",
        out_dir.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let cap = std::fs::read_to_string(out_dir.join("cap.csv")).unwrap();
    let mut lines = cap.lines();
    assert_eq!(lines.next(), Some("theta,value,estimator,run_id"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3060);
    assert!(rows.iter().all(|r| r.ends_with(",CAP-UB,0")));
    let nap = std::fs::read_to_string(out_dir.join("nap.csv")).unwrap();
    assert_eq!(nap.lines().count(), 3061);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    let run0 = &summary["runs"][0];
    assert!(run0["nmse"].as_f64().unwrap() > 0.0);
    assert!(run0["negative_count"].as_u64().is_some());
    assert!(run0["imag_residue"].as_f64().unwrap() < 1e-9);
}

#[test]
fn zero_scenario_gives_zero_cap() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("zero.toml");
    std::fs::write(&scenario, "period = 10\nblocks = 12\nsensors_per_cluster = 4\n\n[sampling]\npattern = [0, 1, 2, 5]\n")
        .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "reconstruct",
        "--scenario",
        scenario.to_str().unwrap(),
        "--output",
        out_dir.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let cap = std::fs::read_to_string(out_dir.join("cap.csv")).unwrap();
    let values: Vec<f64> = cap.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 120);
    assert!(values.iter().all(|&v| v == 0.0));
    let summary = std::fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"nmse\": null"));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.toml");
    std::fs::write(
        &manifest,
        format!(
            "kind = \"reconstruct\"\nscenario = {:?}\noutput = \"out\"\nruns = 2\n",
            fixture("exp1.toml").to_str().unwrap()
        ),
    )
    .unwrap();
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let out = run(&["reconstruct", "--manifest", manifest.to_str().unwrap(), "--seed", "5"]);
        assert!(out.status.success(), "{}", stderr(&out));
        outputs.push((
            std::fs::read(dir.path().join("out/cap.csv")).unwrap(),
            std::fs::read(dir.path().join("out/nap.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let out = run(&["reconstruct", "--manifest", manifest.to_str().unwrap(), "--seed", "6"]);
    assert!(out.status.success());
    assert_ne!(std::fs::read(dir.path().join("out/cap.csv")).unwrap(), outputs[0].0);
}

#[test]
fn seed_is_mandatory_for_stochastic_kinds() {
    let out = run(&["reconstruct", "--scenario", fixture("exp1.toml").to_str().unwrap(), "--output", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--seed"));
}

#[test]
fn identifiability_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "reconstruct",
        "--scenario",
        fixture("exp1.toml").to_str().unwrap(),
        "--output",
        dir.path().to_str().unwrap(),
        "--seed",
        "1",
        "--ub-pattern",
        "0,1,2",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error[identifiability]"), "{}", stderr(&out));
    assert!(stderr(&out).contains("not identifiable"));
}

#[test]
fn io_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    let out = run(&["reconstruct", "--scenario", missing.to_str().unwrap(), "--output", "x", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).starts_with("error[io]"));

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = run(&[
        "reconstruct",
        "--scenario",
        fixture("whitenoise.toml").to_str().unwrap(),
        "--output",
        blocker.join("sub").to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    // Empty bench sweep.
    let bench = dir.path().join("bench.toml");
    std::fs::write(&bench, "kind = \"bench\"\noutput = \"out\"\n\n[bench]\ntau = []\n").unwrap();
    let out = run(&["bench", "--manifest", bench.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).starts_with("error[config]"), "{}", stderr(&out));
    // Variance checks need a white-noise scenario.
    let scenario = fixture("exp1.toml");
    let args = ["variance-check", "--scenario", scenario.to_str().unwrap(), "--output", out_dir, "--seed", "1", "--runs", "3"];
    let out = run(&args);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("white-noise"));
    // A manifest of another kind.
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR")).join("manifests/exp1_reconstruct.toml");
    let out = run(&["roc", "--manifest", manifest.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn variance_check_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "variance-check",
        "--scenario",
        fixture("whitenoise.toml").to_str().unwrap(),
        "--output",
        dir.path().to_str().unwrap(),
        "--seed",
        "2",
        "--runs",
        "30",
        "--tau",
        "4",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("variance.csv")).unwrap();
    assert!(text.starts_with("pattern,rate,tau,runs,"));
    assert_eq!(text.lines().count(), 2);
    let bins = std::fs::read_to_string(dir.path().join("variance_bins.csv")).unwrap();
    assert!(bins.starts_with("theta,analytical,empirical,"));
    assert_eq!(bins.lines().count(), 3061);
}

#[test]
fn example_manifests_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("manifests");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let m = cosetap_cli::ExperimentManifest::load(&path).unwrap();
            m.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            if let Some(s) = &m.scenario {
                assert!(s.exists(), "{}", s.display());
            }
            count += 1;
        }
    }
    assert!(count >= 8);
}
