use std::path::{Path, PathBuf};

use cal_cli::config::ScenarioConfig;
use cal_cli::{execute, CliError, Command, Summary};
use serde_json::Value;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ScenarioConfig {
    cal_cli::load_config(&configs_dir().join(format!("{name}.json"))).unwrap()
}

fn schema() -> jsonschema::Validator {
    let text =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/summary.schema.json")).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn run(cfg: &ScenarioConfig, command: Command, dir: &Path) -> Summary {
    let outcome = execute(cfg, command, dir, Some(2)).unwrap();
    assert!(!outcome.unexpected_divergence, "{}", cfg.scenario.name());
    outcome.summary
}

fn metric(s: &Summary, i: usize, name: &str) -> f64 {
    s.points[i].metrics[name].unwrap()
}

const SCENARIOS: [&str; 10] = [
    "oscillator",
    "gradient-flow-limit",
    "fourth-stab",
    "fourth-uns",
    "collapse-theta",
    "collapse-eps",
    "blowup-horizon",
    "discrete-el",
    "gradflow-vs-el",
    "stability-sweep",
];

#[test]
fn every_shipped_config_runs_and_matches_the_schema() {
    let validator = schema();
    for name in SCENARIOS {
        let dir = tempfile::tempdir().unwrap();
        let summary = run(&load(name), Command::Run, dir.path());
        let json: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&json).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{name}: {errors:?}");
        for file in &summary.files {
            assert!(dir.path().join(file).is_file(), "{name}: missing {file}");
        }
        assert!(summary.checks.values().all(|&ok| ok), "{name}: {:?}", summary.checks);
    }
}

#[test]
fn sweep_summaries_match_the_schema() {
    let validator = schema();
    for name in ["blowup-horizon", "collapse-theta", "stability-sweep"] {
        let dir = tempfile::tempdir().unwrap();
        run(&load(name), Command::Sweep, dir.path());
        let json: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert!(validator.is_valid(&json), "{name}");
        assert!(dir.path().join("sweep.csv").is_file());
    }
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    for name in ["gradflow-vs-el", "collapse-theta", "blowup-horizon"] {
        let cfg = load(name);
        let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
        for (dir, threads) in dirs.iter().zip([1, 1, 4]) {
            execute(&cfg, Command::Run, dir.path(), Some(threads)).unwrap();
        }
        let first = read_all(dirs[0].path());
        assert!(!first.is_empty());
        for d in &dirs[1..] {
            assert_eq!(first, read_all(d.path()), "{name}");
        }
    }
}

#[test]
fn changing_the_seed_changes_random_paths() {
    let mut cfg = load("gradflow-vs-el");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&cfg, Command::Run, a.path());
    cfg.seed += 1;
    run(&cfg, Command::Run, b.path());
    let read = |d: &Path| std::fs::read(d.join("gradient_flow_path_000.csv")).unwrap();
    assert_ne!(read(a.path()), read(b.path()));
}

#[test]
fn oscillator_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let s = run(&load("oscillator"), Command::Run, dir.path());
    assert!(metric(&s, 0, "sup_error") <= 1e-6);
    let csv = std::fs::read_to_string(dir.path().join("trajectory_000.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,q_0,qdot_0,qddot_0"));
    assert_eq!(
        lines.next(),
        Some("0.0000000000000000e0,1.0000000000000000e0,0.0000000000000000e0,-1.0000000000000000e0")
    );
    assert_eq!(csv.lines().count(), 2001 + 1);
}

#[test]
fn collapse_theta_distances_shrink() {
    let dir = tempfile::tempdir().unwrap();
    let s = run(&load("collapse-theta"), Command::Run, dir.path());
    let d: Vec<f64> = (0..3).map(|i| metric(&s, i, "sup_distance")).collect();
    assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    assert_eq!(s.checks.get("sup_distance_decreasing_in_theta"), Some(&true));
}

#[test]
fn free_particle_on_affine_path_has_zero_residual() {
    let dir = tempfile::tempdir().unwrap();
    let s = run(&load("discrete-el"), Command::Run, dir.path());
    assert_eq!(metric(&s, 0, "max_residual"), 0.0);
    let csv = std::fs::read_to_string(dir.path().join("residual_000.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",0.0000000000000000e0")));
}

#[test]
fn minimized_path_satisfies_the_marched_el_equation() {
    let dir = tempfile::tempdir().unwrap();
    let s = run(&load("gradflow-vs-el"), Command::Run, dir.path());
    assert!(s.points[0].flow.as_ref().unwrap().converged);
    assert!(metric(&s, 0, "max_residual") <= 1e-8);
    assert!(metric(&s, 0, "path_distance") <= 1e-8);
}

#[test]
fn case_ii_sweep_is_unstable_and_collapsed_rows_stable() {
    let dir = tempfile::tempdir().unwrap();
    let s = run(&load("stability-sweep"), Command::Sweep, dir.path());
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[..3].iter().all(|r| r.contains(",fourth_uns,unstable,")));
    assert!(rows[3].contains(",collapsed_eps,stable,"));
    assert_eq!(s.checks.get("zero_eps_stable"), Some(&true));
}

#[test]
fn blowup_time_decreases_with_eps() {
    let dir = tempfile::tempdir().unwrap();
    let s = run(&load("blowup-horizon"), Command::Sweep, dir.path());
    let times: Vec<f64> = s.points.iter().map(|p| p.blowup_time.unwrap()).collect();
    assert!(times.windows(2).all(|w| w[1] < w[0]), "{times:?}");
    assert!(s.points.iter().all(|p| p.diverged));
}

#[test]
fn gradient_flow_limit_distance_shrinks_with_mass() {
    let dir = tempfile::tempdir().unwrap();
    let s = run(&load("gradient-flow-limit"), Command::Run, dir.path());
    let d: Vec<f64> = (0..3).map(|i| metric(&s, i, "sup_distance")).collect();
    assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
}

fn config_error(text: &str) -> String {
    match ScenarioConfig::from_json(text) {
        Err(CliError::Config(msg)) => msg,
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn invalid_configs_are_config_errors() {
    let base = std::fs::read_to_string(configs_dir().join("oscillator.json")).unwrap();
    assert!(config_error(&base.replace("\"oscillator\"", "\"pendulum\"")).contains("unknown variant"));
    assert!(config_error(&base.replace("\"theta\"", "\"θ\"")).contains("unknown field"));
    assert!(config_error(&base.replace("\"m\": 1.0, ", "")).contains("`m`"));
    assert!(config_error(&base.replace("\"q\": [1.0]", "\"q\": [1.0, 2.0]")).contains("dimension"));
    assert!(config_error(&base.replace("\"step\": 1e-3", "\"step\": -1.0")).contains("step"));

    let grid = std::fs::read_to_string(configs_dir().join("collapse-theta.json")).unwrap();
    assert!(config_error(&grid.replace("[10.0, 100.0, 1000.0]", "[]")).contains("empty"));
    assert!(
        config_error(&grid.replace("\"sweep\": {\"theta\": [10.0, 100.0, 1000.0]}", "\"seed\": 1")).contains("theta")
    );
}

#[test]
fn sweep_without_grids_is_a_config_error() {
    let err = execute(&load("oscillator"), Command::Sweep, tempfile::tempdir().unwrap().path(), None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
