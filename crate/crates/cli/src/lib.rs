//! Scenario runner for the learning-dynamics library: parses a JSON config,
//! evaluates the scenario over its parameter grid, and writes trajectory
//! CSVs, a summary JSON and a gnuplot script.

pub mod config;
pub mod output;
pub mod scenario;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cal_core::stability::Verdict;
use rayon::prelude::*;
use serde::Serialize;

use config::{Axis, Scenario, ScenarioConfig};
use scenario::{evaluate, primary_metric, Artifact, Point, PointSummary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

impl From<cal_core::Error> for CliError {
    fn from(e: cal_core::Error) -> Self {
        use cal_core::Error as E;
        match e {
            E::NonFinite { .. } | E::StepUnderflow { .. } | E::Divergence { .. } => CliError::Divergence(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Expand the scenario's own grid axes and keep per-point artifacts.
    Run,
    /// Expand every present grid; write a summary table only.
    Sweep,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub scenario: &'static str,
    pub seed: u64,
    pub expects_divergence: bool,
    pub config: ScenarioConfig,
    pub points: Vec<PointSummary>,
    pub checks: BTreeMap<&'static str, bool>,
    pub files: Vec<String>,
}

#[derive(Debug)]
pub struct Outcome {
    pub summary: Summary,
    pub out_dir: PathBuf,
    /// Some law outside the expected-unstable set blew up; maps to exit 3.
    pub unexpected_divergence: bool,
}

fn axis_value(point: &Point, axis: Axis) -> Option<f64> {
    match axis {
        Axis::Theta => point.params.theta,
        Axis::EpsDis => point.params.eps_dis,
        Axis::M => point.params.m,
        Axis::TEnd => point.t_end,
    }
}

fn set_axis(point: &mut Point, axis: Axis, value: Option<f64>) {
    match axis {
        Axis::Theta => point.params.theta = value,
        Axis::EpsDis => point.params.eps_dis = value,
        Axis::M => point.params.m = value,
        Axis::TEnd => point.t_end = value,
    }
}

/// Cross product of the expanded grids, last axis varying fastest.
pub fn points(cfg: &ScenarioConfig, command: Command) -> Result<Vec<Point>, CliError> {
    let axes: Vec<Axis> = match command {
        Command::Run => cfg.scenario.run_axes().iter().copied().filter(|&a| cfg.sweep.axis(a).is_some()).collect(),
        Command::Sweep => {
            let present = cfg.sweep.present();
            if present.is_empty() {
                return Err(CliError::Config("sweep needs at least one grid under `sweep`".into()));
            }
            present
        }
    };
    let mut out = vec![Point { params: cfg.params, t_end: cfg.t_end }];
    for axis in axes {
        let grid = cfg.sweep.axis(axis).unwrap_or_default();
        out = out
            .into_iter()
            .flat_map(|p| {
                grid.iter().map(move |&v| {
                    let mut q = p;
                    set_axis(&mut q, axis, Some(v));
                    q
                })
            })
            .collect();
    }
    Ok(out)
}

/// `true` iff `value` strictly decreases as `axis` moves in the given
/// direction, within every group of points sharing the other parameters.
/// `None` when no group has two points.
fn decreasing_along(
    points: &[&PointSummary],
    axis: Axis,
    axis_ascending: bool,
    value: impl Fn(&PointSummary) -> Option<f64>,
) -> Option<bool> {
    let mut groups: BTreeMap<String, Vec<&PointSummary>> = BTreeMap::new();
    for p in points {
        let mut key = p.params;
        set_axis(&mut key, axis, None);
        groups.entry(format!("{key:?}")).or_default().push(p);
    }
    let mut seen = false;
    let mut ok = true;
    for group in groups.values_mut().filter(|g| g.len() >= 2) {
        seen = true;
        group.sort_by(|a, b| {
            let (x, y) = (axis_value(&a.params, axis).unwrap_or(0.0), axis_value(&b.params, axis).unwrap_or(0.0));
            if axis_ascending {
                x.total_cmp(&y)
            } else {
                y.total_cmp(&x)
            }
        });
        let values: Option<Vec<f64>> = group.iter().map(|p| value(p)).collect();
        ok &= values.is_some_and(|v| v.windows(2).all(|w| w[1] < w[0]));
    }
    seen.then_some(ok)
}

fn checks(scenario: Scenario, points: &[PointSummary]) -> BTreeMap<&'static str, bool> {
    let mut out = BTreeMap::new();
    let all: Vec<&PointSummary> = points.iter().collect();
    let metric = |name: &'static str| move |p: &PointSummary| p.metrics.get(name).copied().flatten();
    match scenario {
        Scenario::GradientFlowLimit => {
            if let Some(ok) = decreasing_along(&all, Axis::M, false, metric("sup_distance")) {
                out.insert("sup_distance_decreasing_in_m", ok);
            }
        }
        Scenario::CollapseTheta => {
            if let Some(ok) = decreasing_along(&all, Axis::Theta, true, metric("sup_distance")) {
                out.insert("sup_distance_decreasing_in_theta", ok);
            }
        }
        _ => {}
    }
    if matches!(
        scenario,
        Scenario::FourthUns | Scenario::BlowupHorizon | Scenario::StabilitySweep | Scenario::CollapseEps
    ) {
        let (positive, zero): (Vec<&PointSummary>, Vec<&PointSummary>) = all
            .iter()
            .filter(|p| p.params.params.eps_dis.is_some())
            .partition(|p| p.params.params.eps_dis != Some(0.0));
        if scenario != Scenario::StabilitySweep && scenario != Scenario::CollapseEps {
            if let Some(ok) = decreasing_along(&positive, Axis::EpsDis, false, |p| p.blowup_time) {
                out.insert("blowup_time_decreasing_in_eps", ok);
            }
        }
        let verdicts = |ps: &[&PointSummary], v: Verdict| ps.iter().all(|p| p.verdict.is_none_or(|x| x == v));
        if !positive.is_empty() {
            out.insert("positive_eps_unstable", verdicts(&positive, Verdict::Unstable));
        }
        if !zero.is_empty() {
            out.insert("zero_eps_stable", verdicts(&zero, Verdict::Stable));
        }
    }
    out
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
}

/// Evaluates every point (concurrently, at most `threads` workers) and writes
/// all artifacts from this thread in point order.
pub fn execute(
    cfg: &ScenarioConfig,
    command: Command,
    out_dir: &Path,
    threads: Option<usize>,
) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let pts = points(cfg, command)?;
    let artifacts = command == Command::Run;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<(PointSummary, Vec<Artifact>), CliError>> =
        pool.install(|| pts.par_iter().enumerate().map(|(i, p)| evaluate(cfg, i, *p, artifacts)).collect());

    let mut summaries = Vec::with_capacity(results.len());
    let mut files: Vec<Artifact> = Vec::new();
    for r in results {
        let (s, a) = r?;
        summaries.push(s);
        files.extend(a);
    }
    if command == Command::Sweep {
        files.push(Artifact {
            file: "sweep.csv".into(),
            contents: output::sweep_csv(&summaries, primary_metric(cfg.scenario)),
        });
    }
    let plot = output::plot_script(&files.iter().map(|a| (a.file.clone(), a.contents.as_str())).collect::<Vec<_>>());
    files.push(Artifact { file: "plot.gp".into(), contents: plot });

    let unexpected_divergence = summaries.iter().any(|s| s.unexpected_divergence);
    let summary = Summary {
        tool: "cal",
        version: env!("CARGO_PKG_VERSION"),
        command: match command {
            Command::Run => "run",
            Command::Sweep => "sweep",
        },
        scenario: cfg.scenario.name(),
        seed: cfg.seed,
        expects_divergence: cfg.scenario.expects_divergence(),
        config: cfg.clone(),
        checks: checks(cfg.scenario, &summaries),
        points: summaries,
        files: files.iter().map(|a| a.file.clone()).collect(),
    };

    std::fs::create_dir_all(out_dir).map_err(|source| CliError::Io { path: out_dir.to_path_buf(), source })?;
    for a in &files {
        write(out_dir, &a.file, &a.contents)?;
    }
    let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Config(e.to_string()))?;
    write(out_dir, "summary.json", &(json + "\n"))?;
    Ok(Outcome { summary, out_dir: out_dir.to_path_buf(), unexpected_divergence })
}

/// Reads a config file; missing or unreadable files are I/O errors.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    ScenarioConfig::from_json(&text)
}

/// Parses `CAL_THREADS`; unset means the rayon default.
pub fn threads_from_env(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("CAL_THREADS must be a positive integer, got `{v}`"))),
        },
    }
}
