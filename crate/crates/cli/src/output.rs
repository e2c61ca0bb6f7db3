//! CSV, JSON and gnuplot serialization. Floats are written with 17
//! significant digits so identical runs produce identical bytes.

use std::fmt::Write as _;

use cal_core::discrete::{DiscreteLagrangian, DiscretePath};
use cal_core::dynamics::{Law, Trajectory};
use cal_core::potentials::Potential;

use crate::scenario::PointSummary;
use crate::CliError;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn header(out: &mut String, first: &str, blocks: &[&str], n: usize) {
    out.push_str(first);
    for b in blocks {
        for j in 0..n {
            let _ = write!(out, ",{b}_{j}");
        }
    }
    out.push('\n');
}

fn row(out: &mut String, t: f64, values: impl Iterator<Item = f64>) {
    out.push_str(&num(t));
    for v in values {
        out.push(',');
        out.push_str(&num(v));
    }
    out.push('\n');
}

/// Columns `t, q…, qdot…, qddot…, q3…`. The integrated blocks are followed by
/// one more derivative block evaluated from the law itself, so first- and
/// second-order laws stop at `qdot` and `qddot` respectively.
pub fn trajectory_csv(law: &Law, potential: &Potential, traj: &Trajectory) -> Result<String, CliError> {
    let order = law.order();
    let n = potential.dim();
    let blocks = ["q", "qdot", "qddot", "q3"];
    let shown = (order + 1).min(4);
    let mut out = String::new();
    header(&mut out, "t", &blocks[..shown], n);
    let mut ds = vec![0.0; order * n];
    for (&t, state) in traj.times.iter().zip(&traj.states) {
        let flat = state.to_flat(order);
        let mut values = flat.clone();
        if shown > order {
            if law.flat_rhs(potential, t, &flat, &mut ds).is_err() {
                ds.fill(f64::NAN);
            }
            values.extend_from_slice(&ds[(order - 1) * n..]);
        }
        row(&mut out, t, values.into_iter());
    }
    Ok(out)
}

/// Columns `t, x…`, one row per node.
pub fn path_csv(path: &DiscretePath, l: &DiscreteLagrangian) -> String {
    let mut out = String::new();
    header(&mut out, "t", &["x"], path.dim());
    for (k, x) in path.values().iter().enumerate() {
        row(&mut out, l.node_time(k, path.eps_grid()), x.iter().copied());
    }
    out
}

/// Columns `t, r…` for the interior nodes.
pub fn residual_csv(path: &DiscretePath, l: &DiscreteLagrangian, residual: &[Vec<f64>]) -> String {
    let mut out = String::new();
    header(&mut out, "t", &["r"], path.dim());
    for (k, r) in residual.iter().enumerate() {
        row(&mut out, l.node_time(k + 1, path.eps_grid()), r.iter().copied());
    }
    out
}

pub const SWEEP_COLUMNS: [&str; 10] =
    ["index", "theta", "eps_dis", "m", "t_end", "law", "verdict", "max_real_part", "diverged", "blowup_time"];

pub fn sweep_csv(points: &[PointSummary], metric: Option<&str>) -> String {
    let mut out = SWEEP_COLUMNS.join(",");
    if let Some(m) = metric {
        let _ = write!(out, ",{m}");
    }
    out.push('\n');
    for p in points {
        let verdict = p.verdict.map(|v| format!("{v:?}").to_lowercase()).unwrap_or_default();
        let fields = [
            p.index.to_string(),
            opt(p.params.params.theta),
            opt(p.params.params.eps_dis),
            opt(p.params.params.m),
            opt(p.params.t_end),
            p.law.to_string(),
            verdict,
            opt(p.max_real_part),
            p.diverged.to_string(),
            opt(p.blowup_time),
        ];
        out.push_str(&fields.join(","));
        if let Some(m) = metric {
            out.push(',');
            out.push_str(&opt(p.metrics.get(m).copied().flatten()));
        }
        out.push('\n');
    }
    out
}

/// Gnuplot script with one PNG per CSV, plotting every non-time column.
pub fn plot_script(csvs: &[(String, &str)]) -> String {
    let mut out = String::from(
        "# Render with: gnuplot plot.gp\nset datafile separator ','\nset key autotitle columnhead\nset grid\nset terminal pngcairo size 1000,600\n",
    );
    for (file, contents) in csvs {
        let columns: Vec<&str> = contents.lines().next().unwrap_or_default().split(',').collect();
        let Some(stem) = file.strip_suffix(".csv") else { continue };
        let _ = writeln!(out, "\nset output '{stem}.png'\nset xlabel '{}'", columns[0]);
        let curves: Vec<String> = (2..=columns.len())
            .filter(|&c| !matches!(columns[c - 1], "law" | "verdict" | "diverged" | "index"))
            .map(|c| format!("'{file}' using 1:{c} with lines"))
            .collect();
        let _ = writeln!(out, "plot {}", curves.join(", \\\n     "));
    }
    out
}
