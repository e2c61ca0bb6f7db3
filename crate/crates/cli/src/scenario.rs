//! Evaluation of one parameter point of a scenario.
//!
//! Every scenario is evaluated point by point; `run` and `sweep` differ only in
//! which grid axes they expand and whether per-point artifacts are kept.

use std::collections::BTreeMap;
use std::sync::Arc;

use cal_core::discrete::{
    action, action_gradient, discrete_el_march, discrete_el_residual, gradient_flow_minimize, DiscreteLagrangian,
    DiscretePath, FlowReport,
};
use cal_core::dynamics::{
    boundary_residuals_generic, boundary_residuals_printed, el_residual, BoundaryResiduals, Law, State4, Trajectory,
};
use cal_core::integrate::{IntegratorOptions, Method, TrajectoryMeta};
use cal_core::lagrangian::{CaseIISpec, CaseISpec, FirstOrderLagrangian, LagrangianSpec, SecondOrderKinetic, WeightFn};
use cal_core::potentials::Potential;
use cal_core::stability::{classify, overall, StabilityReport, Verdict};
use nalgebra::{DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Params, Scenario, ScenarioConfig, SeedPath};
use crate::output::{path_csv, residual_csv, trajectory_csv};
use crate::CliError;

/// Sample spacing used when no integrator is configured.
const DEFAULT_SAMPLE: f64 = 1e-2;

/// Parameter values of one point: the base params with grid values applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point {
    #[serde(flatten)]
    pub params: Params,
    pub t_end: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryReport {
    pub printed: Option<BoundaryResiduals>,
    pub generic: BoundaryResiduals,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub index: usize,
    pub params: Point,
    pub law: &'static str,
    pub verdict: Option<Verdict>,
    pub max_real_part: Option<f64>,
    pub diverged: bool,
    pub blowup_time: Option<f64>,
    pub final_time: Option<f64>,
    pub final_state: Option<State4>,
    pub metrics: BTreeMap<&'static str, Option<f64>>,
    pub boundary_residuals: Option<BoundaryReport>,
    pub stability: Option<Vec<StabilityReport>>,
    pub integrator: Option<TrajectoryMeta>,
    pub flow: Option<FlowReport>,
    pub files: Vec<String>,
    /// A law other than the expected-unstable one blew up.
    #[serde(skip)]
    pub unexpected_divergence: bool,
}

impl PointSummary {
    fn new(index: usize, params: Point, law: &'static str) -> Self {
        Self {
            index,
            params,
            law,
            verdict: None,
            max_real_part: None,
            diverged: false,
            blowup_time: None,
            final_time: None,
            final_state: None,
            metrics: BTreeMap::new(),
            boundary_residuals: None,
            stability: None,
            integrator: None,
            flow: None,
            files: Vec::new(),
            unexpected_divergence: false,
        }
    }

    fn set_stability(&mut self, reports: Option<Vec<StabilityReport>>) {
        if let Some(r) = &reports {
            self.verdict = Some(overall(r));
            self.max_real_part = r.iter().map(|x| x.max_real_part).reduce(f64::max);
        }
        self.stability = reports;
    }

    fn record_trajectory(&mut self, traj: &Trajectory) {
        self.diverged = traj.meta.diverged;
        self.blowup_time = traj.meta.blowup_time;
        if let Some((t, s)) = traj.last() {
            self.final_time = Some(t);
            self.final_state = Some(s.clone());
        }
        self.integrator = Some(traj.meta.clone());
    }
}

/// A file produced by a point, written later by the collector.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file: String,
    pub contents: String,
}

/// Name of the scalar reported in sweep tables for each scenario.
pub fn primary_metric(scenario: Scenario) -> Option<&'static str> {
    match scenario {
        Scenario::Oscillator => Some("sup_error"),
        Scenario::GradientFlowLimit | Scenario::CollapseTheta | Scenario::CollapseEps => Some("sup_distance"),
        Scenario::FourthStab => Some("el_residual_max"),
        Scenario::DiscreteEl => Some("max_residual"),
        Scenario::GradflowVsEl => Some("path_distance"),
        Scenario::FourthUns | Scenario::BlowupHorizon | Scenario::StabilitySweep => None,
    }
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    potential: Arc<Potential>,
    point: Point,
    index: usize,
    artifacts: bool,
}

impl Ctx<'_> {
    fn p(&self, name: &str) -> Result<f64, CliError> {
        self.point.params.require(name)
    }

    fn t_end(&self) -> Result<f64, CliError> {
        self.point.t_end.ok_or_else(|| CliError::Config("`t_end` is required".into()))
    }

    fn file(&self, stem: &str) -> String {
        format!("{stem}_{:03}.csv", self.index)
    }

    fn init(&self) -> State4 {
        let i = &self.cfg.initial;
        let n = i.q.len();
        let or_zero = |b: &Option<Vec<f64>>| b.clone().unwrap_or_else(|| vec![0.0; n]);
        State4 { q: i.q.clone(), qdot: or_zero(&i.qdot), qddot: or_zero(&i.qddot), q3: or_zero(&i.q3) }
    }

    fn stability(&self, law: &Law) -> Result<Option<Vec<StabilityReport>>, CliError> {
        match self.cfg.potential.equilibrium() {
            Some(eq) => Ok(Some(classify(law, &self.potential, &eq, 0.0)?)),
            None => Ok(None),
        }
    }

    /// Integrator options for `laws`, with any RK4 step capped at a quarter of
    /// the inverse fastest linearized rate so stiff parameter points stay stable.
    fn options(&self, laws: &[&Law]) -> Result<IntegratorOptions, CliError> {
        let mut opts = match &self.cfg.integrator {
            Some(i) => i.options()?,
            None if laws.iter().any(|l| matches!(l, Law::FourthUns { .. })) => {
                let eps = self.p("eps_dis")?;
                IntegratorOptions::rk45(1e-10, 1e-12, DEFAULT_SAMPLE.min(eps / 10.0))
            }
            None => IntegratorOptions::rk4(1e-3).with_stride(10),
        };
        if let Method::Rk4Fixed { step, stride } = opts.method {
            let mut cap = f64::INFINITY;
            if let Some(eq) = self.cfg.potential.equilibrium() {
                for law in laws {
                    for report in classify(law, &self.potential, &eq, 0.0)? {
                        for [re, im] in report.roots {
                            cap = cap.min(0.25 / re.hypot(im));
                        }
                    }
                }
            }
            if step > cap {
                let stride = ((step * stride as f64) / cap).round().max(1.0) as usize;
                opts.method = Method::Rk4Fixed { step: cap, stride };
            }
        }
        Ok(opts)
    }

    fn simulate(&self, law: &Law, init: &State4, opts: &IntegratorOptions) -> Result<Trajectory, CliError> {
        Ok(law.simulate(&self.potential, init, 0.0, self.t_end()?, opts)?)
    }

    fn trajectory_artifact(
        &self,
        out: &mut Vec<Artifact>,
        summary: &mut PointSummary,
        stem: &str,
        law: &Law,
        traj: &Trajectory,
    ) -> Result<(), CliError> {
        if self.artifacts {
            let file = self.file(stem);
            out.push(Artifact { contents: trajectory_csv(law, &self.potential, traj)?, file: file.clone() });
            summary.files.push(file);
        }
        Ok(())
    }
}

/// Evaluates one point; artifacts are only produced when `artifacts` is set.
pub fn evaluate(
    cfg: &ScenarioConfig,
    index: usize,
    point: Point,
    artifacts: bool,
) -> Result<(PointSummary, Vec<Artifact>), CliError> {
    let ctx = Ctx { cfg, potential: cfg.potential()?, point, index, artifacts };
    let mut out = Vec::new();
    let summary = match cfg.scenario {
        Scenario::Oscillator => oscillator(&ctx, &mut out)?,
        Scenario::GradientFlowLimit => gradient_flow_limit(&ctx, &mut out)?,
        Scenario::FourthStab => fourth_stab(&ctx, &mut out)?,
        Scenario::FourthUns | Scenario::BlowupHorizon => fourth_uns(&ctx, &mut out)?,
        Scenario::CollapseTheta => collapse_theta(&ctx, &mut out)?,
        Scenario::CollapseEps => collapse_eps(&ctx, &mut out)?,
        Scenario::DiscreteEl => discrete_el(&ctx, &mut out)?,
        Scenario::GradflowVsEl => gradflow_vs_el(&ctx, &mut out)?,
        Scenario::StabilitySweep => stability_point(&ctx)?,
    };
    Ok((summary, out))
}

fn oscillator(ctx: &Ctx, out: &mut Vec<Artifact>) -> Result<PointSummary, CliError> {
    let (m, theta) = (ctx.p("m")?, ctx.p("theta")?);
    let law = Law::DampedOscillator { mass: m, theta };
    let mut s = PointSummary::new(ctx.index, ctx.point, law.name());
    let init = ctx.init();
    let traj = ctx.simulate(&law, &init, &ctx.options(&[&law])?)?;
    s.record_trajectory(&traj);
    s.unexpected_divergence = traj.meta.diverged;
    s.set_stability(ctx.stability(&law)?);

    if let Potential::Quadratic(quad) = &*ctx.potential {
        // Closed form mode by mode in the stiffness eigenbasis.
        let eig = SymmetricEigen::new(quad.stiffness().clone());
        let c = DVector::from_column_slice(quad.center());
        let y0 = eig.eigenvectors.transpose() * (DVector::from_column_slice(&init.q) - &c);
        let v0 = eig.eigenvectors.transpose() * DVector::from_column_slice(&init.qdot);
        let mut err = 0.0_f64;
        for (&t, state) in traj.times.iter().zip(&traj.states) {
            let y = DVector::from_fn(y0.len(), |i, _| {
                cal_core::dynamics::damped_scalar_solution(m, theta, eig.eigenvalues[i], y0[i], v0[i], t).0
            });
            let exact = &c + &eig.eigenvectors * y;
            for (a, b) in state.q.iter().zip(exact.iter()) {
                err = err.max((a - b).abs());
            }
        }
        s.metrics.insert("sup_error", Some(err));
    }
    if theta == 0.0 {
        let energy = |st: &State4, t: f64| -> Result<f64, CliError> {
            Ok(0.5 * m * st.qdot.iter().map(|v| v * v).sum::<f64>() + ctx.potential.eval(&st.q, t)?)
        };
        let e0 = energy(&traj.states[0], traj.times[0])?;
        let mut drift = 0.0_f64;
        for (&t, st) in traj.times.iter().zip(&traj.states) {
            drift = drift.max((energy(st, t)? - e0).abs() / e0.abs().max(f64::MIN_POSITIVE));
        }
        s.metrics.insert("energy_drift", Some(drift));
    }
    ctx.trajectory_artifact(out, &mut s, "trajectory", &law, &traj)?;
    Ok(s)
}

/// Largest componentwise distance of `q` over common samples at or after `from`.
///
/// Returns the distance and the last compared time; comparison stops at the
/// first sample where the grids disagree (after a divergence).
fn sup_distance(a: &Trajectory, b: &Trajectory, from: f64) -> (f64, Option<f64>) {
    let mut dist = 0.0_f64;
    let mut last = None;
    for ((ta, sa), (tb, sb)) in a.times.iter().zip(&a.states).zip(b.times.iter().zip(&b.states)) {
        if (ta - tb).abs() > 1e-9 * ta.abs().max(1.0) {
            break;
        }
        if *ta + 1e-12 < from {
            continue;
        }
        let d = sa.q.iter().zip(&sb.q).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if !d.is_finite() {
            break;
        }
        dist = dist.max(d);
        last = Some(*ta);
    }
    (dist, last)
}

fn gradient_flow_limit(ctx: &Ctx, out: &mut Vec<Artifact>) -> Result<PointSummary, CliError> {
    let (m, theta) = (ctx.p("m")?, ctx.p("theta")?);
    let osc = Law::DampedOscillator { mass: m, theta };
    let flow = Law::GradientFlow { theta };
    let opts = ctx.options(&[&osc, &flow])?;
    let init = ctx.init();
    let a = ctx.simulate(&osc, &init, &opts)?;
    let b = ctx.simulate(&flow, &init, &opts)?;
    let mut s = PointSummary::new(ctx.index, ctx.point, osc.name());
    s.record_trajectory(&a);
    s.diverged |= b.meta.diverged;
    s.unexpected_divergence = s.diverged;
    s.set_stability(ctx.stability(&osc)?);
    let (d, _) = sup_distance(&a, &b, ctx.cfg.compare_from);
    s.metrics.insert("sup_distance", Some(d));
    ctx.trajectory_artifact(out, &mut s, "trajectory", &osc, &a)?;
    ctx.trajectory_artifact(out, &mut s, "gradient_flow", &flow, &b)?;
    Ok(s)
}

fn case_i(ctx: &Ctx) -> Result<LagrangianSpec, CliError> {
    let kinetic = SecondOrderKinetic::new(ctx.p("alpha1")?, ctx.p("alpha2")?, ctx.p("theta")?)?;
    Ok(LagrangianSpec::CaseI(CaseISpec::new(kinetic, ctx.p("gamma")?, ctx.potential.clone())?))
}

/// Case-ii spec, or `None` for `eps_dis = 0`, which selects the collapsed law.
fn case_ii(ctx: &Ctx) -> Result<Option<LagrangianSpec>, CliError> {
    let eps = ctx.p("eps_dis")?;
    if eps == 0.0 {
        return Ok(None);
    }
    let spec = CaseIISpec::new(ctx.p("rho")?, ctx.p("nu")?, eps, ctx.p("gamma")?, ctx.potential.clone())?;
    Ok(Some(LagrangianSpec::CaseII(spec)))
}

fn collapsed_eps(ctx: &Ctx) -> Result<Law, CliError> {
    let law = Law::CollapsedEps { rho: ctx.p("rho")?, nu: ctx.p("nu")?, gamma: ctx.p("gamma")? };
    law.validate()?;
    Ok(law)
}

fn boundary(spec: &LagrangianSpec, end: &State4) -> Result<Option<BoundaryReport>, CliError> {
    let finite = [&end.q, &end.qdot, &end.qddot, &end.q3].iter().all(|b| b.iter().all(|x| x.is_finite()));
    if !finite {
        return Ok(None);
    }
    Ok(Some(BoundaryReport {
        printed: Some(boundary_residuals_printed(spec, end)?),
        generic: boundary_residuals_generic(spec, end)?,
    }))
}

fn fourth_stab(ctx: &Ctx, out: &mut Vec<Artifact>) -> Result<PointSummary, CliError> {
    let spec = case_i(ctx)?;
    let law = Law::from(&spec);
    let traj = ctx.simulate(&law, &ctx.init(), &ctx.options(&[&law])?)?;
    let mut s = PointSummary::new(ctx.index, ctx.point, law.name());
    s.record_trajectory(&traj);
    s.unexpected_divergence = traj.meta.diverged;
    s.set_stability(ctx.stability(&law)?);
    if let Some((_, end)) = traj.last() {
        s.boundary_residuals = boundary(&spec, end)?;
    }
    let residual = if traj.meta.diverged || traj.len() < 5 { None } else { Some(el_residual(&traj, &spec)?.max_abs()) };
    s.metrics.insert("el_residual_max", residual);
    ctx.trajectory_artifact(out, &mut s, "trajectory", &law, &traj)?;
    Ok(s)
}

fn fourth_uns(ctx: &Ctx, out: &mut Vec<Artifact>) -> Result<PointSummary, CliError> {
    let spec = case_ii(ctx)?;
    let law = match &spec {
        Some(spec) => Law::from(spec),
        None => collapsed_eps(ctx)?,
    };
    let traj = ctx.simulate(&law, &ctx.init(), &ctx.options(&[&law])?)?;
    let mut s = PointSummary::new(ctx.index, ctx.point, law.name());
    s.record_trajectory(&traj);
    s.unexpected_divergence = traj.meta.diverged && spec.is_none();
    s.set_stability(ctx.stability(&law)?);
    if let (Some(spec), Some((_, end))) = (&spec, traj.last()) {
        s.boundary_residuals = boundary(spec, end)?;
    }
    ctx.trajectory_artifact(out, &mut s, "trajectory", &law, &traj)?;
    Ok(s)
}

/// Initial jet whose `q̈₀, q⁽³⁾₀` satisfy `q̈ + a q̇ + b V_q = 0` and its derivative.
fn matched_init(ctx: &Ctx, a: f64, b: f64) -> Result<State4, CliError> {
    let mut init = ctx.init();
    let grad = ctx.potential.grad(&init.q, 0.0)?;
    let hess = ctx.potential.hessian(&init.q, 0.0)?;
    let hv = &hess * DVector::from_column_slice(&init.qdot);
    init.qddot = init.qdot.iter().zip(&grad).map(|(v, g)| -a * v - b * g).collect();
    init.q3 = init.qddot.iter().zip(hv.iter()).map(|(acc, h)| -a * acc - b * h).collect();
    Ok(init)
}

fn compare_laws(
    ctx: &Ctx,
    out: &mut Vec<Artifact>,
    full: &Law,
    collapsed: &Law,
    init: &State4,
    full_may_diverge: bool,
) -> Result<PointSummary, CliError> {
    let opts = ctx.options(&[full, collapsed])?;
    let a = ctx.simulate(full, init, &opts)?;
    let b = ctx.simulate(collapsed, init, &opts)?;
    let mut s = PointSummary::new(ctx.index, ctx.point, full.name());
    s.record_trajectory(&a);
    s.unexpected_divergence = (a.meta.diverged && !full_may_diverge) || b.meta.diverged;
    s.diverged |= b.meta.diverged;
    s.set_stability(ctx.stability(full)?);
    let (d, last) = sup_distance(&a, &b, ctx.cfg.compare_from);
    s.metrics.insert("sup_distance", Some(d));
    s.metrics.insert("compared_until", last);
    ctx.trajectory_artifact(out, &mut s, "trajectory", full, &a)?;
    ctx.trajectory_artifact(out, &mut s, "collapsed", collapsed, &b)?;
    Ok(s)
}

fn collapse_theta(ctx: &Ctx, out: &mut Vec<Artifact>) -> Result<PointSummary, CliError> {
    let spec = case_i(ctx)?;
    let (a1, a2, gamma) = (ctx.p("alpha1")?, ctx.p("alpha2")?, ctx.p("gamma")?);
    let collapsed = Law::CollapsedTheta { alpha1: a1, alpha2: a2, gamma };
    let init = matched_init(ctx, a1 / a2, gamma / (a2 * a2))?;
    compare_laws(ctx, out, &Law::from(&spec), &collapsed, &init, false)
}

fn collapse_eps(ctx: &Ctx, out: &mut Vec<Artifact>) -> Result<PointSummary, CliError> {
    let collapsed = collapsed_eps(ctx)?;
    let (rho, nu, gamma) = (ctx.p("rho")?, ctx.p("nu")?, ctx.p("gamma")?);
    let init = matched_init(ctx, nu / rho, gamma / rho)?;
    match case_ii(ctx)? {
        Some(spec) => compare_laws(ctx, out, &Law::from(&spec), &collapsed, &init, true),
        None => compare_laws(ctx, out, &collapsed, &collapsed, &init, false),
    }
}

fn first_order(ctx: &Ctx) -> Result<DiscreteLagrangian, CliError> {
    let params = &ctx.point.params;
    let weight = match (params.theta, params.eps_dis) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "set at most one of `theta` and `eps_dis` for a first-order Lagrangian".into(),
            ))
        }
        (Some(theta), None) => WeightFn::exp_pos(theta)?,
        (None, Some(eps)) => WeightFn::exp_neg(eps)?,
        (None, None) => WeightFn::Const1,
    };
    let l = FirstOrderLagrangian::new(ctx.p("m")?, ctx.p("gamma")?, ctx.potential.clone(), weight)?;
    Ok(DiscreteLagrangian::new(l, 0.0))
}

fn seed_path(ctx: &Ctx) -> Result<DiscretePath, CliError> {
    let d = ctx.cfg.discrete.as_ref().ok_or_else(|| CliError::Config("missing `discrete` block".into()))?;
    let eps = ctx.p("eps_grid")?;
    let init = ctx.init();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let values = (0..d.nodes)
        .map(|i| match d.seed_path {
            SeedPath::Affine => init.q.iter().zip(&init.qdot).map(|(q, v)| q + i as f64 * eps * v).collect(),
            SeedPath::Random => init.q.iter().map(|q| q + rng.random_range(-1.0..=1.0)).collect(),
        })
        .collect();
    Ok(DiscretePath::new(values, eps)?)
}

fn discrete_el(ctx: &Ctx, out: &mut Vec<Artifact>) -> Result<PointSummary, CliError> {
    let l = first_order(ctx)?;
    let path = seed_path(ctx)?;
    let mut s = PointSummary::new(ctx.index, ctx.point, "discrete_action");
    let grad = action_gradient(&path, &l)?;
    let residual = discrete_el_residual(&path, &l)?;
    let sup = |rows: &[Vec<f64>]| rows.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()));
    s.metrics.insert("action", Some(action(&path, &l)?));
    s.metrics.insert("grad_norm", Some(sup(&grad)));
    s.metrics.insert("max_residual", Some(sup(&residual)));
    if ctx.artifacts {
        for (stem, contents) in [("path", path_csv(&path, &l)), ("residual", residual_csv(&path, &l, &residual))] {
            let file = ctx.file(stem);
            out.push(Artifact { file: file.clone(), contents });
            s.files.push(file);
        }
    }
    Ok(s)
}

fn gradflow_vs_el(ctx: &Ctx, out: &mut Vec<Artifact>) -> Result<PointSummary, CliError> {
    let d = ctx.cfg.discrete.as_ref().ok_or_else(|| CliError::Config("missing `discrete` block".into()))?;
    let l = first_order(ctx)?;
    let path = seed_path(ctx)?;
    let eps = path.eps_grid();
    // Default step: a fifth of the inverse kinetic curvature at the heaviest node.
    let w_max = (0..path.nodes()).map(|k| l.weight(l.node_time(k, eps))).fold(0.0, f64::max);
    let eta = d.eta.unwrap_or(0.2 * eps / (l.lagrangian.mass * w_max));
    let (minimized, report) = gradient_flow_minimize(&path, &l, eta, d.tol, d.max_iters, d.clamp_first)?;
    let v = minimized.values();
    let marched = discrete_el_march(&v[0], &v[1], path.nodes(), eps, &l)?;
    let distance = v
        .iter()
        .zip(marched.values())
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    let residual = discrete_el_residual(&minimized, &l)?;
    let mut s = PointSummary::new(ctx.index, ctx.point, "discrete_action");
    s.metrics.insert("path_distance", Some(distance));
    s.metrics.insert("max_residual", Some(residual.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()))));
    s.metrics.insert("eta", Some(eta));
    s.flow = Some(report);
    if ctx.artifacts {
        for (stem, p) in [("gradient_flow_path", &minimized), ("el_path", &marched)] {
            let file = ctx.file(stem);
            out.push(Artifact { file: file.clone(), contents: path_csv(p, &l) });
            s.files.push(file);
        }
    }
    Ok(s)
}

fn stability_point(ctx: &Ctx) -> Result<PointSummary, CliError> {
    let params = &ctx.point.params;
    let law = if params.eps_dis.is_some() {
        match case_ii(ctx)? {
            Some(spec) => Law::from(&spec),
            None => collapsed_eps(ctx)?,
        }
    } else if params.alpha1.is_some() || params.alpha2.is_some() {
        Law::from(&case_i(ctx)?)
    } else {
        Law::DampedOscillator { mass: ctx.p("m")?, theta: ctx.p("theta")? }
    };
    let reports = ctx
        .stability(&law)?
        .ok_or_else(|| CliError::Config("stability-sweep needs a potential with a known equilibrium".into()))?;
    let mut s = PointSummary::new(ctx.index, ctx.point, law.name());
    s.set_stability(Some(reports));
    Ok(s)
}
