//! Differential laws of learning and their residual checks.
//!
//! Every law is applied componentwise to vector `q`; components only couple
//! through `V_q`. The fourth-order laws come from the Euler-Lagrange equation
//! of `h · (T + γV)` with `T = ½A‖q̇‖² + B q̇·q̈ + ½C‖q̈‖²`:
//!
//! ```text
//! C q⁽⁴⁾ + 2rC q⁽³⁾ + (rB + sC − A) q̈ + (sB − rA) q̇ + γ V_q = 0,   r = ḣ/h, s = ḧ/h
//! ```

use serde::Serialize;

use crate::integrate::{integrate, IntegratorOptions, Solution, TrajectoryMeta};
use crate::lagrangian::{positive, CaseIISpec, CaseISpec, KineticForm, LagrangianSpec, SecondOrderKinetic, WeightFn};
use crate::potentials::Potential;
use crate::{check_dim, dot, Error, Result};

/// Jet `(q, q̇, q̈, q⁽³⁾)` at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct State4 {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub qddot: Vec<f64>,
    pub q3: Vec<f64>,
}

impl State4 {
    pub fn zeros(n: usize) -> Self {
        Self { q: vec![0.0; n], qdot: vec![0.0; n], qddot: vec![0.0; n], q3: vec![0.0; n] }
    }

    /// Position-only state with vanishing derivatives.
    pub fn at_rest(q: Vec<f64>) -> Self {
        let n = q.len();
        Self { q, ..Self::zeros(n) }
    }

    pub fn new(q: Vec<f64>, qdot: Vec<f64>, qddot: Vec<f64>, q3: Vec<f64>) -> Result<Self> {
        let n = q.len();
        check_dim(n, qdot.len())?;
        check_dim(n, qddot.len())?;
        check_dim(n, q3.len())?;
        Ok(Self { q, qdot, qddot, q3 })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Blocks `0..order` packed contiguously, `q` first.
    pub fn to_flat(&self, order: usize) -> Vec<f64> {
        self.blocks().iter().take(order).flat_map(|b| b.iter().copied()).collect()
    }

    /// Inverse of [`State4::to_flat`]; blocks beyond `order` are zero.
    pub fn from_flat(flat: &[f64], order: usize) -> Self {
        let n = flat.len() / order;
        let mut s = Self::zeros(n);
        for (k, block) in [&mut s.q, &mut s.qdot, &mut s.qddot, &mut s.q3].into_iter().enumerate().take(order) {
            block.copy_from_slice(&flat[k * n..(k + 1) * n]);
        }
        s
    }

    fn blocks(&self) -> [&Vec<f64>; 4] {
        [&self.q, &self.qdot, &self.qddot, &self.q3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State4>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn from_solution(sol: Solution, order: usize) -> Self {
        Self {
            states: sol.states.iter().map(|s| State4::from_flat(s, order)).collect(),
            times: sol.times,
            meta: sol.meta,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &State4)> {
        self.times.last().copied().zip(self.states.last())
    }

    /// Linear interpolation of `q` at time `t` inside the recorded range.
    pub fn q_at(&self, t: f64) -> Option<Vec<f64>> {
        let (first, last) = (*self.times.first()?, *self.times.last()?);
        if t < first || t > last {
            return None;
        }
        let j = self.times.partition_point(|&s| s <= t).min(self.times.len() - 1).max(1);
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        Some(self.states[j - 1].q.iter().zip(&self.states[j].q).map(|(a, b)| a + w * (b - a)).collect())
    }
}

/// Every differential law the crate integrates.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Law {
    /// `q̇ = −V_q / θ`
    GradientFlow { theta: f64 },
    /// `m q̈ + θ q̇ + V_q = 0`
    DampedOscillator { mass: f64, theta: f64 },
    /// Euler-Lagrange law of `h · (½ m ‖q̇‖² + γV)`: `m q̈ + (ḣ/h) m q̇ − γ V_q = 0`.
    WeightedFirstOrder { mass: f64, gamma: f64, weight: WeightFn },
    /// `q̈ + (α₁/α₂) q̇ + (γ/α₂²) V_q = 0`
    CollapsedTheta { alpha1: f64, alpha2: f64, gamma: f64 },
    /// `ρ q̈ + ν q̇ + γ V_q = 0`
    CollapsedEps { rho: f64, nu: f64, gamma: f64 },
    /// Fourth-order law of `h · (‖α₁q̇ + α₂q̈‖²/(2θ²) + γV)`.
    FourthStab { kinetic: SecondOrderKinetic, gamma: f64, weight: WeightFn },
    /// Fourth-order law of `e^{-t/ε}(½ε²ρ‖q̈‖² + ½εν‖q̇‖² + γV)`.
    FourthUns { rho: f64, nu: f64, eps_dis: f64, gamma: f64 },
}

impl From<&LagrangianSpec> for Law {
    fn from(spec: &LagrangianSpec) -> Self {
        match spec {
            LagrangianSpec::FirstOrder(l) => Law::WeightedFirstOrder { mass: l.mass, gamma: l.gamma, weight: l.weight },
            LagrangianSpec::CaseI(l) => Law::FourthStab { kinetic: l.kinetic, gamma: l.gamma, weight: l.weight },
            LagrangianSpec::CaseII(l) => Law::FourthUns { rho: l.rho, nu: l.nu, eps_dis: l.eps_dis, gamma: l.gamma },
        }
    }
}

impl Law {
    pub fn name(&self) -> &'static str {
        match self {
            Law::GradientFlow { .. } => "gradient_flow",
            Law::DampedOscillator { .. } => "damped_oscillator",
            Law::WeightedFirstOrder { .. } => "weighted_first_order",
            Law::CollapsedTheta { .. } => "collapsed_theta",
            Law::CollapsedEps { .. } => "collapsed_eps",
            Law::FourthStab { .. } => "fourth_stab",
            Law::FourthUns { .. } => "fourth_uns",
        }
    }

    /// Differential order; the flat state holds `order · n` scalars.
    pub fn order(&self) -> usize {
        match self {
            Law::GradientFlow { .. } => 1,
            Law::FourthStab { .. } | Law::FourthUns { .. } => 4,
            _ => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Law::GradientFlow { theta } => positive("theta", theta),
            Law::DampedOscillator { mass, theta } => {
                positive("mass", mass)?;
                crate::lagrangian::finite("theta", theta)
            }
            Law::WeightedFirstOrder { mass, .. } => positive("mass", mass),
            Law::CollapsedTheta { alpha2: 0.0, .. } => Err(Error::InvalidParameter("alpha2 must be nonzero".into())),
            Law::CollapsedTheta { .. } => Ok(()),
            Law::CollapsedEps { rho, .. } => positive("rho", rho),
            Law::FourthStab { kinetic, .. } => {
                SecondOrderKinetic::new(kinetic.alpha1, kinetic.alpha2, kinetic.theta).map(|_| ())
            }
            Law::FourthUns { rho, nu, eps_dis, .. } => {
                positive("rho", rho)?;
                positive("nu", nu)?;
                positive("eps_dis", eps_dis)
            }
        }
    }

    /// `ṡ` for the flat state `s` (see [`crate::integrate`] for the layout).
    pub fn flat_rhs(&self, potential: &Potential, t: f64, s: &[f64], ds: &mut [f64]) -> Result<()> {
        let order = self.order();
        let n = potential.dim();
        check_dim(order * n, s.len())?;
        check_dim(s.len(), ds.len())?;
        // Shift: d/dt of block k is block k+1.
        ds[..(order - 1) * n].copy_from_slice(&s[n..]);
        let mut grad = vec![0.0; n];
        potential.grad_into(&s[..n], t, &mut grad)?;
        let top = &mut ds[(order - 1) * n..];
        match *self {
            Law::GradientFlow { theta } => {
                for (o, g) in top.iter_mut().zip(&grad) {
                    *o = -g / theta;
                }
            }
            Law::DampedOscillator { mass, theta } => {
                let v = &s[n..2 * n];
                for i in 0..n {
                    top[i] = -(theta * v[i] + grad[i]) / mass;
                }
            }
            Law::WeightedFirstOrder { mass, gamma, weight } => {
                let v = &s[n..2 * n];
                let r = weight.ratio_dot();
                for i in 0..n {
                    top[i] = gamma * grad[i] / mass - r * v[i];
                }
            }
            Law::CollapsedTheta { alpha1, alpha2, gamma } => {
                let v = &s[n..2 * n];
                for i in 0..n {
                    top[i] = -(alpha1 / alpha2) * v[i] - (gamma / (alpha2 * alpha2)) * grad[i];
                }
            }
            Law::CollapsedEps { rho, nu, gamma } => {
                let v = &s[n..2 * n];
                for i in 0..n {
                    top[i] = -(nu * v[i] + gamma * grad[i]) / rho;
                }
            }
            Law::FourthStab { kinetic, gamma, weight } => {
                fourth_order_accel(&kinetic.form(), gamma, weight, &grad, s, top);
            }
            Law::FourthUns { rho, nu, eps_dis, gamma } => {
                let form = KineticForm { vel: eps_dis * nu, cross: 0.0, acc: eps_dis * eps_dis * rho };
                fourth_order_accel(&form, gamma, WeightFn::ExpNeg { eps_dis }, &grad, s, top);
            }
        }
        Ok(())
    }

    /// Integrates the law from the first `order` blocks of `init`.
    pub fn simulate(
        &self,
        potential: &Potential,
        init: &State4,
        t0: f64,
        t_end: f64,
        opts: &IntegratorOptions,
    ) -> Result<Trajectory> {
        self.validate()?;
        check_dim(potential.dim(), init.dim())?;
        let order = self.order();
        let sol = integrate(|t, s, ds| self.flat_rhs(potential, t, s, ds), &init.to_flat(order), t0, t_end, opts)?;
        Ok(Trajectory::from_solution(sol, order))
    }
}

/// `q⁽⁴⁾` from the general fourth-order law; `s` packs `(q, q̇, q̈, q⁽³⁾)`.
fn fourth_order_accel(form: &KineticForm, gamma: f64, weight: WeightFn, grad: &[f64], s: &[f64], out: &mut [f64]) {
    let n = grad.len();
    let (r, sr) = (weight.ratio_dot(), weight.ratio_ddot());
    let KineticForm { vel: a, cross: b, acc: c } = *form;
    let c3 = 2.0 * r * c;
    let c2 = r * b + sr * c - a;
    let c1 = sr * b - r * a;
    for i in 0..n {
        let (v, acc, jerk) = (s[n + i], s[2 * n + i], s[3 * n + i]);
        out[i] = -(c3 * jerk + c2 * acc + c1 * v + gamma * grad[i]) / c;
    }
}

/// `(q̇, q̈)` of `m q̈ + θ q̇ + V_q = 0`.
pub fn damped_oscillator_rhs(
    m: f64,
    theta: f64,
    p: &Potential,
    t: f64,
    q: &[f64],
    qdot: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    positive("mass", m)?;
    check_dim(q.len(), qdot.len())?;
    let g = p.grad(q, t)?;
    let qddot = qdot.iter().zip(&g).map(|(v, g)| -(theta * v + g) / m).collect();
    Ok((qdot.to_vec(), qddot))
}

/// `q̇ = −V_q / θ`.
pub fn gradient_flow_rhs(theta: f64, p: &Potential, t: f64, q: &[f64]) -> Result<Vec<f64>> {
    positive("theta", theta)?;
    Ok(p.grad(q, t)?.into_iter().map(|g| -g / theta).collect())
}

fn top_block(law: &Law, p: &Potential, t: f64, s: &State4) -> Result<Vec<f64>> {
    let order = law.order();
    let flat = s.to_flat(order);
    let mut ds = vec![0.0; flat.len()];
    law.flat_rhs(p, t, &flat, &mut ds)?;
    Ok(ds.split_off((order - 1) * s.dim()))
}

/// `q⁽⁴⁾` under the `e^{θt}`-weighted acceleration Lagrangian.
pub fn fourth_order_stab_rhs(spec: &CaseISpec, t: f64, s: &State4) -> Result<Vec<f64>> {
    top_block(&Law::from(&LagrangianSpec::CaseI(spec.clone())), &spec.potential, t, s)
}

/// `q⁽⁴⁾` under the `e^{-t/ε}`-weighted Lagrangian.
pub fn fourth_order_uns_rhs(spec: &CaseIISpec, t: f64, s: &State4) -> Result<Vec<f64>> {
    top_block(&Law::from(&LagrangianSpec::CaseII(spec.clone())), &spec.potential, t, s)
}

/// `q̈` of the `θ → ∞` limit.
pub fn collapsed_theta_rhs(
    alpha1: f64,
    alpha2: f64,
    gamma: f64,
    p: &Potential,
    t: f64,
    q: &[f64],
    qdot: &[f64],
) -> Result<Vec<f64>> {
    let law = Law::CollapsedTheta { alpha1, alpha2, gamma };
    law.validate()?;
    top_block(&law, p, t, &State4::new(q.to_vec(), qdot.to_vec(), vec![0.0; q.len()], vec![0.0; q.len()])?)
}

/// `q̈` of the `ε → 0` limit.
pub fn collapsed_eps_rhs(
    rho: f64,
    nu: f64,
    gamma: f64,
    p: &Potential,
    t: f64,
    q: &[f64],
    qdot: &[f64],
) -> Result<Vec<f64>> {
    positive("rho", rho)?;
    check_dim(q.len(), qdot.len())?;
    let g = p.grad(q, t)?;
    Ok(qdot.iter().zip(&g).map(|(v, g)| -(nu * v + gamma * g) / rho).collect())
}

/// Pair of boundary residuals at the endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryResiduals {
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
}

impl BoundaryResiduals {
    pub fn max_abs(&self) -> f64 {
        crate::sup_norm(&self.r1).max(crate::sup_norm(&self.r2))
    }
}

/// The endpoint conditions in the closed forms displayed for each weighting.
///
/// `e^{θt}`: `((α₁²/θ²) q̇ − (α₂²/θ²) q⁽³⁾, (α₁α₂/θ²) q̇ + (α₂²/θ²) q̈)`;
/// `e^{-t/ε}`: `(ε²ρ q̈, εν q̈ − ρε² q⁽³⁾)`.
pub fn boundary_residuals_printed(spec: &LagrangianSpec, s_end: &State4) -> Result<BoundaryResiduals> {
    let zip2 = |a: &[f64], b: &[f64], f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
    };
    match spec {
        LagrangianSpec::CaseI(l) => {
            let SecondOrderKinetic { alpha1: a1, alpha2: a2, theta } = l.kinetic;
            let th2 = theta * theta;
            Ok(BoundaryResiduals {
                r1: zip2(&s_end.qdot, &s_end.q3, &|v, j| a1 * a1 / th2 * v - a2 * a2 / th2 * j),
                r2: zip2(&s_end.qdot, &s_end.qddot, &|v, a| a1 * a2 / th2 * v + a2 * a2 / th2 * a),
            })
        }
        LagrangianSpec::CaseII(l) => {
            let (eps, rho, nu) = (l.eps_dis, l.rho, l.nu);
            Ok(BoundaryResiduals {
                r1: s_end.qddot.iter().map(|a| eps * eps * rho * a).collect(),
                r2: zip2(&s_end.qddot, &s_end.q3, &|a, j| eps * nu * a - rho * eps * eps * j),
            })
        }
        LagrangianSpec::FirstOrder(_) => {
            Err(Error::Contract("printed boundary conditions exist only for acceleration-dependent Lagrangians".into()))
        }
    }
}

/// `(d/dt L_a) / h` expanded analytically along the jet.
pub fn la_rate(spec: &LagrangianSpec, s: &State4) -> Vec<f64> {
    let form = spec.kinetic_form();
    let r = spec.weight().ratio_dot();
    let t_a = form.t_a(&s.qdot, &s.qddot);
    (0..s.dim()).map(|i| r * t_a[i] + form.cross * s.qddot[i] + form.acc * s.q3[i]).collect()
}

/// `((L_p − d/dt L_a)/h, L_a/h)` at the endpoint jet, from the Lagrangian itself.
///
/// Residuals are divided by `h`, which makes them independent of the endpoint
/// time for the supported weights.
pub fn boundary_residuals_generic(spec: &LagrangianSpec, s_end: &State4) -> Result<BoundaryResiduals> {
    check_dim(s_end.dim(), s_end.qdot.len())?;
    let form = spec.kinetic_form();
    let t_p = form.t_p(&s_end.qdot, &s_end.qddot);
    let t_a = form.t_a(&s_end.qdot, &s_end.qddot);
    let rate = la_rate(spec, s_end);
    Ok(BoundaryResiduals { r1: t_p.iter().zip(&rate).map(|(p, d)| p - d).collect(), r2: t_a })
}

/// Conserved energy of an autonomous (`h ≡ 1`) Lagrangian:
/// `E = q̇·(L_p − d/dt L_a) + q̈·L_a − L̄`.
pub fn ostrogradsky_energy(spec: &LagrangianSpec, t: f64, s: &State4) -> Result<f64> {
    if spec.weight() != WeightFn::Const1 {
        return Err(Error::Contract("energy is only conserved for h ≡ 1".into()));
    }
    let form = spec.kinetic_form();
    let t_p = form.t_p(&s.qdot, &s.qddot);
    let t_a = form.t_a(&s.qdot, &s.qddot);
    let rate = la_rate(spec, s);
    let momentum: Vec<f64> = t_p.iter().zip(&rate).map(|(p, d)| p - d).collect();
    Ok(dot(&s.qdot, &momentum) + dot(&s.qddot, &t_a) - spec.bar_value(t, &s.q, &s.qdot, &s.qddot)?)
}

/// Per-sample Euler-Lagrange residual along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElResidual {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ElResidual {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| crate::sup_norm(v)).fold(0.0, f64::max)
    }
}

/// `(d²/dt² L_a − d/dt L_p + L_q) / h(t)` at every interior sample, with the
/// time derivatives taken by central differences on the trajectory grid.
pub fn el_residual(traj: &Trajectory, spec: &LagrangianSpec) -> Result<ElResidual> {
    let m = traj.len();
    if m < 5 {
        return Err(Error::Contract(format!("need ≥ 5 samples, got {m}")));
    }
    let dt = traj.times[1] - traj.times[0];
    for (i, w) in traj.times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs() {
            return Err(Error::NonUniformGrid { index: i + 1 });
        }
    }
    let weight = spec.weight();
    let partials = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| spec.bar_partials(t, &s.q, &s.qdot, &s.qddot))
        .collect::<Result<Vec<_>>>()?;

    let mut out = ElResidual { times: Vec::with_capacity(m - 2), values: Vec::with_capacity(m - 2) };
    for i in 1..m - 1 {
        let t = traj.times[i];
        let wp = weight.relative(traj.times[i + 1], t);
        let wm = weight.relative(traj.times[i - 1], t);
        let (prev, cur, next) = (&partials[i - 1], &partials[i], &partials[i + 1]);
        let res = (0..cur.q.len())
            .map(|k| {
                let d_lp = (wp * next.p[k] - wm * prev.p[k]) / (2.0 * dt);
                let dd_la = (wp * next.a[k] - 2.0 * cur.a[k] + wm * prev.a[k]) / (dt * dt);
                dd_la - d_lp + cur.q[k]
            })
            .collect();
        out.times.push(t);
        out.values.push(res);
    }
    Ok(out)
}

/// Closed-form solution of the scalar `m x'' + θ x' + k x = 0`, as `(x, x')`.
pub fn damped_scalar_solution(m: f64, theta: f64, k: f64, x0: f64, v0: f64, t: f64) -> (f64, f64) {
    let a = theta / (2.0 * m);
    let disc = k / m - a * a;
    let decay = (-a * t).exp();
    if disc > 0.0 {
        let w = disc.sqrt();
        let (c1, c2) = (x0, (v0 + a * x0) / w);
        let (s, c) = (w * t).sin_cos();
        let x = decay * (c1 * c + c2 * s);
        let v = decay * ((-a * c1 + w * c2) * c + (-a * c2 - w * c1) * s);
        (x, v)
    } else if disc < 0.0 {
        let w = (-disc).sqrt();
        let (c1, c2) = (x0, (v0 + a * x0) / w);
        let (sh, ch) = ((w * t).sinh(), (w * t).cosh());
        let x = decay * (c1 * ch + c2 * sh);
        let v = decay * ((-a * c1 + w * c2) * ch + (-a * c2 + w * c1) * sh);
        (x, v)
    } else {
        let c2 = v0 + a * x0;
        let x = decay * (x0 + c2 * t);
        let v = decay * (c2 - a * (x0 + c2 * t));
        (x, v)
    }
}
