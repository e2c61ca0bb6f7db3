//! Lagrangian parameter bundles and their partial derivatives.
//!
//! Every Lagrangian here has the weighted form `L = h(t) · L̄(q, q̇, q̈)` with
//! `L̄ = T + γ V`. The weight `h` is only ever needed through its log-derivative
//! ratios `ḣ/h` and `ḧ/h`, which are constants for the supported weights, so
//! the dynamics never evaluate `h` itself and cannot overflow.

use std::sync::Arc;

use serde::Serialize;

use crate::potentials::Potential;
use crate::{check_dim, dot, Error, Result};

/// Positive time weight `h(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightFn {
    /// `h ≡ 1`
    Const1,
    /// `h(t) = e^{θt}`
    ExpPos { theta: f64 },
    /// `h(t) = e^{-t/ε}`
    ExpNeg { eps_dis: f64 },
}

impl WeightFn {
    pub fn exp_pos(theta: f64) -> Result<Self> {
        positive("theta", theta)?;
        Ok(WeightFn::ExpPos { theta })
    }

    pub fn exp_neg(eps_dis: f64) -> Result<Self> {
        positive("eps_dis", eps_dis)?;
        Ok(WeightFn::ExpNeg { eps_dis })
    }

    /// `ln h(t)`, finite for every finite `t`.
    pub fn log_weight(&self, t: f64) -> f64 {
        match *self {
            WeightFn::Const1 => 0.0,
            WeightFn::ExpPos { theta } => theta * t,
            WeightFn::ExpNeg { eps_dis } => -t / eps_dis,
        }
    }

    /// `h(t)`. Saturates to `0` or `inf` for large `|ln h|`; use
    /// [`WeightFn::log_weight`] or the ratios when that matters.
    pub fn weight(&self, t: f64) -> f64 {
        self.log_weight(t).exp()
    }

    /// `h(t)/h(s)` evaluated in the log domain.
    pub fn relative(&self, t: f64, s: f64) -> f64 {
        (self.log_weight(t) - self.log_weight(s)).exp()
    }

    /// `ḣ/h`
    pub fn ratio_dot(&self) -> f64 {
        match *self {
            WeightFn::Const1 => 0.0,
            WeightFn::ExpPos { theta } => theta,
            WeightFn::ExpNeg { eps_dis } => -1.0 / eps_dis,
        }
    }

    /// `ḧ/h`
    pub fn ratio_ddot(&self) -> f64 {
        match *self {
            WeightFn::Const1 => 0.0,
            WeightFn::ExpPos { theta } => theta * theta,
            WeightFn::ExpNeg { eps_dis } => 1.0 / (eps_dis * eps_dis),
        }
    }
}

/// `L̄ = ½ m ‖q̇‖² + γ V(q, t)` weighted by `h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstOrderLagrangian {
    pub mass: f64,
    pub gamma: f64,
    pub potential: Arc<Potential>,
    pub weight: WeightFn,
}

impl FirstOrderLagrangian {
    pub fn new(mass: f64, gamma: f64, potential: Arc<Potential>, weight: WeightFn) -> Result<Self> {
        positive("mass", mass)?;
        finite("gamma", gamma)?;
        Ok(Self { mass, gamma, potential, weight })
    }
}

/// Kinetic energy of `P = α₁ d/dt + α₂ d²/dt²`: `T = ‖P q‖² / (2θ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondOrderKinetic {
    pub alpha1: f64,
    pub alpha2: f64,
    pub theta: f64,
}

impl SecondOrderKinetic {
    pub fn new(alpha1: f64, alpha2: f64, theta: f64) -> Result<Self> {
        finite("alpha1", alpha1)?;
        finite("alpha2", alpha2)?;
        if alpha2 == 0.0 {
            return Err(Error::InvalidParameter("alpha2 must be nonzero".into()));
        }
        positive("theta", theta)?;
        Ok(Self { alpha1, alpha2, theta })
    }

    pub fn form(&self) -> KineticForm {
        let th2 = self.theta * self.theta;
        KineticForm {
            vel: self.alpha1 * self.alpha1 / th2,
            cross: self.alpha1 * self.alpha2 / th2,
            acc: self.alpha2 * self.alpha2 / th2,
        }
    }
}

/// Quadratic kinetic energy `T = ½ A ‖q̇‖² + B q̇·q̈ + ½ C ‖q̈‖²`.
///
/// Both acceleration-dependent Lagrangians reduce to this form, which gives
/// `T_p = A q̇ + B q̈` and `T_a = B q̇ + C q̈`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KineticForm {
    /// `A`
    pub vel: f64,
    /// `B`
    pub cross: f64,
    /// `C`
    pub acc: f64,
}

impl KineticForm {
    pub fn eval(&self, qdot: &[f64], qddot: &[f64]) -> f64 {
        0.5 * self.vel * dot(qdot, qdot) + self.cross * dot(qdot, qddot) + 0.5 * self.acc * dot(qddot, qddot)
    }

    pub fn t_p(&self, qdot: &[f64], qddot: &[f64]) -> Vec<f64> {
        qdot.iter().zip(qddot).map(|(v, a)| self.vel * v + self.cross * a).collect()
    }

    pub fn t_a(&self, qdot: &[f64], qddot: &[f64]) -> Vec<f64> {
        qdot.iter().zip(qddot).map(|(v, a)| self.cross * v + self.acc * a).collect()
    }
}

/// Evaluates `T = ‖α₁ q̇ + α₂ q̈‖² / (2θ²)`.
pub fn kinetic_eval(k: &SecondOrderKinetic, qdot: &[f64], qddot: &[f64]) -> Result<f64> {
    check_dim(qdot.len(), qddot.len())?;
    let sq: f64 = qdot
        .iter()
        .zip(qddot)
        .map(|(v, a)| {
            let u = k.alpha1 * v + k.alpha2 * a;
            u * u
        })
        .sum();
    Ok(sq / (2.0 * k.theta * k.theta))
}

/// Acceleration-dependent Lagrangian `h · (T + γV)` with `T` from `P`.
///
/// [`CaseISpec::new`] ties the weight to `e^{θt}` with the kinetic θ;
/// [`CaseISpec::autonomous`] uses `h ≡ 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseISpec {
    pub kinetic: SecondOrderKinetic,
    pub gamma: f64,
    pub potential: Arc<Potential>,
    pub weight: WeightFn,
}

impl CaseISpec {
    pub fn new(kinetic: SecondOrderKinetic, gamma: f64, potential: Arc<Potential>) -> Result<Self> {
        finite("gamma", gamma)?;
        let weight = WeightFn::exp_pos(kinetic.theta)?;
        Ok(Self { kinetic, gamma, potential, weight })
    }

    pub fn autonomous(kinetic: SecondOrderKinetic, gamma: f64, potential: Arc<Potential>) -> Result<Self> {
        finite("gamma", gamma)?;
        Ok(Self { kinetic, gamma, potential, weight: WeightFn::Const1 })
    }
}

/// `e^{-t/ε} (½ ε² ρ ‖q̈‖² + ½ ε ν ‖q̇‖² + γ V)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseIISpec {
    pub rho: f64,
    pub nu: f64,
    pub eps_dis: f64,
    pub gamma: f64,
    pub potential: Arc<Potential>,
}

impl CaseIISpec {
    pub fn new(rho: f64, nu: f64, eps_dis: f64, gamma: f64, potential: Arc<Potential>) -> Result<Self> {
        positive("rho", rho)?;
        positive("nu", nu)?;
        positive("eps_dis", eps_dis)?;
        finite("gamma", gamma)?;
        Ok(Self { rho, nu, eps_dis, gamma, potential })
    }

    pub fn form(&self) -> KineticForm {
        KineticForm { vel: self.eps_dis * self.nu, cross: 0.0, acc: self.eps_dis * self.eps_dis * self.rho }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum LagrangianSpec {
    FirstOrder(FirstOrderLagrangian),
    CaseI(CaseISpec),
    CaseII(CaseIISpec),
}

/// `(L_q, L_p, L_a)`
#[derive(Debug, Clone, PartialEq)]
pub struct Partials {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub a: Vec<f64>,
}

impl LagrangianSpec {
    pub fn potential(&self) -> &Arc<Potential> {
        match self {
            LagrangianSpec::FirstOrder(l) => &l.potential,
            LagrangianSpec::CaseI(l) => &l.potential,
            LagrangianSpec::CaseII(l) => &l.potential,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            LagrangianSpec::FirstOrder(l) => l.gamma,
            LagrangianSpec::CaseI(l) => l.gamma,
            LagrangianSpec::CaseII(l) => l.gamma,
        }
    }

    pub fn weight(&self) -> WeightFn {
        match self {
            LagrangianSpec::FirstOrder(l) => l.weight,
            LagrangianSpec::CaseI(l) => l.weight,
            LagrangianSpec::CaseII(l) => WeightFn::ExpNeg { eps_dis: l.eps_dis },
        }
    }

    /// Kinetic energy as a quadratic form in `(q̇, q̈)`.
    pub fn kinetic_form(&self) -> KineticForm {
        match self {
            LagrangianSpec::FirstOrder(l) => KineticForm { vel: l.mass, cross: 0.0, acc: 0.0 },
            LagrangianSpec::CaseI(l) => l.kinetic.form(),
            LagrangianSpec::CaseII(l) => l.form(),
        }
    }

    pub fn has_acceleration(&self) -> bool {
        !matches!(self, LagrangianSpec::FirstOrder(_))
    }

    /// Unweighted `L̄ = T + γ V`.
    pub fn bar_value(&self, t: f64, q: &[f64], qdot: &[f64], qddot: &[f64]) -> Result<f64> {
        check_jet(q, qdot, qddot)?;
        let v = self.potential().eval(q, t)?;
        let kin = match self {
            LagrangianSpec::CaseI(l) => kinetic_eval(&l.kinetic, qdot, qddot)?,
            _ => self.kinetic_form().eval(qdot, qddot),
        };
        Ok(kin + self.gamma() * v)
    }

    /// Weighted integrand `h(t) · L̄`.
    pub fn value(&self, t: f64, q: &[f64], qdot: &[f64], qddot: &[f64]) -> Result<f64> {
        Ok(self.weight().weight(t) * self.bar_value(t, q, qdot, qddot)?)
    }

    /// Partials of `L̄` (the weighted partials divided by `h(t)`).
    pub fn bar_partials(&self, t: f64, q: &[f64], qdot: &[f64], qddot: &[f64]) -> Result<Partials> {
        check_jet(q, qdot, qddot)?;
        let gamma = self.gamma();
        let l_q = self.potential().grad(q, t)?.into_iter().map(|g| gamma * g).collect();
        let form = self.kinetic_form();
        Ok(Partials { q: l_q, p: form.t_p(qdot, qddot), a: form.t_a(qdot, qddot) })
    }
}

/// Partials `(L_q, L_p, L_a)` of the weighted integrand `L = h · L̄`.
pub fn lagrangian_partials(spec: &LagrangianSpec, t: f64, q: &[f64], qdot: &[f64], qddot: &[f64]) -> Result<Partials> {
    let h = spec.weight().weight(t);
    let mut bar = spec.bar_partials(t, q, qdot, qddot)?;
    for v in bar.q.iter_mut().chain(bar.p.iter_mut()).chain(bar.a.iter_mut()) {
        *v *= h;
    }
    Ok(bar)
}

fn check_jet(q: &[f64], qdot: &[f64], qddot: &[f64]) -> Result<()> {
    check_dim(q.len(), qdot.len())?;
    check_dim(q.len(), qddot.len())
}

pub(crate) fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")));
    }
    Ok(())
}

pub(crate) fn finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
    }
    Ok(())
}
