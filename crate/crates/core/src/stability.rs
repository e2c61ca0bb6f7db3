//! Linear stability of the learning laws around equilibria.
//!
//! Near an equilibrium of `V` with Hessian eigenvalue `k` every law decouples
//! into scalar linear ODEs along the Hessian eigenvectors. Substituting
//! `q = e^{st}` gives a characteristic polynomial of degree ≤ 4 whose roots
//! decide stability; the Routh-Hurwitz test decides the same question from
//! the coefficients alone.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::Law;
use crate::lagrangian::WeightFn;
use crate::potentials::Potential;
use crate::{Error, Result};

/// Real parts within this band of zero are reported as marginal.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Backward-error bound every computed root must satisfy.
const BACKWARD_TOL: f64 = 1e-9;

/// Real polynomial, highest degree first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharPoly {
    coeffs: Vec<f64>,
}

impl CharPoly {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() < 2 || coeffs.len() > 5 {
            return Err(Error::Contract(format!(
                "characteristic polynomial must have degree 1..=4, got {} coefficients",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Contract("non-finite polynomial coefficient".into()));
        }
        if coeffs[0] == 0.0 {
            return Err(Error::Contract("leading coefficient is zero".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    fn eval_with_derivative(&self, s: Complex64) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        self.coeffs.iter().fold((zero, zero), |(p, dp), &c| (p * s + c, dp * s + p))
    }

    /// `Σ |aᵢ| |s|^{n−i}`, the natural scale of `|p(s)|`.
    fn magnitude_scale(&self, s: Complex64) -> f64 {
        let r = s.norm();
        self.coeffs.iter().fold(0.0, |acc, &c| acc * r + c.abs())
    }
}

/// Characteristic polynomial of `law` linearized with `V_q = k q`.
pub fn characteristic_polynomial(law: &Law, k_eigen: f64) -> Result<CharPoly> {
    law.validate()?;
    let coeffs = match *law {
        Law::GradientFlow { theta } => vec![theta, k_eigen],
        Law::DampedOscillator { mass, theta } => vec![mass, theta, k_eigen],
        Law::WeightedFirstOrder { mass, gamma, weight } => {
            vec![mass, weight.ratio_dot() * mass, -gamma * k_eigen]
        }
        Law::CollapsedTheta { alpha1, alpha2, gamma } => {
            vec![1.0, alpha1 / alpha2, gamma * k_eigen / (alpha2 * alpha2)]
        }
        Law::CollapsedEps { rho, nu, gamma } => vec![rho, nu, gamma * k_eigen],
        Law::FourthStab { kinetic, gamma, weight } => {
            let (a1, a2, th) = (kinetic.alpha1, kinetic.alpha2, kinetic.theta);
            if weight == (WeightFn::ExpPos { theta: th }) {
                let den = a2 * a2 * th * th;
                vec![
                    1.0 / (th * th),
                    2.0 / th,
                    (a1 * a2 * th + a2 * a2 * th * th - a1 * a1) / den,
                    (a1 * a2 * th * th - a1 * a1 * th) / den,
                    gamma * k_eigen / (a2 * a2),
                ]
            } else {
                let form = kinetic.form();
                let (r, s) = (weight.ratio_dot(), weight.ratio_ddot());
                vec![
                    form.acc,
                    2.0 * r * form.acc,
                    r * form.cross + s * form.acc - form.vel,
                    s * form.cross - r * form.vel,
                    gamma * k_eigen,
                ]
            }
        }
        Law::FourthUns { rho, nu, eps_dis, gamma } => {
            vec![eps_dis * eps_dis * rho, -2.0 * eps_dis * rho, rho - eps_dis * nu, nu, gamma * k_eigen]
        }
    };
    CharPoly::new(coeffs)
}

/// All complex roots, with multiplicity.
///
/// Eigenvalues of the companion matrix, refined by Newton's method on the
/// polynomial and checked against a scaled backward-error bound.
pub fn polynomial_roots(p: &CharPoly) -> Result<Vec<Complex64>> {
    let c = p.coeffs();
    let n = p.degree();
    let mut roots: Vec<Complex64> = if n == 1 {
        vec![Complex64::new(-c[1] / c[0], 0.0)]
    } else {
        let mut companion = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            companion[(0, j)] = -c[j + 1] / c[0];
        }
        for i in 1..n {
            companion[(i, i - 1)] = 1.0;
        }
        companion.complex_eigenvalues().iter().copied().collect()
    };

    for r in roots.iter_mut() {
        let mut best = *r;
        let mut best_val = p.eval(best).norm();
        let mut z = *r;
        for _ in 0..8 {
            let (val, der) = p.eval_with_derivative(z);
            if val.norm() == 0.0 || der.norm() == 0.0 {
                break;
            }
            z -= val / der;
            let v = p.eval(z).norm();
            if v < best_val {
                best = z;
                best_val = v;
            }
        }
        *r = best;
        if r.im.abs() <= 1e-14 * r.re.abs() {
            r.im = 0.0;
        }
    }

    for r in &roots {
        let scale = p.magnitude_scale(*r);
        if p.eval(*r).norm() > BACKWARD_TOL * scale {
            return Err(Error::Contract(format!("root {r} fails the backward-error check")));
        }
    }
    roots.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(roots)
}

/// Routh-Hurwitz test: `true` iff every root has negative real part.
pub fn routh_hurwitz_stable(p: &CharPoly) -> Result<bool> {
    let n = p.degree();
    if !(2..=4).contains(&n) {
        return Err(Error::Contract(format!("Routh-Hurwitz test supports degree 2..=4, got {n}")));
    }
    let sign = p.coeffs()[0].signum();
    let a: Vec<f64> = p.coeffs().iter().map(|c| c * sign).collect();
    if a.iter().any(|&c| c <= 0.0) {
        return Ok(false);
    }
    // Routh array, first column only needs to stay positive.
    let mut upper: Vec<f64> = a.iter().step_by(2).copied().collect();
    let mut lower: Vec<f64> = a.iter().skip(1).step_by(2).copied().collect();
    for _ in 0..n - 1 {
        let pivot = lower[0];
        if pivot <= 0.0 {
            return Ok(false);
        }
        let next: Vec<f64> = (0..upper.len().saturating_sub(1))
            .map(|i| {
                let l = lower.get(i + 1).copied().unwrap_or(0.0);
                (pivot * upper[i + 1] - upper[0] * l) / pivot
            })
            .collect();
        if next.is_empty() {
            break;
        }
        upper = std::mem::replace(&mut lower, next);
    }
    Ok(lower[0] > 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Marginal,
    Unstable,
}

impl Verdict {
    pub fn from_max_real_part(max_re: f64) -> Self {
        if max_re.abs() <= MARGINAL_TOL {
            Verdict::Marginal
        } else if max_re < 0.0 {
            Verdict::Stable
        } else {
            Verdict::Unstable
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub law: Law,
    pub k_eigen: f64,
    pub coeffs: Vec<f64>,
    /// `[re, im]` pairs, sorted by decreasing real part.
    pub roots: Vec<[f64; 2]>,
    pub max_real_part: f64,
    pub verdict: Verdict,
    /// Routh-Hurwitz result; absent for degree-1 polynomials.
    pub hurwitz_stable: Option<bool>,
}

impl StabilityReport {
    pub fn for_eigenvalue(law: &Law, k_eigen: f64) -> Result<Self> {
        let poly = characteristic_polynomial(law, k_eigen)?;
        let roots = polynomial_roots(&poly)?;
        let max_real_part = roots.iter().map(|r| r.re).fold(f64::NEG_INFINITY, f64::max);
        let hurwitz_stable = if poly.degree() >= 2 { Some(routh_hurwitz_stable(&poly)?) } else { None };
        Ok(Self {
            law: law.clone(),
            k_eigen,
            coeffs: poly.coeffs().to_vec(),
            roots: roots.iter().map(|r| [r.re, r.im]).collect(),
            max_real_part,
            verdict: Verdict::from_max_real_part(max_real_part),
            hurwitz_stable,
        })
    }
}

/// One report per Hessian eigenvalue of `p` at `equilibrium`.
pub fn classify(law: &Law, p: &Potential, equilibrium: &[f64], t: f64) -> Result<Vec<StabilityReport>> {
    let grad_norm = crate::sup_norm(&p.grad(equilibrium, t)?);
    if grad_norm > 1e-8 {
        return Err(Error::NotEquilibrium { grad_norm });
    }
    let hessian = p.hessian(equilibrium, t)?;
    let mut eigs: Vec<f64> = SymmetricEigen::new(hessian).eigenvalues.iter().copied().collect();
    eigs.sort_by(f64::total_cmp);
    eigs.iter().map(|&k| StabilityReport::for_eigenvalue(law, k)).collect()
}

/// Worst verdict across reports.
pub fn overall(reports: &[StabilityReport]) -> Verdict {
    if reports.iter().any(|r| r.verdict == Verdict::Unstable) {
        Verdict::Unstable
    } else if reports.iter().any(|r| r.verdict == Verdict::Marginal) {
        Verdict::Marginal
    } else {
        Verdict::Stable
    }
}
