//! Objective functions `V(q, t)`, the loss analog driving every learning law.
//!
//! Each potential exposes its value, gradient and Hessian in closed form.
//! Time dependence only enters through [`EmpiricalRisk`], whose active sample
//! window is a piecewise-constant function of `t`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::{check_dim, Error, Result};

/// Relative tolerance for the symmetry and semi-definiteness checks on `K`.
const MATRIX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Quadratic(Quadratic),
    Rosenbrock(Rosenbrock),
    EmpiricalRisk(EmpiricalRisk),
}

/// `V(q) = ½ (q − c)ᵀ K (q − c)` with `K` symmetric positive semi-definite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quadratic {
    #[serde(serialize_with = "serialize_matrix")]
    stiffness: DMatrix<f64>,
    center: Vec<f64>,
}

/// `V(x, y) = (a − x)² + b (y − x²)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rosenbrock {
    pub a: f64,
    pub b: f64,
}

/// Least-squares risk of a linear model `w · x` over the samples active at time `t`.
///
/// `V(w, t) = 1/(2|W(t)|) Σ_{i ∈ W(t)} (w · xᵢ − yᵢ)²`
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalRisk {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    schedule: Schedule,
}

/// Piecewise-constant sample schedule.
///
/// On `[k·period, (k+1)·period)` the active window is the `window` samples
/// starting at index `k mod N`, wrapping around the sample list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    pub period: f64,
    pub window: usize,
}

impl Quadratic {
    pub fn new(stiffness: DMatrix<f64>, center: Vec<f64>) -> Result<Self> {
        let n = center.len();
        if n == 0 {
            return Err(Error::InvalidParameter("quadratic potential needs dimension ≥ 1".into()));
        }
        if stiffness.nrows() != n || stiffness.ncols() != n {
            return Err(Error::InvalidParameter(format!(
                "stiffness is {}x{} but center has dimension {n}",
                stiffness.nrows(),
                stiffness.ncols()
            )));
        }
        if stiffness.iter().any(|v| !v.is_finite()) || center.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite quadratic coefficients".into()));
        }
        let scale = stiffness.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (stiffness[(i, j)] - stiffness[(j, i)]).abs() > MATRIX_TOL * scale {
                    return Err(Error::InvalidParameter(format!("stiffness is not symmetric at ({i}, {j})")));
                }
            }
        }
        let min_eig = SymmetricEigen::new(stiffness.clone()).eigenvalues.min();
        if min_eig < -MATRIX_TOL * scale {
            return Err(Error::InvalidParameter(format!("stiffness has negative eigenvalue {min_eig:e}")));
        }
        Ok(Self { stiffness, center })
    }

    /// Scalar `V(q) = ½ k (q − c)²`.
    pub fn scalar(k: f64, center: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, k), vec![center])
    }

    /// Diagonal stiffness with the given entries, centered at `center`.
    pub fn diagonal(diag: &[f64], center: Vec<f64>) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)), center)
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }
}

impl Rosenbrock {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter("non-finite Rosenbrock parameters".into()));
        }
        Ok(Self { a, b })
    }
}

impl Schedule {
    pub fn new(period: f64, window: usize) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidParameter(format!("schedule period must be > 0, got {period}")));
        }
        if window == 0 {
            return Err(Error::InvalidParameter("schedule window must be ≥ 1".into()));
        }
        Ok(Self { period, window })
    }
}

impl EmpiricalRisk {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>, schedule: Schedule) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidParameter("empirical risk needs at least one sample".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::InvalidParameter(format!("{} inputs but {} targets", inputs.len(), targets.len())));
        }
        let n = inputs[0].len();
        if n == 0 || inputs.iter().any(|x| x.len() != n) {
            return Err(Error::InvalidParameter("inputs must share a nonzero dimension".into()));
        }
        if schedule.window > inputs.len() {
            return Err(Error::InvalidParameter(format!(
                "window {} exceeds sample count {}",
                schedule.window,
                inputs.len()
            )));
        }
        Ok(Self { inputs, targets, schedule })
    }

    /// Full-batch risk: every sample is active at all times.
    pub fn full_batch(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        let window = inputs.len().max(1);
        Self::new(inputs, targets, Schedule::new(1.0, window)?)
    }

    /// Indices of the samples active at time `t`.
    pub fn active(&self, t: f64) -> impl Iterator<Item = usize> + '_ {
        let n = self.inputs.len();
        let slot = (t / self.schedule.period).floor();
        // slot is non-negative for t ≥ 0; rem_euclid keeps huge t in range.
        let start = slot.rem_euclid(n as f64) as usize;
        (0..self.schedule.window).map(move |j| (start + j) % n)
    }

    pub fn samples(&self) -> usize {
        self.inputs.len()
    }
}

impl Potential {
    pub fn dim(&self) -> usize {
        match self {
            Potential::Quadratic(p) => p.center.len(),
            Potential::Rosenbrock(_) => 2,
            Potential::EmpiricalRisk(p) => p.inputs[0].len(),
        }
    }

    /// Whether `V` depends on `t`.
    pub fn is_time_dependent(&self) -> bool {
        matches!(self, Potential::EmpiricalRisk(r) if r.schedule.window < r.inputs.len())
    }

    fn check(&self, q: &[f64], t: f64) -> Result<()> {
        check_dim(self.dim(), q.len())?;
        if !(t >= 0.0) {
            return Err(Error::Contract(format!("potential evaluated at t = {t} < 0")));
        }
        Ok(())
    }

    pub fn eval(&self, q: &[f64], t: f64) -> Result<f64> {
        self.check(q, t)?;
        Ok(match self {
            Potential::Quadratic(p) => {
                let d: Vec<f64> = q.iter().zip(&p.center).map(|(x, c)| x - c).collect();
                let mut acc = 0.0;
                for (i, di) in d.iter().enumerate() {
                    for (j, dj) in d.iter().enumerate() {
                        acc += di * p.stiffness[(i, j)] * dj;
                    }
                }
                0.5 * acc
            }
            Potential::Rosenbrock(r) => {
                let (x, y) = (q[0], q[1]);
                (r.a - x).powi(2) + r.b * (y - x * x).powi(2)
            }
            Potential::EmpiricalRisk(r) => {
                let mut acc = 0.0;
                for i in r.active(t) {
                    let res = crate::dot(&r.inputs[i], q) - r.targets[i];
                    acc += res * res;
                }
                0.5 * acc / r.schedule.window as f64
            }
        })
    }

    pub fn grad(&self, q: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; q.len()];
        self.grad_into(q, t, &mut out)?;
        Ok(out)
    }

    /// Allocation-free gradient for integrator inner loops.
    pub fn grad_into(&self, q: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        self.check(q, t)?;
        check_dim(q.len(), out.len())?;
        match self {
            Potential::Quadratic(p) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = q.iter().zip(&p.center).enumerate().map(|(j, (x, c))| p.stiffness[(i, j)] * (x - c)).sum();
                }
            }
            Potential::Rosenbrock(r) => {
                let (x, y) = (q[0], q[1]);
                let s = y - x * x;
                out[0] = -2.0 * (r.a - x) - 4.0 * r.b * x * s;
                out[1] = 2.0 * r.b * s;
            }
            Potential::EmpiricalRisk(r) => {
                out.fill(0.0);
                let scale = 1.0 / r.schedule.window as f64;
                for i in r.active(t) {
                    let res = crate::dot(&r.inputs[i], q) - r.targets[i];
                    for (o, x) in out.iter_mut().zip(&r.inputs[i]) {
                        *o += scale * res * x;
                    }
                }
            }
        }
        Ok(())
    }

    /// Exact Hessian. For [`EmpiricalRisk`] this is the Gauss-Newton matrix,
    /// which is exact because the model is linear.
    pub fn hessian(&self, q: &[f64], t: f64) -> Result<DMatrix<f64>> {
        self.check(q, t)?;
        Ok(match self {
            Potential::Quadratic(p) => p.stiffness.clone(),
            Potential::Rosenbrock(r) => {
                let (x, y) = (q[0], q[1]);
                let xy = -4.0 * r.b * x;
                DMatrix::from_row_slice(2, 2, &[2.0 - 4.0 * r.b * y + 12.0 * r.b * x * x, xy, xy, 2.0 * r.b])
            }
            Potential::EmpiricalRisk(r) => {
                let n = q.len();
                let mut h = DMatrix::zeros(n, n);
                let scale = 1.0 / r.schedule.window as f64;
                for i in r.active(t) {
                    let x = &r.inputs[i];
                    for a in 0..n {
                        for b in 0..n {
                            h[(a, b)] += scale * x[a] * x[b];
                        }
                    }
                }
                h
            }
        })
    }
}

impl From<Quadratic> for Potential {
    fn from(p: Quadratic) -> Self {
        Potential::Quadratic(p)
    }
}

impl From<Rosenbrock> for Potential {
    fn from(p: Rosenbrock) -> Self {
        Potential::Rosenbrock(p)
    }
}

impl From<EmpiricalRisk> for Potential {
    fn from(p: EmpiricalRisk) -> Self {
        Potential::EmpiricalRisk(p)
    }
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    serde::Serialize::serialize(&rows, s)
}
