//! Discretized action on a uniform time grid.
//!
//! For nodes `x₁ … x_N` with spacing `ε` the action is the left-endpoint sum
//! `A_ε = ε Σ_{k=1}^{N−1} L(t_k, x_k, Δx_k)`, `Δx_k = (x_{k+1} − x_k)/ε`,
//! with `t_k = t₁ + (k − 1) ε`. Its gradient is
//!
//! ```text
//! ∇₁ = ε L_q(1) − L_p(1)
//! ∇ᵢ = ε L_q(i) − (L_p(i) − L_p(i−1))      1 < i < N
//! ∇_N = L_p(N−1)
//! ```
//!
//! and the interior components divided by `ε` are the discrete
//! Euler-Lagrange residuals.

use serde::Serialize;

use crate::lagrangian::{positive, FirstOrderLagrangian};
use crate::{check_dim, dot, sup_norm, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretePath {
    values: Vec<Vec<f64>>,
    eps_grid: f64,
}

impl DiscretePath {
    pub fn new(values: Vec<Vec<f64>>, eps_grid: f64) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::InvalidParameter(format!("path needs ≥ 3 nodes, got {}", values.len())));
        }
        positive("eps_grid", eps_grid)?;
        let n = values[0].len();
        if n == 0 {
            return Err(Error::InvalidParameter("path nodes must have dimension ≥ 1".into()));
        }
        for v in &values {
            check_dim(n, v.len())?;
        }
        Ok(Self { values, eps_grid })
    }

    /// Scalar path from a list of node values.
    pub fn scalar(values: &[f64], eps_grid: f64) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect(), eps_grid)
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn eps_grid(&self) -> f64 {
        self.eps_grid
    }

    pub fn nodes(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// `Δx_k` for `k < N`.
    fn slope(&self, k: usize) -> Vec<f64> {
        self.values[k + 1].iter().zip(&self.values[k]).map(|(b, a)| (b - a) / self.eps_grid).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.nodes() as f64;
        (0..self.dim()).map(|j| self.values.iter().map(|v| v[j]).sum::<f64>() / n).collect()
    }
}

/// `L(t, x, p) = h(t)/h(t_start) · (½ m ‖p‖² + γ V(x, t))`.
///
/// Normalizing the weight by its value at the first node keeps the action
/// finite and only rescales it by a constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteLagrangian {
    pub lagrangian: FirstOrderLagrangian,
    pub t_start: f64,
}

impl DiscreteLagrangian {
    pub fn new(lagrangian: FirstOrderLagrangian, t_start: f64) -> Self {
        Self { lagrangian, t_start }
    }

    /// Weight at `t` relative to the weight at `t_start`.
    pub fn weight(&self, t: f64) -> f64 {
        self.lagrangian.weight.relative(t, self.t_start)
    }

    pub fn value(&self, t: f64, x: &[f64], p: &[f64]) -> Result<f64> {
        let l = &self.lagrangian;
        Ok(self.weight(t) * (0.5 * l.mass * dot(p, p) + l.gamma * l.potential.eval(x, t)?))
    }

    /// `(L_q, L_p)`
    pub fn partials(&self, t: f64, x: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let l = &self.lagrangian;
        let w = self.weight(t);
        let l_q = l.potential.grad(x, t)?.into_iter().map(|g| w * l.gamma * g).collect();
        let l_p = p.iter().map(|v| w * l.mass * v).collect();
        Ok((l_q, l_p))
    }

    /// Time of the zero-based node `k`.
    pub fn node_time(&self, k: usize, eps: f64) -> f64 {
        self.t_start + k as f64 * eps
    }
}

pub fn action(path: &DiscretePath, l: &DiscreteLagrangian) -> Result<f64> {
    let eps = path.eps_grid;
    let mut sum = 0.0;
    for k in 0..path.nodes() - 1 {
        sum += l.value(l.node_time(k, eps), &path.values[k], &path.slope(k))?;
    }
    Ok(eps * sum)
}

/// Exact gradient of [`action`] with respect to every node.
pub fn action_gradient(path: &DiscretePath, l: &DiscreteLagrangian) -> Result<Vec<Vec<f64>>> {
    let eps = path.eps_grid;
    let nodes = path.nodes();
    let mut grad = vec![vec![0.0; path.dim()]; nodes];
    for k in 0..nodes - 1 {
        let (l_q, l_p) = l.partials(l.node_time(k, eps), &path.values[k], &path.slope(k))?;
        for j in 0..path.dim() {
            grad[k][j] += eps * l_q[j] - l_p[j];
            grad[k + 1][j] += l_p[j];
        }
    }
    Ok(grad)
}

/// `L_q(i) − (L_p(i) − L_p(i−1))/ε` for the interior nodes `i = 2 … N−1`.
pub fn discrete_el_residual(path: &DiscretePath, l: &DiscreteLagrangian) -> Result<Vec<Vec<f64>>> {
    let eps = path.eps_grid;
    let mut prev_p = l.partials(l.node_time(0, eps), &path.values[0], &path.slope(0))?.1;
    let mut out = Vec::with_capacity(path.nodes() - 2);
    for i in 1..path.nodes() - 1 {
        let (l_q, l_p) = l.partials(l.node_time(i, eps), &path.values[i], &path.slope(i))?;
        out.push((0..path.dim()).map(|j| l_q[j] - (l_p[j] - prev_p[j]) / eps).collect());
        prev_p = l_p;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReport {
    pub iterations: usize,
    pub grad_norm: f64,
    pub action: f64,
    pub converged: bool,
}

/// Plain gradient descent `X ← X − η ∇A_ε` on path space.
///
/// With `clamp_first` the first node is held fixed. Stops once the sup-norm of
/// the free gradient components is at most `tol`.
pub fn gradient_flow_minimize(
    path0: &DiscretePath,
    l: &DiscreteLagrangian,
    eta: f64,
    tol: f64,
    max_iters: usize,
    clamp_first: bool,
) -> Result<(DiscretePath, FlowReport)> {
    positive("eta", eta)?;
    positive("tol", tol)?;
    let mut path = path0.clone();
    let first_free = usize::from(clamp_first);
    let mut iterations = 0;
    loop {
        let grad = action_gradient(&path, l)?;
        let grad_norm = grad[first_free..].iter().map(|g| sup_norm(g)).fold(0.0, f64::max);
        if !grad_norm.is_finite() {
            return Err(Error::Divergence { iteration: iterations });
        }
        if grad_norm <= tol || iterations == max_iters {
            let value = action(&path, l)?;
            let report = FlowReport { iterations, grad_norm, action: value, converged: grad_norm <= tol };
            return Ok((path, report));
        }
        for (x, g) in path.values.iter_mut().zip(&grad).skip(first_free) {
            for (xj, gj) in x.iter_mut().zip(g) {
                *xj -= eta * gj;
            }
        }
        iterations += 1;
        if !action(&path, l)?.is_finite() {
            return Err(Error::Divergence { iteration: iterations });
        }
    }
}

/// Marches the discrete Euler-Lagrange equation forward from `x₁, x₂`.
///
/// Each interior condition is solved for the next node:
/// `Δx_i = (w_{i−1} Δx_{i−1} + ε w_i γ V_q(x_i) / m) / w_i`.
pub fn discrete_el_march(
    x1: &[f64],
    x2: &[f64],
    nodes: usize,
    eps_grid: f64,
    l: &DiscreteLagrangian,
) -> Result<DiscretePath> {
    check_dim(x1.len(), x2.len())?;
    positive("eps_grid", eps_grid)?;
    if nodes < 3 {
        return Err(Error::InvalidParameter(format!("path needs ≥ 3 nodes, got {nodes}")));
    }
    let lag = &l.lagrangian;
    let mut values = vec![x1.to_vec(), x2.to_vec()];
    let mut slope: Vec<f64> = x2.iter().zip(x1).map(|(b, a)| (b - a) / eps_grid).collect();
    for i in 1..nodes - 1 {
        let t = l.node_time(i, eps_grid);
        let (w_prev, w) = (l.weight(l.node_time(i - 1, eps_grid)), l.weight(t));
        let g = lag.potential.grad(&values[i], t)?;
        slope = slope.iter().zip(&g).map(|(s, g)| (w_prev * s + eps_grid * w * lag.gamma * g / lag.mass) / w).collect();
        let next = values[i].iter().zip(&slope).map(|(x, s)| x + eps_grid * s).collect();
        values.push(next);
    }
    DiscretePath::new(values, eps_grid)
}
