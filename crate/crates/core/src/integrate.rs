//! Explicit Runge-Kutta integration of flat first-order systems.
//!
//! Higher-order laws are packed as contiguous blocks, `q` first: second-order
//! laws use `(q, q̇)` (2n scalars), fourth-order laws `(q, q̇, q̈, q⁽³⁾)` (4n).
//!
//! Integration never fails on blowup. A state whose norm exceeds
//! [`IntegratorOptions::blowup_norm`], or a non-finite derivative, stops the
//! run and sets [`TrajectoryMeta::diverged`].

use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    /// Classical RK4 on a uniform grid; every `stride`-th step is recorded.
    Rk4Fixed { step: f64, stride: usize },
    /// Dormand-Prince 5(4) with PI step control, resampled through its
    /// 4th-order dense output onto a uniform grid of spacing `sample_step`.
    Rk45Adaptive { rtol: f64, atol: f64, h_min: f64, h_max: f64, sample_step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorOptions {
    pub method: Method,
    pub blowup_norm: f64,
}

pub const DEFAULT_BLOWUP_NORM: f64 = 1e12;

impl IntegratorOptions {
    pub fn rk4(step: f64) -> Self {
        Self { method: Method::Rk4Fixed { step, stride: 1 }, blowup_norm: DEFAULT_BLOWUP_NORM }
    }

    pub fn rk45(rtol: f64, atol: f64, sample_step: f64) -> Self {
        Self {
            method: Method::Rk45Adaptive { rtol, atol, h_min: 1e-12, h_max: f64::INFINITY, sample_step },
            blowup_norm: DEFAULT_BLOWUP_NORM,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        if let Method::Rk4Fixed { stride: s, .. } = &mut self.method {
            *s = stride;
        }
        self
    }

    pub fn with_blowup_norm(mut self, norm: f64) -> Self {
        self.blowup_norm = norm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.blowup_norm > 0.0) {
            return bad(format!("blowup_norm must be > 0, got {}", self.blowup_norm));
        }
        match self.method {
            Method::Rk4Fixed { step, stride } => {
                if !(step > 0.0) || !step.is_finite() {
                    return bad(format!("step must be > 0, got {step}"));
                }
                if stride == 0 {
                    return bad("stride must be ≥ 1".into());
                }
            }
            Method::Rk45Adaptive { rtol, atol, h_min, h_max, sample_step } => {
                if !(rtol > 0.0) || !(atol > 0.0) {
                    return bad(format!("tolerances must be > 0, got rtol={rtol}, atol={atol}"));
                }
                if !(h_min > 0.0) || !(h_min <= h_max) {
                    return bad(format!("need 0 < h_min ≤ h_max, got {h_min}, {h_max}"));
                }
                if !(sample_step > 0.0) || !sample_step.is_finite() {
                    return bad(format!("sample_step must be > 0, got {sample_step}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub integrator: &'static str,
    /// Grid spacing of the recorded samples.
    pub sample_step: f64,
    /// Internal step: the fixed step for RK4, the smallest accepted step for RK45.
    pub min_step: f64,
    pub max_step: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub diverged: bool,
    pub blowup_time: Option<f64>,
}

/// Flat-state solution sampled on a uniform grid.
///
/// After divergence under RK45 the last sample is the offending state at its
/// own (off-grid) time.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

fn l2(s: &[f64]) -> f64 {
    s.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_finite(t: f64, k: &[f64]) -> Result<()> {
    match k.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { t, index }),
        None => Ok(()),
    }
}

/// One classical RK4 step from `(t, s)` with step `h`.
pub fn rk4_step<F>(rhs: &F, t: f64, s: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be > 0, got {h}")));
    }
    let n = s.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    rhs(t, s, &mut k1)?;
    check_finite(t, &k1)?;
    for i in 0..n {
        tmp[i] = s[i] + 0.5 * h * k1[i];
    }
    rhs(t + 0.5 * h, &tmp, &mut k2)?;
    check_finite(t + 0.5 * h, &k2)?;
    for i in 0..n {
        tmp[i] = s[i] + 0.5 * h * k2[i];
    }
    rhs(t + 0.5 * h, &tmp, &mut k3)?;
    check_finite(t + 0.5 * h, &k3)?;
    for i in 0..n {
        tmp[i] = s[i] + h * k3[i];
    }
    rhs(t + h, &tmp, &mut k4)?;
    check_finite(t + h, &k4)?;

    Ok((0..n).map(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// Integrates `ṡ = rhs(t, s)` from `t0` to `t_end`.
pub fn integrate<F>(rhs: F, s0: &[f64], t0: f64, t_end: f64, opts: &IntegratorOptions) -> Result<Solution>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    opts.validate()?;
    if !(t_end > t0) || !t_end.is_finite() || !t0.is_finite() {
        return Err(Error::InvalidParameter(format!("need finite t_end > t0, got [{t0}, {t_end}]")));
    }
    match opts.method {
        Method::Rk4Fixed { step, stride } => integrate_rk4(&rhs, s0, t0, t_end, step, stride, opts.blowup_norm),
        Method::Rk45Adaptive { rtol, atol, h_min, h_max, sample_step } => {
            let ctl = Dopri5Control { rtol, atol, h_min, h_max };
            integrate_dopri5(&rhs, s0, t0, t_end, sample_step, &ctl, opts.blowup_norm)
        }
    }
}

/// Number of uniform intervals of spacing at most `step` covering `span`.
fn grid_intervals(span: f64, step: f64) -> usize {
    ((span / step) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

fn integrate_rk4<F>(
    rhs: &F,
    s0: &[f64],
    t0: f64,
    t_end: f64,
    step: f64,
    stride: usize,
    blowup_norm: f64,
) -> Result<Solution>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n_steps = grid_intervals(t_end - t0, step);
    let h = (t_end - t0) / n_steps as f64;
    let mut meta = TrajectoryMeta {
        integrator: "rk4",
        sample_step: h * stride as f64,
        min_step: h,
        max_step: h,
        accepted_steps: 0,
        rejected_steps: 0,
        diverged: false,
        blowup_time: None,
    };
    let mut times = vec![t0];
    let mut states = vec![s0.to_vec()];
    if l2(s0) > blowup_norm {
        meta.diverged = true;
        meta.blowup_time = Some(t0);
        return Ok(Solution { times, states, meta });
    }

    let mut s = s0.to_vec();
    for k in 0..n_steps {
        let t = t0 + k as f64 * h;
        let t_next = if k + 1 == n_steps { t_end } else { t0 + (k + 1) as f64 * h };
        s = match rk4_step(rhs, t, &s, h) {
            Ok(next) => next,
            Err(Error::NonFinite { t, .. }) => {
                meta.diverged = true;
                meta.blowup_time = Some(t);
                break;
            }
            Err(e) => return Err(e),
        };
        meta.accepted_steps += 1;
        let norm = l2(&s);
        let blew_up = !(norm <= blowup_norm);
        if (k + 1) % stride == 0 || k + 1 == n_steps || blew_up {
            times.push(t_next);
            states.push(s.clone());
        }
        if blew_up {
            meta.diverged = true;
            meta.blowup_time = Some(t_next);
            break;
        }
    }
    Ok(Solution { times, states, meta })
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// 5th-order weights minus embedded 4th-order weights.
const E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];
/// Dense-output polynomial coefficients (Shampine's continuous extension);
/// row `i` gives stage `i`'s weight as a polynomial in `σ ∈ [0, 1]` without constant term.
const P: [[f64; 4]; 7] = [
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0],
    [0.0; 4],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0],
    [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
];

struct Dopri5Control {
    rtol: f64,
    atol: f64,
    h_min: f64,
    h_max: f64,
}

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

impl Dopri5Control {
    fn err_norm(&self, y0: &[f64], y1: &[f64], err: &[f64]) -> f64 {
        let n = y0.len().max(1) as f64;
        let sum: f64 = (0..y0.len())
            .map(|i| {
                let sc = self.atol + self.rtol * y0[i].abs().max(y1[i].abs());
                (err[i] / sc).powi(2)
            })
            .sum();
        (sum / n).sqrt()
    }

    fn initial_step<F>(&self, rhs: &F, t0: f64, y0: &[f64], f0: &[f64]) -> Result<f64>
    where
        F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let zeros = vec![0.0; y0.len()];
        let d0 = self.err_norm(y0, y0, y0);
        let d1 = self.err_norm(y0, y0, f0);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.h_max);
        let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
        let mut f1 = zeros.clone();
        rhs(t0 + h0, &y1, &mut f1)?;
        let df: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = self.err_norm(y0, y0, &df) / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        Ok((100.0 * h0).min(h1).min(self.h_max).max(self.h_min))
    }
}

fn integrate_dopri5<F>(
    rhs: &F,
    s0: &[f64],
    t0: f64,
    t_end: f64,
    sample_step: f64,
    ctl: &Dopri5Control,
    blowup_norm: f64,
) -> Result<Solution>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = s0.len();
    let n_samples = grid_intervals(t_end - t0, sample_step);
    let dt = (t_end - t0) / n_samples as f64;
    let grid = |j: usize| if j == n_samples { t_end } else { t0 + j as f64 * dt };

    let mut meta = TrajectoryMeta {
        integrator: "dopri5",
        sample_step: dt,
        min_step: f64::INFINITY,
        max_step: 0.0,
        accepted_steps: 0,
        rejected_steps: 0,
        diverged: false,
        blowup_time: None,
    };
    let mut times = vec![t0];
    let mut states = vec![s0.to_vec()];
    if l2(s0) > blowup_norm {
        meta.diverged = true;
        meta.blowup_time = Some(t0);
        return Ok(Solution { times, states, meta });
    }

    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y = s0.to_vec();
    let mut t = t0;
    rhs(t, &y, &mut k[0])?;
    if check_finite(t, &k[0]).is_err() {
        meta.diverged = true;
        meta.blowup_time = Some(t);
        return Ok(Solution { times, states, meta });
    }
    let mut h = ctl.initial_step(rhs, t0, &y, &k[0])?;
    let mut err_prev = 1e-4_f64;
    let mut rejected_last = false;
    let mut next_sample = 1;
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];

    'outer: while t < t_end {
        if h < ctl.h_min {
            return Err(Error::StepUnderflow { t, h });
        }
        let last = t + h >= t_end;
        let h_try = if last { t_end - t } else { h };

        let mut non_finite = None;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += h_try * A[s][j] * kj[i];
                }
                tmp[i] = acc;
            }
            let ts = t + C[s] * h_try;
            rhs(ts, &tmp, &mut k[s])?;
            if let Err(e) = check_finite(ts, &k[s]) {
                non_finite = Some(e);
                break;
            }
            if s == 6 {
                y_new.copy_from_slice(&tmp);
            }
        }
        if let Some(Error::NonFinite { t: tb, .. }) = non_finite {
            meta.diverged = true;
            meta.blowup_time = Some(tb);
            break 'outer;
        }
        for i in 0..n {
            err[i] = h_try * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>();
        }
        let err_norm = ctl.err_norm(&y, &y_new, &err);
        if !err_norm.is_finite() {
            meta.diverged = true;
            meta.blowup_time = Some(t + h_try);
            break;
        }

        if err_norm <= 1.0 {
            meta.accepted_steps += 1;
            meta.min_step = meta.min_step.min(h_try);
            meta.max_step = meta.max_step.max(h_try);
            let t_new = if last { t_end } else { t + h_try };
            // Dense output onto grid points in (t, t_new].
            while next_sample <= n_samples && grid(next_sample) <= t_new {
                let tg = grid(next_sample);
                let sample = if tg == t_new {
                    y_new.clone()
                } else {
                    let sigma = (tg - t) / h_try;
                    let pw = [sigma, sigma * sigma, sigma.powi(3), sigma.powi(4)];
                    (0..n)
                        .map(|i| {
                            let mut acc = 0.0;
                            for s in 0..7 {
                                let b: f64 = (0..4).map(|r| P[s][r] * pw[r]).sum();
                                acc += b * k[s][i];
                            }
                            y[i] + h_try * acc
                        })
                        .collect()
                };
                times.push(tg);
                states.push(sample);
                next_sample += 1;
            }
            if l2(&y_new) > blowup_norm {
                if times.last() != Some(&t_new) {
                    times.push(t_new);
                    states.push(y_new.clone());
                }
                meta.diverged = true;
                meta.blowup_time = Some(t_new);
                break;
            }
            y.copy_from_slice(&y_new);
            t = t_new;
            // FSAL: last stage is the derivative at the new point.
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);

            let mut fac = SAFETY * err_norm.max(1e-10).powf(-ALPHA) * err_prev.powf(BETA);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if rejected_last {
                fac = fac.min(1.0);
            }
            h = (h_try * fac).min(ctl.h_max);
            err_prev = err_norm.max(1e-4);
            rejected_last = false;
        } else {
            meta.rejected_steps += 1;
            let fac = (SAFETY * err_norm.powf(-0.2)).max(FAC_MIN);
            h = h_try * fac;
            rejected_last = true;
        }
    }
    if meta.accepted_steps == 0 {
        meta.min_step = 0.0;
    }
    Ok(Solution { times, states, meta })
}
