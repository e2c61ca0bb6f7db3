//! Scenario configuration: a single JSON document with explicitly named
//! physical parameters.

use std::collections::BTreeSet;
use std::sync::Arc;

use cal_core::integrate::{IntegratorOptions, Method, DEFAULT_BLOWUP_NORM};
use cal_core::potentials::{EmpiricalRisk, Potential, Quadratic, Rosenbrock, Schedule};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Oscillator,
    GradientFlowLimit,
    FourthStab,
    FourthUns,
    CollapseTheta,
    CollapseEps,
    BlowupHorizon,
    DiscreteEl,
    GradflowVsEl,
    StabilitySweep,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Oscillator => "oscillator",
            Scenario::GradientFlowLimit => "gradient-flow-limit",
            Scenario::FourthStab => "fourth-stab",
            Scenario::FourthUns => "fourth-uns",
            Scenario::CollapseTheta => "collapse-theta",
            Scenario::CollapseEps => "collapse-eps",
            Scenario::BlowupHorizon => "blowup-horizon",
            Scenario::DiscreteEl => "discrete-el",
            Scenario::GradflowVsEl => "gradflow-vs-el",
            Scenario::StabilitySweep => "stability-sweep",
        }
    }

    /// Scenarios whose primary law is expected to blow up.
    pub fn expects_divergence(self) -> bool {
        matches!(self, Scenario::FourthUns | Scenario::BlowupHorizon | Scenario::CollapseEps)
    }

    /// Grid axes `run` iterates over; `sweep` always uses every present grid.
    pub fn run_axes(self) -> &'static [Axis] {
        match self {
            Scenario::GradientFlowLimit => &[Axis::M],
            Scenario::CollapseTheta => &[Axis::Theta],
            Scenario::CollapseEps => &[Axis::EpsDis, Axis::TEnd],
            Scenario::BlowupHorizon => &[Axis::EpsDis],
            Scenario::StabilitySweep => &[Axis::Theta, Axis::EpsDis, Axis::M],
            _ => &[],
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            Scenario::Oscillator | Scenario::GradientFlowLimit => &["m", "theta"],
            Scenario::FourthStab | Scenario::CollapseTheta => &["alpha1", "alpha2", "theta", "gamma"],
            Scenario::FourthUns | Scenario::CollapseEps | Scenario::BlowupHorizon => &["rho", "nu", "eps_dis", "gamma"],
            Scenario::DiscreteEl | Scenario::GradflowVsEl => &["m", "gamma", "eps_grid"],
            Scenario::StabilitySweep => &[],
        }
    }

    fn integrates(self) -> bool {
        !matches!(self, Scenario::DiscreteEl | Scenario::GradflowVsEl | Scenario::StabilitySweep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Theta,
    EpsDis,
    M,
    TEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Quadratic {
        stiffness: Vec<Vec<f64>>,
        center: Vec<f64>,
    },
    Rosenbrock {
        a: f64,
        b: f64,
    },
    EmpiricalRisk {
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        #[serde(default)]
        schedule: Option<ScheduleConfig>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub period: f64,
    pub window: usize,
}

impl PotentialConfig {
    pub fn build(&self) -> Result<Potential, CliError> {
        Ok(match self {
            PotentialConfig::Quadratic { stiffness, center } => {
                let n = stiffness.len();
                if n == 0 || stiffness.iter().any(|row| row.len() != n) {
                    return Err(CliError::Config("stiffness must be a non-empty square matrix".into()));
                }
                let m = DMatrix::from_fn(n, n, |i, j| stiffness[i][j]);
                Quadratic::new(m, center.clone())?.into()
            }
            PotentialConfig::Rosenbrock { a, b } => Rosenbrock::new(*a, *b)?.into(),
            PotentialConfig::EmpiricalRisk { inputs, targets, schedule } => match schedule {
                Some(s) => EmpiricalRisk::new(inputs.clone(), targets.clone(), Schedule::new(s.period, s.window)?)?,
                None => EmpiricalRisk::full_batch(inputs.clone(), targets.clone())?,
            }
            .into(),
        })
    }

    /// A point where the gradient vanishes, when known in closed form.
    pub fn equilibrium(&self) -> Option<Vec<f64>> {
        match self {
            PotentialConfig::Quadratic { center, .. } => Some(center.clone()),
            PotentialConfig::Rosenbrock { a, .. } => Some(vec![*a, a * a]),
            PotentialConfig::EmpiricalRisk { .. } => None,
        }
    }
}

/// Physical parameters; absent values are `null` in JSON.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub theta: Option<f64>,
    pub eps_dis: Option<f64>,
    pub eps_grid: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub rho: Option<f64>,
    pub nu: Option<f64>,
    pub gamma: Option<f64>,
    pub m: Option<f64>,
}

impl Params {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "theta" => self.theta,
            "eps_dis" => self.eps_dis,
            "eps_grid" => self.eps_grid,
            "alpha1" => self.alpha1,
            "alpha2" => self.alpha2,
            "rho" => self.rho,
            "nu" => self.nu,
            "gamma" => self.gamma,
            "m" => self.m,
            _ => None,
        }
    }

    pub fn require(&self, name: &str) -> Result<f64, CliError> {
        self.get(name).ok_or_else(|| CliError::Config(format!("missing parameter `{name}`")))
    }
}

/// Cauchy data; missing derivative blocks default to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    pub q: Vec<f64>,
    #[serde(default)]
    pub qdot: Option<Vec<f64>>,
    #[serde(default)]
    pub qddot: Option<Vec<f64>>,
    #[serde(default)]
    pub q3: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegratorConfig {
    Rk4 {
        step: f64,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        blowup_norm: Option<f64>,
    },
    Rk45 {
        rtol: f64,
        atol: f64,
        sample_step: f64,
        #[serde(default)]
        h_min: Option<f64>,
        #[serde(default)]
        h_max: Option<f64>,
        #[serde(default)]
        blowup_norm: Option<f64>,
    },
}

fn one() -> usize {
    1
}

impl IntegratorConfig {
    pub fn options(&self) -> Result<IntegratorOptions, CliError> {
        let opts = match *self {
            IntegratorConfig::Rk4 { step, stride, blowup_norm } => IntegratorOptions::rk4(step)
                .with_stride(stride)
                .with_blowup_norm(blowup_norm.unwrap_or(DEFAULT_BLOWUP_NORM)),
            IntegratorConfig::Rk45 { rtol, atol, sample_step, h_min, h_max, blowup_norm } => {
                let mut o = IntegratorOptions::rk45(rtol, atol, sample_step)
                    .with_blowup_norm(blowup_norm.unwrap_or(DEFAULT_BLOWUP_NORM));
                if let Method::Rk45Adaptive { h_min: lo, h_max: hi, .. } = &mut o.method {
                    *lo = h_min.unwrap_or(*lo);
                    *hi = h_max.unwrap_or(*hi);
                }
                o
            }
        };
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrids {
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub eps_dis: Option<Vec<f64>>,
    #[serde(default)]
    pub m: Option<Vec<f64>>,
    #[serde(default)]
    pub t_end: Option<Vec<f64>>,
}

impl SweepGrids {
    pub fn axis(&self, axis: Axis) -> Option<&[f64]> {
        match axis {
            Axis::Theta => self.theta.as_deref(),
            Axis::EpsDis => self.eps_dis.as_deref(),
            Axis::M => self.m.as_deref(),
            Axis::TEnd => self.t_end.as_deref(),
        }
    }

    pub fn present(&self) -> Vec<Axis> {
        [Axis::Theta, Axis::EpsDis, Axis::M, Axis::TEnd].into_iter().filter(|&a| self.axis(a).is_some()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPath {
    /// `x_i = q₀ + t_i q̇₀`.
    Affine,
    /// `q₀` plus uniform noise in `[-1, 1]` drawn from `seed`.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteConfig {
    pub nodes: usize,
    #[serde(default = "default_seed_path")]
    pub seed_path: SeedPath,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub clamp_first: bool,
}

fn default_seed_path() -> SeedPath {
    SeedPath::Affine
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iters() -> usize {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub params: Params,
    pub initial: Initial,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub integrator: Option<IntegratorConfig>,
    #[serde(default)]
    pub sweep: SweepGrids,
    #[serde(default)]
    pub discrete: Option<DiscreteConfig>,
    /// Distances between trajectories ignore samples before this time.
    #[serde(default)]
    pub compare_from: f64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let potential = self.potential.build()?;
        let n = potential.dim();
        let blocks =
            [Some(&self.initial.q), self.initial.qdot.as_ref(), self.initial.qddot.as_ref(), self.initial.q3.as_ref()];
        for (name, block) in ["q", "qdot", "qddot", "q3"].iter().zip(blocks) {
            if let Some(b) = block {
                if b.len() != n {
                    return Err(CliError::Config(format!(
                        "initial.{name} has {} entries, potential has dimension {n}",
                        b.len()
                    )));
                }
                if b.iter().any(|x| !x.is_finite()) {
                    return Err(CliError::Config(format!("initial.{name} must be finite")));
                }
            }
        }
        for axis in self.sweep.present() {
            let grid = self.sweep.axis(axis).unwrap_or_default();
            if grid.is_empty() {
                return Err(CliError::Config(format!("sweep grid `{}` is empty", axis_name(axis))));
            }
            if grid.iter().any(|x| !x.is_finite()) {
                return Err(CliError::Config(format!("sweep grid `{}` must be finite", axis_name(axis))));
            }
        }
        let axes: BTreeSet<Axis> = self.sweep.present().into_iter().collect();
        for &axis in self.scenario.run_axes() {
            let swept = axes.contains(&axis);
            let scalar = match axis {
                Axis::TEnd => self.t_end.is_some(),
                other => self.params.get(axis_name(other)).is_some(),
            };
            if !swept && !scalar && self.scenario != Scenario::StabilitySweep {
                return Err(CliError::Config(format!(
                    "scenario {} needs `sweep.{}` or a scalar value",
                    self.scenario.name(),
                    axis_name(axis)
                )));
            }
        }
        for name in self.scenario.required() {
            let swept = axes.iter().any(|&a| axis_name(a) == *name);
            if !swept && self.params.get(name).is_none() {
                return Err(CliError::Config(format!("scenario {} requires parameter `{name}`", self.scenario.name())));
            }
        }
        if self.scenario.integrates() {
            let t_end = self.t_end.or_else(|| self.sweep.t_end.as_ref().and_then(|g| g.first().copied()));
            if t_end.is_none() {
                return Err(CliError::Config("`t_end` is required".into()));
            }
        }
        if matches!(self.scenario, Scenario::DiscreteEl | Scenario::GradflowVsEl) && self.discrete.is_none() {
            return Err(CliError::Config(format!("scenario {} requires a `discrete` block", self.scenario.name())));
        }
        if let Some(i) = &self.integrator {
            i.options()?;
        }
        if !self.compare_from.is_finite() || self.compare_from < 0.0 {
            return Err(CliError::Config("compare_from must be finite and ≥ 0".into()));
        }
        Ok(())
    }

    pub fn potential(&self) -> Result<Arc<Potential>, CliError> {
        Ok(Arc::new(self.potential.build()?))
    }
}

pub fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::Theta => "theta",
        Axis::EpsDis => "eps_dis",
        Axis::M => "m",
        Axis::TEnd => "t_end",
    }
}
