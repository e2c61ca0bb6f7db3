//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line is printed on a plain
//! `cargo test`; the process fails if any criterion fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use cal_core::discrete::{
    action, action_gradient, discrete_el_residual, gradient_flow_minimize, DiscreteLagrangian, DiscretePath,
};
use cal_core::dynamics::{
    boundary_residuals_generic, boundary_residuals_printed, damped_scalar_solution, la_rate, ostrogradsky_energy, Law,
    State4, Trajectory,
};
use cal_core::integrate::IntegratorOptions;
use cal_core::lagrangian::{CaseIISpec, CaseISpec, FirstOrderLagrangian, LagrangianSpec, SecondOrderKinetic, WeightFn};
use cal_core::potentials::{Potential, Quadratic, Rosenbrock};
use cal_core::stability::{classify, overall, polynomial_roots, routh_hurwitz_stable, CharPoly, Verdict};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn quadratic(k: f64) -> Arc<Potential> {
    Arc::new(Quadratic::scalar(k, 0.0).unwrap().into())
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn sup_distance(a: &Trajectory, b: &Trajectory, from: f64) -> f64 {
    assert_eq!(a.times.len(), b.times.len());
    a.times
        .iter()
        .zip(a.states.iter().zip(&b.states))
        .filter(|(t, _)| **t >= from - 1e-12)
        .map(|(_, (x, y))| x.q.iter().zip(&y.q).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

fn list(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oscillator_fidelity() -> Outcome {
    let start = Instant::now();
    let p = quadratic(1.0);
    let law = Law::DampedOscillator { mass: 1.0, theta: 0.3 };
    let init = State4::at_rest(vec![1.0]);
    let traj = law.simulate(&p, &init, 0.0, 20.0, &IntegratorOptions::rk4(1e-3)).map_err(|e| e.to_string())?;
    let err = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| (s.q[0] - damped_scalar_solution(1.0, 0.3, 1.0, 1.0, 0.0, t).0).abs())
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    check(err <= 1e-6 && secs < 1.0, format!("sup_error={err:.3e} runtime={secs:.3}s"))
}

fn gradient_flow_limit() -> Outcome {
    let start = Instant::now();
    let theta = 10.0;
    let p = quadratic(1.0);
    let init = State4::at_rest(vec![1.0]);
    let (step, stride) = (5e-5, 100);
    let opts = IntegratorOptions::rk4(step).with_stride(stride);
    let flow = Law::GradientFlow { theta }.simulate(&p, &init, 0.0, 10.0, &opts).map_err(|e| e.to_string())?;
    let mut dists = Vec::new();
    for m in [1e-1, 1e-2, 1e-3] {
        let osc = Law::DampedOscillator { mass: m, theta }
            .simulate(&p, &init, 0.0, 10.0, &opts)
            .map_err(|e| e.to_string())?;
        dists.push(sup_distance(&osc, &flow, 0.5));
    }
    let secs = start.elapsed().as_secs_f64();
    let monotone = dists.windows(2).all(|w| w[1] < w[0]);
    check(monotone && secs < 5.0, format!("distances={} runtime={secs:.3}s", list(&dists)))
}

fn discrete_lagrangian(weight: WeightFn, potential: Arc<Potential>, mass: f64, gamma: f64) -> DiscreteLagrangian {
    DiscreteLagrangian::new(FirstOrderLagrangian::new(mass, gamma, potential, weight).unwrap(), 0.0)
}

fn discrete_gradient_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let potential: Arc<Potential> = Arc::new(Rosenbrock::new(1.0, 10.0).unwrap().into());
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let weight = match rng.random_range(0..3) {
            0 => WeightFn::Const1,
            1 => WeightFn::exp_pos(rng.random_range(0.1..2.0)).unwrap(),
            _ => WeightFn::exp_neg(rng.random_range(0.2..2.0)).unwrap(),
        };
        let l = discrete_lagrangian(weight, potential.clone(), rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0));
        let nodes = rng.random_range(3..12);
        let eps = rng.random_range(0.05..0.3);
        let values: Vec<Vec<f64>> =
            (0..nodes).map(|_| vec![rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)]).collect();
        let path = DiscretePath::new(values.clone(), eps).unwrap();
        let grad = action_gradient(&path, &l).map_err(|e| e.to_string())?;
        let mut fd = Vec::new();
        for i in 0..nodes {
            for j in 0..2 {
                let h = 1e-6 * values[i][j].abs().max(1.0);
                let mut plus = values.clone();
                let mut minus = values.clone();
                plus[i][j] += h;
                minus[i][j] -= h;
                let ap = action(&DiscretePath::new(plus, eps).unwrap(), &l).unwrap();
                let am = action(&DiscretePath::new(minus, eps).unwrap(), &l).unwrap();
                fd.push(((ap - am) / (2.0 * h), grad[i][j]));
            }
        }
        let scale = fd.iter().fold(1.0_f64, |m, (_, g)| m.max(g.abs()));
        let err = fd.iter().map(|(f, g)| (f - g).abs()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
    }
    check(worst <= 1e-6, format!("max_rel_err={worst:.3e} over 100 paths"))
}

fn stationarity_equivalence() -> Outcome {
    let l = discrete_lagrangian(WeightFn::exp_neg(2.0).unwrap(), quadratic(1.0), 1.0, 1.0);
    let eps = 0.1;
    let values: Vec<Vec<f64>> = (0..11).map(|i| vec![1.0 + 0.3 * (i as f64).sin()]).collect();
    let path = DiscretePath::new(values, eps).unwrap();
    let (opt, report) = gradient_flow_minimize(&path, &l, 0.02, 1e-10, 200_000, false).map_err(|e| e.to_string())?;
    let res = discrete_el_residual(&opt, &l).map_err(|e| e.to_string())?;
    let interior = res.iter().map(|r| sup(r)).fold(0.0, f64::max);
    check(
        report.converged && interior <= 1e-8,
        format!("iterations={} grad={:.3e} interior_residual={interior:.3e}", report.iterations, report.grad_norm),
    )
}

fn discretization_consistency() -> Outcome {
    // h = e^{0.3t}, m = 1, γ = −1 gives exactly m q̈ + 0.3 q̇ + q = 0.
    let l = discrete_lagrangian(WeightFn::exp_pos(0.3).unwrap(), quadratic(1.0), 1.0, -1.0);
    let span = 5.0;
    let mut maxima = Vec::new();
    for eps in [1e-1_f64, 5e-2, 2.5e-2, 1.25e-2] {
        let nodes = (span / eps).round() as usize + 1;
        let values =
            (0..nodes).map(|i| vec![damped_scalar_solution(1.0, 0.3, 1.0, 1.0, 0.0, i as f64 * eps).0]).collect();
        let path = DiscretePath::new(values, eps).unwrap();
        let res = discrete_el_residual(&path, &l).map_err(|e| e.to_string())?;
        maxima.push(res.iter().map(|r| sup(r)).fold(0.0, f64::max));
    }
    let ratios: Vec<f64> = maxima.windows(2).map(|w| w[1] / w[0]).collect();
    let ok = ratios.iter().all(|r| (r - 0.5).abs() <= 0.1);
    check(ok, format!("max_residuals={} ratios={}", list(&maxima), list(&ratios)))
}

fn theta_collapse() -> Outcome {
    let (a1, a2, gamma, k) = (1.0, 1.0, 1.0, 1.0);
    let p = quadratic(k);
    let (q0, v0) = (1.0, 0.0);
    let acc0 = -(a1 / a2) * v0 - gamma / (a2 * a2) * k * q0;
    let jerk0 = -(a1 / a2) * acc0 - gamma / (a2 * a2) * k * v0;
    let init = State4::new(vec![q0], vec![v0], vec![acc0], vec![jerk0]).unwrap();
    let sample = 1e-2;
    let mut dists = Vec::new();
    for theta in [10.0, 100.0, 1000.0] {
        let step: f64 = (1e-3_f64).min(0.1 / theta);
        let stride = (sample / step).round() as usize;
        let opts = IntegratorOptions::rk4(step).with_stride(stride);
        let spec = CaseISpec::new(SecondOrderKinetic::new(a1, a2, theta).unwrap(), gamma, p.clone()).unwrap();
        let law = Law::from(&LagrangianSpec::CaseI(spec));
        let full = law.simulate(&p, &init, 0.0, 5.0, &opts).map_err(|e| e.to_string())?;
        let collapsed = Law::CollapsedTheta { alpha1: a1, alpha2: a2, gamma }
            .simulate(&p, &init, 0.0, 5.0, &opts)
            .map_err(|e| e.to_string())?;
        dists.push(sup_distance(&full, &collapsed, 0.0));
    }
    let ok = dists.windows(2).all(|w| w[1] < w[0]);
    check(ok, format!("distances={}", list(&dists)))
}

fn eps_instability() -> Outcome {
    let p = quadratic(1.0);
    let init = State4::at_rest(vec![1.0]);
    let mut blowups = Vec::new();
    let mut notes = Vec::new();
    for eps in [0.5, 0.1, 0.02] {
        let spec = CaseIISpec::new(1.0, 1.0, eps, 1.0, p.clone()).unwrap();
        let law = Law::from(&LagrangianSpec::CaseII(spec));
        let reports = classify(&law, &p, &[0.0], 0.0).map_err(|e| e.to_string())?;
        let unstable = overall(&reports) == Verdict::Unstable && reports.iter().all(|r| r.max_real_part > 0.0);
        let opts = IntegratorOptions::rk45(1e-10, 1e-12, eps / 10.0);
        let traj = law.simulate(&p, &init, 0.0, 200.0, &opts).map_err(|e| e.to_string())?;
        if !unstable || !traj.meta.diverged {
            return Err(format!("eps={eps}: unstable={unstable} diverged={}", traj.meta.diverged));
        }
        blowups.push(traj.meta.blowup_time.unwrap_or(f64::INFINITY));
        notes.push(format!("eps={eps}:max_re={:.3}", reports[0].max_real_part));
    }
    let decreasing = blowups.windows(2).all(|w| w[1] < w[0]);

    let collapsed = Law::CollapsedEps { rho: 1.0, nu: 1.0, gamma: 1.0 };
    let verdict = overall(&classify(&collapsed, &p, &[0.0], 0.0).map_err(|e| e.to_string())?);
    let traj = collapsed.simulate(&p, &init, 0.0, 50.0, &IntegratorOptions::rk4(1e-3)).map_err(|e| e.to_string())?;
    let end = traj.last().map(|(_, s)| s.q[0].abs()).unwrap_or(f64::INFINITY);
    check(
        decreasing && verdict == Verdict::Stable && end < 1e-6,
        format!("{} blowup_times={} collapsed={verdict:?} |q(50)|={end:.2e}", notes.join(" "), list(&blowups)),
    )
}

/// Monic quartic with the given roots, expanded to real coefficients.
fn from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, ci) in c.iter().enumerate() {
            next[i] += ci;
            next[i + 1] -= ci * r;
        }
        c = next;
    }
    c.iter().map(|z| z.re).collect()
}

fn routh_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut compared, mut stable_count) = (0, 0);
    for case in 0..100 {
        let part = |rng: &mut ChaCha8Rng| {
            let mag = rng.random_range(0.05..3.0);
            if rng.random_bool(0.3) {
                mag
            } else {
                -mag
            }
        };
        let roots: Vec<Complex64> = if case % 2 == 0 {
            let (x, y) = (part(&mut rng), part(&mut rng));
            let (w1, w2) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
            vec![Complex64::new(x, w1), Complex64::new(x, -w1), Complex64::new(y, w2), Complex64::new(y, -w2)]
        } else {
            let (x, w) = (part(&mut rng), rng.random_range(0.1..3.0));
            vec![
                Complex64::new(x, w),
                Complex64::new(x, -w),
                Complex64::new(part(&mut rng), 0.0),
                Complex64::new(part(&mut rng), 0.0),
            ]
        };
        let known = roots.iter().map(|r| r.re).fold(f64::NEG_INFINITY, f64::max);
        let p = CharPoly::new(from_roots(&roots)).unwrap();
        let computed = polynomial_roots(&p).map_err(|e| e.to_string())?;
        let max_re = computed.iter().map(|r| r.re).fold(f64::NEG_INFINITY, f64::max);
        if max_re.abs() <= 1e-9 {
            continue;
        }
        let hurwitz = routh_hurwitz_stable(&p).map_err(|e| e.to_string())?;
        if hurwitz != (max_re < 0.0) || (known < 0.0) != (max_re < 0.0) {
            return Err(format!("case {case}: hurwitz={hurwitz} max_re={max_re} known={known}"));
        }
        compared += 1;
        stable_count += usize::from(hurwitz);
    }
    check(compared == 100, format!("agreed on {compared} quartics ({stable_count} stable)"))
}

fn conservation() -> Outcome {
    let p = quadratic(1.0);
    let traj = Law::DampedOscillator { mass: 1.0, theta: 0.0 }
        .simulate(&p, &State4::at_rest(vec![1.0]), 0.0, 10.0, &IntegratorOptions::rk4(1e-3))
        .map_err(|e| e.to_string())?;
    let energy = |s: &State4| 0.5 * s.qdot[0] * s.qdot[0] + p.eval(&s.q, 0.0).unwrap();
    let e0 = energy(&traj.states[0]);
    let drift = traj.states.iter().map(|s| ((energy(s) - e0) / e0).abs()).fold(0.0, f64::max);

    let spec = LagrangianSpec::CaseI(
        CaseISpec::autonomous(SecondOrderKinetic::new(1.0, 1.0, 1.0).unwrap(), 1.0, p.clone()).unwrap(),
    );
    let law = Law::from(&spec);
    let init = State4::new(vec![1.0], vec![0.0], vec![-0.5], vec![0.2]).unwrap();
    let traj = law.simulate(&p, &init, 0.0, 10.0, &IntegratorOptions::rk4(1e-3)).map_err(|e| e.to_string())?;
    let energies = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| ostrogradsky_energy(&spec, t, s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let o_drift = energies.iter().map(|e| ((e - energies[0]) / energies[0]).abs()).fold(0.0, f64::max);
    check(drift <= 1e-6 && o_drift <= 1e-4, format!("energy_drift={drift:.3e} ostrogradsky_drift={o_drift:.3e}"))
}

fn boundary_residuals() -> Outcome {
    let p = quadratic(1.0);
    let specs = [
        LagrangianSpec::CaseI(CaseISpec::new(SecondOrderKinetic::new(1.0, 0.5, 3.0).unwrap(), 1.0, p.clone()).unwrap()),
        LagrangianSpec::CaseII(CaseIISpec::new(1.0, 1.0, 0.1, 1.0, p.clone()).unwrap()),
    ];
    let zero_jet = State4::at_rest(vec![0.7]);
    let mut zero_max = 0.0_f64;
    for spec in &specs {
        zero_max = zero_max
            .max(boundary_residuals_printed(spec, &zero_jet).map_err(|e| e.to_string())?.max_abs())
            .max(boundary_residuals_generic(spec, &zero_jet).map_err(|e| e.to_string())?.max_abs());
    }

    let spec = &specs[0];
    let init = State4::new(vec![1.0], vec![0.0], vec![-1.0], vec![0.5]).unwrap();
    let traj =
        Law::from(spec).simulate(&p, &init, 0.0, 2.0, &IntegratorOptions::rk4(1e-3)).map_err(|e| e.to_string())?;
    let weight = spec.weight();
    let form = spec.kinetic_form();
    let la = |s: &State4| form.t_a(&s.qdot, &s.qddot)[0];
    let mut fd_err = 0.0_f64;
    for i in 1..traj.len() - 1 {
        let (t, dt) = (traj.times[i], traj.times[i + 1] - traj.times[i]);
        let next = weight.relative(traj.times[i + 1], t) * la(&traj.states[i + 1]);
        let prev = weight.relative(traj.times[i - 1], t) * la(&traj.states[i - 1]);
        let fd = (next - prev) / (2.0 * dt);
        fd_err = fd_err.max((fd - la_rate(spec, &traj.states[i])[0]).abs());
    }
    check(zero_max == 0.0 && fd_err <= 1e-5, format!("zero_jet_residual={zero_max:.1e} la_rate_fd_err={fd_err:.3e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("oscillator fidelity", oscillator_fidelity),
        ("gradient-flow limit", gradient_flow_limit),
        ("discrete gradient exactness", discrete_gradient_exactness),
        ("stationarity equivalence", stationarity_equivalence),
        ("discretization consistency", discretization_consistency),
        ("theta collapse", theta_collapse),
        ("eps instability", eps_instability),
        ("Routh-Hurwitz agreement", routh_agreement),
        ("conservation", conservation),
        ("boundary residuals", boundary_residuals),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
