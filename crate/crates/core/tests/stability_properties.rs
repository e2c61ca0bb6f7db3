use std::sync::Arc;

use cal_core::dynamics::{el_residual, Law, State4};
use cal_core::integrate::IntegratorOptions;
use cal_core::lagrangian::{CaseISpec, LagrangianSpec, SecondOrderKinetic};
use cal_core::potentials::{Potential, Quadratic};
use cal_core::stability::{characteristic_polynomial, classify, overall, polynomial_roots, CharPoly, Verdict};
use num_complex::Complex64;
use proptest::prelude::*;

fn quadratic(k: f64) -> Arc<Potential> {
    Arc::new(Quadratic::scalar(k, 0.0).unwrap().into())
}

/// Roots counted inside the rectangle by the winding number of `p` along its
/// boundary; independent of the companion-matrix solver.
fn winding_count(p: &CharPoly, re: (f64, f64), im: (f64, f64)) -> i64 {
    let corners = [
        Complex64::new(re.0, im.0),
        Complex64::new(re.1, im.0),
        Complex64::new(re.1, im.1),
        Complex64::new(re.0, im.1),
    ];
    let steps = 4000;
    let mut total = 0.0;
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        let mut prev = p.eval(a).arg();
        for j in 1..=steps {
            let z = a + (b - a) * (j as f64 / steps as f64);
            let cur = p.eval(z).arg();
            let mut d = cur - prev;
            if d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            } else if d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            total += d;
            prev = cur;
        }
    }
    (total / (2.0 * std::f64::consts::PI)).round() as i64
}

#[test]
fn case_ii_roots_match_argument_principle() {
    let law = Law::FourthUns { rho: 1.0, nu: 1.0, eps_dis: 0.1, gamma: 1.0 };
    let p = characteristic_polynomial(&law, 1.0).unwrap();
    for (c, e) in p.coeffs().iter().zip([0.01, -0.2, 0.9, 1.0, 1.0]) {
        assert!((c - e).abs() < 1e-15, "{c} vs {e}");
    }
    let roots = polynomial_roots(&p).unwrap();
    let bound = 1.0 + p.coeffs()[1..].iter().map(|c| (c / p.coeffs()[0]).abs()).fold(0.0, f64::max);
    assert_eq!(winding_count(&p, (0.0, bound), (-bound, bound)), roots.iter().filter(|r| r.re > 0.0).count() as i64);
    assert_eq!(winding_count(&p, (-bound, 0.0), (-bound, bound)), roots.iter().filter(|r| r.re < 0.0).count() as i64);
    // Each root sits alone in a small box around itself.
    for r in &roots {
        let d = 1e-3;
        assert_eq!(winding_count(&p, (r.re - d, r.re + d), (r.im - d, r.im + d)), 1, "{r}");
    }
    let sum: f64 = roots.iter().map(|r| r.re).sum();
    assert!((sum - 20.0).abs() < 1e-9, "{sum}");
}

/// Hausdorff distance between the two slowest case-i roots and the collapsed roots.
fn slow_root_gap(theta: f64) -> f64 {
    let (a1, a2, gamma, k) = (1.0, 2.0, 1.5, 3.0);
    let kinetic = SecondOrderKinetic::new(a1, a2, theta).unwrap();
    let spec = CaseISpec::new(kinetic, gamma, quadratic(k)).unwrap();
    let full =
        polynomial_roots(&characteristic_polynomial(&Law::from(&LagrangianSpec::CaseI(spec)), k).unwrap()).unwrap();
    let mut slow = full.clone();
    slow.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    slow.truncate(2);
    let limit = polynomial_roots(
        &characteristic_polynomial(&Law::CollapsedTheta { alpha1: a1, alpha2: a2, gamma }, k).unwrap(),
    )
    .unwrap();
    let directed = |xs: &[Complex64], ys: &[Complex64]| {
        xs.iter().map(|x| ys.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    directed(&slow, &limit).max(directed(&limit, &slow))
}

#[test]
fn slow_spectrum_converges_to_collapsed_law() {
    let gaps: Vec<f64> = [10.0, 100.0, 1000.0, 10000.0].iter().map(|&t| slow_root_gap(t)).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[3] < 1e-2, "{gaps:?}");
}

#[test]
fn classification_matches_simulation() {
    let p = quadratic(1.0);
    let init = State4::new(vec![1.0], vec![0.3], vec![-0.2], vec![0.1]).unwrap();
    let laws = [
        Law::CollapsedEps { rho: 1.0, nu: 0.5, gamma: 1.0 },
        Law::DampedOscillator { mass: 1.0, theta: 0.3 },
        Law::FourthStab {
            kinetic: SecondOrderKinetic::new(1.0, 1.0, 4.0).unwrap(),
            gamma: 1.0,
            weight: cal_core::lagrangian::WeightFn::exp_pos(4.0).unwrap(),
        },
        Law::FourthUns { rho: 1.0, nu: 1.0, eps_dis: 0.5, gamma: 1.0 },
    ];
    for law in &laws {
        let verdict = overall(&classify(law, &p, &[0.0], 0.0).unwrap());
        let traj = law.simulate(&p, &init, 0.0, 50.0, &IntegratorOptions::rk4(1e-3).with_stride(100)).unwrap();
        match verdict {
            Verdict::Unstable => assert!(traj.meta.diverged, "{}", law.name()),
            Verdict::Stable => {
                let envelope = init
                    .q
                    .iter()
                    .chain(&init.qdot)
                    .chain(&init.qddot)
                    .chain(&init.q3)
                    .fold(0.0_f64, |m, x| m.max(x.abs()));
                let peak = traj.states.iter().map(|s| s.q[0].abs()).fold(0.0, f64::max);
                assert!(!traj.meta.diverged && peak <= 10.0 * envelope, "{} peak {peak}", law.name());
            }
            Verdict::Marginal => panic!("unexpected marginal verdict for {}", law.name()),
        }
    }
}

#[test]
fn fourth_order_el_residual_converges_at_second_order() {
    let p = quadratic(1.0);
    let spec =
        LagrangianSpec::CaseI(CaseISpec::new(SecondOrderKinetic::new(1.0, 1.0, 2.0).unwrap(), 1.0, p.clone()).unwrap());
    let init = State4::new(vec![1.0], vec![0.0], vec![-1.0], vec![1.0]).unwrap();
    let law = Law::from(&spec);
    let maxima: Vec<f64> = [40, 20]
        .iter()
        .map(|&stride| {
            let traj = law.simulate(&p, &init, 0.0, 2.0, &IntegratorOptions::rk4(1e-4).with_stride(stride)).unwrap();
            el_residual(&traj, &spec).unwrap().max_abs()
        })
        .collect();
    let ratio = maxima[0] / maxima[1];
    assert!((3.2..4.8).contains(&ratio), "{maxima:?}");
}

#[test]
fn rk4_global_error_is_fourth_order() {
    let p = quadratic(1.0);
    let law = Law::DampedOscillator { mass: 1.0, theta: 0.3 };
    let exact = cal_core::dynamics::damped_scalar_solution(1.0, 0.3, 1.0, 1.0, 0.0, 10.0).0;
    let err = |h: f64| {
        let traj = law.simulate(&p, &State4::at_rest(vec![1.0]), 0.0, 10.0, &IntegratorOptions::rk4(h)).unwrap();
        (traj.last().unwrap().1.q[0] - exact).abs()
    };
    let ratio = err(0.1) / err(0.05);
    assert!((12.0..20.0).contains(&ratio), "{ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn case_ii_is_always_unstable(
        rho in 0.1f64..5.0, nu in 0.1f64..5.0, gamma in 0.1f64..5.0,
        k in 0.1f64..5.0, eps in 0.01f64..2.0,
    ) {
        let law = Law::FourthUns { rho, nu, eps_dis: eps, gamma };
        let p = characteristic_polynomial(&law, k).unwrap();
        let roots = polynomial_roots(&p).unwrap();
        let sum: f64 = roots.iter().map(|r| r.re).sum();
        prop_assert!((sum - 2.0 / eps).abs() <= 1e-7 * (2.0 / eps));
        prop_assert!(roots.iter().any(|r| r.re > 0.0));
        let reports = classify(&law, &quadratic(k), &[0.0], 0.0).unwrap();
        prop_assert_eq!(overall(&reports), Verdict::Unstable);
    }
}
