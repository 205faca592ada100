use std::f64::consts::PI;

use proptest::prelude::*;

use otto_lab::bridge::{entropic_cost, ipfp_solve};
use otto_lab::grid::{
    build_grid, dual_apply, entropy, gamma, gamma_sq, heat_apply, integrate, Density, GridManifold, ManifoldKind,
    ScalarField,
};
use otto_lab::local::local_suite;
use otto_lab::numerics::lsi_coefficient;
use otto_lab::report::{CurvatureMode, InequalityReport};
use otto_lab::runner::parse_config_str;
use otto_lab::toy::{lambda_curve, solve_newton_bvp, NegLog, Quadratic};

fn circle(n: usize) -> GridManifold {
    build_grid(ManifoldKind::Circle, n, 2.0 * PI).unwrap()
}

/// `Σ_k a_k cos(kx) + b_k sin(kx)` summed over every axis.
fn trig(m: &GridManifold, coeffs: &[(f64, f64)]) -> ScalarField {
    m.from_fn(|p| {
        p.iter()
            .map(|&x| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, (a, b))| {
                        let k = (k + 1) as f64;
                        a * (k * x).cos() + b * (k * x).sin()
                    })
                    .sum::<f64>()
            })
            .sum()
    })
    .unwrap()
}

/// A strictly positive smooth function with values in roughly [0.5, 1.5].
fn positive(m: &GridManifold, coeffs: &[(f64, f64)]) -> ScalarField {
    let raw = trig(m, coeffs);
    let scale = 0.5 / raw.max_abs().max(1e-12);
    raw.map(|v| 1.0 + scale * v)
}

fn coeffs(max_k: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..=max_k)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn semigroup_property(c in coeffs(8), s in prop::sample::select(vec![0.1, 0.3]), t in prop::sample::select(vec![0.1, 0.3]), torus in any::<bool>()) {
        let m = if torus { build_grid(ManifoldKind::Torus2d, 24, 2.0 * PI).unwrap() } else { circle(64) };
        let f = trig(&m, &c);
        let two_step = heat_apply(&m, s, &heat_apply(&m, t, &f).unwrap()).unwrap();
        let one_step = heat_apply(&m, s + t, &f).unwrap();
        prop_assert!(sup_diff(&two_step, &one_step) <= 1e-10);
    }

    /// The truncated Mehler kernel is a semigroup only away from the cut-off.
    #[test]
    fn semigroup_property_on_the_ou_interior(c in coeffs(4), s in prop::sample::select(vec![0.1, 0.3]), t in prop::sample::select(vec![0.1, 0.3])) {
        let m = build_grid(ManifoldKind::OuLine, 96, 10.0).unwrap();
        let f = m.from_fn(|p| c.iter().enumerate().map(|(k, (a, b))| a * (p[0] / (k + 1) as f64).sin() + b).sum()).unwrap();
        let two_step = heat_apply(&m, s, &heat_apply(&m, t, &f).unwrap()).unwrap();
        let one_step = heat_apply(&m, s + t, &f).unwrap();
        for i in m.interior() {
            prop_assert!((two_step[i] - one_step[i]).abs() <= 1e-9 * (1.0 + f.max_abs()));
        }
    }

    #[test]
    fn reversibility(cf in coeffs(6), cg in coeffs(6), t in 0.05..1.0f64, torus in any::<bool>()) {
        let m = if torus { build_grid(ManifoldKind::Torus2d, 24, 2.0 * PI).unwrap() } else { circle(64) };
        let f = trig(&m, &cf);
        let g = trig(&m, &cg);
        let pf = heat_apply(&m, t, &f).unwrap();
        let pg = heat_apply(&m, t, &g).unwrap();
        let lhs = integrate(&m, &f.zip_map(&pg, |a, b| a * b)).unwrap();
        let rhs = integrate(&m, &g.zip_map(&pf, |a, b| a * b)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10);
    }

    #[test]
    fn entropy_decays_along_the_heat_flow(c in coeffs(6)) {
        let m = circle(64);
        let mu = Density::normalized(&m, positive(&m, &c).into_vec()).unwrap();
        let mut last = entropy(&m, &mu).unwrap();
        for t in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let now = entropy(&m, &dual_apply(&m, t, &mu).unwrap()).unwrap();
            prop_assert!(now <= last + 1e-14, "entropy rose to {now} from {last} at t = {t}");
            last = now;
        }
        prop_assert!(last >= -(2.0 * PI).ln() - 1e-12);
    }

    #[test]
    fn gamma_is_bilinear(cf in coeffs(6), cg in coeffs(6)) {
        let m = circle(64);
        let f = trig(&m, &cf);
        let g = trig(&m, &cg);
        let sum = f.zip_map(&g, |a, b| a + b);
        let lhs = gamma_sq(&m, &sum).unwrap();
        let (ff, fg, gg) = (gamma_sq(&m, &f).unwrap(), gamma(&m, &f, &g).unwrap(), gamma_sq(&m, &g).unwrap());
        for i in 0..m.len() {
            let rhs = ff[i] + 2.0 * fg[i] + gg[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-10 * (1.0 + lhs[i].abs()));
        }
    }

    #[test]
    fn local_inequalities_survive_integration(
        cg in coeffs(4),
        cw in coeffs(4),
        horizon in 0.1..1.0f64,
        dimensional in any::<bool>(),
    ) {
        let m = circle(64);
        let g = positive(&m, &cg);
        let weight = positive(&m, &cw);
        let mode = if dimensional { CurvatureMode::ZeroN { dim: 1.0 } } else { CurvatureMode::RhoInfinity { rho: 0.0 } };
        for p in local_suite(&m, mode, &g, horizon).unwrap().iter().filter(|p| !p.informational) {
            let w: Vec<f64> = p.points.iter().map(|&i| m.weights()[i] * weight[i]).collect();
            let dot = |v: &[f64]| v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let slack = p.slack();
            let integrated = dot(&p.rhs) - dot(&p.lhs);
            prop_assert!((integrated - dot(&slack)).abs() <= 1e-10 * (1.0 + dot(&p.rhs).abs()), "{}", p.name);
            let allowance: f64 = (0..p.points.len())
                .map(|k| w[k] * p.rel_tol * (1.0 + p.lhs[k].abs().max(p.rhs[k].abs())))
                .sum();
            prop_assert!(integrated >= -allowance - 1e-10, "{}: {integrated}", p.name);
        }
    }

    #[test]
    fn lsi_coefficient_decreases_in_rho(a in -3.0..3.0f64, b in -3.0..3.0f64, horizon in 0.05..3.0f64) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(lsi_coefficient(lo, horizon) > lsi_coefficient(hi, horizon));
    }

    #[test]
    fn report_passes_iff_slack_within_tolerance(lhs in -10.0..10.0f64, rhs in -10.0..10.0f64, tol in 0.0..1.0f64) {
        let r = InequalityReport::integrated("x", lhs, rhs, tol);
        prop_assert_eq!(r.pass, r.slack >= -tol);
        prop_assert_eq!(r.slack, rhs - lhs);
    }

    #[test]
    fn nonpositive_horizons_are_rejected(t in -10.0..=0.0f64) {
        let text = format!("[scenario]\nid = p\nsuite = local\n[manifold]\nkind = circle\nn = 64\n[mode]\nkind = zero_n\nn = 1\n[local]\nhorizon = {t}\ng = constant\n");
        prop_assert!(parse_config_str(&text).is_err());
        let fixed = text.replace(&format!("horizon = {t}"), "horizon = 0.5");
        prop_assert!(parse_config_str(&fixed).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn toy_paths_are_time_reversible(
        rho in 0.2..1.5f64,
        x in prop::collection::vec(-2.0..2.0f64, 2),
        y in prop::collection::vec(-2.0..2.0f64, 2),
        horizon in 0.5..1.5f64,
    ) {
        let model = Quadratic { rho, dim: 2 };
        let forward = solve_newton_bvp(&model, &x, &y, horizon, 128).unwrap();
        let backward = solve_newton_bvp(&model, &y, &x, horizon, 128).unwrap().reversed();
        for (a, b) in forward.states.iter().zip(&backward.states) {
            prop_assert!(sup_diff(a, b) <= 1e-8);
        }
        let (ef, eb) = (lambda_curve(&model, &forward), lambda_curve(&model, &backward));
        prop_assert!((ef.energy - eb.energy).abs() <= 1e-8 * (1.0 + ef.energy.abs()));
        prop_assert!(ef.energy_deviation <= 1e-8, "energy deviation {:e}", ef.energy_deviation);
        prop_assert_eq!(ef.lambda[0], 0.0);
        prop_assert!(ef.lambda.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn neglog_paths_are_time_reversible(x in 0.8..2.0f64, y in 0.8..2.0f64) {
        let model = NegLog { n: 1.0 };
        let forward = solve_newton_bvp(&model, &[x], &[y], 1.0, 256).unwrap();
        let backward = solve_newton_bvp(&model, &[y], &[x], 1.0, 256).unwrap().reversed();
        for (a, b) in forward.states.iter().zip(&backward.states) {
            prop_assert!(sup_diff(a, b) <= 1e-8);
        }
        prop_assert!(lambda_curve(&model, &forward).energy_deviation <= 1e-8);
    }

    #[test]
    fn swapping_marginals_reverses_the_bridge(
        a in -0.6..0.6f64,
        b in -0.6..0.6f64,
        shift in 0.0..3.0f64,
        horizon in 0.3..1.0f64,
    ) {
        let m = circle(64);
        let mu = Density::normalized(&m, m.from_fn(|p| 1.0 + a * p[0].cos()).unwrap().into_vec()).unwrap();
        let nu = Density::normalized(&m, m.from_fn(|p| 1.0 + b * (p[0] - shift).cos()).unwrap().into_vec()).unwrap();
        let there = ipfp_solve(&m, horizon, &mu, &nu, 1e-13, 500).unwrap().path().unwrap();
        let back = ipfp_solve(&m, horizon, &nu, &mu, 1e-13, 500).unwrap().path().unwrap();
        let (c1, c2) = (entropic_cost(&there).unwrap(), entropic_cost(&back).unwrap());
        prop_assert!((c1.closed_form - c2.closed_form).abs() <= 1e-8 * (1.0 + c1.closed_form.abs()));
        prop_assert!((c1.quadrature - c2.quadrature).abs() <= 1e-8 * (1.0 + c1.quadrature.abs()));
        let mirrored = there.reversed();
        for t in [0.0, 0.5 * horizon, horizon] {
            let (v, w) = (back.velocity_cost(t).unwrap(), mirrored.velocity_cost(t).unwrap());
            prop_assert!((v - w).abs() <= 1e-8 * (1.0 + v.abs()), "t = {t}: {v} vs {w}");
        }
        // The reversed path ends with the backward velocity of the original
        // at its start: 4 ∫ Γ(f)/f P_T g dx / Z.
        let f = there.f();
        let pg = heat_apply(&m, horizon, there.g()).unwrap();
        let gf = gamma_sq(&m, f).unwrap();
        let integrand: Vec<f64> = (0..m.len()).map(|i| gf[i] / f[i] * pg[i]).collect();
        let expected = 4.0 * integrate(&m, &integrand).unwrap() / there.normalization();
        let v_end = back.velocity_cost(horizon).unwrap();
        prop_assert!((v_end - expected).abs() <= 1e-8 * (1.0 + expected.abs()), "{v_end} vs {expected}");
    }
}
