use std::sync::Arc;

use fracmorse::assembly::OperatorPair;
use fracmorse::mesh::Mesh1D;
use fracmorse::quadrature::integrate_adaptive;
use fracmorse::reaction::*;
use fracmorse::spectral::{solve_eigen, EigenSet};
use proptest::prelude::*;

fn spectrum() -> (Mesh1D, EigenSet) {
    let mesh = Mesh1D::new(-1.0, 1.0, 64, 0.5).unwrap();
    let ops = OperatorPair::new(&mesh, None).unwrap();
    let eig = solve_eigen(&ops, 4).unwrap();
    (mesh, eig)
}

fn h2(eig: &EigenSet) -> ExampleReaction {
    ExampleReaction::new(0.5 * eig.lambda(1), 2, &eig.lambdas, ExampleVariant::H2).unwrap()
}

fn h1(eig: &EigenSet) -> ExampleReaction {
    let mu = 0.5 * (eig.lambda(1) + eig.lambda(2));
    ExampleReaction::new(mu, 2, &eig.lambdas, ExampleVariant::H1 { h: 1 }).unwrap()
}

fn quad_primitive(r: &dyn Reaction, t: f64) -> f64 {
    let mut cuts = vec![0.0, t];
    cuts.extend(r.meta().kinks.iter().copied().filter(|k| k.abs() < t.abs() && k.signum() == t.signum()));
    cuts.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        let (v, ok) = integrate_adaptive(w[0], w[1], 1e-12, &|s| r.f(0.0, s));
        assert!(ok);
        acc += v;
    }
    if t < 0.0 {
        -acc
    } else {
        acc
    }
}

#[test]
fn example_primitive_matches_quadrature() {
    let (_, eig) = spectrum();
    for r in [h1(&eig), h2(&eig)] {
        for t in [1.5, 3.0, 10.0, -1.5, -3.0, -10.0, 0.7] {
            let want = quad_primitive(&r, t);
            let got = r.primitive(0.0, t);
            assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "t={t}: {got} vs {want}");
        }
    }
}

#[test]
fn example_is_odd_and_continuous() {
    let (_, eig) = spectrum();
    let r = h2(&eig);
    for t in [0.2, 1.0, 1.0001, 4.0, 1e3] {
        assert_eq!(r.f(0.0, -t), -r.f(0.0, t));
        assert_eq!(r.primitive(0.0, -t), r.primitive(0.0, t));
    }
    let mu = r.mu();
    assert!((r.f(0.0, 1.0 + 1e-12) - mu).abs() < 1e-10);
    assert_eq!(r.f(0.0, 0.5), 0.5 * mu);
}

#[test]
fn tail_difference_increases() {
    let (_, eig) = spectrum();
    let r = h1(&eig);
    let vals: Vec<f64> = (2..=6)
        .map(|m| {
            let t = 10f64.powi(m);
            r.f(0.0, t) * t - 2.0 * r.primitive(0.0, t)
        })
        .collect();
    assert!(vals.windows(2).all(|w| w[1] > w[0]), "{vals:?}");
}

#[test]
fn growth_constant_is_finite_and_covers_samples() {
    let (mesh, eig) = spectrum();
    let r = h2(&eig);
    let a0 = growth_constant(&r, &mesh.interior_nodes()[..3], 1e6);
    assert!(a0.is_finite() && a0 > 0.0);
    for t in [0.1, 2.0, 50.0, 1e5] {
        assert!(r.f(0.0, t).abs() <= a0 * (1.0 + t) * (1.0 + 1e-12));
    }
}

#[test]
fn h2_example_passes() {
    let (mesh, eig) = spectrum();
    let r = h2(&eig);
    let rep = check_hypotheses(&r, &eig, HypothesisMode::H2, &HypothesisParams::new(2, mesh.interior_nodes())).unwrap();
    assert!(rep.all_passed, "{rep:#?}");
    let json = serde_json::to_value(&rep).unwrap();
    assert_eq!(json["mode"], "h2");
}

#[test]
fn h1_example_passes() {
    let (mesh, eig) = spectrum();
    let r = h1(&eig);
    let rep = check_hypotheses(&r, &eig, HypothesisMode::H1 { h: 1 }, &HypothesisParams::new(2, mesh.interior_nodes())).unwrap();
    assert!(rep.all_passed, "{rep:#?}");
}

#[test]
fn resonant_linear_reaction_fails_divergence() {
    let (mesh, eig) = spectrum();
    let r = LinearReaction::new(eig.lambda(2)).unwrap();
    let rep = check_hypotheses(&r, &eig, HypothesisMode::H2, &HypothesisParams::new(2, mesh.interior_nodes())).unwrap();
    assert!(!rep.clause("ii_divergence").unwrap().passed);
    assert!(!rep.all_passed);
}

#[test]
fn slope_at_zero_equal_to_first_eigenvalue_fails() {
    let (mesh, eig) = spectrum();
    let r = ExampleReaction::new(eig.lambda(1), 2, &eig.lambdas, ExampleVariant::H2).unwrap();
    let rep = check_hypotheses(&r, &eig, HypothesisMode::H2, &HypothesisParams::new(2, mesh.interior_nodes())).unwrap();
    assert!(!rep.clause("iv_near_zero").unwrap().passed);
    assert!(rep.clause("ii_divergence").unwrap().passed);
}

#[test]
fn h1_band_must_sit_between_consecutive_eigenvalues() {
    let (mesh, eig) = spectrum();
    let r = ExampleReaction::new(0.5 * eig.lambda(1), 2, &eig.lambdas, ExampleVariant::H1 { h: 1 }).unwrap();
    let rep = check_hypotheses(&r, &eig, HypothesisMode::H1 { h: 1 }, &HypothesisParams::new(2, mesh.interior_nodes())).unwrap();
    assert!(!rep.clause("iv_near_zero").unwrap().passed);
}

#[test]
fn checker_needs_enough_modes() {
    let (mesh, eig) = spectrum();
    let r = h2(&eig);
    let params = HypothesisParams::new(4, mesh.interior_nodes());
    assert!(check_hypotheses(&r, &eig, HypothesisMode::H2, &params).is_err());
}

#[test]
fn truncated_primitives_follow_sign_rule() {
    let (_, eig) = spectrum();
    let base: SharedReaction = Arc::new(h2(&eig));
    let p = truncate(base.clone(), Sign::Plus);
    let m = truncate(base.clone(), Sign::Minus);
    for t in [-5.0, -1.0, -0.3, 0.0, 0.3, 1.0, 5.0] {
        let (fp, fm) = (p.primitive(0.0, t), m.primitive(0.0, t));
        if t >= 0.0 {
            assert_eq!(fp, base.primitive(0.0, t));
            assert_eq!(fm, 0.0);
        } else {
            assert_eq!(fp, 0.0);
            assert_eq!(fm, base.primitive(0.0, t));
        }
        assert_eq!(fp + fm, base.primitive(0.0, t));
    }
}

proptest! {
    #[test]
    fn derivative_matches_central_differences(t in -20.0f64..20.0) {
        let lambdas = [7.27, 17.3, 27.9];
        let r = ExampleReaction::new(3.6, 2, &lambdas, ExampleVariant::H2).unwrap();
        prop_assume!((t.abs() - 1.0).abs() > 1e-3);
        let eps = 1e-6 * t.abs().max(1.0);
        let fd = (r.f(0.0, t + eps) - r.f(0.0, t - eps)) / (2.0 * eps);
        let d = r.df(0.0, t);
        prop_assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0));
    }

    #[test]
    fn table_primitive_matches_quadrature(t in -6.0f64..6.0) {
        let pts: Vec<(f64, f64)> = (-8..=8).map(|i| {
            let s = i as f64 * 0.5;
            (s, 3.0 * s + s.powi(3) / 10.0)
        }).collect();
        let r = TableReaction::new(&pts).unwrap();
        let want = quad_primitive(&r, t);
        prop_assert!((r.primitive(0.0, t) - want).abs() < 1e-9 * want.abs().max(1.0));
    }
}
