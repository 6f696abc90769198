use asymflow::asymfun::fit_coefficients;
use asymflow::diffeo::{compose_fn, flow, DEFAULT_MARGIN};
use asymflow::tail::rational;
use asymflow::{AsymDiffeo, AsymFunction, Basis, Error, Grid, SpaceMeta, TailExpansion};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gauss(x: f64) -> f64 {
    (-x * x).exp()
}

fn bracket(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn near_identity(grid: Grid, a1: f64, amp: f64, center: f64) -> AsymDiffeo {
    let tail = TailExpansion::a(1).scale_f64(a1);
    let u = AsymFunction::from_fn(tail, grid, SpaceMeta::w(1, 3, 4), move |x| amp * gauss(x - center));
    AsymDiffeo::validate(u, DEFAULT_MARGIN).unwrap()
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn validate_examples() {
    let g = Grid::new(40.0, 0.01).unwrap();
    let id = AsymDiffeo::validate(AsymFunction::zero(g, SpaceMeta::w(1, 3, 3)), DEFAULT_MARGIN).unwrap();
    assert_eq!(id.phi_prime_min(), 1.0);

    // d/dx (0.5/<x>) = -0.5 x/<x>^3 is smallest at x = 1/sqrt(2)
    let half = AsymFunction::from_tail(TailExpansion::a(1).scale_f64(0.5), g, SpaceMeta::w(1, 3, 3));
    let phi = AsymDiffeo::validate(half, DEFAULT_MARGIN).unwrap();
    let x = 0.5f64.sqrt();
    let want = 1.0 - 0.5 * x / bracket(x).powi(3);
    assert!((phi.phi_prime_min() - want).abs() < 1e-4, "{} vs {want}", phi.phi_prime_min());

    // 3 exp(-x^2) has slope -6 x exp(-x^2), most negative at x = 1/sqrt(2)
    let steep = AsymFunction::from_fn(TailExpansion::zero(), g, SpaceMeta::w(1, 3, 3), |x| 3.0 * gauss(x));
    match AsymDiffeo::validate(steep, DEFAULT_MARGIN) {
        Err(Error::NotADiffeomorphism { x: at, value }) => {
            let worst = 1.0 - 6.0 * x * (-0.5f64).exp();
            assert!((at - x).abs() < 0.02, "offending point {at}");
            assert!((value - worst).abs() < 1e-3, "{value} vs {worst}");
        }
        other => panic!("steep bump accepted: {other:?}"),
    }
}

#[test]
fn compose_with_identity_is_a_no_op() {
    let g = Grid::new(40.0, 0.02).unwrap();
    let meta = SpaceMeta::w(1, 3, 3);
    let v = AsymFunction::from_fn(TailExpansion::a(1), g, meta, |x| x.sin() * gauss(0.5 * x));
    let w = compose_fn(&v, &AsymDiffeo::identity(g, meta)).unwrap();
    assert_eq!(w.tail(), v.tail());
    assert!(sup_diff(&w.values(), &v.values()) < 1e-14);
}

#[test]
fn compose_keeps_the_leading_coefficient() {
    let g = Grid::new(200.0, 0.05).unwrap();
    let meta = SpaceMeta::w(1, 3, 3);
    let v = AsymFunction::from_tail(TailExpansion::a(1), g, meta);
    let phi = near_identity(g, 0.3, 0.0, 0.0);
    let w = compose_fn(&v, &phi).unwrap();
    assert_eq!(w.tail(), &TailExpansion::a(1));
    // 1/<x + 0.3/<x>> - 1/<x> ~ -0.3 x/<x>^4, so <x>^3 times the remainder
    // approaches 0.3 in magnitude
    for (i, r) in w.rem().samples().iter().enumerate() {
        let x = g.x(i);
        if x.abs() >= 100.0 {
            let scaled = r.abs() * bracket(x).powi(3);
            assert!((scaled - 0.3).abs() < 0.01, "x = {x}: {scaled}");
        }
    }
}

#[test]
fn compose_matches_pointwise_evaluation() {
    let g = Grid::new(40.0, 0.01).unwrap();
    let v = AsymFunction::from_fn(TailExpansion::a(1), g, SpaceMeta::w(1, 3, 3), gauss);
    let phi = near_identity(g, 0.3, 0.1, 0.5);
    let w = compose_fn(&v, &phi).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let x: f64 = rng.gen_range(-39.0..39.0);
        let want = v.eval(phi.apply(x));
        assert!((w.eval(x) - want).abs() < 1e-9, "x = {x}");
    }
}

#[test]
fn compose_rejects_a_map_that_leaves_the_grid() {
    let g = Grid::new(20.0, 0.05).unwrap();
    let shift = AsymFunction::constant(8.0, g, 2, 3);
    let phi = AsymDiffeo::validate(shift, DEFAULT_MARGIN).unwrap();
    let v = AsymFunction::constant(1.0, g, 2, 3);
    assert!(matches!(compose_fn(&v, &phi), Err(Error::OutOfDomain { .. })));
}

#[test]
fn inverse_of_identity_is_identity() {
    let g = Grid::new(20.0, 0.05).unwrap();
    let id = AsymDiffeo::identity(g, SpaceMeta::w(1, 3, 3));
    let inv = id.invert().unwrap();
    assert!(inv.displacement().values().iter().all(|v| *v == 0.0));
}

#[test]
fn inverse_matches_bisection() {
    let g = Grid::new(40.0, 0.02).unwrap();
    let phi = near_identity(g, 0.3, 0.0, 0.0);
    let inv = phi.invert().unwrap();
    let image = inv.image();
    for i in (0..g.len()).step_by(7) {
        let x = g.x(i);
        let root = bisect(|y| y + 0.3 / bracket(y) - x, x - 1.0, x + 1.0);
        assert!((image[i] - root).abs() < 1e-10, "x = {x}: {} vs {root}", image[i]);
    }
    assert!(image.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn group_laws_on_a_random_corpus() {
    let g = Grid::new(60.0, 0.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let xs = g.nodes();
    let mut phis = Vec::new();
    for _ in 0..6 {
        phis.push(near_identity(g, rng.gen_range(-0.4..0.4), rng.gen_range(-0.3..0.3), rng.gen_range(-2.0..2.0)));
    }
    for phi in &phis {
        let inv = phi.invert().unwrap();
        assert!(inv.image().windows(2).all(|w| w[1] > w[0]));
        let right = phi.compose(&inv).unwrap();
        let left = inv.compose(phi).unwrap();
        assert!(sup_diff(&right.image(), &xs) <= 1e-8);
        assert!(sup_diff(&left.image(), &xs) <= 1e-8);
        let id = AsymDiffeo::identity(g, phi.displacement().meta());
        assert!(sup_diff(&phi.compose(&id).unwrap().image(), &phi.image()) <= 1e-12);
        assert!(sup_diff(&id.compose(phi).unwrap().image(), &phi.image()) <= 1e-12);
    }
    for t in phis.windows(3) {
        let a = t[0].compose(&t[1]).unwrap().compose(&t[2]).unwrap();
        let b = t[0].compose(&t[1].compose(&t[2]).unwrap()).unwrap();
        assert!(sup_diff(&a.image(), &b.image()) <= 1e-8);
    }
}

#[test]
fn composition_copies_low_coefficients_exactly() {
    let g = Grid::new(200.0, 0.02).unwrap();
    let mut tail = TailExpansion::term(Basis::a(1), rational(7, 5));
    tail.add_term(Basis::b(1), rational(-1, 3));
    tail.add_term(Basis::a(2), rational(1, 4));
    tail.add_term(Basis::b(2), rational(2, 9));
    tail.add_term(Basis::a(3), rational(5, 2));
    let v = AsymFunction::from_fn(tail.clone(), g, SpaceMeta::w(1, 3, 4), gauss);
    let phi = near_identity(g, 0.25, 0.2, -1.0);
    let w = compose_fn(&v, &phi).unwrap();
    // n_v = n_phi = 1: indices up to 2 are copied verbatim
    assert_eq!(w.tail(), &tail.split_above(2).0);
    let fit = fit_coefficients(&g, &w.values(), 1, 2, 4).unwrap();
    for (b, _) in w.tail().terms() {
        let want = tail.coeff_f64(b);
        assert!((fit.get(b) - want).abs() <= 1e-6 * tail.l1_norm(), "{b:?}: {} vs {want}", fit.get(b));
    }
}

#[test]
fn chain_rule_to_fourth_order() {
    let defect = |h: f64| {
        let g = Grid::new(30.0, h).unwrap();
        let meta = SpaceMeta::w(1, 3, 4);
        let f = AsymFunction::from_fn(TailExpansion::b(1), g, meta, |x| (0.8 * x).sin() * gauss(0.4 * x));
        let phi = near_identity(g, 0.3, 0.2, 0.5);
        let lhs = compose_fn(&f, &phi).unwrap().derivative().unwrap();
        let df = compose_fn(&f.derivative().unwrap(), &phi).unwrap();
        let dphi = phi.displacement().derivative().unwrap();
        let rhs: Vec<f64> = df.values().iter().zip(dphi.values()).map(|(a, d)| a * (1.0 + d)).collect();
        sup_diff(&lhs.values(), &rhs)
    };
    let (e1, e2) = (defect(0.05), defect(0.025));
    assert!(e2 < 2e-5, "{e2}");
    assert!((e1 / e2).log2() > 3.5, "order {}", (e1 / e2).log2());
}

#[test]
fn flow_of_zero_is_identity() {
    let g = Grid::new(20.0, 0.05).unwrap();
    let meta = SpaceMeta::w(1, 3, 3);
    let out = flow(|_| Ok(AsymFunction::zero(g, meta)), 1.0, 0.1, true).unwrap();
    assert!(out.end.displacement().values().iter().all(|v| *v == 0.0));
    assert_eq!(out.path.len(), 11);
}

#[test]
fn flow_of_constant_is_translation() {
    let g = Grid::new(20.0, 0.05).unwrap();
    let out = flow(|_| Ok(AsymFunction::constant(1.0, g, 2, 3)), 0.5, 0.05, false).unwrap();
    for x in [-19.0, 0.0, 3.7, 19.0] {
        assert!((out.end.apply(x) - x - 0.5).abs() < 1e-13);
    }
}

#[test]
fn flow_of_a1_matches_scalar_ode() {
    let g = Grid::new(40.0, 0.02).unwrap();
    let field = AsymFunction::from_tail(TailExpansion::a(1), g, SpaceMeta::w(1, 3, 4));
    let out = flow(|_| Ok(field.clone()), 1.0, 0.01, false).unwrap();
    // scalar RK4 for x' = 1/<x> from x = 0 with a much finer step
    let rhs = |x: f64| 1.0 / bracket(x);
    let mut x = 0.0;
    let dt = 1e-4;
    for _ in 0..10_000 {
        let k1 = rhs(x);
        let k2 = rhs(x + 0.5 * dt * k1);
        let k3 = rhs(x + 0.5 * dt * k2);
        let k4 = rhs(x + dt * k3);
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    assert!((out.end.apply(0.0) - x).abs() < 1e-8, "{} vs {x}", out.end.apply(0.0));
}

#[test]
fn flow_reports_loss_of_monotonicity() {
    let g = Grid::new(20.0, 0.02).unwrap();
    let field = AsymFunction::from_fn(TailExpansion::zero(), g, SpaceMeta::w(1, 3, 4), |x| -x * gauss(x));
    // u' = -1 at the origin, so phi'(0) = e^-t drops below the margin near t = 13.8
    let err = flow(|_| Ok(field.clone()), 16.0, 0.05, false).unwrap_err();
    assert!(matches!(err, Error::DiffeoLost { .. }), "{err:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn inverse_is_monotone_and_exact(a1 in -0.4f64..0.4, amp in -0.3f64..0.3, c in -3.0f64..3.0) {
        let g = Grid::new(40.0, 0.02).unwrap();
        let phi = near_identity(g, a1, amp, c);
        let inv = phi.invert().unwrap();
        let image = inv.image();
        prop_assert!(image.windows(2).all(|w| w[1] > w[0]));
        let back: Vec<f64> = image.iter().map(|y| phi.apply(*y)).collect();
        prop_assert!(sup_diff(&back, &g.nodes()) < 1e-10);
    }
}

