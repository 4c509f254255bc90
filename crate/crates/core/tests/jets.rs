mod common;

use common::*;
use equiaffine::jet::{jet_arith, ArithOp, Elementary, Jet, JetError, Real, Variable};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close(a: &Jet, b: &Jet, tol: Real) -> bool {
    a.coefficients()
        .iter()
        .zip(b.coefficients())
        .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

fn jets(seed: u64, order: usize) -> (Jet, Jet, Jet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (random_jet(&mut rng, order), random_jet(&mut rng, order), random_jet(&mut rng, order))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ring_axioms(seed in any::<u64>(), order in 0usize..7) {
        let (a, b, c) = jets(seed, order);
        prop_assert!(close(&(&a + &b), &(&b + &a), 1e-15));
        prop_assert!(close(&(&a * &b), &(&b * &a), 1e-14));
        prop_assert!(close(&(&(&a + &b) + &c), &(&a + &(&b + &c)), 1e-14));
        prop_assert!(close(&(&(&a * &b) * &c), &(&a * &(&b * &c)), 1e-12));
        prop_assert!(close(&(&a * &(&b + &c)), &(&(&a * &b) + &(&a * &c)), 1e-12));
        let one = Jet::constant(1.0, order);
        prop_assert!(close(&(&a * &one), &a, 0.0));
        prop_assert!(close(&(&a - &a), &Jet::zero(order), 0.0));
    }

    #[test]
    fn elementary_identities(seed in any::<u64>(), order in 0usize..7) {
        let (a, b, _) = jets(seed, order);
        let exp = |j: &Jet| j.elementary(Elementary::Exp).unwrap();
        prop_assert!(close(&exp(&(&a + &b)), &(&exp(&a) * &exp(&b)), 1e-11));
        let s = a.elementary(Elementary::Sin).unwrap();
        let c = a.elementary(Elementary::Cos).unwrap();
        prop_assert!(close(&(&(&s * &s) + &(&c * &c)), &Jet::constant(1.0, order), 1e-12));
        let sh = a.elementary(Elementary::Sinh).unwrap();
        let ch = a.elementary(Elementary::Cosh).unwrap();
        prop_assert!(close(&(&(&ch * &ch) - &(&sh * &sh)), &Jet::constant(1.0, order), 1e-9));
        // shift away from zero so the reciprocal and logarithm exist
        let p = (&a * &a).add_constant(0.5);
        let r = p.recip().unwrap();
        prop_assert!(close(&(&p * &r), &Jet::constant(1.0, order), 1e-11));
        let root = p.sqrt().unwrap();
        prop_assert!(close(&(&root * &root), &p, 1e-11));
        let cube = p.cbrt().unwrap();
        prop_assert!(close(&(&(&cube * &cube) * &cube), &p, 1e-11));
        prop_assert!(close(&exp(&p.elementary(Elementary::Log).unwrap()), &p, 1e-11));
        prop_assert!(close(&p.powi(-2).unwrap(), &(&r * &r), 1e-11));
    }

    #[test]
    fn partials_commute(seed in any::<u64>(), order in 2usize..7) {
        let (a, _, _) = jets(seed, order);
        let uv = a.partial(Variable::U).partial(Variable::V);
        let vu = a.partial(Variable::V).partial(Variable::U);
        prop_assert!(close(&uv, &vu, 0.0));
    }

    #[test]
    fn expressions_match_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = parse_expr(&random_expr(&mut rng, 4));
        let (u, v) = (rand::Rng::gen_range(&mut rng, -1.0..1.0), rand::Rng::gen_range(&mut rng, -1.0..1.0));
        prop_assume!(e.eval(u, v).abs() < 1e3);
        let j = e.eval_jet(&Jet::variable(Variable::U, u, 2), &Jet::variable(Variable::V, v, 2)).unwrap();
        prop_assert!((j.value() - e.eval(u, v)).abs() <= 1e-12 * (1.0 + j.value().abs()));
        for (a, b) in jet_partials(&j).iter().zip(fd_partials(&e, u, v, 1e-3)) {
            prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn variable_jets() {
    let u = Jet::variable(Variable::U, 0.0, 3);
    assert_eq!(u.value(), 0.0);
    assert_eq!(u.taylor_coefficient(1, 0), 1.0);
    assert!(u.coefficients().iter().skip(2).all(|c| *c == 0.0));
    let v = Jet::variable(Variable::V, 2.5, 3);
    assert_eq!((v.value(), v.taylor_coefficient(0, 1)), (2.5, 1.0));
    let u1 = Jet::variable(Variable::U, 1.0, 1);
    assert_eq!(u1.coefficients(), &[1.0, 1.0, 0.0]);
}

#[test]
fn arithmetic_examples() {
    let u = Jet::variable(Variable::U, 0.0, 3);
    let sq = jet_arith(ArithOp::Mul, &u, &u).unwrap();
    assert_eq!(sq.derivative(2, 0), 2.0);
    assert_eq!(sq.taylor_coefficient(2, 0), 1.0);
    let s = jet_arith(ArithOp::Add, &Jet::variable(Variable::U, 1.0, 2), &Jet::variable(Variable::V, 1.0, 2)).unwrap();
    assert_eq!([s.value(), s.derivative(1, 0), s.derivative(0, 1)], [2.0, 1.0, 1.0]);
    let q = jet_arith(ArithOp::Div, &Jet::constant(1.0, 3), &Jet::variable(Variable::U, 2.0, 3)).unwrap();
    assert_eq!([q.value(), q.derivative(1, 0), q.derivative(2, 0), q.derivative(3, 0)], [0.5, -0.25, 0.25, -0.375]);
    let z = jet_arith(ArithOp::Div, &Jet::constant(1.0, 2), &Jet::zero(2));
    assert!(matches!(z, Err(JetError::DivisionByZeroJet { .. })));
}

#[test]
fn elementary_examples() {
    let s = Jet::variable(Variable::U, 0.0, 4).elementary(Elementary::Sin).unwrap();
    assert_eq!([s.value(), s.derivative(1, 0), s.derivative(2, 0), s.derivative(3, 0)], [0.0, 1.0, 0.0, -1.0]);
    let e = Jet::constant(0.0, 3).elementary(Elementary::Exp).unwrap();
    assert_eq!(e, Jet::constant(1.0, 3));
    let c = Jet::variable(Variable::V, 0.3, 4).elementary(Elementary::Cosh).unwrap();
    for k in 0..=4 {
        let exact = if k % 2 == 0 { 0.3f64.cosh() } else { 0.3f64.sinh() };
        assert!((c.derivative(0, k) - exact).abs() < 1e-14);
    }
}
