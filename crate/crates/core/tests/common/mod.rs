#![allow(dead_code)]

use std::path::PathBuf;

use equiaffine::dsl::{parse_surface, Expr, SurfaceChart};
use equiaffine::jet::{Jet, Real, Variable};
use rand::Rng;

/// Non-degenerate corpus charts with their expected oracle dimension.
pub const CORPUS: [(&str, usize); 6] = [
    ("cc", 2),
    ("parabolas", 2),
    ("gradgraph", 1),
    ("gradgraph2", 1),
    ("perturbed", 0),
    ("perturbed2", 0),
];

pub fn corpus_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(format!("{name}.srf"))
}

pub fn load(name: &str) -> SurfaceChart {
    let text = std::fs::read_to_string(corpus_path(name)).expect("corpus file");
    parse_surface(&text).expect("corpus file parses")
}

pub fn corpus() -> Vec<SurfaceChart> {
    CORPUS.iter().map(|(n, _)| load(n)).collect()
}

pub fn random_point<R: Rng>(rng: &mut R, chart: &SurfaceChart) -> (Real, Real) {
    let d = chart.domain.shrink(0.05);
    (rng.gen_range(d.u_min..d.u_max), rng.gen_range(d.v_min..d.v_max))
}

/// `1 + a (u - u0) + b (v - v0) + c (u - u0)(v - v0)` style shift coefficient.
pub fn random_shift_jet<R: Rng>(rng: &mut R, point: (Real, Real), order: usize) -> Jet {
    let du = Jet::variable(Variable::U, point.0, order).add_constant(-point.0);
    let dv = Jet::variable(Variable::V, point.1, order).add_constant(-point.1);
    let mut c = || rng.gen_range(-1.0..1.0);
    Jet::constant(c(), order) + du.scale(c()) + dv.scale(c()) + (&du * &dv).scale(c()) + (&du * &du).scale(c())
}

/// Source text of a random expression that is smooth on all of R^2: divisions,
/// logarithms and square roots only see arguments bounded away from zero.
pub fn random_expr<R: Rng>(rng: &mut R, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..3) {
            0 => "u".into(),
            1 => "v".into(),
            _ => format!("({:.3})", rng.gen_range(-2.0..2.0)),
        };
    }
    let mut sub = || random_expr(rng, depth - 1);
    let (a, b) = (sub(), sub());
    match rng.gen_range(0..12) {
        0 => format!("({a} + {b})"),
        1 => format!("({a} - {b})"),
        2 | 3 => format!("({a} * {b})"),
        4 => format!("({a} / (1.5 + {b}^2))"),
        5 => format!("sin({a})"),
        6 => format!("cos({a})"),
        7 => format!("exp({a} / 3)"),
        8 => format!("log(1 + {a}^2)"),
        9 => format!("sqrt(0.5 + {a}^2)"),
        10 => format!("(sinh({a} / 2) * cosh({b} / 3))"),
        _ => format!("({a}^{})", rng.gen_range(2..4)),
    }
}

pub fn parse_expr(text: &str) -> Expr {
    equiaffine::dsl::parse_expr(text).expect("generated expression parses")
}

/// Central differences with one Richardson step; exact to fourth order.
pub fn fd_partials(e: &Expr, u: Real, v: Real, h: Real) -> [Real; 5] {
    let f = |a: Real, b: Real| e.eval(u + a, v + b);
    let one = |h: Real| {
        let f0 = f(0.0, 0.0);
        [
            (f(h, 0.0) - f(-h, 0.0)) / (2.0 * h),
            (f(0.0, h) - f(0.0, -h)) / (2.0 * h),
            (f(h, 0.0) - 2.0 * f0 + f(-h, 0.0)) / (h * h),
            (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h),
            (f(0.0, h) - 2.0 * f0 + f(0.0, -h)) / (h * h),
        ]
    };
    let (coarse, fine) = (one(h), one(h / 2.0));
    std::array::from_fn(|i| (4.0 * fine[i] - coarse[i]) / 3.0)
}

/// `[d_u, d_v, d_uu, d_uv, d_vv]` read off a jet.
pub fn jet_partials(j: &Jet) -> [Real; 5] {
    [
        j.derivative(1, 0),
        j.derivative(0, 1),
        j.derivative(2, 0),
        j.derivative(1, 1),
        j.derivative(0, 2),
    ]
}

pub fn criterion(n: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {n} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

/// Jet whose normalized Taylor coefficients are uniform in `[-1, 1]`, with
/// value in `[-pi, pi]`.
pub fn random_jet<R: Rng>(rng: &mut R, order: usize) -> Jet {
    let fact = |n: usize| (1..=n).map(|k| k as Real).product::<Real>();
    let mut d = Vec::new();
    for n in 0..=order {
        for b in 0..=n {
            let a = n - b;
            let c = if n == 0 {
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
            } else {
                rng.gen_range(-1.0..1.0)
            };
            d.push(c * fact(a) * fact(b));
        }
    }
    Jet::from_derivatives(order, &d)
}
