mod common;

use common::*;
use equiaffine::dsl::{parse_surface, SurfaceChart};
use equiaffine::frame::{analyze_point, Epsilon, FrameChoice, FrameOptions, GeometryError, Rotation};
use equiaffine::identities::*;
use equiaffine::invariants::*;
use equiaffine::jet::Real;
use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `[x_u, x_v, x_uu, x_uv, x_vv]` by central differences with one Richardson step.
fn fd_derivatives(chart: &SurfaceChart, (u, v): (Real, Real)) -> [Vector4<Real>; 5] {
    let x = |a: Real, b: Real| Vector4::from(chart.point(u + a, v + b));
    let at = |h: Real| {
        let c = x(0.0, 0.0);
        [
            (x(h, 0.0) - x(-h, 0.0)) / (2.0 * h),
            (x(0.0, h) - x(0.0, -h)) / (2.0 * h),
            (x(h, 0.0) - 2.0 * c + x(-h, 0.0)) / (h * h),
            (x(h, h) - x(h, -h) - x(-h, h) + x(-h, -h)) / (4.0 * h * h),
            (x(0.0, h) - 2.0 * c + x(0.0, -h)) / (h * h),
        ]
    };
    let (a, b) = (at(1e-3), at(5e-4));
    std::array::from_fn(|i| (4.0 * b[i] - a[i]) / 3.0)
}

fn det(cols: [&Vector4<Real>; 4]) -> Real {
    Matrix4::from_columns(&[*cols[0], *cols[1], *cols[2], *cols[3]]).determinant()
}

#[test]
fn metric_matches_determinants_of_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for chart in corpus() {
        for _ in 0..10 {
            let p = random_point(&mut rng, &chart);
            let [xu, xv, xuu, xuv, xvv] = fd_derivatives(&chart, p);
            let g11 = det([&xu, &xv, &xuu, &xuv]);
            let g22 = det([&xu, &xv, &xuv, &xvv]);
            let g12 = 0.5 * det([&xu, &xv, &xuu, &xvv]);
            let delta = g11 * g22 - g12 * g12;
            let m = analyze_point(&chart, p, &FrameOptions::default()).unwrap().metric;
            assert!((m.delta - delta).abs() <= 1e-6 * delta.abs().max(1.0), "{} {p:?}: {} vs {delta}", chart.name, m.delta);
            assert_eq!(m.epsilon == Epsilon::Definite, delta > 0.0);
            let s = m.volume_sign;
            for (got, want) in [(m.big_g[0][0], g11), (m.big_g[0][1], g12), (m.big_g[1][1], g22)] {
                assert!((got - s * want).abs() <= 1e-6 * want.abs().max(1.0));
            }
        }
    }
}

#[test]
fn frame_is_metric_orthonormal_with_unit_volume() {
    for chart in corpus() {
        for p in chart.domain.grid(5) {
            let geom = analyze_point(&chart, p, &FrameOptions::default()).unwrap();
            let g = Matrix2::from_fn(|i, j| geom.metric.g_coord[i][j]);
            let c = geom.affine.x_coords;
            let x = [0, 1].map(|i| nalgebra::Vector2::new(c[i][0], c[i][1]));
            let e = geom.affine.eps();
            assert!(x[0].dot(&(g * x[1])).abs() <= 1e-12);
            assert!((x[0].dot(&(g * x[0])) - e).abs() <= 1e-12);
            assert!((x[1].dot(&(g * x[1])) - 1.0).abs() <= 1e-12);
            for data in [&geom.euclidean, &geom.affine] {
                let d = data.frame_matrix().determinant();
                assert!((d * data.volume_sign - 1.0).abs() <= 1e-10, "{} {p:?}: det {d}", chart.name);
            }
        }
    }
}

#[test]
fn normalized_second_fundamental_forms() {
    assert_eq!(normalized_h(1.0), [[[1.0, 0.0], [0.0, -1.0]], [[0.0, 1.0], [1.0, 0.0]]]);
    for chart in corpus() {
        for p in chart.domain.grid(5) {
            let geom = analyze_point(&chart, p, &FrameOptions::default()).unwrap();
            assert!(normalization_residual(&geom.euclidean) <= 1e-10);
            assert!(normalization_residual(&geom.affine) <= 1e-10);
        }
    }
}

#[test]
fn euclidean_normal_bundle_is_not_affine_normal() {
    let chart = parse_surface("surface s { x1 = u; x2 = v; x3 = u^2 + u*v + v^3; x4 = u*v + u^3; }").unwrap();
    let geom = analyze_point(&chart, (0.2, 0.1), &FrameOptions::default()).unwrap();
    let e = |data| {
        let forms = cubic_forms(data).unwrap();
        let e = verify_bundle(&forms.c1, &forms.c2, geom.metric.epsilon);
        e.iter().fold(0.0, |m: Real, x| m.max(x.abs())) / forms.sup_norm().max(1.0)
    };
    assert!(e(&geom.euclidean) > 1e-3);
    assert!(e(&geom.affine) <= 1e-12);
    assert!(max_abs(&affine_gamma_residuals(&geom.euclidean)) > 1e-3);
}

fn max_abs(xs: &[Real]) -> Real {
    xs.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
fn complex_curve_has_vanishing_f() {
    let chart = load("cc");
    for p in chart.domain.grid(7) {
        let r = report_at(&chart, p, &FrameOptions::default(), RankTolerance::default()).unwrap();
        assert!(mat_norm(&r.f) <= 1e-10);
        assert!(mat_norm(&r.l) <= 1e-10);
        assert_eq!((r.rank_h, r.kernel_ab), (0, Kernel::Any));
    }
}

#[test]
fn transversal_plane_rotates_by_double_angle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for chart in corpus() {
        for _ in 0..5 {
            let p = random_point(&mut rng, &chart);
            let base = analyze_point(&chart, p, &FrameOptions::default()).unwrap();
            let theta = rng.gen_range(-1.0..1.0);
            let rotated = FrameOptions {
                choice: Some(FrameChoice {
                    seed: base.frame.seed,
                    rotation: Some(Rotation::constant(theta)),
                }),
                ..FrameOptions::default()
            };
            let rot = analyze_point(&chart, p, &rotated).unwrap();
            assert!(xi_rotation_residual(&base.euclidean, &rot.euclidean, theta) <= 1e-10);
            assert!(xi_rotation_residual(&base.affine, &rot.affine, theta) <= 1e-10);
        }
    }
}

#[test]
fn identities_hold_on_every_grid_point() {
    for chart in corpus() {
        for p in chart.domain.grid(5) {
            let geom = analyze_point(&chart, p, &FrameOptions::default()).unwrap();
            for data in [&geom.euclidean, &geom.affine] {
                let b = bundle_identities(data);
                for r in [b.volume, b.cubic_symmetry, b.general_symmetry, b.volume_relations, b.torsion, b.decomposition] {
                    assert!(r <= 1e-9, "{} {p:?}: {b:?}", chart.name);
                }
            }
            assert!(max_abs(&reduced_symmetry_residuals(&geom.affine)) <= 1e-9);
            assert!(max_abs(&tau_trace_residuals(&geom.affine)) <= 1e-9);
        }
    }
}

/// Stacked `[L; F]` with prescribed singular values.
fn stacked(rng: &mut ChaCha8Rng, s: [Real; 2]) -> (Mat2, Mat2, Matrix2<Real>) {
    let q = Matrix4::from_fn(|_, _| rng.gen_range(-1.0..1.0)).qr().q();
    let u = Matrix4x2::from_columns(&[q.column(0).into_owned(), q.column(1).into_owned()]);
    let t: Real = rng.gen_range(-3.0..3.0);
    let v = Matrix2::new(t.cos(), -t.sin(), t.sin(), t.cos());
    let m = u * Matrix2::from_diagonal(&nalgebra::Vector2::new(s[0], s[1])) * v.transpose();
    let l = [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]];
    let f = [[m[(2, 0)], m[(2, 1)]], [m[(3, 0)], m[(3, 1)]]];
    (l, f, v)
}

type Mat2 = [[Real; 2]; 2];

#[test]
fn rank_with_known_singular_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let (l, f, _) = stacked(&mut rng, [3.0, 0.5]);
        let r = rank_and_kernel(&l, &f, RankTolerance::default());
        assert_eq!((r.rank, r.kernel), (2, Kernel::Trivial));
        assert!((r.singular_values[0] - 3.0).abs() < 1e-12 && (r.singular_values[1] - 0.5).abs() < 1e-12);

        let (l, f, v) = stacked(&mut rng, [2.0, 0.0]);
        let r = rank_and_kernel(&l, &f, RankTolerance::default());
        assert_eq!(r.rank, 1);
        let k = r.kernel.direction().unwrap();
        let want = normalize_sign([v[(0, 1)], v[(1, 1)]]);
        assert!((k[0] - want[0]).abs() < 1e-12 && (k[1] - want[1]).abs() < 1e-12);
        assert!(k[0] >= 0.0);
    }
}

#[test]
fn degenerate_and_collapsed_charts_are_rejected() {
    let plane = load("plane");
    assert!(matches!(
        analyze_point(&plane, (0.1, 0.2), &FrameOptions::default()),
        Err(GeometryError::DegenerateSurface { .. })
    ));
    let line = parse_surface("surface l { x1 = u + v; x2 = u + v; x3 = (u + v)^2; x4 = (u + v)^3; }").unwrap();
    assert!(matches!(
        analyze_point(&line, (0.1, 0.2), &FrameOptions::default()),
        Err(GeometryError::ImmersionFailure { .. })
    ));
}
