//! Residuals of the structural identities satisfied by the connection data.
//!
//! Each function returns absolute residuals; zero means the identity holds.

use crate::frame::{Epsilon, FrameData, PointGeometry};
use crate::invariants::cubic_tensor;
use crate::jet::Real;

/// Total symmetry of both cubic forms, which holds on every transversal
/// bundle. Returns the largest asymmetry over all argument permutations.
pub fn cubic_symmetry_residual(data: &FrameData) -> Real {
    let c = cubic_tensor(data);
    let mut worst: Real = 0.0;
    for n in 0..2 {
        for a in 0..2 {
            for b in 0..2 {
                for d in 0..2 {
                    let x = c[n][a][b][d];
                    for y in [c[n][b][a][d], c[n][a][d][b], c[n][d][b][a]] {
                        worst = worst.max((x - y).abs());
                    }
                }
            }
        }
    }
    worst
}

/// The four symmetry relations written with `Gamma^2_{22}`, `Gamma^1_{11}`
/// and without the `Gamma^2_{22} + Gamma^1_{21}` and `Gamma^1_{11} + Gamma^2_{12}`
/// terms. They coincide with [`cubic_symmetry_residual`] once
/// `Gamma^2_{12} = -Gamma^1_{11}` and `Gamma^1_{21} = -Gamma^2_{22}`.
pub fn reduced_symmetry_residuals(data: &FrameData) -> [Real; 4] {
    let e = data.eps();
    let g = |i, j, k| data.g(i, j, k);
    let t = |i, j, k| data.t(i, j, k);
    [
        (2.0 * g(2, 2, 2) + t(1, 1, 2)) - (-g(1, 2, 1) + e * g(1, 1, 2) + t(2, 1, 1)),
        (-2.0 * e * g(1, 1, 1) - e * t(1, 1, 1)) - (e * g(2, 1, 2) - g(2, 2, 1) + t(2, 1, 2)),
        (-2.0 * g(1, 2, 1) - e * t(1, 2, 1)) - t(2, 2, 2),
        (-2.0 * g(2, 1, 2) + t(1, 2, 2)) - t(2, 2, 1),
    ]
    .map(Real::abs)
}

/// The same four relations in the form valid on every transversal bundle.
pub fn general_symmetry_residuals(data: &FrameData) -> [Real; 4] {
    let e = data.eps();
    let g = |i, j, k| data.g(i, j, k);
    let t = |i, j, k| data.t(i, j, k);
    [
        (-2.0 * g(2, 1, 1) + t(1, 1, 2)) - (-g(1, 2, 1) + e * g(1, 1, 2) + t(2, 1, 1)),
        (2.0 * e * g(1, 2, 2) - e * t(1, 1, 1)) - (e * g(2, 1, 2) - g(2, 2, 1) + t(2, 1, 2)),
        (-2.0 * g(1, 2, 1) - e * t(1, 2, 1)) - (t(2, 2, 2) - g(2, 2, 2) - g(2, 1, 1)),
        (-2.0 * g(2, 1, 2) + t(1, 2, 2)) - (t(2, 2, 1) - g(1, 1, 1) - g(1, 2, 2)),
    ]
    .map(Real::abs)
}

/// Consequences of the unit volume `[X1, X2, xi1, xi2] = 1`.
pub fn volume_residuals(data: &FrameData) -> [Real; 2] {
    let g = |i, j, k| data.g(i, j, k);
    let t = |i, j, k| data.t(i, j, k);
    [
        g(1, 1, 1) + g(1, 2, 2) + t(1, 1, 1) + t(2, 2, 1),
        g(2, 1, 1) + g(2, 2, 2) + t(1, 1, 2) + t(2, 2, 2),
    ]
    .map(Real::abs)
}

/// The four connection relations that single out the affine normal bundle.
pub fn affine_gamma_residuals(data: &FrameData) -> [Real; 4] {
    let e = data.eps();
    let g = |i, j, k| data.g(i, j, k);
    [
        g(1, 2, 2) + g(1, 1, 1),
        g(2, 1, 1) + g(2, 2, 2),
        2.0 * g(1, 1, 1) - g(2, 1, 2) - e * g(2, 2, 1),
        2.0 * g(2, 2, 2) - g(1, 2, 1) - e * g(1, 1, 2),
    ]
    .map(Real::abs)
}

/// `tau_1^1(X_k) + tau_2^2(X_k)` for `k = 1, 2`.
pub fn tau_trace_residuals(data: &FrameData) -> [Real; 2] {
    [0, 1].map(|k| (data.tau[0][0][k] + data.tau[1][1][k]).abs())
}

/// `h` against its prescribed normalized values.
pub fn normalization_residual(data: &FrameData) -> Real {
    let h = crate::invariants::normalized_h(data.eps());
    let mut worst: Real = 0.0;
    for n in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((data.h[n][i][j] - h[n][i][j]).abs());
            }
        }
    }
    worst
}

/// Ambient distance between the transversal basis of `rotated` and the
/// basis of `base` transformed by `R(2 theta)`.
pub fn xi_rotation_residual(base: &FrameData, rotated: &FrameData, theta: Real) -> Real {
    let (c, s, sign) = match base.epsilon {
        Epsilon::Definite => ((2.0 * theta).cos(), (2.0 * theta).sin(), -1.0),
        Epsilon::Indefinite => ((2.0 * theta).cosh(), (2.0 * theta).sinh(), 1.0),
    };
    (0..4)
        .map(|r| {
            let p1 = c * base.xi1[r] + s * base.xi2[r];
            let p2 = sign * s * base.xi1[r] + c * base.xi2[r];
            (p1 - rotated.xi1[r]).abs().max((p2 - rotated.xi2[r]).abs())
        })
        .fold(0.0, Real::max)
}

/// Every pointwise identity on one bundle, as named maxima.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BundleIdentities {
    pub volume: Real,
    pub normalization: Real,
    pub cubic_symmetry: Real,
    pub general_symmetry: Real,
    pub reduced_symmetry: Real,
    pub volume_relations: Real,
    pub torsion: Real,
    pub decomposition: Real,
}

pub fn bundle_identities(data: &FrameData) -> BundleIdentities {
    let max = |xs: &[Real]| xs.iter().fold(0.0, |m: Real, x| m.max(*x));
    BundleIdentities {
        volume: (data.volume - 1.0).abs(),
        normalization: normalization_residual(data),
        cubic_symmetry: cubic_symmetry_residual(data),
        general_symmetry: max(&general_symmetry_residuals(data)),
        reduced_symmetry: max(&reduced_symmetry_residuals(data)),
        volume_relations: max(&volume_residuals(data)),
        torsion: data.torsion_residual,
        decomposition: data.decomposition_residual,
    }
}

/// Identities specific to the affine normal bundle at a point.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AffineIdentities {
    pub gamma_relations: Real,
    pub tau_trace: Real,
    pub e_values: Real,
    pub e_scale: Real,
}

pub fn affine_identities(geom: &PointGeometry) -> Result<AffineIdentities, crate::invariants::InvariantError> {
    use crate::invariants::{cubic_forms, verify_bundle};
    let data = &geom.affine;
    let forms = cubic_forms(data)?;
    let e = verify_bundle(&forms.c1, &forms.c2, data.epsilon);
    let max = |xs: &[Real]| xs.iter().fold(0.0, |m: Real, x| m.max(x.abs()));
    Ok(AffineIdentities {
        gamma_relations: max(&affine_gamma_residuals(data)),
        tau_trace: max(&tau_trace_residuals(data)),
        e_values: max(&e),
        e_scale: forms.sup_norm().max(1.0),
    })
}
