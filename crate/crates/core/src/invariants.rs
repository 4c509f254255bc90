//! Frame invariants at a point: `L`, the cubic forms, `F`, `H`, its rank and
//! kernel, the kernel angle `eta` and the pair `(G1, G2)`.

use nalgebra::{Matrix4x2, SVD};
use serde::ser::{Serialize, SerializeSeq, Serializer};
use thiserror::Error;

use crate::dsl::SurfaceChart;
use crate::frame::{
    analyze_point, Epsilon, FrameChoice, FrameData, FrameOptions, GeometryError, Mat2,
    PointGeometry, Rotation,
};
use crate::jet::Real;

/// Agreement required between two evaluation paths of the same quantity.
pub const TOL_CROSS_CHECK: Real = 1e-8;
pub const DEFAULT_TOL_RANK: Real = 1e-6;
pub const DEFAULT_TOL_ABS: Real = 1e-9;

#[derive(Debug, Error)]
pub enum InvariantError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{what}: evaluation paths disagree by {discrepancy:e}")]
    CrossCheckFailure {
        what: &'static str,
        discrepancy: Real,
    },
}

/// `C^i(X_a, X_b, X_c)` stored as `[i][a][b][c]`.
pub type CubicTensor = [[[[Real; 2]; 2]; 2]; 2];

/// The four independent components of one cubic form.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct CubicComponents {
    #[serde(rename = "111")]
    pub c111: Real,
    #[serde(rename = "112")]
    pub c112: Real,
    #[serde(rename = "122")]
    pub c122: Real,
    #[serde(rename = "222")]
    pub c222: Real,
}

impl CubicComponents {
    pub fn as_array(&self) -> [Real; 4] {
        [self.c111, self.c112, self.c122, self.c222]
    }

    fn from_array(a: [Real; 4]) -> Self {
        CubicComponents {
            c111: a[0],
            c112: a[1],
            c122: a[2],
            c222: a[3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicForms {
    pub c1: CubicComponents,
    pub c2: CubicComponents,
    /// Largest difference between the tensor definition and the closed forms.
    pub discrepancy: Real,
}

impl CubicForms {
    pub fn sup_norm(&self) -> Real {
        self.c1
            .as_array()
            .into_iter()
            .chain(self.c2.as_array())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// The prescribed values `h^n(X_i, X_j)` of the normalized transversal basis.
pub fn normalized_h(eps: Real) -> [Mat2; 2] {
    [[[1.0, 0.0], [0.0, -eps]], [[0.0, 1.0], [1.0, 0.0]]]
}

/// `L` from the shape operator components.
pub fn shape_matrix(data: &FrameData) -> Mat2 {
    let e = data.eps();
    let l = |i, j, k| data.l(i, j, k);
    [
        [l(1, 1, 1) - l(2, 1, 2), -e * l(1, 1, 2) - l(2, 1, 1)],
        [l(1, 2, 1) - l(2, 2, 2), -e * l(1, 2, 2) - l(2, 2, 1)],
    ]
}

/// Cubic forms from `C^i(X,Y,Z) = (nabla_X h^i)(Y,Z) + tau_1^i(X) h^1(Y,Z) + tau_2^i(X) h^2(Y,Z)`
/// with constant `h` components.
pub fn cubic_tensor(data: &FrameData) -> CubicTensor {
    let h = normalized_h(data.eps());
    let mut c = [[[[0.0; 2]; 2]; 2]; 2];
    for i in 0..2 {
        for a in 0..2 {
            for b in 0..2 {
                for d in 0..2 {
                    let mut acc = data.tau[0][i][a] * h[0][b][d] + data.tau[1][i][a] * h[1][b][d];
                    for k in 0..2 {
                        acc -= data.gamma[a][b][k] * h[i][k][d];
                        acc -= data.gamma[a][d][k] * h[i][b][k];
                    }
                    c[i][a][b][d] = acc;
                }
            }
        }
    }
    c
}

/// Closed-form components `(111, 112, 122, 222)` of `C^1` and `C^2`.
pub fn cubic_closed_form(data: &FrameData) -> [CubicComponents; 2] {
    let e = data.eps();
    let g = |i, j, k| data.g(i, j, k);
    let t = |i, j, k| data.t(i, j, k);
    [
        CubicComponents::from_array([
            -2.0 * g(1, 1, 1) + t(1, 1, 1),
            -2.0 * g(2, 1, 1) + t(1, 1, 2),
            2.0 * e * g(1, 2, 2) - e * t(1, 1, 1),
            2.0 * e * g(2, 2, 2) - e * t(1, 1, 2),
        ]),
        CubicComponents::from_array([
            -2.0 * g(1, 1, 2) + t(1, 2, 1),
            -2.0 * g(2, 1, 2) + t(1, 2, 2),
            -2.0 * g(1, 2, 1) - e * t(1, 2, 1),
            -2.0 * g(2, 2, 1) - e * t(1, 2, 2),
        ]),
    ]
}

/// Components of the tensor in the argument orders matching the closed forms.
fn tensor_components(c: &CubicTensor, i: usize) -> CubicComponents {
    CubicComponents::from_array([c[i][0][0][0], c[i][1][0][0], c[i][0][1][1], c[i][1][1][1]])
}

pub fn cubic_forms(data: &FrameData) -> Result<CubicForms, InvariantError> {
    let tensor = cubic_tensor(data);
    let [c1, c2] = cubic_closed_form(data);
    let discrepancy = [(c1, 0), (c2, 1)]
        .into_iter()
        .flat_map(|(closed, i)| {
            let t = tensor_components(&tensor, i).as_array();
            closed
                .as_array()
                .into_iter()
                .zip(t)
                .map(|(x, y)| (x - y).abs())
        })
        .fold(0.0, Real::max);
    if !(discrepancy <= TOL_CROSS_CHECK * (1.0 + max_abs(&tensor))) {
        return Err(InvariantError::CrossCheckFailure {
            what: "cubic form",
            discrepancy,
        });
    }
    Ok(CubicForms {
        c1,
        c2,
        discrepancy,
    })
}

fn max_abs(c: &CubicTensor) -> Real {
    c.iter()
        .flatten()
        .flatten()
        .flatten()
        .fold(0.0, |m, x| m.max(x.abs()))
}

/// `F` from the cubic form components.
pub fn matrix_f(c1: &CubicComponents, c2: &CubicComponents, epsilon: Epsilon) -> Mat2 {
    let e = epsilon.value();
    [
        [3.0 * c1.c112 - e * c1.c222, e * c1.c111 - 3.0 * c1.c122],
        [3.0 * c2.c112 - e * c2.c222, e * c2.c111 - 3.0 * c2.c122],
    ]
}

/// `F` in terms of `Gamma` and `tau`, valid on the affine normal bundle.
pub fn matrix_f_affine(data: &FrameData) -> Mat2 {
    let e = data.eps();
    let g = |i, j, k| data.g(i, j, k);
    let t = |i, j, k| data.t(i, j, k);
    [
        [
            4.0 * (g(2, 2, 2) + t(1, 1, 2)),
            4.0 * e * (g(1, 1, 1) + t(1, 1, 1)),
        ],
        [
            4.0 * (g(1, 1, 1) - t(1, 1, 1)),
            4.0 * (-g(2, 2, 2) + t(1, 1, 2)),
        ],
    ]
}

/// `F` together with its discrepancy against the affine-bundle closed form.
pub fn matrix_f_checked(data: &FrameData, forms: &CubicForms) -> Result<(Mat2, Real), InvariantError> {
    let f = matrix_f(&forms.c1, &forms.c2, data.epsilon);
    let alt = matrix_f_affine(data);
    let discrepancy = mat_diff(&f, &alt);
    if !(discrepancy <= TOL_CROSS_CHECK * (1.0 + mat_norm(&f))) {
        return Err(InvariantError::CrossCheckFailure {
            what: "matrix F",
            discrepancy,
        });
    }
    Ok((f, discrepancy))
}

/// `(E1, E2, E3, E4)`; all vanish exactly on the affine normal bundle.
pub fn verify_bundle(c1: &CubicComponents, c2: &CubicComponents, epsilon: Epsilon) -> [Real; 4] {
    let e = epsilon.value();
    [
        e * c1.c111 + c1.c122 - e * c2.c112 - c2.c222,
        e * c1.c112 + c1.c222 + e * c2.c122 + c2.c111,
        3.0 * c1.c111 - e * c1.c122 + 3.0 * c2.c112 - e * c2.c222,
        c1.c112 - 3.0 * e * c1.c222 + 3.0 * c2.c122 - e * c2.c111,
    ]
}

/// Kernel of `H` as reported: a unit direction, the whole plane, or nothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `H = 0`.
    Any,
    /// Unit vector `[A, B]` with `A >= 0` (`B > 0` when `A = 0`).
    Direction([Real; 2]),
    /// `H` has full rank.
    Trivial,
}

impl Kernel {
    pub fn direction(&self) -> Option<[Real; 2]> {
        match self {
            Kernel::Direction(d) => Some(*d),
            _ => None,
        }
    }
}

impl Serialize for Kernel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Kernel::Any => s.serialize_str("any"),
            Kernel::Trivial => s.serialize_none(),
            Kernel::Direction(d) => {
                let mut seq = s.serialize_seq(Some(2))?;
                seq.serialize_element(&d[0])?;
                seq.serialize_element(&d[1])?;
                seq.end()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankTolerance {
    pub rel: Real,
    pub abs: Real,
}

impl Default for RankTolerance {
    fn default() -> Self {
        RankTolerance {
            rel: DEFAULT_TOL_RANK,
            abs: DEFAULT_TOL_ABS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankInfo {
    pub rank: u8,
    pub singular_values: [Real; 2],
    pub kernel: Kernel,
    /// The singular value ratio sits within a factor 2 of the threshold.
    pub ill_conditioned: bool,
}

/// `H = [L | F]`.
pub fn matrix_h(l: &Mat2, f: &Mat2) -> [[Real; 4]; 2] {
    [
        [l[0][0], l[0][1], f[0][0], f[0][1]],
        [l[1][0], l[1][1], f[1][0], f[1][1]],
    ]
}

/// Rank of `H` and the common kernel of `L` and `F`.
///
/// `L` and `F` act on the same vector `[A, B]`, so the decomposition is taken
/// of the stacked 4x2 matrix `[L; F]`.
pub fn rank_and_kernel(l: &Mat2, f: &Mat2, tol: RankTolerance) -> RankInfo {
    let m = Matrix4x2::new(
        l[0][0], l[0][1], //
        l[1][0], l[1][1], //
        f[0][0], f[0][1], //
        f[1][0], f[1][1],
    );
    let svd = SVD::new(m, false, true);
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv = order.map(|i| svd.singular_values[i]);
    let v_t = svd.v_t.expect("requested");
    let ratio = if sv[1] > 0.0 { sv[0] / sv[1] } else { Real::INFINITY };
    let ill_conditioned = sv[0] >= tol.abs && ratio >= 0.5 / tol.rel && ratio <= 2.0 / tol.rel;
    let (rank, kernel) = if sv[0] < tol.abs {
        (0, Kernel::Any)
    } else if sv[1] <= tol.rel * sv[0] {
        let row = v_t.row(order[1]);
        (1, Kernel::Direction(normalize_sign([row[0], row[1]])))
    } else {
        (2, Kernel::Trivial)
    };
    RankInfo {
        rank,
        singular_values: sv,
        kernel,
        ill_conditioned,
    }
}

/// Fixes the sign of a kernel vector: `A >= 0`, and `B > 0` when `A = 0`.
pub fn normalize_sign(v: [Real; 2]) -> [Real; 2] {
    let n = v[0].hypot(v[1]);
    let v = if n > 0.0 { [v[0] / n, v[1] / n] } else { v };
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        [-v[0], -v[1]]
    } else {
        v
    }
}

/// Kernel angle: `atan(B/A)` for a definite metric, `artanh(B/A)` for an
/// indefinite one (undefined when `|B| >= |A|`).
pub fn eta(kernel: [Real; 2], epsilon: Epsilon) -> Option<Real> {
    let [a, b] = kernel;
    match epsilon {
        Epsilon::Definite => Some(b.atan2(a)),
        Epsilon::Indefinite if b.abs() < a.abs() => Some((b / a).atanh()),
        Epsilon::Indefinite => None,
    }
}

/// `(G1, G2)` from the definition.
pub fn g_pair(data: &FrameData) -> [Real; 2] {
    let e = data.eps();
    let g = |i, j, k| data.g(i, j, k);
    let t = |i, j, k| data.t(i, j, k);
    [
        g(2, 2, 2) - e * g(1, 1, 2) + t(1, 1, 2) - e * t(1, 2, 1),
        g(1, 1, 1) - e * g(2, 2, 1) - t(2, 2, 1) + t(1, 2, 2),
    ]
}

/// `(G1, G2)` in the form valid on the affine normal bundle.
pub fn g_pair_affine(data: &FrameData) -> [Real; 2] {
    let e = data.eps();
    let g = |i, j, k| data.g(i, j, k);
    [
        5.0 * g(2, 2, 2) - 3.0 * e * g(1, 1, 2),
        5.0 * g(1, 1, 1) - 3.0 * e * g(2, 2, 1),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaG {
    pub eta: Option<Real>,
    pub g: [Real; 2],
    pub discrepancy: Real,
}

pub fn eta_and_g(data: &FrameData, kernel: Option<[Real; 2]>) -> Result<EtaG, InvariantError> {
    let g = g_pair(data);
    let alt = g_pair_affine(data);
    let discrepancy = (g[0] - alt[0]).abs().max((g[1] - alt[1]).abs());
    let scale = 1.0 + g[0].abs().max(g[1].abs());
    if !(discrepancy <= TOL_CROSS_CHECK * scale) {
        return Err(InvariantError::CrossCheckFailure {
            what: "G1/G2",
            discrepancy,
        });
    }
    Ok(EtaG {
        eta: kernel.and_then(|k| eta(k, data.epsilon)),
        g,
        discrepancy,
    })
}

/// Everything computed at one point relative to the affine normal bundle.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InvariantReport {
    pub u: Real,
    pub v: Real,
    pub epsilon: Epsilon,
    pub delta: Real,
    pub volume_sign: Real,
    pub gamma: [[[Real; 2]; 2]; 2],
    pub tau: [[[Real; 2]; 2]; 2],
    #[serde(rename = "L")]
    pub l: Mat2,
    #[serde(rename = "C1")]
    pub c1: CubicComponents,
    #[serde(rename = "C2")]
    pub c2: CubicComponents,
    #[serde(rename = "F")]
    pub f: Mat2,
    #[serde(rename = "H")]
    pub h: [[Real; 4]; 2],
    #[serde(rename = "rank_H")]
    pub rank_h: u8,
    pub singular_values: [Real; 2],
    pub ill_conditioned: bool,
    #[serde(rename = "kernel_AB")]
    pub kernel_ab: Kernel,
    /// `null` when rank is not 1 or `artanh` is out of range.
    pub eta: Option<Real>,
    #[serde(rename = "G1")]
    pub g1: Real,
    #[serde(rename = "G2")]
    pub g2: Real,
    #[serde(rename = "E")]
    pub e: [Real; 4],
    pub cubic_discrepancy: Real,
    pub f_discrepancy: Real,
    pub g_discrepancy: Real,
}

impl InvariantReport {
    pub fn kernel(&self) -> Option<[Real; 2]> {
        self.kernel_ab.direction()
    }
}

pub fn invariant_report(geom: &PointGeometry, tol: RankTolerance) -> Result<InvariantReport, InvariantError> {
    let data = &geom.affine;
    let l = shape_matrix(data);
    let forms = cubic_forms(data)?;
    let (f, f_discrepancy) = matrix_f_checked(data, &forms)?;
    let rank = rank_and_kernel(&l, &f, tol);
    let kernel = if rank.ill_conditioned {
        None
    } else {
        rank.kernel.direction()
    };
    let eg = eta_and_g(data, kernel)?;
    Ok(InvariantReport {
        u: geom.point.0,
        v: geom.point.1,
        epsilon: data.epsilon,
        delta: geom.metric.delta,
        volume_sign: data.volume_sign,
        gamma: data.gamma,
        tau: data.tau,
        l,
        c1: forms.c1,
        c2: forms.c2,
        f,
        h: matrix_h(&l, &f),
        rank_h: rank.rank,
        singular_values: rank.singular_values,
        ill_conditioned: rank.ill_conditioned,
        kernel_ab: rank.kernel,
        eta: eg.eta,
        g1: eg.g[0],
        g2: eg.g[1],
        e: verify_bundle(&forms.c1, &forms.c2, data.epsilon),
        cubic_discrepancy: forms.discrepancy,
        f_discrepancy,
        g_discrepancy: eg.discrepancy,
    })
}

pub fn report_at(
    chart: &SurfaceChart,
    point: (Real, Real),
    options: &FrameOptions,
    tol: RankTolerance,
) -> Result<InvariantReport, InvariantError> {
    let geom = analyze_point(chart, point, options)?;
    invariant_report(&geom, tol)
}

/// `R_1(t) = [[cos, sin], [-sin, cos]]`, `R_{-1}(t) = [[cosh, sinh], [sinh, cosh]]`.
pub fn rotation_matrix(epsilon: Epsilon, theta: Real) -> Mat2 {
    match epsilon {
        Epsilon::Definite => {
            let (s, c) = theta.sin_cos();
            [[c, s], [-s, c]]
        }
        Epsilon::Indefinite => {
            let (s, c) = (theta.sinh(), theta.cosh());
            [[c, s], [s, c]]
        }
    }
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j]))
}

pub fn mat_vec(a: &Mat2, x: [Real; 2]) -> [Real; 2] {
    [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
}

pub fn mat_diff(a: &Mat2, b: &Mat2) -> Real {
    (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| (a[i][j] - b[i][j]).abs())
        .fold(0.0, Real::max)
}

pub fn mat_norm(a: &Mat2) -> Real {
    a.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

/// Frame-dependent quantities after a frame rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedQuantities {
    pub l: Mat2,
    pub f: Mat2,
    pub rank: u8,
    pub kernel: Option<[Real; 2]>,
    pub eta: Option<Real>,
    pub g: [Real; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationComparison {
    pub theta: Real,
    pub epsilon: Epsilon,
    pub base: RotatedQuantities,
    /// Transformation rules applied to `base`.
    pub predicted: RotatedQuantities,
    /// Everything recomputed in the rotated frame.
    pub recomputed: RotatedQuantities,
}

fn quantities(report: &InvariantReport) -> RotatedQuantities {
    RotatedQuantities {
        l: report.l,
        f: report.f,
        rank: report.rank_h,
        kernel: report.kernel(),
        eta: report.eta,
        g: [report.g1, report.g2],
    }
}

/// Predicted values after rotating the frame by `theta` with `d theta(X_i) = dtheta[i]`.
pub fn predict_rotation(base: &RotatedQuantities, epsilon: Epsilon, theta: Real, dtheta: [Real; 2]) -> RotatedQuantities {
    let e = epsilon.value();
    let r = |t| rotation_matrix(epsilon, t);
    let l = mat_mul(&mat_mul(&r(theta), &base.l), &r(3.0 * e * theta));
    let f = mat_mul(&mat_mul(&r(2.0 * e * theta), &base.f), &r(3.0 * e * theta));
    let kernel = base
        .kernel
        .map(|k| normalize_sign(mat_vec(&r(-3.0 * e * theta), k)));
    let eta = base.eta.map(|x| x + 3.0 * theta);
    let rg = mat_vec(&r(-e * theta), base.g);
    let rd = mat_vec(&r(theta), dtheta);
    let g = [rg[0] - 3.0 * e * rd[0], rg[1] + 3.0 * rd[1]];
    RotatedQuantities {
        l,
        f,
        rank: base.rank,
        kernel,
        eta,
        g,
    }
}

/// Rotates the frame at `point` by `theta(u, v) = theta + grad . (u - u0, v - v0)`
/// and compares the transformation rules against a full recomputation.
pub fn frame_rotate(
    chart: &SurfaceChart,
    point: (Real, Real),
    options: &FrameOptions,
    tol: RankTolerance,
    theta: Real,
    grad: [Real; 2],
) -> Result<RotationComparison, InvariantError> {
    let base_options = FrameOptions {
        order: options.order,
        choice: options.choice.map(|c| FrameChoice { rotation: None, ..c }),
    };
    let geom = analyze_point(chart, point, &base_options)?;
    let base_report = invariant_report(&geom, tol)?;
    let rotated = FrameOptions {
        order: options.order,
        choice: Some(FrameChoice {
            seed: geom.frame.seed,
            rotation: Some(Rotation { angle: theta, grad }),
        }),
    };
    let rot_report = report_at(chart, point, &rotated, tol)?;
    let c = geom.affine.x_coords;
    let dtheta = [0, 1].map(|i| c[i][0] * grad[0] + c[i][1] * grad[1]);
    let base = quantities(&base_report);
    Ok(RotationComparison {
        theta,
        epsilon: geom.affine.epsilon,
        predicted: predict_rotation(&base, geom.affine.epsilon, theta, dtheta),
        recomputed: quantities(&rot_report),
        base,
    })
}
