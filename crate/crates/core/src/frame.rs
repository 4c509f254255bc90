//! Affine metric, normalized frames and connection data at a point.
//!
//! Everything here is evaluated in jet arithmetic. Starting from the order-`K`
//! jets of the immersion, the metric and the tangent frame are jets of order
//! `K - 2`, the connection coefficients of order `K - 3`, and the data of the
//! affine normal bundle (whose shape operators need one more derivative) of
//! order `K - 4`. Hence [`MIN_ORDER`] is 4.

use nalgebra::{Matrix4, Vector4};
use serde::Serialize;
use thiserror::Error;

use crate::dsl::{eval_component_jets, EvalError, SurfaceChart};
use crate::jet::{Jet, JetError, Real, Variable};
use crate::linalg::{
    add4, condition_number, det4, det4_jet, dot, invert_jet, lincomb, mat_vec_jet, sub4, values4,
    JetVec4,
};

pub const MIN_ORDER: usize = 4;
pub const DEFAULT_ORDER: usize = 4;

/// Relative threshold on `|delta|` against `(|x_1| |x_2|)^4` where `x_1`,
/// `x_2` bound the first and second derivatives.
pub const TOL_DEGENERATE: Real = 1e-10;
pub const TOL_NULL_SEED: Real = 1e-10;
pub const TOL_NORMALIZATION: Real = 1e-8;
pub const MAX_FRAME_CONDITION: Real = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("x_u and x_v are linearly dependent (relative area {ratio:e})")]
    ImmersionFailure { ratio: Real },
    #[error("degenerate surface: |delta| = {delta:e} below threshold {threshold:e}")]
    DegenerateSurface { delta: Real, threshold: Real },
    #[error("no frame seed has a usable metric norm")]
    NullSeedFailure,
    #[error("transversal normalization failed (residual {residual:e})")]
    NormalizationInconsistent { residual: Real },
    #[error("frame matrix is singular (condition number {condition:e})")]
    FrameSingular { condition: Real },
    #[error("affine normal correction system is singular (condition number {condition:e})")]
    CorrectionSingular { condition: Real },
    #[error("jet order {got} too low, at least {min} required")]
    OrderTooLow { min: usize, got: usize },
}

/// Sign of the affine metric: `Definite` (+1) or `Indefinite` (-1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(into = "i8")]
pub enum Epsilon {
    Definite,
    Indefinite,
}

impl Epsilon {
    pub fn value(self) -> Real {
        match self {
            Epsilon::Definite => 1.0,
            Epsilon::Indefinite => -1.0,
        }
    }
}

impl From<Epsilon> for i8 {
    fn from(e: Epsilon) -> i8 {
        e.value() as i8
    }
}

pub type Mat2 = [[Real; 2]; 2];

/// Derivatives of the immersion needed by the frame construction.
#[derive(Debug, Clone)]
pub struct ImmersionJets {
    pub xu: JetVec4,
    pub xv: JetVec4,
    pub xuu: JetVec4,
    pub xuv: JetVec4,
    pub xvv: JetVec4,
}

impl ImmersionJets {
    pub fn new(x: &[Jet; 4]) -> Result<Self, GeometryError> {
        let order = x.iter().map(Jet::order).min().unwrap_or(0);
        if order < 2 {
            return Err(GeometryError::OrderTooLow { min: 2, got: order });
        }
        let d = |v: &JetVec4, w: Variable| [0, 1, 2, 3].map(|i| v[i].partial(w));
        let xu = d(x, Variable::U);
        let xv = d(x, Variable::V);
        let xuu = d(&xu, Variable::U);
        let xuv = d(&xu, Variable::V);
        let xvv = d(&xv, Variable::V);
        Ok(ImmersionJets { xu, xv, xuu, xuv, xvv })
    }

    pub fn order(&self) -> usize {
        self.xu[0].order() + 1
    }

    /// Directional second derivative `sum a^i b^j x_ij` for coordinate
    /// vectors `a`, `b`.
    fn hessian(&self, a: &[Jet; 2], b: &[Jet; 2]) -> JetVec4 {
        let mixed = &(&a[0] * &b[1]) + &(&a[1] * &b[0]);
        lincomb(&[
            (&(&a[0] * &b[0]), &self.xuu),
            (&mixed, &self.xuv),
            (&(&a[1] * &b[1]), &self.xvv),
        ])
    }

    /// Tangent vector `c^u x_u + c^v x_v`.
    fn tangent(&self, c: &[Jet; 2]) -> JetVec4 {
        lincomb(&[(&c[0], &self.xu), (&c[1], &self.xv)])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricData {
    /// `G_u` in the coordinate frame `{x_u, x_v}`, after the orientation fix.
    #[serde(rename = "G_coord")]
    pub big_g: Mat2,
    pub delta: Real,
    pub epsilon: Epsilon,
    pub g_coord: Mat2,
    /// Sign of the volume form the construction is normalized against;
    /// -1 when the standard orientation yields a negative-definite metric.
    pub volume_sign: Real,
    #[serde(skip)]
    pub(crate) g_jets: [Jet; 3],
}

fn sym_values(j: &[Jet; 3]) -> Mat2 {
    [[j[0].value(), j[1].value()], [j[1].value(), j[2].value()]]
}

fn norm4(v: &[Real; 4]) -> Real {
    v.iter().map(|x| x * x).sum::<Real>().sqrt()
}

/// Affine (Burstin-Mayer) metric in the coordinate frame.
pub fn metric_form(im: &ImmersionJets) -> Result<MetricData, GeometryError> {
    let (xu, xv) = (values4(&im.xu), values4(&im.xv));
    let uu = xu.iter().map(|x| x * x).sum::<Real>();
    let vv = xv.iter().map(|x| x * x).sum::<Real>();
    let uv = xu.iter().zip(&xv).map(|(a, b)| a * b).sum::<Real>();
    let area2 = uu * vv - uv * uv;
    if !(area2 > 1e-20 * uu * vv) {
        return Err(GeometryError::ImmersionFailure {
            ratio: if uu * vv > 0.0 { (area2 / (uu * vv)).max(0.0).sqrt() } else { 0.0 },
        });
    }

    let g11 = det4_jet(&im.xu, &im.xv, &im.xuu, &im.xuv);
    let g22 = det4_jet(&im.xu, &im.xv, &im.xuv, &im.xvv);
    let g12 = det4_jet(&im.xu, &im.xv, &im.xuu, &im.xvv).scale(0.5);
    let delta = &(&g11 * &g22) - &(&g12 * &g12);

    let s1 = norm4(&xu).max(norm4(&xv));
    let s2 = [&im.xuu, &im.xuv, &im.xvv]
        .iter()
        .map(|v| norm4(&values4(v)))
        .fold(0.0, Real::max);
    let threshold = TOL_DEGENERATE * (s1 * s2).powi(4);
    if !(delta.value().abs() > threshold) {
        return Err(GeometryError::DegenerateSurface {
            delta: delta.value(),
            threshold,
        });
    }
    let epsilon = if delta.value() > 0.0 {
        Epsilon::Definite
    } else {
        Epsilon::Indefinite
    };
    let volume_sign = if epsilon == Epsilon::Definite && g11.value() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let big = [g11, g12, g22].map(|j| j.scale(volume_sign));
    let inv_cbrt = delta.cbrt()?.recip()?;
    let g_jets = [0, 1, 2].map(|i| &big[i] * &inv_cbrt);
    Ok(MetricData {
        big_g: sym_values(&big),
        delta: delta.value(),
        epsilon,
        g_coord: sym_values(&g_jets),
        volume_sign,
        g_jets,
    })
}

/// Coordinate vector used to seed the Gram-Schmidt construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Seed {
    U,
    V,
    UPlusV,
    UMinusV,
}

impl Seed {
    const ALL: [Seed; 4] = [Seed::U, Seed::V, Seed::UPlusV, Seed::UMinusV];

    fn coords(self) -> [Real; 2] {
        match self {
            Seed::U => [1.0, 0.0],
            Seed::V => [0.0, 1.0],
            Seed::UPlusV => [1.0, 1.0],
            Seed::UMinusV => [1.0, -1.0],
        }
    }
}

fn g_norm(g: &Mat2, s: [Real; 2]) -> Real {
    g[0][0] * s[0] * s[0] + 2.0 * g[0][1] * s[0] * s[1] + g[1][1] * s[1] * s[1]
}

/// Seed preferred at a point: `x_u` for definite metrics, otherwise the
/// candidate of most negative normalized metric norm.
pub fn preferred_seed(metric: &MetricData) -> Result<Seed, GeometryError> {
    let g = &metric.g_coord;
    let scale = g.iter().flatten().map(|x| x.abs()).fold(0.0, Real::max);
    match metric.epsilon {
        Epsilon::Definite => {
            if g_norm(g, Seed::U.coords()) <= TOL_NULL_SEED * scale {
                return Err(GeometryError::NullSeedFailure);
            }
            Ok(Seed::U)
        }
        Epsilon::Indefinite => {
            let (seed, norm) = Seed::ALL
                .iter()
                .map(|&s| {
                    let c = s.coords();
                    (s, g_norm(g, c) / (c[0] * c[0] + c[1] * c[1]))
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("four seeds");
            if norm >= -TOL_NULL_SEED * scale {
                return Err(GeometryError::NullSeedFailure);
            }
            Ok(seed)
        }
    }
}

/// Frame rotation `theta(u, v) = angle + grad . (u - u0, v - v0)`, applied
/// to the Gram-Schmidt frame by circular (definite) or hyperbolic
/// (indefinite) rotation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rotation {
    pub angle: Real,
    pub grad: [Real; 2],
}

impl Rotation {
    pub fn constant(angle: Real) -> Self {
        Rotation { angle, grad: [0.0, 0.0] }
    }

    fn jet(&self, order: usize) -> Jet {
        let u = Jet::variable(Variable::U, 0.0, order);
        let v = Jet::variable(Variable::V, 0.0, order);
        (&u.scale(self.grad[0]) + &v.scale(self.grad[1])).add_constant(self.angle)
    }
}

/// Choices made when building a frame; reuse the ones from a stencil center
/// at its neighbours to get one smooth frame field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameChoice {
    pub seed: Seed,
    pub rotation: Option<Rotation>,
}

#[derive(Debug, Clone)]
pub struct TangentFrame {
    pub epsilon: Epsilon,
    /// `X_i = coeffs[i][0] x_u + coeffs[i][1] x_v`.
    pub coeffs: [[Jet; 2]; 2],
    pub ambient: [JetVec4; 2],
    pub seed: Seed,
    /// True when the seed differs from the one this point would pick alone.
    pub seed_switched: bool,
}

impl TangentFrame {
    pub fn coeff_values(&self) -> Mat2 {
        [
            [self.coeffs[0][0].value(), self.coeffs[0][1].value()],
            [self.coeffs[1][0].value(), self.coeffs[1][1].value()],
        ]
    }
}

fn g_apply(g: &[Jet; 3], s: &[Jet; 2]) -> [Jet; 2] {
    [
        &(&g[0] * &s[0]) + &(&g[1] * &s[1]),
        &(&g[1] * &s[0]) + &(&g[2] * &s[1]),
    ]
}

fn g_pair(g: &[Jet; 3], a: &[Jet; 2], b: &[Jet; 2]) -> Jet {
    let gb = g_apply(g, b);
    &(&a[0] * &gb[0]) + &(&a[1] * &gb[1])
}

/// g-orthonormal tangent frame with `g(X1,X1) = eps`, `g(X2,X2) = 1` and
/// `{X1, X2}` positively oriented with respect to `{x_u, x_v}`.
pub fn orthonormal_frame(
    metric: &MetricData,
    im: &ImmersionJets,
    choice: Option<FrameChoice>,
) -> Result<TangentFrame, GeometryError> {
    let preferred = preferred_seed(metric);
    let (seed, rotation) = match choice {
        Some(c) => (c.seed, c.rotation),
        None => (preferred.clone()?, None),
    };
    let seed_switched = preferred.map(|p| p != seed).unwrap_or(true);
    let g = &metric.g_jets;
    let order = g[0].order();
    let eps = metric.epsilon.value();
    let s = seed.coords().map(|c| Jet::constant(c, order));
    let ss = g_pair(g, &s, &s);
    if !(eps * ss.value() > 0.0) {
        return Err(GeometryError::NullSeedFailure);
    }
    let inv_s = ss.scale(eps).sqrt()?.recip()?;
    let x1 = s.clone().map(|c| &c * &inv_s);
    let gs = g_apply(g, &s);
    // t = J g s is g-orthogonal to s with det[s, t] = g(s, s)
    let mut t = [-&gs[1], gs[0].clone()];
    if eps < 0.0 {
        t = t.map(|c| -c);
    }
    let tt = g_pair(g, &t, &t);
    if !(tt.value() > 0.0) {
        return Err(GeometryError::NullSeedFailure);
    }
    let inv_t = tt.sqrt()?.recip()?;
    let x2 = t.map(|c| &c * &inv_t);

    let mut coeffs = [x1, x2];
    if let Some(rot) = rotation {
        let theta = rot.jet(order);
        let (c, sn) = match metric.epsilon {
            Epsilon::Definite => (theta.cos(), theta.sin()),
            Epsilon::Indefinite => (theta.cosh(), theta.sinh()),
        };
        // definite:   Y1 = c X1 + s X2,  Y2 = -s X1 + c X2
        // indefinite: Y1 = c X1 + s X2,  Y2 =  s X1 + c X2
        let [x1, x2] = coeffs;
        let y1 = [0, 1].map(|k| &(&c * &x1[k]) + &(&sn * &x2[k]));
        let y2 = [0, 1].map(|k| {
            let a = &(&sn * &x1[k]) * -eps;
            &a + &(&c * &x2[k])
        });
        coeffs = [y1, y2];
    }
    let ambient = [im.tangent(&coeffs[0]), im.tangent(&coeffs[1])];
    Ok(TangentFrame {
        epsilon: metric.epsilon,
        coeffs,
        ambient,
        seed,
        seed_switched,
    })
}

/// Transversal basis `{xi1, xi2}` of a transversal bundle.
#[derive(Debug, Clone)]
pub struct Transversal {
    pub xi: [JetVec4; 2],
}

/// Normalized basis of the Euclidean normal bundle: `xi1 = h(X1, X1)`,
/// `xi2 = h(X1, X2)`.
pub fn normalized_transversal(
    metric: &MetricData,
    frame: &TangentFrame,
    im: &ImmersionJets,
) -> Result<Transversal, GeometryError> {
    let order = frame.coeffs[0][0].order();
    let xu = im.xu.clone().map(|c| c.truncate(order));
    let xv = im.xv.clone().map(|c| c.truncate(order));
    let e11 = dot(&xu, &xu);
    let e12 = dot(&xu, &xv);
    let e22 = dot(&xv, &xv);
    let inv_det = (&(&e11 * &e22) - &(&e12 * &e12)).recip()?;
    let normal_part = |w: &JetVec4| -> JetVec4 {
        let pu = dot(&xu, w);
        let pv = dot(&xv, w);
        let a = &(&(&e22 * &pu) - &(&e12 * &pv)) * &inv_det;
        let b = &(&(&e11 * &pv) - &(&e12 * &pu)) * &inv_det;
        sub4(w, &lincomb(&[(&a, &xu), (&b, &xv)]))
    };
    let [c1, c2] = &frame.coeffs;
    let xi1 = normal_part(&im.hessian(c1, c1));
    let xi2 = normal_part(&im.hessian(c1, c2));
    let h22 = normal_part(&im.hessian(c2, c2));

    let eps = metric.epsilon.value();
    let scale = norm4(&values4(&xi1)).max(norm4(&values4(&xi2)));
    let residual = (0..4)
        .map(|i| (h22[i].value() + eps * xi1[i].value()).abs())
        .fold(0.0, Real::max);
    let volume = metric.volume_sign
        * det4(
            &values4(&frame.ambient[0]),
            &values4(&frame.ambient[1]),
            &values4(&xi1),
            &values4(&xi2),
        );
    if residual > TOL_NORMALIZATION * scale.max(1.0) {
        return Err(GeometryError::NormalizationInconsistent { residual });
    }
    if (volume - 1.0).abs() > TOL_NORMALIZATION {
        return Err(GeometryError::NormalizationInconsistent {
            residual: (volume - 1.0).abs(),
        });
    }
    Ok(Transversal { xi: [xi1, xi2] })
}

pub type Tensor3 = [[[Real; 2]; 2]; 2];

/// Connection data of a frame `{X1, X2, xi1, xi2}`.
///
/// Index conventions:
/// - `gamma[i][j][k]` is `Gamma^k_{ij}` with `nabla_{X_i} X_j = Gamma^k_{ij} X_k`;
/// - `tau[i][j][k]` is `tau_i^j(X_k)`;
/// - `lambda[i][j][k]` is `lambda^k_{ij}` with `S_i X_j = lambda^k_{ij} X_k`;
/// - `h[n][i][j]` is `h^{n+1}(X_i, X_j)` as measured.
#[derive(Debug, Clone, Serialize)]
pub struct FrameData {
    pub epsilon: Epsilon,
    pub volume_sign: Real,
    #[serde(rename = "X1")]
    pub x1: [Real; 4],
    #[serde(rename = "X2")]
    pub x2: [Real; 4],
    pub xi1: [Real; 4],
    pub xi2: [Real; 4],
    /// Coefficients of `X_i` in the coordinate frame.
    pub x_coords: Mat2,
    pub gamma: Tensor3,
    pub tau: Tensor3,
    pub lambda: Tensor3,
    pub h: [Mat2; 2],
    /// `[X1, X2, xi1, xi2]` against the oriented volume form.
    pub volume: Real,
    pub frame_condition: Real,
    /// `|nabla_{X1}X2 - nabla_{X2}X1 - [X1, X2]|` in ambient space.
    pub torsion_residual: Real,
    /// Largest residual of re-expanding `D_{X_i}X_j`, `D_{X_i}xi_j` in the frame.
    pub decomposition_residual: Real,
    #[serde(skip)]
    pub(crate) gamma_jets: [[[Jet; 2]; 2]; 2],
}

impl FrameData {
    pub fn eps(&self) -> Real {
        self.epsilon.value()
    }

    /// `Gamma^k_{ij}` with 1-based indices as written in formulas.
    #[inline]
    pub fn g(&self, i: usize, j: usize, k: usize) -> Real {
        self.gamma[i - 1][j - 1][k - 1]
    }

    /// `tau_i^j(X_k)` with 1-based indices.
    #[inline]
    pub fn t(&self, i: usize, j: usize, k: usize) -> Real {
        self.tau[i - 1][j - 1][k - 1]
    }

    /// `lambda^k_{ij}` with 1-based indices.
    #[inline]
    pub fn l(&self, i: usize, j: usize, k: usize) -> Real {
        self.lambda[i - 1][j - 1][k - 1]
    }

    pub fn frame_matrix(&self) -> Matrix4<Real> {
        Matrix4::from_columns(&[
            Vector4::from(self.x1),
            Vector4::from(self.x2),
            Vector4::from(self.xi1),
            Vector4::from(self.xi2),
        ])
    }
}

fn directional(coeff: &[Jet; 2], field: &JetVec4) -> JetVec4 {
    let du = field.clone().map(|c| c.partial(Variable::U));
    let dv = field.clone().map(|c| c.partial(Variable::V));
    lincomb(&[(&coeff[0], &du), (&coeff[1], &dv)])
}

/// Expands `D_{X_i}X_j` and `D_{X_i}xi_j` in the frame `{X1, X2, xi1, xi2}`.
pub fn connection_data(
    metric: &MetricData,
    frame: &TangentFrame,
    transversal: &Transversal,
) -> Result<FrameData, GeometryError> {
    let order = transversal.xi[0][0].order().min(frame.coeffs[0][0].order());
    if order < 1 {
        return Err(GeometryError::OrderTooLow {
            min: MIN_ORDER,
            got: order + 2,
        });
    }
    let basis: [&JetVec4; 4] = [
        &frame.ambient[0],
        &frame.ambient[1],
        &transversal.xi[0],
        &transversal.xi[1],
    ];
    let mvals = Matrix4::from_columns(&basis.map(|b| Vector4::from(values4(b))));
    let frame_condition = condition_number(&mvals);
    if !(frame_condition < MAX_FRAME_CONDITION) {
        return Err(GeometryError::FrameSingular {
            condition: frame_condition,
        });
    }
    let m: [[Jet; 4]; 4] = std::array::from_fn(|r| std::array::from_fn(|c| basis[c][r].truncate(order)));
    let minv = invert_jet(&m).ok_or(GeometryError::FrameSingular {
        condition: Real::INFINITY,
    })?;

    let mut decomposition_residual: Real = 0.0;
    let mut expand = |v: &JetVec4| -> [Jet; 4] {
        let c = mat_vec_jet(&minv, v);
        let back = mvals * Vector4::from(c.clone().map(|x| x.value()));
        let res = (back - Vector4::from(values4(v))).amax();
        decomposition_residual = decomposition_residual.max(res);
        c
    };

    let zero = || Jet::zero(order - 1);
    let mut gamma_jets: [[[Jet; 2]; 2]; 2] = std::array::from_fn(|_| std::array::from_fn(|_| [zero(), zero()]));
    let mut h = [[[0.0; 2]; 2]; 2];
    let mut dxx: [[JetVec4; 2]; 2] = std::array::from_fn(|_| std::array::from_fn(|_| std::array::from_fn(|_| zero())));
    for i in 0..2 {
        for j in 0..2 {
            let d = directional(&frame.coeffs[i], &frame.ambient[j]);
            let c = expand(&d);
            gamma_jets[i][j] = [c[0].clone(), c[1].clone()];
            h[0][i][j] = c[2].value();
            h[1][i][j] = c[3].value();
            dxx[i][j] = d;
        }
    }
    let mut tau = [[[0.0; 2]; 2]; 2];
    let mut lambda = [[[0.0; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let c = expand(&directional(&frame.coeffs[i], &transversal.xi[j]));
            // D_{X_i} xi_j = -S_j X_i + tau_j^k(X_i) xi_k
            lambda[j][i] = [-c[0].value(), -c[1].value()];
            tau[j][0][i] = c[2].value();
            tau[j][1][i] = c[3].value();
        }
    }

    // [X1, X2] in coordinates: X1(X2^a) - X2(X1^a)
    let [c1, c2] = &frame.coeffs;
    let d = |f: &Jet, c: &[Jet; 2]| &(&c[0] * &f.partial(Variable::U)) + &(&c[1] * &f.partial(Variable::V));
    let bracket = [0, 1].map(|a| d(&c2[a], c1) - d(&c1[a], c2));
    let bracket_vals = [0, 1].map(|a| bracket[a].value());
    let xu = values4(&frame_tangent_basis(frame).0);
    let xv = values4(&frame_tangent_basis(frame).1);
    let torsion = sub4(&dxx[0][1], &dxx[1][0]);
    let torsion_residual = (0..4)
        .map(|r| (torsion[r].value() - bracket_vals[0] * xu[r] - bracket_vals[1] * xv[r]).abs())
        .fold(0.0, Real::max);

    let gamma = gamma_jets
        .clone()
        .map(|row| row.map(|p| [p[0].value(), p[1].value()]));
    let volume = metric.volume_sign * mvals.determinant();
    Ok(FrameData {
        epsilon: metric.epsilon,
        volume_sign: metric.volume_sign,
        x1: values4(&frame.ambient[0]),
        x2: values4(&frame.ambient[1]),
        xi1: values4(&transversal.xi[0]),
        xi2: values4(&transversal.xi[1]),
        x_coords: frame.coeff_values(),
        gamma,
        tau,
        lambda,
        h,
        volume,
        frame_condition,
        torsion_residual,
        decomposition_residual,
        gamma_jets,
    })
}

/// Recovers `x_u`, `x_v` from the frame (inverse of the coefficient matrix).
fn frame_tangent_basis(frame: &TangentFrame) -> (JetVec4, JetVec4) {
    let c = &frame.coeffs;
    let det = &(&c[0][0] * &c[1][1]) - &(&c[0][1] * &c[1][0]);
    let inv = det.recip().expect("frame coefficients are invertible");
    // [X1 X2] = [xu xv] C^T  =>  [xu xv] = [X1 X2] C^{-T}
    let a = &c[1][1] * &inv;
    let b = &(-&c[1][0]) * &inv;
    let p = &(-&c[0][1]) * &inv;
    let q = &c[0][0] * &inv;
    let xu = lincomb(&[(&a, &frame.ambient[0]), (&p, &frame.ambient[1])]);
    let xv = lincomb(&[(&b, &frame.ambient[0]), (&q, &frame.ambient[1])]);
    (xu, xv)
}

/// Tangent shift `xi_i -> xi_i + Z_i^1 X1 + Z_i^2 X2`; `shift[i][k] = Z_i^k`.
pub fn shift_transversal(
    frame: &TangentFrame,
    transversal: &Transversal,
    shift: &[[Jet; 2]; 2],
) -> Transversal {
    let xi = [0, 1].map(|i| {
        let z = lincomb(&[(&shift[i][0], &frame.ambient[0]), (&shift[i][1], &frame.ambient[1])]);
        add4(&transversal.xi[i], &z)
    });
    Transversal { xi }
}

/// Outcome of moving a transversal bundle to the affine normal bundle.
#[derive(Debug, Clone)]
pub struct Correction {
    pub transversal: Transversal,
    pub data: FrameData,
    /// `shift[i][k] = Z_i^k` at the point.
    pub shift: Mat2,
    pub condition: Real,
}

/// Coefficient matrix of the affine normal conditions in the unknowns
/// `(Z_1^1, Z_1^2, Z_2^1, Z_2^2)`.
pub fn correction_matrix(eps: Real) -> Matrix4<Real> {
    Matrix4::new(
        1.0, 0.0, 0.0, 1.0, //
        0.0, -eps, 1.0, 0.0, //
        -3.0, 0.0, 0.0, 1.0, //
        0.0, 3.0 * eps, 1.0, 0.0,
    )
}

/// Shifts the transversal bundle of `data` so that
/// `G12^2 = -G11^1`, `G21^1 = -G22^2`, `2 G11^1 = G21^2 + eps G22^1` and
/// `2 G22^2 = G12^1 + eps G11^2` hold, then recomputes the connection data.
pub fn affine_normal_correction(
    metric: &MetricData,
    frame: &TangentFrame,
    transversal: &Transversal,
    data: &FrameData,
) -> Result<Correction, GeometryError> {
    let eps = data.eps();
    let a = correction_matrix(eps);
    let condition = condition_number(&a);
    let inv = match a.try_inverse() {
        Some(inv) if condition < MAX_FRAME_CONDITION => inv,
        _ => return Err(GeometryError::CorrectionSingular { condition }),
    };
    let g = |i: usize, j: usize, k: usize| &data.gamma_jets[i - 1][j - 1][k - 1];
    let rhs = [
        g(1, 2, 2) + g(1, 1, 1),
        g(2, 1, 1) + g(2, 2, 2),
        &(g(2, 1, 2) + &g(2, 2, 1).scale(eps)) - &g(1, 1, 1).scale(2.0),
        &(g(1, 2, 1) + &g(1, 1, 2).scale(eps)) - &g(2, 2, 2).scale(2.0),
    ];
    let z: [Jet; 4] = std::array::from_fn(|r| {
        let mut acc = rhs[0].scale(inv[(r, 0)]);
        for c in 1..4 {
            acc = acc + rhs[c].scale(inv[(r, c)]);
        }
        acc
    });
    let shift_jets = [[z[0].clone(), z[1].clone()], [z[2].clone(), z[3].clone()]];
    let corrected = shift_transversal(frame, transversal, &shift_jets);
    let new_data = connection_data(metric, frame, &corrected)?;
    Ok(Correction {
        shift: [[z[0].value(), z[1].value()], [z[2].value(), z[3].value()]],
        transversal: corrected,
        data: new_data,
        condition,
    })
}

/// Options for the per-point pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOptions {
    pub order: usize,
    pub choice: Option<FrameChoice>,
}

impl Default for FrameOptions {
    fn default() -> Self {
        FrameOptions {
            order: DEFAULT_ORDER,
            choice: None,
        }
    }
}

/// Full frame-level geometry at one parameter point.
#[derive(Debug, Clone)]
pub struct PointGeometry {
    pub point: (Real, Real),
    pub immersion: ImmersionJets,
    pub metric: MetricData,
    pub frame: TangentFrame,
    pub euclidean_transversal: Transversal,
    /// Connection data relative to the Euclidean normal bundle.
    pub euclidean: FrameData,
    /// Connection data relative to the affine normal bundle.
    pub affine: FrameData,
    pub correction: Correction,
}

impl PointGeometry {
    pub fn choice(&self) -> FrameChoice {
        FrameChoice {
            seed: self.frame.seed,
            rotation: None,
        }
    }

    /// Connection data for an arbitrary tangent shift of the Euclidean
    /// normal bundle.
    pub fn shifted(&self, shift: &[[Jet; 2]; 2]) -> Result<FrameData, GeometryError> {
        let t = shift_transversal(&self.frame, &self.euclidean_transversal, shift);
        connection_data(&self.metric, &self.frame, &t)
    }
}

pub fn analyze_point(
    chart: &SurfaceChart,
    point: (Real, Real),
    options: &FrameOptions,
) -> Result<PointGeometry, GeometryError> {
    if options.order < MIN_ORDER {
        return Err(GeometryError::OrderTooLow {
            min: MIN_ORDER,
            got: options.order,
        });
    }
    let jets = eval_component_jets(chart, point, options.order)?;
    analyze_jets(&jets, point, options)
}

pub fn analyze_jets(
    jets: &[Jet; 4],
    point: (Real, Real),
    options: &FrameOptions,
) -> Result<PointGeometry, GeometryError> {
    let immersion = ImmersionJets::new(jets)?;
    if immersion.order() < MIN_ORDER {
        return Err(GeometryError::OrderTooLow {
            min: MIN_ORDER,
            got: immersion.order(),
        });
    }
    let metric = metric_form(&immersion)?;
    let frame = orthonormal_frame(&metric, &immersion, options.choice)?;
    let euclidean_transversal = normalized_transversal(&metric, &frame, &immersion)?;
    let euclidean = connection_data(&metric, &frame, &euclidean_transversal)?;
    let correction = affine_normal_correction(&metric, &frame, &euclidean_transversal, &euclidean)?;
    Ok(PointGeometry {
        point,
        immersion,
        metric,
        frame,
        euclidean_transversal,
        euclidean,
        affine: correction.data.clone(),
        correction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_surface;
    use approx::assert_abs_diff_eq;

    fn chart(src: &str) -> SurfaceChart {
        parse_surface(src).unwrap()
    }

    fn cc() -> SurfaceChart {
        chart("surface cc { x1=u; x2=v; x3=u^2-v^2; x4=2*u*v; }")
    }

    fn parabolas() -> SurfaceChart {
        chart("surface pp { x1=u; x2=v; x3=u^2/2; x4=v^2/2; }")
    }

    fn metric_at(c: &SurfaceChart, p: (Real, Real)) -> Result<MetricData, GeometryError> {
        let jets = eval_component_jets(c, p, 4).unwrap();
        metric_form(&ImmersionJets::new(&jets).unwrap())
    }

    #[test]
    fn complex_curve_metric() {
        for p in [(0.0, 0.0), (0.3, -0.7)] {
            let m = metric_at(&cc(), p).unwrap();
            assert_abs_diff_eq!(m.big_g[0][0], 4.0, epsilon = 1e-12);
            assert_abs_diff_eq!(m.big_g[0][1], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(m.big_g[1][1], 4.0, epsilon = 1e-12);
            assert_abs_diff_eq!(m.delta, 16.0, epsilon = 1e-11);
            assert_eq!(m.epsilon, Epsilon::Definite);
            let g = 4.0 / 16f64.cbrt();
            assert_abs_diff_eq!(m.g_coord[0][0], g, epsilon = 1e-12);
            assert_abs_diff_eq!(m.g_coord[1][1], g, epsilon = 1e-12);
            assert_abs_diff_eq!(g, 1.5874010519681994, epsilon = 1e-12);
        }
    }

    #[test]
    fn parabola_product_metric() {
        let m = metric_at(&parabolas(), (0.4, 0.1)).unwrap();
        assert_abs_diff_eq!(m.big_g[0][0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.big_g[0][1], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(m.big_g[1][1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.delta, -0.25, epsilon = 1e-14);
        assert_eq!(m.epsilon, Epsilon::Indefinite);
    }

    #[test]
    fn plane_is_degenerate() {
        let plane = chart("surface plane { x1=u; x2=v; x3=0; x4=0; }");
        assert!(matches!(
            metric_at(&plane, (0.1, 0.2)),
            Err(GeometryError::DegenerateSurface { .. })
        ));
    }

    #[test]
    fn collapsed_tangent_plane_is_not_an_immersion() {
        let c = chart("surface line { x1=u+v; x2=(u+v)^2; x3=(u+v)^3; x4=0; }");
        assert!(matches!(
            metric_at(&c, (0.1, 0.2)),
            Err(GeometryError::ImmersionFailure { .. })
        ));
    }

    #[test]
    fn negative_definite_metric_reverses_volume() {
        let c = chart("surface conj { x1=u; x2=v; x3=u^2-v^2; x4=-2*u*v; }");
        let m = metric_at(&c, (0.2, 0.1)).unwrap();
        assert_eq!(m.epsilon, Epsilon::Definite);
        assert_eq!(m.volume_sign, -1.0);
        assert!(m.g_coord[0][0] > 0.0);
        let geo = analyze_point(&c, (0.2, 0.1), &FrameOptions::default()).unwrap();
        assert_abs_diff_eq!(geo.affine.volume, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn complex_curve_frame() {
        let geo = analyze_point(&cc(), (0.0, 0.0), &FrameOptions::default()).unwrap();
        let k = 2f64.powf(-1.0 / 3.0);
        let x = geo.frame.coeff_values();
        assert_abs_diff_eq!(x[0][0], k, epsilon = 1e-12);
        assert_abs_diff_eq!(x[0][1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1][1], k, epsilon = 1e-12);

        let e = &geo.euclidean;
        let c = 2f64.cbrt();
        for (got, want) in e.xi1.iter().zip([0.0, 0.0, c, 0.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        for (got, want) in e.xi2.iter().zip([0.0, 0.0, 0.0, c]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(e.volume, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.h[0][0][0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.h[0][0][1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.h[0][1][1], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.h[1][0][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.h[1][0][1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.h[1][1][1], 0.0, epsilon = 1e-12);
        for x in e.gamma.iter().flatten().flatten() {
            assert_abs_diff_eq!(*x, 0.0, epsilon = 1e-12);
        }
        for z in geo.correction.shift.iter().flatten() {
            assert_abs_diff_eq!(*z, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn parabola_frame_is_null_diagonal() {
        let geo = analyze_point(&parabolas(), (0.3, 0.5), &FrameOptions::default()).unwrap();
        let g = geo.metric.g_coord;
        let x = geo.frame.coeff_values();
        let gn = |a: [Real; 2], b: [Real; 2]| {
            g[0][0] * a[0] * b[0] + g[0][1] * (a[0] * b[1] + a[1] * b[0]) + g[1][1] * a[1] * b[1]
        };
        assert_abs_diff_eq!(gn(x[0], x[0]), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gn(x[1], x[1]), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gn(x[0], x[1]), 0.0, epsilon = 1e-12);
        // X1 along x_u + x_v, X2 along x_u - x_v
        assert_abs_diff_eq!(x[0][0], x[0][1], epsilon = 1e-12);
        assert_abs_diff_eq!(x[1][0], -x[1][1], epsilon = 1e-12);
        assert_eq!(geo.frame.seed, Seed::UPlusV);
    }

    #[test]
    fn decomposition_and_torsion_residuals_vanish() {
        let c = chart("surface gen { x1=u; x2=v; x3=u^2+u*v+v^3; x4=u*v+u^3; }");
        let geo = analyze_point(&c, (0.2, 0.1), &FrameOptions::default()).unwrap();
        for d in [&geo.euclidean, &geo.affine] {
            assert!(d.decomposition_residual < 1e-10, "{}", d.decomposition_residual);
            assert!(d.torsion_residual < 1e-9, "{}", d.torsion_residual);
            assert_abs_diff_eq!(d.volume, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(d.h[0][0][1], d.h[0][1][0], epsilon = 1e-10);
            assert_abs_diff_eq!(d.h[1][0][1], d.h[1][1][0], epsilon = 1e-10);
        }
    }

    #[test]
    fn order_below_four_is_rejected() {
        let opts = FrameOptions {
            order: 3,
            choice: None,
        };
        assert!(matches!(
            analyze_point(&cc(), (0.0, 0.0), &opts),
            Err(GeometryError::OrderTooLow { min: 4, got: 3 })
        ));
    }

    #[test]
    fn correction_system_is_always_invertible() {
        for eps in [1.0, -1.0] {
            let a = correction_matrix(eps);
            assert_abs_diff_eq!(a.determinant().abs(), 16.0, epsilon = 1e-12);
        }
    }
}
