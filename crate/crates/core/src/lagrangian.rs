//! Decides whether a surface is Lagrangian for a parallel symplectic form,
//! reconstructs the form, and cross-checks against a direct linear solve.

use nalgebra::{DMatrix, Matrix4, Vector4};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dsl::{eval_component_jets, SurfaceChart};
use crate::frame::{
    analyze_point, Epsilon, FrameChoice, FrameData, FrameOptions, GeometryError, Mat2, PointGeometry, Rotation,
};
use crate::invariants::{invariant_report, InvariantError, InvariantReport, RankTolerance};
use crate::jet::{Real, Variable};

pub const DEFAULT_GRID: usize = 9;
pub const DEFAULT_TOL_PDE: Real = 1e-4;
pub const DEFAULT_TOL_PARALLEL: Real = 1e-5;
/// Margin cut from every side of the domain before laying out the grid.
pub const GRID_MARGIN: Real = 0.05;
/// Default stencil step as a fraction of the domain width.
pub const STEP_FRACTION: Real = 1e-3;
pub const ORACLE_GRID: usize = 5;
pub const ORACLE_MIN_SAMPLES: usize = 20;
pub const ORACLE_NULL_TOL: Real = 1e-8;
pub const MAX_SKIPPED_FRACTION: Real = 0.1;
/// `|A^2 + eps B^2|` of a unit kernel below this counts as zero.
pub const TOL_WEDGE_ZERO: Real = 1e-8;
/// Relative agreement required between the reconstructed form and the
/// oracle generator.
pub const TOL_ORACLE_MATCH: Real = 1e-4;

/// Index pairs of the stored entries.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Constant antisymmetric bilinear form `Omega(a, b) = a^T W b`, stored as
/// `(W12, W13, W14, W23, W24, W34)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SymplecticForm {
    pub entries: [Real; 6],
}

impl SymplecticForm {
    pub fn from_entries(entries: [Real; 6]) -> Self {
        SymplecticForm { entries }
    }

    /// Reads the strict upper triangle; the lower triangle is ignored.
    pub fn from_matrix(m: &Matrix4<Real>) -> Self {
        SymplecticForm {
            entries: PAIRS.map(|(i, j)| m[(i, j)]),
        }
    }

    pub fn matrix(&self) -> Matrix4<Real> {
        let mut m = Matrix4::zeros();
        for (n, &(i, j)) in PAIRS.iter().enumerate() {
            m[(i, j)] = self.entries[n];
            m[(j, i)] = -self.entries[n];
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> Real {
        self.matrix()[(i, j)]
    }

    pub fn pfaffian(&self) -> Real {
        let [w12, w13, w14, w23, w24, w34] = self.entries;
        w12 * w34 - w13 * w24 + w14 * w23
    }

    /// `c` in `Omega ^ Omega = c [., ., ., .]` with the wedge normalized so
    /// that `e1^e2 + e3^e4` has ratio 1 against the standard determinant.
    pub fn wedge_ratio(&self) -> Real {
        self.pfaffian()
    }

    pub fn eval(&self, a: &[Real; 4], b: &[Real; 4]) -> Real {
        (Vector4::from(*a).transpose() * self.matrix() * Vector4::from(*b))[(0, 0)]
    }

    pub fn norm(&self) -> Real {
        self.entries.iter().map(|x| x * x).sum::<Real>().sqrt()
    }

    pub fn scaled(&self, s: Real) -> Self {
        SymplecticForm {
            entries: self.entries.map(|x| x * s),
        }
    }

    /// Unit norm, sign fixed by the largest-magnitude entry being positive.
    pub fn canonical(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            return *self;
        }
        let big = self
            .entries
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        self.scaled(big.signum() / n)
    }

    /// Distance between the unit-norm representatives, minimized over sign.
    pub fn direction_distance(&self, other: &Self) -> Real {
        let a = self.scaled(1.0 / self.norm());
        let b = other.scaled(1.0 / other.norm());
        let diff = |s: Real| {
            a.entries
                .iter()
                .zip(b.entries)
                .map(|(x, y)| (x - s * y).abs())
                .fold(0.0, Real::max)
        };
        diff(1.0).min(diff(-1.0))
    }
}

/// The form with prescribed values on the frame `{X1, X2, xi1, xi2}`:
/// `Omega(X1,X2) = Omega(xi1,xi2) = 0`, `Omega(X1,xi2) = Omega(X2,xi1) = A`,
/// `Omega(X1,xi1) = -eps Omega(X2,xi2) = B`.
pub fn frame_form(a: Real, b: Real, epsilon: Epsilon) -> SymplecticForm {
    SymplecticForm::from_entries([0.0, b, a, a, -epsilon.value() * b, 0.0])
}

pub fn reconstruct_omega(data: &FrameData, a: Real, b: Real) -> Result<SymplecticForm, GeometryError> {
    let m = data.frame_matrix();
    let inv = m.try_inverse().ok_or(GeometryError::FrameSingular {
        condition: Real::INFINITY,
    })?;
    let w = inv.transpose() * frame_form(a, b, data.epsilon).matrix() * inv;
    Ok(SymplecticForm::from_matrix(&w))
}

/// How well a form satisfies the relations forced on a parallel symplectic
/// form for which the surface is Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct OmegaChecks {
    pub x1_x2: Real,
    pub xi1_xi2: Real,
    pub a_symmetry: Real,
    pub b_symmetry: Real,
    pub wedge: Real,
    pub f_relation: Real,
    pub h_kernel: Real,
}

impl OmegaChecks {
    pub fn max(&self) -> Real {
        [
            self.x1_x2,
            self.xi1_xi2,
            self.a_symmetry,
            self.b_symmetry,
            self.wedge,
            self.f_relation,
            self.h_kernel,
        ]
        .into_iter()
        .fold(0.0, Real::max)
    }

    fn merge(&self, o: &OmegaChecks) -> OmegaChecks {
        OmegaChecks {
            x1_x2: self.x1_x2.max(o.x1_x2),
            xi1_xi2: self.xi1_xi2.max(o.xi1_xi2),
            a_symmetry: self.a_symmetry.max(o.a_symmetry),
            b_symmetry: self.b_symmetry.max(o.b_symmetry),
            wedge: self.wedge.max(o.wedge),
            f_relation: self.f_relation.max(o.f_relation),
            h_kernel: self.h_kernel.max(o.h_kernel),
        }
    }
}

/// `A = Omega(X1, xi2)` and `B = Omega(X1, xi1)` are read off the form itself.
pub fn omega_invariant_checks(omega: &SymplecticForm, data: &FrameData, l: &Mat2, f: &Mat2) -> OmegaChecks {
    let e = data.eps();
    let w = |a: &[Real; 4], b: &[Real; 4]| omega.eval(a, b);
    let a = w(&data.x1, &data.xi2);
    let b = w(&data.x1, &data.xi1);
    let xi12 = w(&data.xi1, &data.xi2);
    let hk = [l[0], l[1], f[0], f[1]]
        .iter()
        .map(|r| (r[0] * a + r[1] * b).abs())
        .fold(0.0, Real::max);
    OmegaChecks {
        x1_x2: w(&data.x1, &data.x2).abs(),
        xi1_xi2: xi12.abs(),
        a_symmetry: (a - w(&data.x2, &data.xi1)).abs(),
        b_symmetry: (b + e * w(&data.x2, &data.xi2)).abs(),
        wedge: (data.volume_sign * omega.wedge_ratio() - (a * a + e * b * b)).abs(),
        f_relation: (f[1][0] * a + f[1][1] * b + 4.0 * xi12).abs(),
        h_kernel: hk,
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("{0}")]
    Geometry(String),
    #[error("rank of H changes across the stencil: {ranks:?}")]
    StencilRankBreak { ranks: [u8; 9] },
    #[error("stencil step {step:e} is below the resolvable scale")]
    StepTooSmall { step: Real },
    #[error("A^2 + eps B^2 vanishes or changes sign on the stencil ({value:e})")]
    WedgeVanishes { value: Real },
}

impl From<InvariantError> for PdeError {
    fn from(e: InvariantError) -> Self {
        PdeError::Geometry(e.to_string())
    }
}

impl From<GeometryError> for PdeError {
    fn from(e: GeometryError) -> Self {
        PdeError::Geometry(e.to_string())
    }
}

/// Data a five-point stencil needs; kernels are ordered
/// `[centre, +u, -u, +v, -v]` and are arbitrary nonzero representatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilInput {
    pub epsilon: Epsilon,
    pub step: Real,
    /// Coordinates of `X1`, `X2` at the centre.
    pub x_coords: Mat2,
    /// `(G1, G2)` at the centre.
    pub g: [Real; 2],
    pub kernels: [[Real; 2]; 5],
    /// Kernels at `[+u, -u, +v, -v]` with half the step. When present the
    /// two central differences are combined by Richardson extrapolation.
    pub half: Option<[[Real; 2]; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdeResiduals {
    /// `dA(X1) - G1 B`, `dA(X2) + eps G2 B`, `dB(X1) + eps G1 A`, `dB(X2) - G2 A`.
    pub system: [Real; 4],
    /// `d eta(X1) + eps G1`, `d eta(X2) - G2` when `eta` is defined on the stencil.
    pub eta: Option<[Real; 2]>,
    /// Centre kernel scaled to `|A^2 + eps B^2| = 1`.
    pub kernel: [Real; 2],
    /// Sign of `A^2 + eps B^2`.
    pub wedge_sign: Real,
}

impl PdeResiduals {
    pub fn max(&self) -> Real {
        self.system.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn eta_max(&self) -> Option<Real> {
        self.eta.map(|r| r[0].abs().max(r[1].abs()))
    }
}

fn wedge(k: [Real; 2], e: Real) -> Real {
    k[0] * k[0] + e * k[1] * k[1]
}

/// Residuals of the first-order system for `(A, B)` from stencil data.
pub fn stencil_residuals(input: &StencilInput) -> Result<PdeResiduals, PdeError> {
    let e = input.epsilon.value();
    let centre = input.kernels[0];
    let n0 = centre[0].hypot(centre[1]);
    let c0 = wedge([centre[0] / n0, centre[1] / n0], e);
    if !(c0.abs() > TOL_WEDGE_ZERO) {
        return Err(PdeError::WedgeVanishes { value: c0 });
    }
    let sign = c0.signum();
    let scale = |k: &[Real; 2]| -> Result<[Real; 2], PdeError> {
        let s = if k[0] * centre[0] + k[1] * centre[1] < 0.0 { -1.0 } else { 1.0 };
        let c = wedge(*k, e);
        if c.signum() != sign || c.abs() <= TOL_WEDGE_ZERO * (k[0] * k[0] + k[1] * k[1]) {
            return Err(PdeError::WedgeVanishes { value: c });
        }
        let f = s / c.abs().sqrt();
        Ok([k[0] * f, k[1] * f])
    };
    let mut scaled = [[0.0; 2]; 5];
    for (n, k) in input.kernels.iter().enumerate() {
        scaled[n] = scale(k)?;
    }
    let half = match &input.half {
        Some(h) => {
            let mut out = [[0.0; 2]; 5];
            out[0] = scaled[0];
            for n in 0..4 {
                out[n + 1] = scale(&h[n])?;
            }
            Some(out)
        }
        None => None,
    };
    let h = input.step;
    // central difference of stencil values `t` along u and v
    let central = |t: &[Real; 5], h: Real| [(t[1] - t[2]) / (2.0 * h), (t[3] - t[4]) / (2.0 * h)];
    let grad = |full: [Real; 5], half: Option<[Real; 5]>| -> [Real; 2] {
        let d1 = central(&full, h);
        match half {
            Some(hv) => {
                let d2 = central(&hv, 0.5 * h);
                [0, 1].map(|i| (4.0 * d2[i] - d1[i]) / 3.0)
            }
            None => d1,
        }
    };
    let comp = |k: &[[Real; 2]; 5], c: usize| -> [Real; 5] { std::array::from_fn(|n| k[n][c]) };
    let ga = grad(comp(&scaled, 0), half.as_ref().map(|hv| comp(hv, 0)));
    let gb = grad(comp(&scaled, 1), half.as_ref().map(|hv| comp(hv, 1)));
    let x = &input.x_coords;
    let dir = |gr: [Real; 2], i: usize| x[i][0] * gr[0] + x[i][1] * gr[1];
    let [a, b] = scaled[0];
    let [g1, g2] = input.g;
    let system = [
        dir(ga, 0) - g1 * b,
        dir(ga, 1) + e * g2 * b,
        dir(gb, 0) + e * g1 * a,
        dir(gb, 1) - g2 * a,
    ];
    let angle = |k: &[Real; 2]| match input.epsilon {
        Epsilon::Definite => Some(k[1].atan2(k[0])),
        Epsilon::Indefinite if k[1].abs() < k[0].abs() => Some((k[1] / k[0]).atanh()),
        Epsilon::Indefinite => None,
    };
    let unwrap = |k: &[[Real; 2]; 5]| -> Option<[Real; 5]> {
        let mut t = [0.0; 5];
        for n in 0..5 {
            t[n] = angle(&k[n])?;
        }
        if input.epsilon == Epsilon::Definite {
            let tau = 2.0 * std::f64::consts::PI;
            for n in 1..5 {
                t[n] -= tau * ((t[n] - t[0]) / tau).round();
            }
        }
        Some(t)
    };
    let eta = match (unwrap(&scaled), half.as_ref().map(unwrap)) {
        (Some(full), None) => Some(grad(full, None)),
        (Some(full), Some(Some(hv))) => Some(grad(full, Some(hv))),
        _ => None,
    }
    .map(|ge| [dir(ge, 0) + e * g1, dir(ge, 1) - g2]);
    Ok(PdeResiduals {
        system,
        eta,
        kernel: scaled[0],
        wedge_sign: sign,
    })
}

/// The four stencil neighbours of `point`.
pub fn stencil_points(point: (Real, Real), step: Real) -> [(Real, Real); 4] {
    let (u, v) = point;
    [(u + step, v), (u - step, v), (u, v + step), (u, v - step)]
}

fn stencil_from_centre(
    chart: &SurfaceChart,
    geom: &PointGeometry,
    report: &InvariantReport,
    step: Real,
    options: &FrameOptions,
    tol: RankTolerance,
) -> Result<PdeResiduals, PdeError> {
    let (u, v) = geom.point;
    if !(step > 1e3 * Real::EPSILON * (1.0 + u.abs() + v.abs())) {
        return Err(PdeError::StepTooSmall { step });
    }
    // neighbours reuse the centre's seed and continue its rotation so the
    // frame field is smooth
    let rotation = options.choice.and_then(|c| c.rotation);
    let opts_at = |p: (Real, Real)| FrameOptions {
        order: options.order,
        choice: Some(FrameChoice {
            rotation: rotation.map(|r| Rotation {
                angle: r.angle + r.grad[0] * (p.0 - u) + r.grad[1] * (p.1 - v),
                grad: r.grad,
            }),
            ..geom.choice()
        }),
    };
    let mut ranks = [report.rank_h; 9];
    let mut kernels = [[0.0; 2]; 9];
    kernels[0] = report.kernel().ok_or(PdeError::StencilRankBreak { ranks })?;
    let pts = stencil_points(geom.point, step)
        .into_iter()
        .chain(stencil_points(geom.point, 0.5 * step));
    for (n, p) in pts.enumerate() {
        let g = analyze_point(chart, p, &opts_at(p))?;
        let r = invariant_report(&g, tol)?;
        ranks[n + 1] = r.rank_h;
        if let Some(k) = r.kernel() {
            kernels[n + 1] = k;
        }
    }
    if ranks.iter().any(|&r| r != 1) {
        return Err(PdeError::StencilRankBreak { ranks });
    }
    stencil_residuals(&StencilInput {
        epsilon: report.epsilon,
        step,
        x_coords: geom.affine.x_coords,
        g: [report.g1, report.g2],
        kernels: std::array::from_fn(|n| kernels[n]),
        half: Some(std::array::from_fn(|n| kernels[n + 5])),
    })
}

/// Residuals of the first-order system for the kernel of `H` at `point`.
pub fn pde_residuals(
    chart: &SurfaceChart,
    point: (Real, Real),
    step: Real,
    options: &FrameOptions,
    tol: RankTolerance,
) -> Result<PdeResiduals, PdeError> {
    let geom = analyze_point(chart, point, options)?;
    let report = invariant_report(&geom, tol)?;
    if report.rank_h != 1 || report.ill_conditioned {
        let mut ranks = [1; 9];
        ranks[0] = report.rank_h;
        return Err(PdeError::StencilRankBreak { ranks });
    }
    stencil_from_centre(chart, &geom, &report, step, options, tol)
}

/// Null space of `Omega -> Omega(x_u, x_v)` over a set of samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub dim: usize,
    pub samples: usize,
    pub singular_values: Vec<Real>,
    /// Orthonormal basis of the null space.
    pub basis: Vec<SymplecticForm>,
    /// Whether each basis element is nondegenerate.
    pub nondegenerate: Vec<bool>,
    /// Whether a generic element of the null space is nondegenerate.
    pub span_nondegenerate: bool,
}

impl OracleResult {
    pub fn kind(&self) -> VerdictKind {
        match self.dim {
            0 => VerdictKind::NotLagrangian,
            1 if self.span_nondegenerate => VerdictKind::LagrangianUnique,
            1 => VerdictKind::NotLagrangian,
            _ if self.span_nondegenerate => VerdictKind::LagrangianFamily,
            _ => VerdictKind::NotLagrangian,
        }
    }
}

/// Samples on the 5x5 subgrid of the shrunk domain, minus excluded points.
pub fn oracle_samples(chart: &SurfaceChart) -> Vec<(Real, Real)> {
    chart
        .domain
        .shrink(GRID_MARGIN)
        .grid(ORACLE_GRID)
        .into_iter()
        .filter(|p| eval_component_jets(chart, *p, 1).is_ok())
        .collect()
}

/// Plucker coordinates `p_ij = x_u^i x_v^j - x_u^j x_v^i` in [`PAIRS`] order.
pub fn plucker(xu: &[Real; 4], xv: &[Real; 4]) -> [Real; 6] {
    PAIRS.map(|(i, j)| xu[i] * xv[j] - xu[j] * xv[i])
}

pub fn oracle_parallel_forms(chart: &SurfaceChart, samples: &[(Real, Real)]) -> Result<OracleResult, GeometryError> {
    let mut rows = Vec::with_capacity(samples.len() * 6);
    for p in samples {
        let jets = eval_component_jets(chart, *p, 1)?;
        let xu = [0, 1, 2, 3].map(|i| jets[i].partial(Variable::U).value());
        let xv = [0, 1, 2, 3].map(|i| jets[i].partial(Variable::V).value());
        rows.extend(plucker(&xu, &xv));
    }
    let n = samples.len();
    let m = DMatrix::from_row_slice(n, 6, &rows);
    // pad to at least 6 rows so the decomposition returns all six directions
    let m = if n < 6 { m.resize_vertically(6, 0.0) } else { m };
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let sv: Vec<Real> = svd.singular_values.iter().copied().collect();
    let smax = sv.iter().copied().fold(0.0, Real::max);
    let mut basis = Vec::new();
    let mut kept = Vec::new();
    for (k, s) in sv.iter().enumerate() {
        if *s < ORACLE_NULL_TOL * smax || smax == 0.0 {
            let row = v_t.row(k);
            basis.push(SymplecticForm::from_entries(std::array::from_fn(|c| row[c])).canonical());
            kept.push(*s);
        }
    }
    let mut sorted = sv.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let nondegenerate: Vec<bool> = basis.iter().map(|b| b.wedge_ratio().abs() > TOL_WEDGE_ZERO).collect();
    Ok(OracleResult {
        dim: basis.len(),
        samples: n,
        singular_values: sorted,
        span_nondegenerate: span_nondegenerate(&basis),
        nondegenerate,
        basis,
    })
}

/// The Pfaffian restricted to the span is a quadratic form; it is nonzero
/// somewhere iff its symmetric matrix is nonzero.
fn span_nondegenerate(basis: &[SymplecticForm]) -> bool {
    let polar = |x: &SymplecticForm, y: &SymplecticForm| {
        let [a12, a13, a14, a23, a24, a34] = x.entries;
        let [b12, b13, b14, b23, b24, b34] = y.entries;
        0.5 * (a12 * b34 + b12 * a34 - a13 * b24 - b13 * a24 + a14 * b23 + b14 * a23)
    };
    basis
        .iter()
        .any(|x| basis.iter().any(|y| polar(x, y).abs() > TOL_WEDGE_ZERO))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VerdictKind {
    NotLagrangian,
    LagrangianUnique,
    LagrangianFamily,
    Degenerate,
    Inconclusive,
}

/// Form data attached to a verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum OmegaData {
    Single(SymplecticForm),
    Basis(Vec<SymplecticForm>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedPoint {
    pub u: Real,
    pub v: Real,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub rank: Real,
    pub rank_abs: Real,
    pub pde: Real,
    pub parallel: Real,
    pub step: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub grid_points: usize,
    /// Counts of points with rank 0, 1, 2.
    pub rank_histogram: [usize; 3],
    pub max_pde_residual: Option<Real>,
    pub max_eta_residual: Option<Real>,
    pub max_parallel_deviation: Option<Real>,
    pub omega_checks: Option<OmegaChecks>,
    pub oracle_dim: Option<usize>,
    pub oracle_kind: Option<VerdictKind>,
    pub oracle_agrees: Option<bool>,
    /// Distance between the reconstructed form and the oracle generator.
    pub oracle_deviation: Option<Real>,
    pub skipped_points: Vec<FlaggedPoint>,
    pub flagged_points: Vec<FlaggedPoint>,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LagrangianVerdict {
    pub kind: VerdictKind,
    pub omega: Option<OmegaData>,
    pub wedge_ratio: Option<Real>,
    pub evidence: Evidence,
}

#[derive(Debug, Error)]
pub enum LagrangianError {
    #[error("degenerate surface: {skipped} of {total} grid points failed")]
    DegenerateSurface { skipped: usize, total: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecideConfig {
    pub grid: usize,
    pub order: usize,
    pub tol_rank: RankTolerance,
    pub tol_pde: Real,
    pub tol_parallel: Real,
    /// `None` selects `STEP_FRACTION` times the domain width.
    pub step: Option<Real>,
    pub oracle: bool,
}

impl Default for DecideConfig {
    fn default() -> Self {
        DecideConfig {
            grid: DEFAULT_GRID,
            order: crate::frame::DEFAULT_ORDER,
            tol_rank: RankTolerance::default(),
            tol_pde: DEFAULT_TOL_PDE,
            tol_parallel: DEFAULT_TOL_PARALLEL,
            step: None,
            oracle: true,
        }
    }
}

impl DecideConfig {
    pub fn validate(&self) -> Result<(), LagrangianError> {
        let positive = [
            ("tol-rank", self.tol_rank.rel),
            ("tol-rank-abs", self.tol_rank.abs),
            ("tol-pde", self.tol_pde),
            ("tol-parallel", self.tol_parallel),
            ("step", self.step.unwrap_or(1.0)),
        ];
        for (name, x) in positive {
            if !(x > 0.0) {
                return Err(LagrangianError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.grid < 3 {
            return Err(LagrangianError::InvalidConfig("grid must be at least 3".into()));
        }
        Ok(())
    }
}

/// Per-point outcome of the grid scan.
#[derive(Debug, Clone)]
pub enum PointOutcome {
    Skipped { point: (Real, Real), reason: String },
    Evaluated(Box<EvaluatedPoint>),
}

#[derive(Debug, Clone)]
pub struct EvaluatedPoint {
    pub point: (Real, Real),
    pub data: FrameData,
    pub report: InvariantReport,
    pub pde: Option<Result<PdeResiduals, PdeError>>,
}

fn is_skippable(e: &InvariantError) -> bool {
    matches!(
        e,
        InvariantError::Geometry(
            GeometryError::DegenerateSurface { .. }
                | GeometryError::ImmersionFailure { .. }
                | GeometryError::Eval(_)
                | GeometryError::Jet(_)
                | GeometryError::NullSeedFailure
        )
    )
}

pub fn evaluate_point(
    chart: &SurfaceChart,
    point: (Real, Real),
    step: Real,
    options: &FrameOptions,
    tol: RankTolerance,
) -> Result<PointOutcome, LagrangianError> {
    let attempt = analyze_point(chart, point, options)
        .map_err(InvariantError::from)
        .and_then(|g| invariant_report(&g, tol).map(|r| (g, r)));
    let (geom, report) = match attempt {
        Ok(x) => x,
        Err(e) if is_skippable(&e) => {
            return Ok(PointOutcome::Skipped {
                point,
                reason: e.to_string(),
            })
        }
        Err(InvariantError::Geometry(g)) => return Err(g.into()),
        Err(e) => {
            return Ok(PointOutcome::Skipped {
                point,
                reason: e.to_string(),
            })
        }
    };
    let pde = (report.rank_h == 1 && !report.ill_conditioned)
        .then(|| stencil_from_centre(chart, &geom, &report, step, options, tol));
    Ok(PointOutcome::Evaluated(Box::new(EvaluatedPoint {
        point,
        data: geom.affine,
        report,
        pde,
    })))
}

fn flag(point: (Real, Real), reason: impl Into<String>) -> FlaggedPoint {
    FlaggedPoint {
        u: point.0,
        v: point.1,
        reason: reason.into(),
    }
}

/// Grid scan and classification.
pub fn decide(chart: &SurfaceChart, config: &DecideConfig) -> Result<LagrangianVerdict, LagrangianError> {
    config.validate()?;
    let step = config.step.unwrap_or(STEP_FRACTION * chart.domain.width());
    let options = FrameOptions {
        order: config.order,
        choice: None,
    };
    let points = chart.domain.shrink(GRID_MARGIN).grid(config.grid);
    let outcomes: Vec<PointOutcome> = points
        .par_iter()
        .map(|p| evaluate_point(chart, *p, step, &options, config.tol_rank))
        .collect::<Result<_, _>>()?;

    let total = outcomes.len();
    let mut skipped = Vec::new();
    let mut evaluated = Vec::new();
    for o in outcomes {
        match o {
            PointOutcome::Skipped { point, reason } => skipped.push(flag(point, reason)),
            PointOutcome::Evaluated(e) => evaluated.push(*e),
        }
    }
    if skipped.len() as Real > MAX_SKIPPED_FRACTION * total as Real || evaluated.is_empty() {
        return Err(LagrangianError::DegenerateSurface {
            skipped: skipped.len(),
            total,
        });
    }

    let mut hist = [0usize; 3];
    for e in &evaluated {
        hist[e.report.rank_h as usize] += 1;
    }
    let mut flagged: Vec<FlaggedPoint> = evaluated
        .iter()
        .filter(|e| e.report.ill_conditioned)
        .map(|e| flag(e.point, "rank decision near threshold"))
        .collect();
    let reliable = |r: u8| {
        evaluated
            .iter()
            .filter(move |e| !e.report.ill_conditioned && e.report.rank_h == r)
    };

    let pde_values: Vec<&PdeResiduals> = evaluated
        .iter()
        .filter_map(|e| e.pde.as_ref().and_then(|r| r.as_ref().ok()))
        .collect();
    let max_pde = pde_values.iter().map(|r| r.max()).reduce(Real::max);
    let max_eta = pde_values.iter().filter_map(|r| r.eta_max()).reduce(Real::max);
    for e in &evaluated {
        if let Some(Err(err)) = &e.pde {
            flagged.push(flag(e.point, err.to_string()));
        }
    }

    let mut omega = None;
    let mut wedge_ratio = None;
    let mut max_parallel = None;
    let mut checks = None;
    let kind = if reliable(2).next().is_some() || max_pde.is_some_and(|m| m > config.tol_pde) {
        VerdictKind::NotLagrangian
    } else if hist[0] == evaluated.len() && flagged.is_empty() {
        VerdictKind::LagrangianFamily
    } else if hist[1] == evaluated.len() && flagged.is_empty() {
        let mut forms = Vec::with_capacity(evaluated.len());
        let mut agg = OmegaChecks::default();
        for e in &evaluated {
            let r = e.pde.as_ref().and_then(|r| r.as_ref().ok()).expect("rank-1 points carry residuals");
            let w = reconstruct_omega(&e.data, r.kernel[0], r.kernel[1])?;
            agg = agg.merge(&omega_invariant_checks(&w, &e.data, &e.report.l, &e.report.f));
            forms.push(w);
        }
        let reference = forms[0];
        let dev = forms
            .iter()
            .map(|w| w.direction_distance(&reference))
            .fold(0.0, Real::max);
        max_parallel = Some(dev);
        checks = Some(agg);
        let unit = reference.canonical();
        let rep = unit.scaled(unit.wedge_ratio().abs().sqrt().recip());
        wedge_ratio = Some(rep.wedge_ratio());
        omega = Some(OmegaData::Single(rep));
        if dev <= config.tol_parallel {
            VerdictKind::LagrangianUnique
        } else {
            flagged.push(flag(evaluated[0].point, format!("reconstructed forms differ by {dev:e}")));
            VerdictKind::Inconclusive
        }
    } else {
        if flagged.is_empty() {
            let generic = if hist[0] >= hist[1] { 0 } else { 1 };
            for e in &evaluated {
                if e.report.rank_h != generic {
                    flagged.push(flag(e.point, format!("rank {} off the generic stratum", e.report.rank_h)));
                }
            }
        }
        VerdictKind::Inconclusive
    };

    let mut oracle_dim = None;
    let mut oracle_kind = None;
    let mut oracle_agrees = None;
    let mut oracle_deviation = None;
    if config.oracle {
        let oracle = oracle_parallel_forms(chart, &oracle_samples(chart))?;
        oracle_dim = Some(oracle.dim);
        oracle_kind = Some(oracle.kind());
        if kind != VerdictKind::Inconclusive {
            oracle_agrees = Some(oracle.kind() == kind);
        }
        match (&omega, oracle.dim) {
            (Some(OmegaData::Single(w)), 1) => {
                oracle_deviation = Some(w.direction_distance(&oracle.basis[0]));
            }
            (None, _) if kind == VerdictKind::LagrangianFamily => {
                omega = Some(OmegaData::Basis(oracle.basis.clone()));
            }
            _ => {}
        }
    }

    Ok(LagrangianVerdict {
        kind,
        omega,
        wedge_ratio,
        evidence: Evidence {
            grid_points: total,
            rank_histogram: hist,
            max_pde_residual: max_pde,
            max_eta_residual: max_eta,
            max_parallel_deviation: max_parallel,
            omega_checks: checks,
            oracle_dim,
            oracle_kind,
            oracle_agrees,
            oracle_deviation,
            skipped_points: skipped,
            flagged_points: flagged,
            tolerances: Tolerances {
                rank: config.tol_rank.rel,
                rank_abs: config.tol_rank.abs,
                pde: config.tol_pde,
                parallel: config.tol_parallel,
                step,
            },
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn frame_form_on_identity_frame() {
        let w = frame_form(1.0, 0.0, Epsilon::Definite);
        assert_eq!(w.entries, [0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(w.wedge_ratio(), 1.0);
        let w = frame_form(0.0, 1.0, Epsilon::Definite);
        assert_eq!((w.get(0, 2), w.get(1, 3)), (1.0, -1.0));
    }

    #[test]
    fn standard_form_has_unit_ratio() {
        let w = SymplecticForm::from_entries([1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(w.wedge_ratio(), 1.0);
        let e = |i: usize| std::array::from_fn::<Real, 4, _>(|k| if k == i { 1.0 } else { 0.0 });
        assert_eq!(w.eval(&e(0), &e(1)), 1.0);
        assert_eq!(w.eval(&e(1), &e(0)), -1.0);
    }

    #[test]
    fn constant_kernel_without_g_has_zero_residuals() {
        let input = StencilInput {
            epsilon: Epsilon::Definite,
            step: 1e-3,
            x_coords: [[1.0, 0.2], [-0.3, 0.9]],
            g: [0.0, 0.0],
            kernels: [[0.6, 0.8]; 5],
            half: Some([[-0.3, -0.4]; 4]),
        };
        let r = stencil_residuals(&input).unwrap();
        assert_eq!(r.system, [0.0; 4]);
        assert_eq!(r.eta, Some([0.0, 0.0]));
    }

    #[test]
    fn rotating_kernel_matches_g() {
        // eta = a u with X1 = d/du, X2 = d/dv gives d eta(X1) = a = -G1
        let a = 0.7;
        let h = 1e-3;
        let k = |t: Real| [t.cos(), t.sin()];
        let input = StencilInput {
            epsilon: Epsilon::Definite,
            step: h,
            x_coords: [[1.0, 0.0], [0.0, 1.0]],
            g: [-a, 0.0],
            kernels: [k(0.3), k(0.3 + a * h), k(0.3 - a * h), k(0.3), k(0.3)],
            half: None,
        };
        let r = stencil_residuals(&input).unwrap();
        assert!(r.max() < 1e-6, "{:?}", r.system);
        assert!(r.eta_max().unwrap() < 1e-9);
    }

    #[test]
    fn null_wedge_is_rejected() {
        let input = StencilInput {
            epsilon: Epsilon::Indefinite,
            step: 1e-3,
            x_coords: [[1.0, 0.0], [0.0, 1.0]],
            g: [0.0, 0.0],
            kernels: [[1.0, 1.0]; 5],
            half: None,
        };
        assert!(matches!(stencil_residuals(&input), Err(PdeError::WedgeVanishes { .. })));
    }

    #[test]
    fn perturbed_form_breaks_checks() {
        let data = crate::frame::analyze_point(
            &crate::dsl::parse_surface("surface g { x1 = u; x2 = v; x3 = u^3/3 + u*v^2/2; x4 = u^2*v/2 + v^3/3; }").unwrap(),
            (0.7, 0.9),
            &FrameOptions::default(),
        )
        .unwrap()
        .affine;
        let w = SymplecticForm::from_entries([0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        let z = [[0.0; 2]; 2];
        let ok = omega_invariant_checks(&w, &data, &z, &z);
        assert!(ok.x1_x2 < 1e-12 && ok.xi1_xi2 < 1e-10, "{ok:?}");
        let mut bad = w;
        bad.entries[0] += 0.1;
        assert!(omega_invariant_checks(&bad, &data, &z, &z).max() > 1e-2);
    }

    #[test]
    fn direction_distance_ignores_scale_and_sign() {
        let a = SymplecticForm::from_entries([1.0, 2.0, 0.0, 0.0, -1.0, 3.0]);
        assert_abs_diff_eq!(a.direction_distance(&a.scaled(-4.0)), 0.0, epsilon = 1e-15);
    }
}
