//! Small dense helpers over jets and plain reals.

use nalgebra::{DMatrix, Matrix4, Vector4};

use crate::jet::{Jet, Real};

pub type JetVec4 = [Jet; 4];

pub fn dot(a: &JetVec4, b: &JetVec4) -> Jet {
    &(&(&a[0] * &b[0]) + &(&a[1] * &b[1])) + &(&(&a[2] * &b[2]) + &(&a[3] * &b[3]))
}

pub fn lincomb(terms: &[(&Jet, &JetVec4)]) -> JetVec4 {
    let mut iter = terms.iter();
    let (c, v) = iter.next().expect("at least one term");
    let mut out = [0, 1, 2, 3].map(|i| *c * &v[i]);
    for (c, v) in iter {
        for i in 0..4 {
            out[i] = &out[i] + &(*c * &v[i]);
        }
    }
    out
}

pub fn add4(a: &JetVec4, b: &JetVec4) -> JetVec4 {
    [0, 1, 2, 3].map(|i| &a[i] + &b[i])
}

pub fn sub4(a: &JetVec4, b: &JetVec4) -> JetVec4 {
    [0, 1, 2, 3].map(|i| &a[i] - &b[i])
}

pub fn values4(a: &JetVec4) -> [Real; 4] {
    [0, 1, 2, 3].map(|i| a[i].value())
}

fn det3_jet(m: [[&Jet; 3]; 3]) -> Jet {
    let t0 = m[0][0] * &(m[1][1] * m[2][2] - m[1][2] * m[2][1]);
    let t1 = m[0][1] * &(m[1][0] * m[2][2] - m[1][2] * m[2][0]);
    let t2 = m[0][2] * &(m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    t0 - t1 + t2
}

/// Determinant of the 4x4 matrix whose columns are `c0..c3`.
pub fn det4_jet(c0: &JetVec4, c1: &JetVec4, c2: &JetVec4, c3: &JetVec4) -> Jet {
    let cols = [c0, c1, c2, c3];
    // expand along the first row (entry `cols[j][0]`)
    let mut acc: Option<Jet> = None;
    for j in 0..4 {
        let others: Vec<usize> = (0..4).filter(|&k| k != j).collect();
        let minor = det3_jet([1, 2, 3].map(|r| [0, 1, 2].map(|c| &cols[others[c]][r])));
        let term = &cols[j][0] * &minor;
        acc = Some(match acc {
            None => term,
            Some(a) if j % 2 == 0 => a + term,
            Some(a) => a - term,
        });
    }
    acc.expect("four terms")
}

pub fn det4(c0: &[Real; 4], c1: &[Real; 4], c2: &[Real; 4], c3: &[Real; 4]) -> Real {
    Matrix4::from_columns(&[
        Vector4::from(*c0),
        Vector4::from(*c1),
        Vector4::from(*c2),
        Vector4::from(*c3),
    ])
    .determinant()
}

/// 2-norm condition number of a square real matrix.
pub fn condition_number(m: &Matrix4<Real>) -> Real {
    let sv = DMatrix::from_column_slice(4, 4, m.as_slice()).singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        Real::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a square jet matrix `m[row][col]` by Gauss-Jordan elimination,
/// pivoting on the constant terms. Returns `None` when a pivot vanishes.
pub fn invert_jet<const N: usize>(m: &[[Jet; N]; N]) -> Option<[[Jet; N]; N]> {
    let order = m
        .iter()
        .flat_map(|r| r.iter().map(Jet::order))
        .min()
        .unwrap_or(0);
    let mut a: Vec<Vec<Jet>> = m
        .iter()
        .map(|r| r.iter().map(|x| x.truncate(order)).collect())
        .collect();
    let mut inv: Vec<Vec<Jet>> = (0..N)
        .map(|i| {
            (0..N)
                .map(|j| Jet::constant(if i == j { 1.0 } else { 0.0 }, order))
                .collect()
        })
        .collect();
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| {
            a[i][col]
                .value()
                .abs()
                .total_cmp(&a[j][col].value().abs())
        })?;
        if a[pivot][col].value() == 0.0 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let r = a[col][col].recip().ok()?;
        for k in 0..N {
            a[col][k] = &a[col][k] * &r;
            inv[col][k] = &inv[col][k] * &r;
        }
        for row in 0..N {
            if row == col {
                continue;
            }
            let f = a[row][col].clone();
            for k in 0..N {
                a[row][k] = &a[row][k] - &(&f * &a[col][k]);
                inv[row][k] = &inv[row][k] - &(&f * &inv[col][k]);
            }
        }
    }
    let mut rows = inv.into_iter();
    Some(std::array::from_fn(|_| {
        let row = rows.next().expect("N rows");
        let mut cols = row.into_iter();
        std::array::from_fn(|_| cols.next().expect("N cols"))
    }))
}

/// `m * x` for a jet matrix and jet vector.
pub fn mat_vec_jet<const N: usize>(m: &[[Jet; N]; N], x: &[Jet; N]) -> [Jet; N] {
    std::array::from_fn(|i| {
        let mut acc = &m[i][0] * &x[0];
        for k in 1..N {
            acc = acc + &m[i][k] * &x[k];
        }
        acc
    })
}
