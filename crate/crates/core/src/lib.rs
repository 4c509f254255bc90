//! Equiaffine invariants of non-degenerate surfaces in R^4 and a decision
//! procedure for surfaces that are Lagrangian with respect to a parallel
//! symplectic form.

// `!(x > t)` is used on purpose so that NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Tensor code reads better with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod dsl;
pub mod frame;
pub mod identities;
pub mod invariants;
pub mod jet;
pub mod lagrangian;
pub mod linalg;
