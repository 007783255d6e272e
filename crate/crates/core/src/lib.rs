//! Minimum-error discrimination of linearly independent pure states.
//!
//! The optimal measurement for `m` linearly independent pure states is a
//! rank-one projective measurement. This crate finds it by continuation from
//! the trivially solvable orthogonal ensemble ([`homotopy`]), checks it against
//! the Holevo–Yuen optimality conditions ([`certify`]), and provides
//! independent cross-checks: enumeration of every stationary measurement for
//! three real states ([`enumerate3`]), qutrit Bloch-vector geometry
//! ([`bloch3`]) and brute-force references ([`oracle`]).

// `!(x <= limit)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bloch3;
pub mod certify;
pub mod enumerate3;
pub mod error;
pub mod gram;
pub mod homotopy;
pub mod io;
pub mod linalg;
pub mod measurement;
pub mod oracle;

pub use error::{MedError, Result};
