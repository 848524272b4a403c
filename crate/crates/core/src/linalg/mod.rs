//! Dense factorizations: thin SVD, general real eigendecomposition, polar
//! orthonormalization and SPD solves.

mod eig;
mod polar;
mod solve;
mod svd;

pub use eig::{eig_real, EigFactors};
pub use polar::{generalized_procrustes, polar_orthonormalize, Polar};
pub use solve::{spd_solve, Cholesky, Lu};
pub use svd::{singular_values, svd_thin, SvdFactors};


use crate::error::Result;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// 2-norm condition number `σ_max / σ_min` (infinite when singular).
pub fn condition_number<T: Scalar>(a: &Matrix<T>) -> Result<T> {
    let s = singular_values(a)?;
    let min = *s.last().unwrap();
    Ok(if min == T::zero() { T::infinity() } else { s[0] / min })
}
