use log::warn;

use super::svd::svd_thin;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Nearest matrix with orthonormal columns (or rows, for wide input).
#[derive(Clone, Debug)]
pub struct Polar<T> {
    pub q: Matrix<T>,
    /// Set when the input had a (numerically) zero singular value, in which
    /// case the orthogonal factor is not unique.
    pub degenerate: bool,
}

/// `Q = U·Vᵀ` from the thin SVD of `m`; the Frobenius-nearest matrix with
/// orthonormal columns. Wide input is handled through its transpose and
/// yields orthonormal rows.
pub fn polar_orthonormalize<T: Scalar>(m: &Matrix<T>) -> Result<Polar<T>> {
    let f = svd_thin(m)?;
    let sigma_max = f.singular_values[0];
    let floor = sigma_max * T::epsilon() * T::from_usize_lossy(m.rows().max(m.cols()));
    let degenerate = f
        .singular_values
        .last()
        .is_some_and(|&s| s <= floor || s == T::zero());
    if degenerate {
        warn!(
            "polar factor of a rank-deficient {}x{} matrix is not unique",
            m.rows(),
            m.cols()
        );
    }
    Ok(Polar {
        q: f.u.matmul(&f.vt),
        degenerate,
    })
}

/// Orthogonal consensus of same-shaped matrices: the polar factor of their
/// elementwise mean.
pub fn generalized_procrustes<T: Scalar>(mats: &[Matrix<T>]) -> Result<Polar<T>> {
    let first = mats.first().ok_or_else(|| {
        Error::InvalidArgument("generalized procrustes of an empty list".to_owned())
    })?;
    let mut sum = first.clone();
    for m in &mats[1..] {
        if m.shape() != first.shape() {
            return Err(Error::Shape(format!(
                "procrustes inputs must share a shape: {:?} vs {:?}",
                first.shape(),
                m.shape()
            )));
        }
        sum = sum.add(m);
    }
    polar_orthonormalize(&sum.scale(T::one() / T::from_usize_lossy(mats.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_input_is_fixed() {
        let c = 0.6;
        let s = 0.8;
        let q = Matrix::from_rows(&[[c, -s], [s, c]]);
        let p = polar_orthonormalize(&q).unwrap();
        assert!(p.q.max_abs_diff(&q) < 1e-15);
        assert!(!p.degenerate);
    }

    #[test]
    fn positive_diagonal_maps_to_identity() {
        let p = polar_orthonormalize(&Matrix::from_diag(&[2.0, 0.5])).unwrap();
        assert!(p.q.max_abs_diff(&Matrix::identity(2)) < 1e-15);
    }

    #[test]
    fn scaled_rotation_hand_case() {
        // [[0,−3],[2,0]] = [[0,−1],[1,0]]·diag(2,3)
        let p = polar_orthonormalize(&Matrix::from_rows(&[[0.0, -3.0], [2.0, 0.0]])).unwrap();
        assert!(p
            .q
            .max_abs_diff(&Matrix::from_rows(&[[0.0, -1.0], [1.0, 0.0]]))
            < 1e-15);
    }

    #[test]
    fn procrustes_of_duplicates() {
        let q = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let p = generalized_procrustes(&[q.clone(), q.clone()]).unwrap();
        assert!(p.q.max_abs_diff(&q) < 1e-15);
        assert!(generalized_procrustes::<f64>(&[]).is_err());
    }

    #[test]
    fn procrustes_degenerate_mean() {
        // mean(I, diag(1,−1)) = diag(1, 0)
        let p = generalized_procrustes(&[Matrix::identity(2), Matrix::from_diag(&[1.0_f64, -1.0])])
            .unwrap();
        assert!(p.degenerate);
        assert!((p.q[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((p.q[(1, 1)].abs() - 1.0).abs() < 1e-15);
        assert!(p.q[(0, 1)].abs() < 1e-15 && p.q[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn tall_and_wide() {
        let tall = Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0], [0.0, 2.0]]);
        let q = polar_orthonormalize(&tall).unwrap().q;
        assert!(q.transpose().matmul(&q).max_abs_diff(&Matrix::identity(2)) < 1e-14);
        let wide = tall.transpose();
        let q = polar_orthonormalize(&wide).unwrap().q;
        assert!(q.matmul(&q.transpose()).max_abs_diff(&Matrix::identity(2)) < 1e-14);
    }
}
