//! Thin SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! Jacobi is slower than Golub–Kahan bidiagonalization but computes small
//! singular values to high relative accuracy, and the rank-deficient task
//! vectors this crate handles are full of them.

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U · diag(σ) · Vᵀ` with `k = min(m, n)` values, zeros kept.
#[derive(Clone, Debug)]
pub struct SvdFactors<T> {
    /// `m × k`, orthonormal columns.
    pub u: Matrix<T>,
    /// Descending, nonnegative, length `k`.
    pub singular_values: Vec<T>,
    /// `k × n`, orthonormal rows.
    pub vt: Matrix<T>,
}

impl<T: Scalar> SvdFactors<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        crate::matrix::reconstruct(&self.u, &self.singular_values, &self.vt)
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }
}

/// Computes the thin SVD of `a`.
///
/// Signs are fixed so the largest-magnitude entry of every column of `U` is
/// positive (first such entry on ties); the matching row of `Vᵀ` is flipped
/// with it.
pub fn svd_thin<T: Scalar>(a: &Matrix<T>) -> Result<SvdFactors<T>> {
    check_input(a)?;
    let (m, n) = a.shape();
    let mut factors = if m >= n {
        jacobi_tall(a, true)?
    } else {
        // A = (Aᵀ)ᵀ = (U' Σ V'ᵀ)ᵀ = V' Σ U'ᵀ
        let t = jacobi_tall(&a.transpose(), true)?;
        SvdFactors {
            u: t.vt.transpose(),
            singular_values: t.singular_values,
            vt: t.u.transpose(),
        }
    };
    fix_signs(&mut factors);
    Ok(factors)
}

/// Singular values only, descending. Skips accumulating the right factor.
pub fn singular_values<T: Scalar>(a: &Matrix<T>) -> Result<Vec<T>> {
    check_input(a)?;
    let t;
    let tall = if a.rows() >= a.cols() {
        a
    } else {
        t = a.transpose();
        &t
    };
    Ok(jacobi_tall(tall, false)?.singular_values)
}

fn check_input<T: Scalar>(a: &Matrix<T>) -> Result<()> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::InvalidArgument(
            "svd of an empty matrix".to_owned(),
        ));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// One-sided Jacobi on a tall (`m ≥ n`) matrix. When `vectors` is false the
/// returned `u`/`vt` are empty placeholders.
fn jacobi_tall<T: Scalar>(a: &Matrix<T>, vectors: bool) -> Result<SvdFactors<T>> {
    let (m, n) = a.shape();
    debug_assert!(m >= n);
    let mut w: Vec<Vec<T>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<T>> = if vectors {
        (0..n)
            .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
            .collect()
    } else {
        Vec::new()
    };

    let tol = T::epsilon() * T::from_usize_lossy(m);
    // columns at rounding-noise level relative to the whole matrix are left
    // alone; rotating them against each other never settles
    let negligible = {
        let f = tol * a.frobenius_norm();
        f * f
    };
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == T::zero()
                    || alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= tol * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                if vectors {
                    rotate(&mut v, p, q, c, s);
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Factorization {
            what: "jacobi svd",
            iterations: MAX_SWEEPS,
        });
    }

    let mut sigma: Vec<T> = w.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap().then(i.cmp(&j)));
    sigma = order.iter().map(|&j| sigma[j]).collect();

    if !vectors {
        return Ok(SvdFactors {
            u: Matrix::zeros(0, 0),
            singular_values: sigma,
            vt: Matrix::zeros(0, 0),
        });
    }

    // same floor as the rotation skip: anything below it was never
    // orthogonalized against the other columns
    let floor = tol * a.frobenius_norm();
    let mut u_cols: Vec<Option<Vec<T>>> = order
        .iter()
        .zip(&sigma)
        .map(|(&j, &s)| {
            (s > T::zero() && s > floor).then(|| w[j].iter().map(|&x| x / s).collect())
        })
        .collect();
    complete_orthonormal(&mut u_cols, m);
    let u_cols: Vec<Vec<T>> = u_cols.into_iter().map(Option::unwrap).collect();

    let u = Matrix::from_columns(m, &u_cols);
    let vt = Matrix::from_fn(n, n, |i, j| v[order[i]][j]);
    Ok(SvdFactors {
        u,
        singular_values: sigma,
        vt,
    })
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills `None` slots with unit vectors orthogonal to every other column.
/// Each slot takes the standard basis vector with the largest component
/// outside the current span, orthogonalized by Gram–Schmidt (twice).
pub(crate) fn complete_orthonormal<T: Scalar>(cols: &mut [Option<Vec<T>>], dim: usize) {
    let orthogonalize = |e: &mut Vec<T>, cols: &[Option<Vec<T>>]| {
        for _ in 0..2 {
            for other in cols.iter().flatten() {
                let proj = dot(e, other);
                for (x, &o) in e.iter_mut().zip(other) {
                    *x -= proj * o;
                }
            }
        }
    };
    for slot in 0..cols.len() {
        if cols[slot].is_some() {
            continue;
        }
        let mut best: Option<(T, Vec<T>)> = None;
        for k in 0..dim {
            let mut e = vec![T::zero(); dim];
            e[k] = T::one();
            orthogonalize(&mut e, cols);
            let len = norm(&e);
            if best.as_ref().is_none_or(|(l, _)| len > *l) {
                best = Some((len, e));
            }
        }
        let (len, mut e) = best.expect("dimension is positive");
        assert!(len > T::zero(), "cannot complete basis beyond dimension");
        for x in &mut e {
            *x /= len;
        }
        orthogonalize(&mut e, cols);
        let len = norm(&e);
        for x in &mut e {
            *x /= len;
        }
        cols[slot] = Some(e);
    }
}

fn fix_signs<T: Scalar>(f: &mut SvdFactors<T>) {
    let (m, k) = f.u.shape();
    for j in 0..k {
        let mut best = 0;
        for i in 1..m {
            if f.u[(i, j)].abs() > f.u[(best, j)].abs() {
                best = i;
            }
        }
        if f.u[(best, j)] < T::zero() {
            for i in 0..m {
                f.u[(i, j)] = -f.u[(i, j)];
            }
            for c in 0..f.vt.cols() {
                f.vt[(j, c)] = -f.vt[(j, c)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_reaches_spread_directions() {
        // the missing direction is (1,1,1,1)/2; no basis vector is close to it
        let mut cols = vec![
            Some(vec![0.5_f64, -0.5, 0.5, -0.5]),
            Some(vec![0.5, 0.5, -0.5, -0.5]),
            None,
            Some(vec![0.5, -0.5, -0.5, 0.5]),
        ];
        complete_orthonormal(&mut cols, 4);
        let filled = cols[2].as_ref().unwrap();
        assert!(filled.iter().all(|&x| (x.abs() - 0.5).abs() < 1e-15));
    }

    fn orthonormality_error(q: &Matrix<f64>) -> f64 {
        q.transpose().matmul(q).max_abs_diff(&Matrix::identity(q.cols()))
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let f = svd_thin(&Matrix::<f64>::identity(3)).unwrap();
        assert_eq!(f.singular_values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_with_zero_keeps_the_zero() {
        let a = Matrix::from_rows(&[[3.0, 0.0], [0.0, 0.0]]);
        let f = svd_thin(&a).unwrap();
        assert_eq!(f.singular_values, vec![3.0, 0.0]);
        assert!(orthonormality_error(&f.u) < 1e-12);
        assert!(f.reconstruct().max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn antidiagonal_two_by_two() {
        // AᵀA = diag(1, 4)
        let a = Matrix::from_rows(&[[0.0_f64, 2.0], [1.0, 0.0]]);
        let f = svd_thin(&a).unwrap();
        assert!((f.singular_values[0] - 2.0).abs() < 1e-14);
        assert!((f.singular_values[1] - 1.0).abs() < 1e-14);
        assert!(f.reconstruct().max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn wide_input_uses_transpose() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let f = svd_thin(&a).unwrap();
        assert_eq!(f.u.shape(), (2, 2));
        assert_eq!(f.vt.shape(), (2, 3));
        assert!(f.reconstruct().relative_error(&a) < 1e-14);
        assert!(orthonormality_error(&f.vt.transpose()) < 1e-12);
    }

    #[test]
    fn zero_matrix_gets_a_full_basis() {
        let f = svd_thin(&Matrix::<f64>::zeros(4, 3)).unwrap();
        assert_eq!(f.singular_values, vec![0.0; 3]);
        assert!(orthonormality_error(&f.u) < 1e-15);
    }

    #[test]
    fn sign_convention_largest_entry_positive() {
        let a = Matrix::from_rows(&[[-5.0_f64, 0.0], [0.0, -1.0], [1.0, 0.0]]);
        let f = svd_thin(&a).unwrap();
        for j in 0..2 {
            let col = f.u.column(j);
            let big = col.iter().cloned().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn single_precision_works() {
        let a = Matrix::<f32>::from_rows(&[[0.0, 2.0], [1.0, 0.0]]);
        let s = singular_values(&a).unwrap();
        assert!((s[0] - 2.0).abs() < 1e-6 && (s[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_empty() {
        assert!(svd_thin(&Matrix::<f64>::zeros(0, 3)).is_err());
    }
}
