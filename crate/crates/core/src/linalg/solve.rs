use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Lower Cholesky factor `L` with `D = L·Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors a symmetric positive definite matrix. A pivot at or below
    /// `n·ε·max(diag)` counts as a definiteness failure.
    pub fn new(d: &Matrix<T>) -> Result<Self> {
        if !d.is_square() {
            return Err(Error::Shape(format!(
                "cholesky needs a square matrix, got {}x{}",
                d.rows(),
                d.cols()
            )));
        }
        let n = d.rows();
        let scale = d.diagonal().into_iter().fold(T::zero(), T::max);
        let asym = (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .fold(T::zero(), |m, (i, j)| m.max((d[(i, j)] - d[(j, i)]).abs()));
        if asym > T::lit(1e3) * T::epsilon() * scale.max(T::min_positive_value()) {
            return Err(Error::InvalidArgument(format!(
                "matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let floor = T::epsilon() * T::from_usize_lossy(n) * scale;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = d[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > floor) {
                return Err(Error::NotPositiveDefinite { index: j });
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut acc = d[(i, j)];
                for k in 0..j {
                    acc -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = acc / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &Matrix<T> {
        &self.l
    }

    /// Solves `D·X = B` for every column of `b`.
    pub fn solve(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        let n = self.l.rows();
        if b.rows() != n {
            return Err(Error::Shape(format!(
                "right-hand side has {} rows, system has {n}",
                b.rows()
            )));
        }
        let mut x = b.clone();
        for c in 0..b.cols() {
            for i in 0..n {
                let mut acc = x[(i, c)];
                for k in 0..i {
                    acc -= self.l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = acc / self.l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut acc = x[(i, c)];
                for k in i + 1..n {
                    acc -= self.l[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = acc / self.l[(i, i)];
            }
        }
        Ok(x)
    }
}

/// Solves `d·X = b` for symmetric positive definite `d`.
pub fn spd_solve<T: Scalar>(d: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    Cholesky::new(d)?.solve(b)
}

/// LU factorization with partial pivoting, for general square systems.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Shape("lu needs a square matrix".to_owned()));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut piv = k;
            for i in k + 1..n {
                if lu[(i, k)].abs() > lu[(piv, k)].abs() {
                    piv = i;
                }
            }
            if lu[(piv, k)] == T::zero() {
                return Err(Error::InvalidArgument("singular matrix".to_owned()));
            }
            if piv != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(piv, j)];
                    lu[(piv, j)] = t;
                }
                perm.swap(k, piv);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        let n = self.lu.rows();
        if b.rows() != n {
            return Err(Error::Shape("right-hand side row mismatch".to_owned()));
        }
        let mut x = Matrix::from_fn(n, b.cols(), |i, j| b[(self.perm[i], j)]);
        for c in 0..b.cols() {
            for i in 0..n {
                let mut acc = x[(i, c)];
                for k in 0..i {
                    acc -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = acc;
            }
            for i in (0..n).rev() {
                let mut acc = x[(i, c)];
                for k in i + 1..n {
                    acc -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = acc / self.lu[(i, i)];
            }
        }
        Ok(x)
    }
}
