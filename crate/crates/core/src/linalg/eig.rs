//! Real eigendecomposition of a general (non-symmetric) square matrix:
//! Householder reduction to Hessenberg form followed by the Francis
//! double-shift QR iteration with eigenvector back-substitution, after the
//! EISPACK `orthes`/`hqr2` routines.

use crate::error::{Error, Result};
use crate::matrix::{norm, Matrix};
use crate::scalar::Scalar;

const MAX_ITER_PER_ROOT: usize = 200;

#[derive(Clone, Debug)]
pub struct EigFactors<T> {
    /// Real parts, sorted descending.
    pub eigenvalues: Vec<T>,
    /// Unit-norm columns paired with `eigenvalues`.
    pub eigenvectors: Matrix<T>,
    /// Largest absolute imaginary part over the whole spectrum.
    pub max_imag_residual: T,
}

/// Eigendecomposition of `s` for matrices whose spectrum is (nearly) real.
///
/// Any eigenvalue with imaginary part above `tol_imag` is a spectrum error.
/// A conjugate pair within tolerance is reported as a repeated real
/// eigenvalue whose two columns are the real and imaginary parts of the
/// complex eigenvector, which span the pair's real invariant subspace.
pub fn eig_real<T: Scalar>(s: &Matrix<T>, tol_imag: T) -> Result<EigFactors<T>> {
    if !s.is_square() {
        return Err(Error::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    if !s.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = s.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".to_owned()));
    }

    let mut h: Vec<Vec<T>> = (0..n).map(|i| s.row(i).to_vec()).collect();
    let mut v = vec![vec![T::zero(); n]; n];
    orthes(&mut h, &mut v);
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    hqr2(&mut h, &mut v, &mut d, &mut e)?;

    let max_imag = e.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if max_imag > tol_imag {
        return Err(Error::Spectrum {
            residual: max_imag.to_f64_lossy(),
            tolerance: tol_imag.to_f64_lossy(),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap().then(i.cmp(&j)));

    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col: Vec<T> = (0..n).map(|i| v[i][src]).collect();
        let len = norm(&col);
        if len > T::zero() {
            col.iter_mut().for_each(|x| *x /= len);
        }
        let mut best = 0;
        for i in 1..n {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < T::zero() {
            col.iter_mut().for_each(|x| *x = -*x);
        }
        vectors.set_column(dst, &col);
    }

    Ok(EigFactors {
        eigenvalues: order.iter().map(|&i| d[i]).collect(),
        eigenvectors: vectors,
        max_imag_residual: max_imag,
    })
}

fn orthes<T: Scalar>(h: &mut [Vec<T>], v: &mut [Vec<T>]) {
    let n = h.len();
    let high = n - 1;
    let mut ort = vec![T::zero(); n];

    for m in 1..high {
        let mut scale = T::zero();
        for row in h.iter().take(high + 1).skip(m) {
            scale += row[m - 1].abs();
        }
        if scale == T::zero() {
            continue;
        }
        let mut hh = T::zero();
        for i in (m..=high).rev() {
            ort[i] = h[i][m - 1] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > T::zero() {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        for j in m..n {
            let mut f = T::zero();
            for i in (m..=high).rev() {
                f += ort[i] * h[i][j];
            }
            f /= hh;
            for i in m..=high {
                h[i][j] -= f * ort[i];
            }
        }
        for row in h.iter_mut().take(high + 1) {
            let mut f = T::zero();
            for j in (m..=high).rev() {
                f += ort[j] * row[j];
            }
            f /= hh;
            for j in m..=high {
                row[j] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[m][m - 1] = scale * g;
    }

    for (i, row) in v.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = if i == j { T::one() } else { T::zero() };
        }
    }

    for m in (1..high).rev() {
        if h[m][m - 1] == T::zero() {
            continue;
        }
        for i in m + 1..=high {
            ort[i] = h[i][m - 1];
        }
        for j in m..=high {
            let mut g = T::zero();
            for i in m..=high {
                g += ort[i] * v[i][j];
            }
            g = (g / ort[m]) / h[m][m - 1];
            for i in m..=high {
                v[i][j] += g * ort[i];
            }
        }
    }
}

fn cdiv<T: Scalar>(xr: T, xi: T, yr: T, yi: T) -> (T, T) {
    if yr.abs() > yi.abs() {
        let r = yi / yr;
        let d = yr + r * yi;
        ((xr + r * xi) / d, (xi - r * xr) / d)
    } else {
        let r = yr / yi;
        let d = yi + r * yr;
        ((r * xr + xi) / d, (r * xi - xr) / d)
    }
}

#[allow(clippy::many_single_char_names, clippy::needless_range_loop)]
fn hqr2<T: Scalar>(
    h: &mut [Vec<T>],
    v: &mut [Vec<T>],
    d: &mut [T],
    e: &mut [T],
) -> Result<()> {
    let nn = h.len();
    let zero = T::zero();
    let two = T::lit(2.0);
    let eps = T::epsilon();
    let mut exshift = zero;
    let (mut p, mut q, mut r, mut s, mut z) = (zero, zero, zero, zero, zero);
    let (mut w, mut x, mut y);

    let mut norm = zero;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[i][j].abs();
        }
    }

    // `n` and the scan indices go negative in the reference formulation.
    let mut n: isize = nn as isize - 1;
    let mut iter = 0usize;
    while n >= 0 {
        let nu = n as usize;
        let mut l = n;
        while l > 0 {
            let lu = l as usize;
            s = h[lu - 1][lu - 1].abs() + h[lu][lu].abs();
            if s == zero {
                s = norm;
            }
            if h[lu][lu - 1].abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            // one root
            h[nu][nu] += exshift;
            d[nu] = h[nu][nu];
            e[nu] = zero;
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            // two roots
            w = h[nu][nu - 1] * h[nu - 1][nu];
            p = (h[nu - 1][nu - 1] - h[nu][nu]) / two;
            q = p * p + w;
            z = q.abs().sqrt();
            h[nu][nu] += exshift;
            h[nu - 1][nu - 1] += exshift;
            x = h[nu][nu];

            if q >= zero {
                z = if p >= zero { p + z } else { p - z };
                d[nu - 1] = x + z;
                d[nu] = d[nu - 1];
                if z != zero {
                    d[nu] = x - w / z;
                }
                e[nu - 1] = zero;
                e[nu] = zero;
                x = h[nu][nu - 1];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;

                for j in nu - 1..nn {
                    z = h[nu - 1][j];
                    h[nu - 1][j] = q * z + p * h[nu][j];
                    h[nu][j] = q * h[nu][j] - p * z;
                }
                for i in 0..=nu {
                    z = h[i][nu - 1];
                    h[i][nu - 1] = q * z + p * h[i][nu];
                    h[i][nu] = q * h[i][nu] - p * z;
                }
                for row in v.iter_mut() {
                    z = row[nu - 1];
                    row[nu - 1] = q * z + p * row[nu];
                    row[nu] = q * row[nu] - p * z;
                }
            } else {
                d[nu - 1] = x + p;
                d[nu] = x + p;
                e[nu - 1] = z;
                e[nu] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = h[nu][nu];
            y = zero;
            w = zero;
            if l < n {
                y = h[nu - 1][nu - 1];
                w = h[nu][nu - 1] * h[nu - 1][nu];
            }

            // exceptional shifts
            if iter == 10 {
                exshift += x;
                for i in 0..=nu {
                    h[i][i] -= x;
                }
                s = h[nu][nu - 1].abs() + h[nu - 1][nu - 2].abs();
                x = T::lit(0.75) * s;
                y = x;
                w = T::lit(-0.4375) * s * s;
            }
            if iter == 30 {
                s = (y - x) / two;
                s = s * s + w;
                if s > zero {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / two + s);
                    for i in 0..=nu {
                        h[i][i] -= s;
                    }
                    exshift += s;
                    x = T::lit(0.964);
                    y = x;
                    w = x;
                }
            }

            iter += 1;
            if iter > MAX_ITER_PER_ROOT {
                return Err(Error::Factorization {
                    what: "hessenberg qr",
                    iterations: iter,
                });
            }

            // look for two consecutive small sub-diagonal elements
            let mut m = n - 2;
            while m >= l {
                let mu = m as usize;
                z = h[mu][mu];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[mu + 1][mu] + h[mu][mu + 1];
                q = h[mu + 1][mu + 1] - z - r - s;
                r = h[mu + 2][mu + 1];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[mu][mu - 1].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[mu - 1][mu - 1].abs() + z.abs() + h[mu + 1][mu + 1].abs()))
                {
                    break;
                }
                m -= 1;
            }
            let mu = m as usize;

            for i in mu + 2..=nu {
                h[i][i - 2] = zero;
                if i > mu + 2 {
                    h[i][i - 3] = zero;
                }
            }

            // double QR step on rows l..=n, columns m..=n
            for k in mu..nu {
                let notlast = k != nu - 1;
                if k != mu {
                    p = h[k][k - 1];
                    q = h[k + 1][k - 1];
                    r = if notlast { h[k + 2][k - 1] } else { zero };
                    x = p.abs() + q.abs() + r.abs();
                    if x == zero {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < zero {
                    s = -s;
                }
                if s != zero {
                    if k != mu {
                        h[k][k - 1] = -s * x;
                    } else if l != m {
                        h[k][k - 1] = -h[k][k - 1];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        p = h[k][j] + q * h[k + 1][j];
                        if notlast {
                            p += r * h[k + 2][j];
                            h[k + 2][j] -= p * z;
                        }
                        h[k][j] -= p * x;
                        h[k + 1][j] -= p * y;
                    }
                    for i in 0..=nu.min(k + 3) {
                        p = x * h[i][k] + y * h[i][k + 1];
                        if notlast {
                            p += z * h[i][k + 2];
                            h[i][k + 2] -= p * r;
                        }
                        h[i][k] -= p;
                        h[i][k + 1] -= p * q;
                    }
                    for row in v.iter_mut() {
                        p = x * row[k] + y * row[k + 1];
                        if notlast {
                            p += z * row[k + 2];
                            row[k + 2] -= p * r;
                        }
                        row[k] -= p;
                        row[k + 1] -= p * q;
                    }
                }
            }
        }
    }

    if norm == zero {
        return Ok(());
    }

    // back-substitute to find the vectors of the upper-triangular form
    for n in (0..nn).rev() {
        p = d[n];
        q = e[n];
        if q == zero {
            let mut l = n;
            h[n][n] = T::one();
            for i in (0..n).rev() {
                w = h[i][i] - p;
                r = zero;
                for j in l..=n {
                    r += h[i][j] * h[j][n];
                }
                if e[i] < zero {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[i] == zero {
                        h[i][n] = if w != zero { -r / w } else { -r / (eps * norm) };
                    } else {
                        x = h[i][i + 1];
                        y = h[i + 1][i];
                        q = (d[i] - p) * (d[i] - p) + e[i] * e[i];
                        let t = (x * s - z * r) / q;
                        h[i][n] = t;
                        h[i + 1][n] = if x.abs() > z.abs() {
                            (-r - w * t) / x
                        } else {
                            (-s - y * t) / z
                        };
                    }
                    let t = h[i][n].abs();
                    if (eps * t) * t > T::one() {
                        for row in h.iter_mut().take(n + 1).skip(i) {
                            row[n] /= t;
                        }
                    }
                }
            }
        } else if q < zero {
            let mut l = n - 1;
            if h[n][n - 1].abs() > h[n - 1][n].abs() {
                h[n - 1][n - 1] = q / h[n][n - 1];
                h[n - 1][n] = -(h[n][n] - p) / h[n][n - 1];
            } else {
                let (cr, ci) = cdiv(zero, -h[n - 1][n], h[n - 1][n - 1] - p, q);
                h[n - 1][n - 1] = cr;
                h[n - 1][n] = ci;
            }
            h[n][n - 1] = zero;
            h[n][n] = T::one();
            for i in (0..n.saturating_sub(1)).rev() {
                let mut ra = zero;
                let mut sa = zero;
                for j in l..=n {
                    ra += h[i][j] * h[j][n - 1];
                    sa += h[i][j] * h[j][n];
                }
                w = h[i][i] - p;
                if e[i] < zero {
                    z = w;
                    r = ra;
                    s = sa;
                } else {
                    l = i;
                    if e[i] == zero {
                        let (cr, ci) = cdiv(-ra, -sa, w, q);
                        h[i][n - 1] = cr;
                        h[i][n] = ci;
                    } else {
                        x = h[i][i + 1];
                        y = h[i + 1][i];
                        let mut vr = (d[i] - p) * (d[i] - p) + e[i] * e[i] - q * q;
                        let vi = (d[i] - p) * two * q;
                        if vr == zero && vi == zero {
                            vr = eps * norm * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                        }
                        let (cr, ci) =
                            cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                        h[i][n - 1] = cr;
                        h[i][n] = ci;
                        if x.abs() > z.abs() + q.abs() {
                            h[i + 1][n - 1] = (-ra - w * h[i][n - 1] + q * h[i][n]) / x;
                            h[i + 1][n] = (-sa - w * h[i][n] - q * h[i][n - 1]) / x;
                        } else {
                            let (cr, ci) =
                                cdiv(-r - y * h[i][n - 1], -s - y * h[i][n], z, q);
                            h[i + 1][n - 1] = cr;
                            h[i + 1][n] = ci;
                        }
                    }
                    let t = h[i][n - 1].abs().max(h[i][n].abs());
                    if (eps * t) * t > T::one() {
                        for row in h.iter_mut().take(n + 1).skip(i) {
                            row[n - 1] /= t;
                            row[n] /= t;
                        }
                    }
                }
            }
        }
    }

    // back-transform to eigenvectors of the original matrix
    for j in (0..nn).rev() {
        for i in 0..nn {
            let mut acc = zero;
            for k in 0..=j {
                acc += v[i][k] * h[k][j];
            }
            v[i][j] = acc;
        }
    }
    Ok(())
}
