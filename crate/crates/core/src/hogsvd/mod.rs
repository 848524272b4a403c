//! Regularized Higher-Order Generalized SVD.
//!
//! Given `A_1 … A_N` sharing a column count `n`, finds one shared right basis
//! `V` and per-matrix `U_i`, `σ_i` with `A_i = U_i · diag(σ_i) · Vᵀ`. `V`
//! diagonalizes the mean pairwise quotient
//! `S_π = 1/(N(N−1)) Σ_{i<j} (D_i D_j⁻¹ + D_j D_i⁻¹)`, with
//! `D_i = A_iᵀA_i + π·AᵀA` and `A` the row-stack of all inputs.

mod align;
mod merge;
mod select;

pub use align::{alignment_matrix, AlignmentMatrix};
pub use merge::{hogsvd_boost_merge, HogsvdComponentReport, HogsvdMerge};
pub use select::{select_experts, select_experts_exhaustive};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::TaskVector;
use crate::diagnostics::csv_field;
use crate::error::{Error, Result};
use crate::linalg::{condition_number, eig_real, Cholesky, Lu};
use crate::matrix::{norm, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HogsvdConfig {
    /// Regularization weight on `AᵀA`.
    pub pi: f64,
    /// Added to generalized singular values inside log-ratios.
    pub eps: f64,
    /// Largest tolerated imaginary part in the spectrum of `S_π`.
    pub tol_imag: f64,
    /// Log-ratio bound for "common" dimensions; ratio bound for "unique" ones.
    pub common_tolerance: f64,
    /// Largest tolerated condition number of `V`.
    pub max_condition: f64,
    /// Factor applied to the summed spectrum before boosting in the merge.
    pub pre_scale: f64,
}

impl Default for HogsvdConfig {
    fn default() -> Self {
        Self {
            pi: 1e-2,
            eps: 1e-12,
            tol_imag: 1e-6,
            common_tolerance: 0.1,
            max_condition: 1e12,
            pre_scale: 1.0,
        }
    }
}

impl HogsvdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_owned()));
        if !(self.pi >= 0.0 && self.pi.is_finite()) {
            return bad("pi must be a finite value ≥ 0");
        }
        if !(self.eps >= 0.0) {
            return bad("eps must be ≥ 0");
        }
        if !(self.tol_imag >= 0.0) {
            return bad("tol_imag must be ≥ 0");
        }
        if !(self.common_tolerance > 0.0) {
            return bad("common_tolerance must be > 0");
        }
        if !(self.pre_scale > 0.0 && self.pre_scale.is_finite()) {
            return bad("pre_scale must be a finite value > 0");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct HogsvdFactors<T> {
    /// `m_i × n` each.
    pub u_list: Vec<Matrix<T>>,
    /// Length `n` each, nonnegative, indexed like the columns of `v`.
    pub sigma_list: Vec<Vec<T>>,
    /// Shared `n × n` right factor with unit columns.
    pub v: Matrix<T>,
    /// Spectrum of `S_π`, descending.
    pub eigenvalues: Vec<T>,
}

impl<T: Scalar> HogsvdFactors<T> {
    pub fn task_count(&self) -> usize {
        self.u_list.len()
    }

    pub fn dim(&self) -> usize {
        self.v.cols()
    }

    /// `U_i · diag(σ_i) · Vᵀ`.
    pub fn reconstruct(&self, i: usize) -> Matrix<T> {
        crate::matrix::reconstruct(&self.u_list[i], &self.sigma_list[i], &self.v.transpose())
    }
}

fn check_inputs<T: Scalar>(a_list: &[Matrix<T>]) -> Result<usize> {
    if a_list.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "HO-GSVD needs at least 2 matrices, got {}",
            a_list.len()
        )));
    }
    let n = a_list[0].cols();
    if n == 0 {
        return Err(Error::InvalidArgument("matrices have no columns".to_owned()));
    }
    if let Some(bad) = a_list.iter().find(|a| a.cols() != n) {
        return Err(Error::Shape(format!(
            "HO-GSVD inputs must share a column count: {n} vs {}",
            bad.cols()
        )));
    }
    if a_list.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(n)
}

/// `S_π` for the given matrices.
pub fn compute_s_pi<T: Scalar>(a_list: &[Matrix<T>], pi: T) -> Result<Matrix<T>> {
    let n = check_inputs(a_list)?;
    if !(pi >= T::zero()) {
        return Err(Error::InvalidArgument(format!("pi must be ≥ 0, got {pi}")));
    }
    let grams: Vec<Matrix<T>> = a_list.iter().map(Matrix::gram).collect();
    let mut stacked = Matrix::zeros(n, n);
    for g in &grams {
        stacked = stacked.add(g);
    }
    let reg = stacked.scale(pi);
    let d: Vec<Matrix<T>> = grams.iter().map(|g| g.add(&reg)).collect();
    let chol = d.iter().map(Cholesky::new).collect::<Result<Vec<_>>>()?;

    let count = a_list.len();
    let mut s = Matrix::zeros(n, n);
    for i in 0..count {
        for j in i + 1..count {
            // D_i D_j⁻¹ = (D_j⁻¹ D_i)ᵀ for symmetric D
            let ij = chol[j].solve(&d[i])?.transpose();
            let ji = chol[i].solve(&d[j])?.transpose();
            s = s.add(&ij).add(&ji);
        }
    }
    let norm = T::from_usize_lossy(count * (count - 1));
    Ok(s.scale(T::one() / norm))
}

/// Shared-basis decomposition of `a_list`.
pub fn hogsvd_decompose<T: Scalar>(
    a_list: &[Matrix<T>],
    config: &HogsvdConfig,
) -> Result<HogsvdFactors<T>> {
    config.validate()?;
    let s = compute_s_pi(a_list, T::lit(config.pi))?;
    let eig = eig_real(&s, T::lit(config.tol_imag))?;
    let v = eig.eigenvectors;
    let cond = condition_number(&v)?;
    if !(cond.to_f64_lossy() <= config.max_condition) {
        return Err(Error::IllConditioned(cond.to_f64_lossy()));
    }
    let lu = Lu::new(&v)?;
    let n = v.cols();

    let mut u_list = Vec::with_capacity(a_list.len());
    let mut sigma_list = Vec::with_capacity(a_list.len());
    for a in a_list {
        // B = A V⁻ᵀ, so Bᵀ = V⁻¹ Aᵀ
        let b = lu.solve(&a.transpose())?.transpose();
        let mut sigma = Vec::with_capacity(n);
        let mut u = Matrix::zeros(a.rows(), n);
        for k in 0..n {
            let col = b.column(k);
            let len = norm(&col);
            sigma.push(len);
            if len > T::zero() {
                let unit: Vec<T> = col.iter().map(|&x| x / len).collect();
                u.set_column(k, &unit);
            }
        }
        u_list.push(u);
        sigma_list.push(sigma);
    }
    Ok(HogsvdFactors {
        u_list,
        sigma_list,
        v,
        eigenvalues: eig.eigenvalues,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SubspaceClassification {
    /// Dimensions whose generalized singular values agree across all tasks.
    pub common: Vec<usize>,
    /// `unique[j]`: dimensions dominated by task `j`.
    pub unique: Vec<Vec<usize>>,
}

impl SubspaceClassification {
    pub fn unclassified(&self, dim: usize) -> Vec<usize> {
        (0..dim)
            .filter(|k| !self.common.contains(k) && !self.unique.iter().any(|u| u.contains(k)))
            .collect()
    }
}

/// Splits the shared dimensions into common, unique-to-one-task and
/// unclassified.
///
/// Dimension `k` is common when every pairwise `|log((σ_i+ε)/(σ_j+ε))| ≤ tau`.
/// Otherwise it is unique to the first task `j` with
/// `σ_i/(σ_j+ε) ≤ tau` for all `i ≠ j`.
pub fn classify_subspaces<T: Scalar>(
    factors: &HogsvdFactors<T>,
    tau: T,
    eps: T,
) -> SubspaceClassification {
    let tasks = factors.task_count();
    let mut out = SubspaceClassification {
        common: Vec::new(),
        unique: vec![Vec::new(); tasks],
    };
    for k in 0..factors.dim() {
        let col: Vec<T> = factors.sigma_list.iter().map(|s| s[k]).collect();
        let logs: Vec<T> = col.iter().map(|&s| (s + eps).ln()).collect();
        let hi = logs.iter().copied().fold(T::neg_infinity(), T::max);
        let lo = logs.iter().copied().fold(T::infinity(), T::min);
        if hi - lo <= tau {
            out.common.push(k);
            continue;
        }
        let owner = (0..tasks).find(|&j| {
            (0..tasks)
                .filter(|&i| i != j)
                .all(|i| col[i] / (col[j] + eps) <= tau)
        });
        if let Some(j) = owner {
            out.unique[j].push(k);
        }
    }
    out
}

/// HO-GSVD of every mergeable-2d component across `deltas`, in manifest order.
pub fn decompose_task_vectors(
    deltas: &[TaskVector],
    config: &HogsvdConfig,
) -> Result<Vec<(String, HogsvdFactors<f64>)>> {
    if deltas.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 task vectors".to_owned()));
    }
    for d in &deltas[1..] {
        deltas[0].check_congruent(d)?;
    }
    let names: Vec<String> = deltas[0].mergeable().map(|t| t.name().to_owned()).collect();
    names
        .par_iter()
        .map(|name| {
            let mats: Vec<Matrix<f64>> = deltas
                .iter()
                .map(|d| d.get(name).unwrap().as_matrix())
                .collect();
            hogsvd_decompose(&mats, config)
                .map(|f| (name.clone(), f))
                .map_err(|e| e.in_tensor(name))
        })
        .collect()
}

/// `component,task,index,gsv` rows for every component.
pub fn gsv_csv<T: Scalar>(components: &[(String, HogsvdFactors<T>)]) -> String {
    let mut out = String::from("component,task,index,gsv\n");
    for (name, f) in components {
        for (task, sigma) in f.sigma_list.iter().enumerate() {
            for (k, s) in sigma.iter().enumerate() {
                out.push_str(&format!("{},{task},{k},{}\n", csv_field(name), s.to_f64_lossy()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pair_gives_identity_quotient() {
        let s = compute_s_pi(&[Matrix::<f64>::identity(2), Matrix::identity(2)], 0.01).unwrap();
        assert!(s.max_abs_diff(&Matrix::identity(2)) < 1e-15);
    }

    #[test]
    fn disjoint_diagonals_inflate_the_spectrum() {
        let a1 = Matrix::from_diag(&[2.0_f64, 0.0]);
        let a2 = Matrix::from_diag(&[0.0, 2.0]);
        let s = compute_s_pi(&[a1, a2], 0.01).unwrap();
        // D₁ = diag(4.04, 0.04), D₂ = diag(0.04, 4.04): both entries (101 + 1/101)/2
        let expected = (101.0 + 1.0 / 101.0) / 2.0;
        assert!((s[(0, 0)] - expected).abs() < 1e-10);
        assert!((s[(1, 1)] - expected).abs() < 1e-10);
        assert_eq!(s[(0, 1)], 0.0);
        assert_eq!(s[(1, 0)], 0.0);
    }

    #[test]
    fn unregularized_rank_deficient_is_rejected() {
        let a1 = Matrix::from_diag(&[2.0, 0.0]);
        let a2 = Matrix::from_diag(&[1.0, 0.0]);
        assert!(matches!(
            compute_s_pi(&[a1, a2], 0.0),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn input_validation() {
        assert!(compute_s_pi(&[Matrix::<f64>::identity(2)], 0.01).is_err());
        assert!(matches!(
            compute_s_pi(&[Matrix::<f64>::identity(2), Matrix::identity(3)], 0.01),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn identities_decompose_to_unit_values() {
        let eye = Matrix::<f64>::identity(3);
        let f = hogsvd_decompose(&[eye.clone(), eye.clone(), eye.clone()], &HogsvdConfig::default())
            .unwrap();
        for (i, s) in f.sigma_list.iter().enumerate() {
            assert!(s.iter().all(|&x| (x - 1.0).abs() < 1e-14));
            assert!(f.reconstruct(i).max_abs_diff(&eye) < 1e-14);
        }
        assert!(f.eigenvalues.iter().all(|&l| (l - 1.0).abs() < 1e-14));
        let c = classify_subspaces(&f, 0.1, 1e-12);
        assert_eq!(c.common, vec![0, 1, 2]);
    }

    #[test]
    fn disjoint_diagonals_are_unique() {
        let f = hogsvd_decompose(
            &[Matrix::from_diag(&[1.0, 0.0]), Matrix::from_diag(&[0.0, 1.0])],
            &HogsvdConfig::default(),
        )
        .unwrap();
        let c = classify_subspaces(&f, 0.1, 1e-12);
        assert!(c.common.is_empty());
        assert_eq!(c.unique, vec![vec![0], vec![1]]);
        assert!(c.unclassified(2).is_empty());

        let all = classify_subspaces(&f, f64::INFINITY, 1e-12);
        assert_eq!(all.common, vec![0, 1]);
    }

    #[test]
    fn zero_sigma_columns_are_total() {
        let f = hogsvd_decompose(
            &[Matrix::from_diag(&[1.0, 0.0]), Matrix::from_diag(&[0.0, 1.0])],
            &HogsvdConfig::default(),
        )
        .unwrap();
        let zero_col = f.sigma_list[0].iter().position(|&s| s == 0.0).unwrap();
        assert!(f.u_list[0].column(zero_col).iter().all(|&x| x == 0.0));
    }
}
