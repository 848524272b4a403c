//! Subspace Boosting: flatten the tail of each component's singular-value
//! spectrum to the value at the β-threshold index, then rebuild the matrix.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{TaskVector, Tensor};
use crate::error::{Error, Result};
use crate::linalg::svd_thin;
use crate::matrix::{reconstruct, Matrix};
use crate::scalar::Scalar;

/// β values searched by default.
pub const BETA_GRID: [f64; 3] = [0.0, 0.01, 0.02];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub beta: f64,
    /// β for tensors whose name matches one of `attn_patterns`.
    pub attn_beta: Option<f64>,
    /// β for tensors whose name matches one of `fc_patterns`.
    pub fc_beta: Option<f64>,
    pub attn_patterns: Vec<String>,
    pub fc_patterns: Vec<String>,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            beta: 0.0,
            attn_beta: None,
            fc_beta: None,
            attn_patterns: vec!["attn".to_owned(), "attention".to_owned()],
            fc_patterns: vec!["mlp".to_owned(), "fc".to_owned()],
        }
    }
}

impl BoostConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self {
            beta,
            ..Self::default()
        }
    }

    /// β used for `tensor`: attention patterns are checked before FC ones.
    pub fn beta_for(&self, tensor: &str) -> f64 {
        let matches = |pats: &[String]| pats.iter().any(|p| tensor.contains(p.as_str()));
        match (self.attn_beta, self.fc_beta) {
            (Some(b), _) if matches(&self.attn_patterns) => b,
            (_, Some(b)) if matches(&self.fc_patterns) => b,
            _ => self.beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for b in [Some(self.beta), self.attn_beta, self.fc_beta].into_iter().flatten() {
            check_beta(b)?;
        }
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("beta must lie in [0, 1), got {beta}")))
    }
}

/// Last index `j` whose normalized cumulative sum `Σ_{i≤j} σ_i / Σ σ` is
/// below `beta`; index 0 when there is none (always the case for β = 0).
pub fn clamp_index<T: Scalar>(sigma: &[T], beta: T) -> Result<usize> {
    if !(beta >= T::zero() && beta < T::one()) {
        return Err(Error::InvalidArgument(format!("beta must lie in [0, 1), got {beta}")));
    }
    if sigma.iter().any(|&s| !(s >= T::zero())) {
        return Err(Error::InvalidArgument("singular values must be nonnegative".to_owned()));
    }
    if sigma.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidArgument("singular values must be descending".to_owned()));
    }
    let total: T = sigma.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::DegenerateSpectrum);
    }
    let mut cumulative = T::zero();
    let mut index = 0;
    for (j, &s) in sigma.iter().enumerate() {
        cumulative += s;
        if cumulative / total < beta {
            index = j;
        }
    }
    Ok(index)
}

/// Boosted spectrum: `σ*[j] = σ[j]` up to the clamp index and `σ[clamp]`
/// after it.
pub fn boost_spectrum<T: Scalar>(sigma: &[T], beta: T) -> Result<Vec<T>> {
    let c = clamp_index(sigma, beta)?;
    Ok(sigma
        .iter()
        .enumerate()
        .map(|(j, &s)| if j <= c { s } else { sigma[c] })
        .collect())
}

#[derive(Clone, Debug)]
pub struct BoostedComponent<T> {
    pub matrix: Matrix<T>,
    /// `None` when the input was all zeros and was returned unchanged.
    pub clamp_index: Option<usize>,
}

/// SVD, boost the spectrum, and rebuild `U·diag(σ*)·Vᵀ`.
pub fn boost_component<T: Scalar>(delta: &Matrix<T>, beta: T) -> Result<BoostedComponent<T>> {
    let f = svd_thin(delta)?;
    match clamp_index(&f.singular_values, beta) {
        Ok(c) => {
            let boosted = boost_spectrum(&f.singular_values, beta)?;
            Ok(BoostedComponent {
                matrix: reconstruct(&f.u, &boosted, &f.vt),
                clamp_index: Some(c),
            })
        }
        Err(Error::DegenerateSpectrum) => {
            warn!("all-zero component left unboosted");
            Ok(BoostedComponent {
                matrix: delta.clone(),
                clamp_index: None,
            })
        }
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentBoost {
    pub tensor: String,
    pub beta: f64,
    pub clamp_index: Option<usize>,
}

/// Boosts every mergeable-2d tensor; passthrough tensors are copied.
pub fn boost_task_vector(delta: &TaskVector, config: &BoostConfig) -> Result<TaskVector> {
    boost_task_vector_with_report(delta, config).map(|(tv, _)| tv)
}

/// [`boost_task_vector`] plus the per-component clamp indices, in manifest order.
pub fn boost_task_vector_with_report(
    delta: &TaskVector,
    config: &BoostConfig,
) -> Result<(TaskVector, Vec<ComponentBoost>)> {
    config.validate()?;
    let tensors: Vec<&Tensor> = delta.iter().collect();
    let boosted = tensors
        .par_iter()
        .map(|t| {
            if !t.is_mergeable() {
                return Ok((t.data.clone(), None));
            }
            let beta = config.beta_for(t.name());
            let out = boost_component(&t.as_matrix(), beta).map_err(|e| e.in_tensor(t.name()))?;
            let report = ComponentBoost {
                tensor: t.name().to_owned(),
                beta,
                clamp_index: out.clamp_index,
            };
            Ok((out.matrix.into_vec(), Some(report)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::new();
    let mut data = boosted.into_iter();
    let out = delta.try_map(|_| {
        let (d, r) = data.next().unwrap();
        reports.extend(r);
        Ok(d)
    })?;
    Ok((TaskVector(out), reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::stable_rank;

    #[test]
    fn hand_traced_spectra() {
        let s = [8.0, 4.0, 2.0, 1.0, 1.0];
        // normalized cumulative sums .5 .75 .875 .9375 1
        assert_eq!(clamp_index(&s, 0.8).unwrap(), 1);
        assert_eq!(boost_spectrum(&s, 0.8).unwrap(), vec![8.0, 4.0, 4.0, 4.0, 4.0]);
        assert_eq!(boost_spectrum(&s, 0.0).unwrap(), vec![8.0; 5]);
        assert_eq!(boost_spectrum(&[3.0; 4], 0.5).unwrap(), vec![3.0; 4]);
    }

    #[test]
    fn spectrum_errors() {
        assert!(matches!(boost_spectrum(&[0.0, 0.0], 0.1), Err(Error::DegenerateSpectrum)));
        assert!(boost_spectrum(&[1.0, 2.0], 0.1).is_err());
        assert!(boost_spectrum(&[1.0], 1.0).is_err());
        assert!(boost_spectrum(&[1.0], -0.1).is_err());
    }

    #[test]
    fn rank_one_becomes_full_rank() {
        let u = [1.0_f64, 2.0, -1.0];
        let v = [0.5_f64, 0.0, 1.0, 2.0];
        let m = Matrix::from_fn(3, 4, |i, j| u[i] * v[j]);
        let out = boost_component(&m, 0.0).unwrap();
        let sigma = crate::linalg::singular_values(&out.matrix).unwrap();
        assert!((stable_rank(&sigma).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_is_unchanged() {
        let q = Matrix::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]);
        for beta in [0.0, 0.3, 0.9] {
            let out = boost_component(&q, beta).unwrap();
            assert!(out.matrix.max_abs_diff(&q) < 1e-12);
        }
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let z = Matrix::<f64>::zeros(3, 2);
        let out = boost_component(&z, 0.0).unwrap();
        assert_eq!(out.clamp_index, None);
        assert_eq!(out.matrix, z);
    }

    #[test]
    fn overrides_pick_by_name() {
        let c = BoostConfig {
            beta: 0.02,
            attn_beta: Some(0.0),
            fc_beta: Some(0.01),
            ..BoostConfig::default()
        };
        assert_eq!(c.beta_for("blocks.3.attn.out_proj"), 0.0);
        assert_eq!(c.beta_for("blocks.3.mlp.c_fc"), 0.01);
        assert_eq!(c.beta_for("proj"), 0.02);
        assert_eq!(BoostConfig::with_beta(0.01).beta_for("attn"), 0.01);
    }
}
