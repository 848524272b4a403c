use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use super::{hogsvd_decompose, HogsvdConfig};
use crate::boost::boost_spectrum;
use crate::checkpoint::TaskVector;
use crate::error::{Error, Result};
use crate::linalg::{generalized_procrustes, polar_orthonormalize};
use crate::matrix::{reconstruct, Matrix};
use crate::merge::merge_ta;

#[derive(Clone, Debug, Serialize)]
pub struct HogsvdComponentReport {
    pub tensor: String,
    /// `‖Ū − U_ortho‖_F / ‖Ū‖_F` with `Ū` the mean of the per-task `U_i`.
    pub u_residual: f64,
    /// `‖V − V_ortho‖_F / ‖V‖_F`.
    pub v_residual: f64,
    pub clamp_index: Option<usize>,
    /// All inputs were zero; the component was merged to zero.
    pub degenerate: bool,
}

#[derive(Clone, Debug)]
pub struct HogsvdMerge {
    pub delta: TaskVector,
    pub components: Vec<HogsvdComponentReport>,
}

fn merge_component(
    name: &str,
    mats: &[Matrix<f64>],
    config: &HogsvdConfig,
    beta: f64,
) -> Result<(Matrix<f64>, HogsvdComponentReport)> {
    let (rows, cols) = mats[0].shape();
    if mats.iter().all(|m| m.max_abs() == 0.0) {
        warn!("{name}: all task vectors are zero, merged component left at zero");
        let report = HogsvdComponentReport {
            tensor: name.to_owned(),
            u_residual: 0.0,
            v_residual: 0.0,
            clamp_index: None,
            degenerate: true,
        };
        return Ok((Matrix::zeros(rows, cols), report));
    }

    let f = hogsvd_decompose(mats, config)?;
    let u_ortho = generalized_procrustes(&f.u_list)?.q;
    let v_ortho = polar_orthonormalize(&f.v)?.q;

    let n = f.dim();
    let mut u_mean = Matrix::zeros(rows, n);
    for u in &f.u_list {
        u_mean = u_mean.add(u);
    }
    let u_mean = u_mean.scale(1.0 / f.task_count() as f64);

    let sigma_sum: Vec<f64> = (0..n)
        .map(|k| config.pre_scale * f.sigma_list.iter().map(|s| s[k]).sum::<f64>())
        .collect();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by(|&a, &b| sigma_sum[b].total_cmp(&sigma_sum[a]));
    let sorted: Vec<f64> = perm.iter().map(|&k| sigma_sum[k]).collect();

    let (matrix, clamp_index) = match boost_spectrum(&sorted, beta) {
        Ok(boosted) => {
            let u = u_ortho.permute_columns(&perm);
            let v = v_ortho.permute_columns(&perm);
            let c = crate::boost::clamp_index(&sorted, beta)?;
            (reconstruct(&u, &boosted, &v.transpose()), Some(c))
        }
        Err(Error::DegenerateSpectrum) => {
            warn!("{name}: summed generalized spectrum is zero");
            (Matrix::zeros(rows, cols), None)
        }
        Err(e) => return Err(e),
    };
    let report = HogsvdComponentReport {
        tensor: name.to_owned(),
        u_residual: u_ortho.relative_error(&u_mean),
        v_residual: v_ortho.relative_error(&f.v),
        clamp_index,
        degenerate: false,
    };
    Ok((matrix, report))
}

/// Merges task vectors through a shared HO-GSVD basis per component.
///
/// Each mergeable component is decomposed jointly across tasks, the left
/// factors are reduced to one orthonormal consensus, the shared right factor
/// is orthonormalized, and the summed generalized spectrum is boosted before
/// reconstruction. Passthrough tensors are summed.
pub fn hogsvd_boost_merge(
    deltas: &[TaskVector],
    config: &HogsvdConfig,
    beta: f64,
) -> Result<HogsvdMerge> {
    config.validate()?;
    let mut out = merge_ta(deltas)?;
    let names: Vec<String> = deltas[0].mergeable().map(|t| t.name().to_owned()).collect();
    let merged = names
        .par_iter()
        .map(|name| {
            let mats: Vec<Matrix<f64>> = deltas
                .iter()
                .map(|d| d.get(name).unwrap().as_matrix())
                .collect();
            merge_component(name, &mats, config, beta).map_err(|e| e.in_tensor(name))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut components = Vec::with_capacity(merged.len());
    for (name, (matrix, report)) in names.iter().zip(merged) {
        out.set_data(name, matrix.into_vec())?;
        components.push(report);
    }
    Ok(HogsvdMerge {
        delta: out,
        components,
    })
}
