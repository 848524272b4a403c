//! Rank-collapse metrics: stable rank and cumulative energy rank.

use rayon::prelude::*;
use serde::Serialize;

use crate::checkpoint::TaskVector;
use crate::error::{Error, Result};
use crate::linalg::singular_values;
use crate::scalar::Scalar;

pub const DEFAULT_ENERGY_FRACTION: f64 = 0.95;

fn total_energy<T: Scalar>(sigma: &[T]) -> Result<(T, T)> {
    let energy: T = sigma.iter().map(|&s| s * s).sum();
    let max = sigma.iter().fold(T::zero(), |m, &s| m.max(s.abs()));
    if !(max > T::zero()) {
        return Err(Error::DegenerateSpectrum);
    }
    Ok((energy, max))
}

/// `Σσ² / max σ²`.
pub fn stable_rank<T: Scalar>(sigma: &[T]) -> Result<T> {
    let (energy, max) = total_energy(sigma)?;
    Ok(energy / (max * max))
}

/// Smallest `r` with `Σ_{i≤r} σ_i² ≥ fraction · Σ σ_i²`.
pub fn cumulative_energy_rank<T: Scalar>(sigma: &[T], fraction: T) -> Result<usize> {
    if !(fraction > T::zero() && fraction <= T::one()) {
        return Err(Error::InvalidArgument(format!(
            "energy fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let (energy, _) = total_energy(sigma)?;
    let target = fraction * energy;
    let mut acc = T::zero();
    for (i, &s) in sigma.iter().enumerate() {
        acc += s * s;
        if acc >= target {
            return Ok(i + 1);
        }
    }
    // rounding can leave the running sum a hair below the total
    Ok(sigma.len())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankRow {
    pub tensor: String,
    pub layer: usize,
    /// `None` for an all-zero component.
    pub stable_rank: Option<f64>,
    pub cer: Option<usize>,
    pub fraction: f64,
    pub singular_values: Vec<f64>,
}

impl RankRow {
    pub fn is_degenerate(&self) -> bool {
        self.stable_rank.is_none()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RankReport {
    pub rows: Vec<RankRow>,
}

impl RankReport {
    /// Mean stable rank over non-degenerate rows.
    pub fn mean_stable_rank(&self) -> Option<f64> {
        let vals: Vec<f64> = self.rows.iter().filter_map(|r| r.stable_rank).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// `tensor,layer,stable_rank,cer,fraction`, degenerate rows with empty
    /// metric fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tensor,layer,stable_rank,cer,fraction\n");
        for r in &self.rows {
            let sr = r.stable_rank.map(|v| v.to_string()).unwrap_or_default();
            let cer = r.cer.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&r.tensor),
                r.layer,
                sr,
                cer,
                r.fraction
            ));
        }
        out
    }

    /// `tensor,index,sigma`, one line per singular value.
    pub fn spectra_csv(&self) -> String {
        let mut out = String::from("tensor,index,sigma\n");
        for r in &self.rows {
            for (i, s) in r.singular_values.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", csv_field(&r.tensor), i, s));
            }
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// One row per mergeable-2d tensor of `tv`, in manifest order.
pub fn rank_report(tv: &TaskVector, fraction: f64) -> Result<RankReport> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "energy fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let layers = tv.layer_indices();
    let tensors: Vec<_> = tv.mergeable().collect();
    if tensors.is_empty() {
        return Err(Error::InvalidArgument(
            "task vector has no mergeable-2d tensors".to_owned(),
        ));
    }
    let rows = tensors
        .par_iter()
        .map(|t| {
            let sigma = singular_values(&t.as_matrix()).map_err(|e| e.in_tensor(t.name()))?;
            let (stable_rank, cer) = match stable_rank(&sigma) {
                Ok(sr) => (Some(sr), Some(cumulative_energy_rank(&sigma, fraction)?)),
                Err(Error::DegenerateSpectrum) => (None, None),
                Err(e) => return Err(e),
            };
            Ok(RankRow {
                tensor: t.name().to_owned(),
                layer: layers[t.name()],
                stable_rank,
                cer,
                fraction,
                singular_values: sigma,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RankReport { rows })
}
