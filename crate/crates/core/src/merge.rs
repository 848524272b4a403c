//! Baseline task-vector merges: Task Arithmetic, TIES and Consensus, plus the
//! depth-linear LiNeS scaler.
//!
//! Everything here works on the unscaled output; the merging coefficient is
//! applied later by [`apply_task_vector`](crate::checkpoint::apply_task_vector).

use std::cmp::Ordering;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{sum_task_vectors, TaskVector, TensorSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMethod {
    #[default]
    Ta,
    Ties,
    Consensus,
}

impl std::str::FromStr for MergeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ta" => Ok(Self::Ta),
            "ties" => Ok(Self::Ties),
            "consensus" => Ok(Self::Consensus),
            other => Err(Error::InvalidArgument(format!("unknown merge method `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeConfig {
    pub method: MergeMethod,
    pub alpha: f64,
    pub ties_trim_fraction: f64,
    pub consensus_min_tasks: usize,
    pub lines_enabled: bool,
    pub lines_start: f64,
    pub lines_end: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            method: MergeMethod::Ta,
            alpha: 1.0,
            ties_trim_fraction: 0.2,
            consensus_min_tasks: 2,
            lines_enabled: false,
            lines_start: 0.5,
            lines_end: 1.0,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() {
            return Err(Error::InvalidArgument("alpha must be finite".to_owned()));
        }
        check_trim_fraction(self.ties_trim_fraction)?;
        if self.consensus_min_tasks == 0 {
            return Err(Error::InvalidArgument("consensus_min_tasks must be ≥ 1".to_owned()));
        }
        if self.lines_enabled && !(0.0 <= self.lines_start && self.lines_start <= self.lines_end) {
            return Err(Error::InvalidArgument(
                "LiNeS endpoints need 0 ≤ start ≤ end".to_owned(),
            ));
        }
        Ok(())
    }

    /// Runs the configured merge (without LiNeS or α).
    pub fn merge(&self, deltas: &[TaskVector]) -> Result<TaskVector> {
        self.validate()?;
        match self.method {
            MergeMethod::Ta => merge_ta(deltas),
            MergeMethod::Ties => merge_ties(deltas, self.ties_trim_fraction),
            MergeMethod::Consensus => {
                merge_consensus(deltas, self.consensus_min_tasks, self.ties_trim_fraction)
            }
        }
    }
}

/// α values `0.1, 0.2, …, 1.0`.
pub fn alpha_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

fn check_trim_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "trim fraction must lie in (0, 1], got {f}"
        )))
    }
}

fn check_pool(deltas: &[TaskVector]) -> Result<()> {
    if deltas.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "merging needs at least 2 task vectors, got {}",
            deltas.len()
        )));
    }
    for d in &deltas[1..] {
        deltas[0].check_congruent(d)?;
    }
    Ok(())
}

/// Unscaled sum `Δ_m = Σ Δ_i`.
pub fn merge_ta(deltas: &[TaskVector]) -> Result<TaskVector> {
    check_pool(deltas)?;
    sum_task_vectors(deltas)
}

/// `⌈fraction·n⌉`, ignoring representation error in the product
/// (`0.7·10` must give 7, not 8).
pub fn ceil_count(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (k as usize).min(n)
}

/// Keep mask of the top `⌈fraction·n⌉` entries by magnitude over all
/// mergeable-2d tensors of `tv`. Ties break by manifest order, then by index.
fn top_magnitude_mask(tv: &TensorSet, fraction: f64) -> IndexMap<String, Vec<bool>> {
    let mut entries: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, t) in tv.iter().enumerate().filter(|(_, t)| t.is_mergeable()) {
        entries.extend(t.data.iter().enumerate().map(|(i, v)| (v.abs(), ti, i)));
    }
    let keep = ceil_count(fraction, entries.len());
    entries.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut mask: IndexMap<String, Vec<bool>> = tv
        .mergeable()
        .map(|t| (t.name().to_owned(), vec![false; t.data.len()]))
        .collect();
    let names: Vec<String> = tv.names().map(str::to_owned).collect();
    for &(_, ti, i) in &entries[..keep] {
        mask.get_mut(&names[ti]).unwrap()[i] = true;
    }
    mask
}

/// TIES trim step: zero everything outside the global top-`fraction`
/// magnitudes of the mergeable tensors. Passthrough tensors are untouched.
pub fn ties_trim(tv: &TaskVector, fraction: f64) -> Result<TaskVector> {
    check_trim_fraction(fraction)?;
    let mask = top_magnitude_mask(tv, fraction);
    tv.try_map(|t| {
        Ok(match mask.get(t.name()) {
            Some(m) => t.data.iter().zip(m).map(|(&v, &k)| if k { v } else { 0.0 }).collect(),
            None => t.data.clone(),
        })
    })
    .map(TaskVector)
}

/// Elected sign is the sign of the summed values (positive on a zero sum);
/// the result is the mean of the entries that carry that sign.
fn elect_and_mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mass: f64 = values.clone().sum();
    let positive = mass >= 0.0;
    let (sum, count) = values
        .filter(|&v| if positive { v > 0.0 } else { v < 0.0 })
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// TIES-Merging: trim each task vector, elect a sign per coordinate, and
/// average the surviving entries that agree with it. Passthrough tensors go
/// through elect-and-mean without trimming.
pub fn merge_ties(deltas: &[TaskVector], trim_fraction: f64) -> Result<TaskVector> {
    check_pool(deltas)?;
    check_trim_fraction(trim_fraction)?;
    let trimmed = deltas
        .iter()
        .map(|d| ties_trim(d, trim_fraction))
        .collect::<Result<Vec<_>>>()?;
    let first = &trimmed[0];
    first
        .try_map(|t| {
            let cols: Vec<&[f64]> = trimmed
                .iter()
                .map(|d| d.get(t.name()).unwrap().data.as_slice())
                .collect();
            Ok((0..t.data.len())
                .map(|j| elect_and_mean(cols.iter().map(|c| c[j])))
                .collect())
        })
        .map(TaskVector)
}

/// Consensus merging: the TA sum with coordinates zeroed unless they are
/// relevant to at least `min_tasks` tasks. A coordinate is relevant to a task
/// when it is nonzero and survives that task's TIES-style trim. Passthrough
/// tensors keep the plain sum.
pub fn merge_consensus(
    deltas: &[TaskVector],
    min_tasks: usize,
    trim_fraction: f64,
) -> Result<TaskVector> {
    check_pool(deltas)?;
    check_trim_fraction(trim_fraction)?;
    if min_tasks == 0 || min_tasks > deltas.len() {
        return Err(Error::InvalidArgument(format!(
            "min_tasks must lie in 1..={}, got {min_tasks}",
            deltas.len()
        )));
    }
    let summed = merge_ta(deltas)?;
    let masks: Vec<_> = deltas
        .iter()
        .map(|d| top_magnitude_mask(d, trim_fraction))
        .collect();
    summed
        .try_map(|t| {
            if !t.is_mergeable() {
                return Ok(t.data.clone());
            }
            Ok(t.data
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    let votes = deltas
                        .iter()
                        .zip(&masks)
                        .filter(|(d, m)| m[t.name()][j] && d.get(t.name()).unwrap().data[j] != 0.0)
                        .count();
                    if votes >= min_tasks {
                        v
                    } else {
                        0.0
                    }
                })
                .collect())
        })
        .map(TaskVector)
}

/// Multiplies every tensor in layer `l` (of `L`) by
/// `start + (end − start)·(l − 1)/(L − 1)`; `L = 1` scales by `start`.
pub fn lines_scale(
    delta: &TaskVector,
    start: f64,
    end: f64,
    layer_of: &IndexMap<String, usize>,
) -> Result<TaskVector> {
    if !(0.0 <= start && start <= end) {
        return Err(Error::InvalidArgument(format!(
            "LiNeS endpoints need 0 ≤ start ≤ end, got {start}, {end}"
        )));
    }
    let depth = layer_of.values().copied().max().unwrap_or(1);
    delta
        .try_map(|t| {
            let l = *layer_of.get(t.name()).ok_or_else(|| Error::Congruence {
                tensor: t.name().to_owned(),
                reason: "no layer index".to_owned(),
            })?;
            if l == 0 || l > depth {
                return Err(Error::InvalidArgument(format!("layer index {l} out of range")));
            }
            let scale = if depth == 1 {
                start
            } else {
                start + (end - start) * (l - 1) as f64 / (depth - 1) as f64
            };
            Ok(t.data.iter().map(|v| v * scale).collect())
        })
        .map(TaskVector)
}
