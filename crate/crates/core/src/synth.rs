//! Synthetic expert pools with a tunable shared direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, TensorSet};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_experts: usize,
    pub rows: usize,
    pub cols: usize,
    pub n_layers: usize,
    pub expert_rank: usize,
    /// Weight of the rank-1 direction shared by all experts, in `[0, 1]`.
    pub shared_direction_weight: f64,
    /// Standard deviation of i.i.d. Gaussian noise added to every entry.
    pub noise_floor: f64,
    /// Adds a passthrough `layer{l}.bias` after every weight.
    pub with_bias: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_experts: 8,
            rows: 64,
            cols: 64,
            n_layers: 4,
            expert_rank: 8,
            shared_direction_weight: 0.5,
            noise_floor: 0.0,
            with_bias: false,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(what));
        if self.n_experts == 0 || self.n_layers == 0 || self.rows == 0 || self.cols == 0 {
            return bad("expert count, layer count and shape must be positive".to_owned());
        }
        if self.expert_rank == 0 || self.expert_rank > self.rows.min(self.cols) {
            return bad(format!(
                "expert_rank must lie in 1..={}, got {}",
                self.rows.min(self.cols),
                self.expert_rank
            ));
        }
        if !(0.0..=1.0).contains(&self.shared_direction_weight) {
            return bad(format!(
                "shared_direction_weight must lie in [0, 1], got {}",
                self.shared_direction_weight
            ));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return bad(format!("noise_floor must be finite and ≥ 0, got {}", self.noise_floor));
        }
        Ok(())
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let n = crate::matrix::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn outer(u: &[f64], v: &[f64]) -> Matrix<f64> {
    Matrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
}

/// A zero base checkpoint and `n_experts` expert checkpoints.
///
/// Every expert weight is `w·u vᵀ + (1−w)·Σ a_t b_tᵀ` over `expert_rank − 1`
/// expert-specific terms, with all vectors unit length, plus optional noise.
/// Experts are drawn in order from one stream, so a smaller pool with the
/// same seed and shape is a prefix of a larger one.
pub fn generate(spec: &SyntheticSpec) -> Result<(Checkpoint, Vec<Checkpoint>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = spec.shared_direction_weight;
    let shared: Vec<Matrix<f64>> = (0..spec.n_layers)
        .map(|_| {
            let u = unit_vector(&mut rng, spec.rows);
            let v = unit_vector(&mut rng, spec.cols);
            outer(&u, &v)
        })
        .collect();

    let mut base = TensorSet::new();
    for l in 0..spec.n_layers {
        base.push_matrix(&format!("layer{l}.weight"), &Matrix::zeros(spec.rows, spec.cols))?;
        if spec.with_bias {
            base.push_passthrough(&format!("layer{l}.bias"), vec![spec.rows], vec![0.0; spec.rows])?;
        }
    }

    let mut experts = Vec::with_capacity(spec.n_experts);
    for _ in 0..spec.n_experts {
        let mut set = TensorSet::new();
        for (l, s) in shared.iter().enumerate() {
            let mut m = s.scale(w);
            for _ in 1..spec.expert_rank {
                let a = unit_vector(&mut rng, spec.rows);
                let b = unit_vector(&mut rng, spec.cols);
                m = m.add(&outer(&a, &b).scale(1.0 - w));
            }
            if spec.noise_floor > 0.0 {
                let nf = spec.noise_floor;
                let noise: Vec<f64> =
                    (0..spec.rows * spec.cols).map(|_| nf * rng.sample::<f64, _>(StandardNormal)).collect();
                m = m.add(&Matrix::new(spec.rows, spec.cols, noise)?);
            }
            set.push_matrix(&format!("layer{l}.weight"), &m)?;
            if spec.with_bias {
                let bias = unit_vector(&mut rng, spec.rows);
                set.push_passthrough(&format!("layer{l}.bias"), vec![spec.rows], bias)?;
            }
        }
        experts.push(Checkpoint(set));
    }
    Ok((Checkpoint(base), experts))
}
