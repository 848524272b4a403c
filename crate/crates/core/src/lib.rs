//! Task-vector model merging with rank diagnostics, Subspace Boosting and a
//! regularized higher-order generalized SVD.
//!
//! Numerical kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! checkpoint layer stores `f32` on disk and computes in `f64`.

pub mod boost;
pub mod checkpoint;
pub mod diagnostics;
pub mod error;
pub mod hogsvd;
pub mod linalg;
pub mod matrix;
pub mod merge;
pub mod scalar;
pub mod synth;

pub use boost::{boost_component, boost_spectrum, boost_task_vector, clamp_index, BoostConfig};
pub use checkpoint::{
    apply_task_vector, load_checkpoint, save_checkpoint, sum_task_vectors, task_vector, Checkpoint,
    TaskVector, Tensor, TensorKind, TensorRecord, TensorSet,
};
pub use diagnostics::{cumulative_energy_rank, rank_report, stable_rank, RankReport, RankRow};
pub use error::{CheckpointError, Error, Result};
pub use hogsvd::{
    alignment_matrix, classify_subspaces, compute_s_pi, hogsvd_boost_merge, hogsvd_decompose,
    select_experts, select_experts_exhaustive, AlignmentMatrix, HogsvdConfig, HogsvdFactors,
    SubspaceClassification,
};
pub use linalg::{
    eig_real, generalized_procrustes, polar_orthonormalize, singular_values, svd_thin, EigFactors,
    SvdFactors,
};
pub use matrix::Matrix;
pub use merge::{lines_scale, merge_consensus, merge_ta, merge_ties, MergeConfig, MergeMethod};
pub use scalar::Scalar;
pub use synth::SyntheticSpec;

pub type Mat = Matrix<f64>;
pub type Mat32 = Matrix<f32>;
pub type Svd = SvdFactors<f64>;
pub type Svd32 = SvdFactors<f32>;
pub type Hogsvd = HogsvdFactors<f64>;
