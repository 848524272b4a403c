#![allow(dead_code)]

use proptest::prelude::*;
use rankmerge::{Matrix, TaskVector, TensorSet};

pub fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Matrix<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(m, n)| {
        prop::collection::vec(-1.0..1.0f64, m * n)
            .prop_map(move |data| Matrix::new(m, n, data).unwrap())
    })
}

pub fn sized_matrix(m: usize, n: usize) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, m * n).prop_map(move |d| Matrix::new(m, n, d).unwrap())
}

/// Largest principal-angle sine between the column spans of `a` and `b`
/// (both with orthonormal columns): `‖a aᵀ − b bᵀ‖₂`.
pub fn subspace_distance(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    let pa = a.matmul(&a.transpose());
    let pb = b.matmul(&b.transpose());
    rankmerge::singular_values(&pa.sub(&pb)).unwrap()[0]
}

pub fn first_columns(m: &Matrix<f64>, k: usize) -> Matrix<f64> {
    Matrix::from_fn(m.rows(), k, |i, j| m[(i, j)])
}

/// A task vector with one mergeable tensor per matrix plus a passthrough vector.
pub fn task_vector(mats: &[Matrix<f64>], bias: &[f64]) -> TaskVector {
    let mut s = TensorSet::new();
    for (l, m) in mats.iter().enumerate() {
        s.push_matrix(&format!("blocks.{l}.w"), m).unwrap();
    }
    s.push_passthrough("head.bias", vec![bias.len()], bias.to_vec()).unwrap();
    TaskVector(s)
}
