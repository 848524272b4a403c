use serde::Serialize;

use super::HogsvdFactors;
use crate::diagnostics::csv_field;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Mean absolute log-ratio of generalized singular values between tasks.
/// Larger entries mean less shared subspace, i.e. less interference.
#[derive(Clone, Debug, Serialize)]
pub struct AlignmentMatrix<T> {
    #[serde(skip)]
    pub scores: Matrix<T>,
    /// One `N × N` matrix per component, in input order.
    #[serde(skip)]
    pub partials: Vec<Matrix<T>>,
    pub component_count: usize,
}

impl<T: Scalar> AlignmentMatrix<T> {
    pub fn task_count(&self) -> usize {
        self.scores.rows()
    }

    /// `component,i,j,score` rows: each named component's partial matrix,
    /// followed by the averaged matrix under component `mean`.
    pub fn to_csv(&self, component_names: &[String]) -> String {
        assert_eq!(component_names.len(), self.partials.len());
        let mut out = String::from("component,i,j,score\n");
        let mut emit = |name: &str, m: &Matrix<T>| {
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    out.push_str(&format!(
                        "{},{i},{j},{}\n",
                        csv_field(name),
                        m[(i, j)].to_f64_lossy()
                    ));
                }
            }
        };
        for (name, m) in component_names.iter().zip(&self.partials) {
            emit(name, m);
        }
        emit("mean", &self.scores);
        out
    }
}

/// Per-component mean of `|log((σ_i+ε)/(σ_j+ε))|` over all `n` generalized
/// singular values, averaged over components.
pub fn alignment_matrix<T: Scalar>(
    per_component: &[&HogsvdFactors<T>],
    eps: T,
) -> Result<AlignmentMatrix<T>> {
    let first = per_component.first().ok_or_else(|| {
        Error::InvalidArgument("alignment needs at least one component".to_owned())
    })?;
    let tasks = first.task_count();
    if let Some(bad) = per_component.iter().find(|f| f.task_count() != tasks) {
        return Err(Error::Congruence {
            tensor: "<alignment>".to_owned(),
            reason: format!("components cover {tasks} and {} tasks", bad.task_count()),
        });
    }

    let mut partials = Vec::with_capacity(per_component.len());
    for f in per_component {
        let n = f.dim();
        let logs: Vec<Vec<T>> = f
            .sigma_list
            .iter()
            .map(|s| s.iter().map(|&x| (x + eps).ln()).collect())
            .collect();
        let mut m = Matrix::zeros(tasks, tasks);
        for i in 0..tasks {
            for j in i + 1..tasks {
                let total: T = (0..n).map(|p| (logs[i][p] - logs[j][p]).abs()).sum();
                let v = total / T::from_usize_lossy(n);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        partials.push(m);
    }

    let mut scores = Matrix::zeros(tasks, tasks);
    for p in &partials {
        scores = scores.add(p);
    }
    let scores = scores.scale(T::one() / T::from_usize_lossy(partials.len()));
    Ok(AlignmentMatrix {
        scores,
        partials,
        component_count: per_component.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factors(sigmas: Vec<Vec<f64>>) -> HogsvdFactors<f64> {
        let n = sigmas[0].len();
        HogsvdFactors {
            u_list: sigmas.iter().map(|_| Matrix::identity(n)).collect(),
            sigma_list: sigmas,
            v: Matrix::identity(n),
            eigenvalues: vec![1.0; n],
        }
    }

    #[test]
    fn hand_example_scores_one() {
        let e = std::f64::consts::E;
        let f = factors(vec![vec![e, 1.0], vec![1.0, e]]);
        let a = alignment_matrix(&[&f], 0.0).unwrap();
        assert!((a.scores[(0, 1)] - 1.0).abs() < 1e-15);
        assert_eq!(a.scores[(0, 0)], 0.0);
        let a = alignment_matrix(&[&f], 1e-12).unwrap();
        assert!((a.scores[(1, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identical_sigmas_score_zero() {
        let f = factors(vec![vec![3.0, 0.5, 0.0]; 3]);
        let a = alignment_matrix(&[&f, &f], 1e-12).unwrap();
        assert_eq!(a.scores.max_abs(), 0.0);
        assert_eq!(a.partials.len(), 2);
    }

    #[test]
    fn task_count_mismatch() {
        let f2 = factors(vec![vec![1.0]; 2]);
        let f3 = factors(vec![vec![1.0]; 3]);
        assert!(matches!(
            alignment_matrix(&[&f2, &f3], 1e-12),
            Err(Error::Congruence { .. })
        ));
    }

    #[test]
    fn csv_has_partials_then_mean() {
        let f = factors(vec![vec![1.0], vec![2.0]]);
        let a = alignment_matrix(&[&f], 0.0).unwrap();
        let csv = a.to_csv(&["w".to_owned()]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "component,i,j,score");
        assert_eq!(lines.len(), 1 + 4 + 4);
        assert!(lines[5].starts_with("mean,0,0,"));
    }
}
