mod common;

use common::{first_columns, matrix, subspace_distance};
use proptest::prelude::*;
use rankmerge::boost::boost_task_vector_with_report;
use rankmerge::{
    boost_component, boost_spectrum, clamp_index, singular_values, stable_rank, svd_thin,
    BoostConfig, Matrix, TaskVector, TensorSet,
};

fn spectrum() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..10.0f64, 1..40)
        .prop_filter("not all zero", |v| v.iter().any(|&x| x > 0.0))
        .prop_map(|mut v| {
            v.sort_by(|a, b| b.total_cmp(a));
            v
        })
}

proptest! {
    #[test]
    fn boosting_only_raises_values(s in spectrum(), beta in 0.0..0.99f64) {
        let b = boost_spectrum(&s, beta).unwrap();
        prop_assert_eq!(b[0], s[0]);
        prop_assert!(b.iter().zip(&s).all(|(x, y)| x >= y));
        prop_assert!(b.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(stable_rank(&b).unwrap() >= stable_rank(&s).unwrap() - 1e-12);
    }

    #[test]
    fn zero_beta_fills_the_spectrum(s in spectrum()) {
        let b = boost_spectrum(&s, 0.0).unwrap();
        prop_assert!((stable_rank(&b).unwrap() - s.len() as f64).abs() <= 1e-12);
    }

    #[test]
    fn head_subspaces_are_preserved(a in matrix(12, 12), beta in 0.0..0.9f64) {
        let f = svd_thin(&a).unwrap();
        let c = clamp_index(&f.singular_values, beta).unwrap();
        let gap_ok = c == 0 || f.singular_values[c - 1] - f.singular_values[c] > 1e-3;
        prop_assume!(gap_ok);
        let out = boost_component(&a, beta).unwrap();
        prop_assert_eq!(out.clamp_index, Some(c));
        let g = svd_thin(&out.matrix).unwrap();
        if c > 0 {
            prop_assert!(subspace_distance(&first_columns(&f.u, c), &first_columns(&g.u, c)) <= 1e-6);
            let (fv, gv) = (f.vt.transpose(), g.vt.transpose());
            prop_assert!(subspace_distance(&first_columns(&fv, c), &first_columns(&gv, c)) <= 1e-6);
        }
    }

    #[test]
    fn zero_beta_is_idempotent(a in matrix(10, 10)) {
        let once = boost_component(&a, 0.0).unwrap().matrix;
        let twice = boost_component(&once, 0.0).unwrap().matrix;
        prop_assert!(twice.relative_error(&once) <= 1e-10);
    }

    #[test]
    fn frobenius_norm_never_drops(a in matrix(10, 10), beta in 0.0..0.99f64) {
        let out = boost_component(&a, beta).unwrap().matrix;
        prop_assert!(out.frobenius_norm() >= a.frobenius_norm() * (1.0 - 1e-12));
    }

    #[test]
    fn boosted_matrix_stable_rank_not_below_original(a in matrix(10, 10), beta in 0.0..0.99f64) {
        let out = boost_component(&a, beta).unwrap().matrix;
        let before = stable_rank(&singular_values(&a).unwrap()).unwrap();
        let after = stable_rank(&singular_values(&out).unwrap()).unwrap();
        prop_assert!(after >= before - 1e-9);
    }
}

#[test]
fn task_vector_boost_uses_per_kind_betas() {
    let mut s = TensorSet::new();
    let m = Matrix::from_diag(&[8.0, 4.0, 2.0, 1.0, 1.0]);
    s.push_matrix("blocks.0.attn.w", &m).unwrap();
    s.push_matrix("blocks.0.mlp.w", &m).unwrap();
    s.push_passthrough("blocks.0.bias", vec![1], vec![3.0]).unwrap();
    let cfg = BoostConfig {
        attn_beta: Some(0.8),
        fc_beta: Some(0.0),
        ..BoostConfig::with_beta(0.5)
    };
    let (out, report) = boost_task_vector_with_report(&TaskVector(s), &cfg).unwrap();
    assert_eq!(report[0].clamp_index, Some(1));
    assert_eq!(report[1].clamp_index, Some(0));
    let attn = singular_values(&out.get("blocks.0.attn.w").unwrap().as_matrix()).unwrap();
    let fc = singular_values(&out.get("blocks.0.mlp.w").unwrap().as_matrix()).unwrap();
    for (x, y) in attn.iter().zip([8.0, 4.0, 4.0, 4.0, 4.0]) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!(fc.iter().all(|x| (x - 8.0).abs() < 1e-12));
    assert_eq!(out.get("blocks.0.bias").unwrap().data, vec![3.0]);
}
