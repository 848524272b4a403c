mod common;

use common::{sized_matrix, task_vector};
use proptest::prelude::*;
use rankmerge::{
    lines_scale, merge_consensus, merge_ta, merge_ties, Matrix, MergeConfig, MergeMethod,
    TaskVector, TensorSet,
};

fn pool(n: usize) -> impl Strategy<Value = Vec<TaskVector>> {
    prop::collection::vec(
        (sized_matrix(3, 4), sized_matrix(2, 2), prop::collection::vec(-1.0..1.0f64, 3)),
        n,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(a, b, bias)| task_vector(&[a, b], &bias))
            .collect()
    })
}

fn flat(tv: &TaskVector) -> Vec<f64> {
    tv.iter().flat_map(|t| t.data.clone()).collect()
}

/// Same payloads under different names.
fn renamed(tv: &TaskVector) -> TaskVector {
    let mut s = TensorSet::new();
    for (i, t) in tv.iter().enumerate() {
        let mut rec = t.record.clone();
        rec.name = format!("renamed_{i}");
        rec.file = String::new();
        s.push(rec, t.data.clone()).unwrap();
    }
    TaskVector(s)
}

proptest! {
    #[test]
    fn ta_is_permutation_invariant(p in (2..7usize).prop_flat_map(pool), rot in 0..7usize) {
        let mut q = p.clone();
        q.rotate_left(rot % p.len());
        q.reverse();
        let (a, b) = (flat(&merge_ta(&p).unwrap()), flat(&merge_ta(&q).unwrap()));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn ties_outputs_follow_elected_sign(p in (2..6usize).prop_flat_map(pool), k in 0.05..1.0f64) {
        let out = flat(&merge_ties(&p, k).unwrap());
        // the elected sign is the sign of the summed trimmed values, so each
        // output coordinate either matches it or is zero
        let trimmed: Vec<Vec<f64>> = p
            .iter()
            .map(|tv| flat(&rankmerge::merge::ties_trim(tv, k).unwrap()))
            .collect();
        let mergeable_len = 12 + 4;
        for (c, v) in out.iter().enumerate() {
            let total: f64 = if c < mergeable_len {
                trimmed.iter().map(|t| t[c]).sum()
            } else {
                p.iter().map(|tv| flat(tv)[c]).sum()
            };
            let elected = if total >= 0.0 { 1.0 } else { -1.0 };
            prop_assert!(*v == 0.0 || v.signum() == elected, "coord {c}: {v} vs sum {total}");
        }
    }

    #[test]
    fn consensus_is_masked_ta(
        p in (2..6usize).prop_flat_map(pool),
        k in 0.05..1.0f64,
        min_tasks in 1..4usize,
    ) {
        let ta = flat(&merge_ta(&p).unwrap());
        let cons = flat(&merge_consensus(&p, min_tasks.min(p.len()), k).unwrap());
        for (c, t) in cons.iter().zip(&ta) {
            prop_assert!(*c == 0.0 || c == t);
        }
    }

    #[test]
    fn consensus_with_one_task_and_no_trim_is_ta(p in (2..5usize).prop_flat_map(pool)) {
        prop_assert_eq!(merge_consensus(&p, 1, 1.0).unwrap(), merge_ta(&p).unwrap());
    }

    #[test]
    fn lines_with_equal_endpoints_is_uniform(p in pool(1), c in 0.0..2.0f64) {
        let tv = &p[0];
        let layers = tv.layer_indices();
        let out = lines_scale(tv, c, c, &layers).unwrap();
        prop_assert_eq!(out.0, tv.scaled(c).unwrap());
    }

    #[test]
    fn merges_commute_with_renaming(p in (2..5usize).prop_flat_map(pool)) {
        let q: Vec<TaskVector> = p.iter().map(renamed).collect();
        for method in [MergeMethod::Ta, MergeMethod::Ties, MergeMethod::Consensus] {
            let cfg = MergeConfig { method, ..MergeConfig::default() };
            prop_assert_eq!(flat(&cfg.merge(&p).unwrap()), flat(&cfg.merge(&q).unwrap()));
        }
    }
}

#[test]
fn merge_rejects_incongruent_pools() {
    let a = task_vector(&[Matrix::identity(2)], &[0.0]);
    let b = task_vector(&[Matrix::identity(3)], &[0.0]);
    assert!(merge_ta(&[a.clone(), b.clone()]).is_err());
    assert!(merge_ties(&[a.clone(), b.clone()], 0.2).is_err());
    assert!(merge_consensus(&[a.clone(), b], 2, 0.2).is_err());
    assert!(merge_ta(&[a]).is_err());
}
