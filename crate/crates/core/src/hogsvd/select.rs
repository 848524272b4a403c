use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

fn check<T: Scalar>(scores: &Matrix<T>, k: usize) -> Result<usize> {
    if !scores.is_square() {
        return Err(Error::Shape("alignment scores must be square".to_owned()));
    }
    let n = scores.rows();
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "can select between 2 and {n} experts, asked for {k}"
        )));
    }
    Ok(n)
}

/// Greedy subset of `k` experts with high mutual alignment scores.
///
/// Seeds with the highest-scoring pair, then repeatedly adds the candidate
/// with the largest mean score to the experts chosen so far. Ties go to the
/// lowest index. Returns indices in ascending order.
pub fn select_experts<T: Scalar>(scores: &Matrix<T>, k: usize) -> Result<Vec<usize>> {
    let n = check(scores, k)?;
    let mut best = (0, 1);
    for i in 0..n {
        for j in i + 1..n {
            if scores[(i, j)] > scores[best] {
                best = (i, j);
            }
        }
    }
    let mut chosen = vec![best.0, best.1];
    while chosen.len() < k {
        let mut pick: Option<(usize, T)> = None;
        for c in (0..n).filter(|c| !chosen.contains(c)) {
            let mean = chosen.iter().map(|&s| scores[(c, s)]).sum::<T>()
                / T::from_usize_lossy(chosen.len());
            if pick.is_none_or(|(_, m)| mean > m) {
                pick = Some((c, mean));
            }
        }
        chosen.push(pick.unwrap().0);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Exact maximizer of the summed pairwise score over all `k`-subsets;
/// the lexicographically first subset wins ties.
pub fn select_experts_exhaustive<T: Scalar>(scores: &Matrix<T>, k: usize) -> Result<Vec<usize>> {
    const MAX_SUBSETS: u128 = 10_000_000;
    let n = check(scores, k)?;
    let subsets = (0..k as u128).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1));
    if subsets > MAX_SUBSETS {
        return Err(Error::InvalidArgument(format!(
            "exhaustive selection over {subsets} subsets is too large"
        )));
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best: Option<(Vec<usize>, T)> = None;
    loop {
        let mut total = T::zero();
        for a in 0..k {
            for b in a + 1..k {
                total += scores[(idx[a], idx[b])];
            }
        }
        if best.as_ref().is_none_or(|(_, t)| total > *t) {
            best = Some((idx.clone(), total));
        }
        // next combination in lexicographic order
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < n - k + p) else {
            break;
        };
        idx[pos] += 1;
        for p in pos + 1..k {
            idx[p] = idx[p - 1] + 1;
        }
    }
    Ok(best.unwrap().0)
}
