use crate::error::{shape_err, Error, Result};
use crate::numerics::Matrix;

/// Membership-inference AUC over every row: nodes are ranked by how far their
/// embedding moved, and the ranking is scored against membership in
/// `unlearned`. 0.5 means the attacker learns nothing.
pub fn mia_auc(h_before: &Matrix, h_after: &Matrix, unlearned: &[usize]) -> Result<f64> {
    let all: Vec<usize> = (0..h_before.rows()).collect();
    mia_auc_among(h_before, h_after, unlearned, &all)
}

/// [`mia_auc`] restricted to `population` (e.g. the original training
/// nodes). Members of `unlearned` outside the population are an error.
pub fn mia_auc_among(
    h_before: &Matrix,
    h_after: &Matrix,
    unlearned: &[usize],
    population: &[usize],
) -> Result<f64> {
    if h_before.shape() != h_after.shape() {
        return Err(shape_err!(
            "mia: before {:?} vs after {:?}",
            h_before.shape(),
            h_after.shape()
        ));
    }
    let n = h_before.rows();
    let mut member = vec![false; n];
    for &u in unlearned {
        if u >= n {
            return Err(Error::Index(format!("unlearned node {u} outside {n} rows")));
        }
        member[u] = true;
    }
    let mut in_pop = vec![false; n];
    for &p in population {
        if p >= n {
            return Err(Error::Index(format!(
                "population node {p} outside {n} rows"
            )));
        }
        in_pop[p] = true;
    }
    if let Some(&u) = unlearned.iter().find(|&&u| !in_pop[u]) {
        return Err(Error::InvalidRequest(format!(
            "unlearned node {u} not in population"
        )));
    }
    let scored: Vec<(f64, bool)> = (0..n)
        .filter(|&i| in_pop[i])
        .map(|i| (change_norm(h_before.row(i), h_after.row(i)), member[i]))
        .collect();
    let pos = scored.iter().filter(|s| s.1).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidRequest(format!(
            "mia needs members and non-members, got {pos} and {neg}"
        )));
    }
    rank_auc(scored)
}

fn change_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mann-Whitney AUC with average ranks, so every tie counts one half.
fn rank_auc(mut scored: Vec<(f64, bool)>) -> Result<f64> {
    if scored.iter().any(|s| !s.0.is_finite()) {
        return Err(Error::Numerical("non-finite membership score".into()));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut rank_sum, mut pos) = (0.0, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let avg = (i + 1 + j) as f64 / 2.0;
        let hits = scored[i..j].iter().filter(|s| s.1).count();
        rank_sum += avg * hits as f64;
        pos += hits;
        i = j;
    }
    let neg = scored.len() - pos;
    let (p, q) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shifted(deltas: &[f64]) -> (Matrix, Matrix) {
        let n = deltas.len();
        let before = Matrix::zeros(n, 2);
        let after = Matrix::from_fn(n, 2, |i, j| if j == 0 { deltas[i] } else { 0.0 });
        (before, after)
    }

    #[test]
    fn ties_give_one_half() {
        let (b, a) = shifted(&[1.0; 6]);
        assert_eq!(mia_auc(&b, &a, &[0, 3]).unwrap(), 0.5);
    }

    #[test]
    fn perfect_separation() {
        let (b, a) = shifted(&[0.1, 5.0, 0.2, 4.0, 0.3]);
        assert_eq!(mia_auc(&b, &a, &[1, 3]).unwrap(), 1.0);
        assert_eq!(mia_auc(&b, &a, &[0, 2]).unwrap(), 0.0);
    }

    #[test]
    fn partial_ranking_counts_pairs() {
        // members {1.0, 3.0}, non-members {2.0, 0.0}: 3 of 4 pairs ordered
        let (b, a) = shifted(&[1.0, 2.0, 3.0, 0.0]);
        assert_eq!(mia_auc(&b, &a, &[0, 2]).unwrap(), 0.75);
    }

    #[test]
    fn degenerate_sets_are_rejected() {
        let (b, a) = shifted(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            mia_auc(&b, &a, &[]),
            Err(Error::InvalidRequest(_))
        ));
        assert!(matches!(
            mia_auc(&b, &a, &[0, 1, 2]),
            Err(Error::InvalidRequest(_))
        ));
        assert!(mia_auc_among(&b, &a, &[0], &[1, 2]).is_err());
        assert_eq!(mia_auc_among(&b, &a, &[2], &[1, 2]).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn auc_is_rank_invariant(
            deltas in prop::collection::vec(0.0f64..10.0, 4..40),
            k in 1usize..4,
        ) {
            let members: Vec<usize> = (0..k).collect();
            let (b, a) = shifted(&deltas);
            let base = mia_auc(&b, &a, &members).unwrap();
            prop_assert!((0.0..=1.0).contains(&base));
            let squashed: Vec<f64> = deltas.iter().map(|d| (d * 0.5).exp() + 3.0).collect();
            let (b2, a2) = shifted(&squashed);
            prop_assert!((mia_auc(&b2, &a2, &members).unwrap() - base).abs() < 1e-12);
        }
    }
}
