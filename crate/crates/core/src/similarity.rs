//! Binary user-user similarity over target-domain users, answered lazily
//! from frozen embeddings or training histories.

use serde::{Deserialize, Serialize};

use crate::backbone::matrix::{dot, Matrix};
use crate::corpus::InteractionSet;
use crate::error::{Error, Result};

pub const DEFAULT_GAMMA: f64 = 0.9;

/// `a·b / (‖a‖‖b‖)`; 0 when either vector is all zeros.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine of unequal dims");
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Cosine of two binary rows given as sorted index lists. Uses the same
/// operation order as [`cosine`] on the dense 0/1 vectors.
fn binary_cosine(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    inter as f64 / ((a.len() as f64).sqrt() * (b.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMode {
    Embedding,
    History,
}

#[derive(Debug, Clone)]
enum Source {
    Embedding(Matrix),
    History(InteractionSet),
}

/// Frozen source of target-user representations plus the threshold γ.
#[derive(Debug, Clone)]
pub struct SimilarityOracle {
    source: Source,
    gamma: f64,
}

impl SimilarityOracle {
    pub fn from_embeddings(theta_t1: Matrix, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(SimilarityOracle {
            source: Source::Embedding(theta_t1),
            gamma,
        })
    }

    /// History mode; pass the TRAIN interactions only.
    pub fn from_history(train: InteractionSet, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(SimilarityOracle {
            source: Source::History(train),
            gamma,
        })
    }

    pub fn mode(&self) -> SimilarityMode {
        match self.source {
            Source::Embedding(_) => SimilarityMode::Embedding,
            Source::History(_) => SimilarityMode::History,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_users(&self) -> usize {
        match &self.source {
            Source::Embedding(m) => m.rows(),
            Source::History(s) => s.n_users(),
        }
    }

    pub fn embeddings(&self) -> Option<&Matrix> {
        match &self.source {
            Source::Embedding(m) => Some(m),
            Source::History(_) => None,
        }
    }

    pub fn cosine(&self, p: usize, q: usize) -> Result<f64> {
        let n = self.n_users();
        for idx in [p, q] {
            if idx >= n {
                return Err(Error::OutOfRange { index: idx, len: n });
            }
        }
        Ok(match &self.source {
            Source::Embedding(m) => cosine(m.row(p), m.row(q)),
            Source::History(s) => binary_cosine(s.row(p), s.row(q)),
        })
    }

    /// 1 iff `cosine(p, q) > γ` (strict).
    pub fn similar(&self, p: usize, q: usize) -> Result<bool> {
        Ok(self.cosine(p, q)? > self.gamma)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > -1.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("gamma {gamma} not in (-1, 1]")))
    }
}

/// In-batch pair sets. `users` holds the distinct batch users in first
/// occurrence order; pairs refer to positions in `users`. The all-pairs set is
/// every ordered pair of distinct positions and is never materialized.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairSets {
    pub users: Vec<usize>,
    pub similar: Vec<(usize, usize)>,
}

impl PairSets {
    pub fn n_all(&self) -> usize {
        let u = self.users.len();
        u * u.saturating_sub(1)
    }

    pub fn all_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let u = self.users.len();
        (0..u).flat_map(move |x| (0..u).filter(move |&y| y != x).map(move |y| (x, y)))
    }

    /// Similar pairs as (user, user) indices.
    pub fn similar_users(&self) -> Vec<(usize, usize)> {
        self.similar
            .iter()
            .map(|&(a, b)| (self.users[a], self.users[b]))
            .collect()
    }
}

/// Deduplicates the batch, then asks the oracle about every unordered pair
/// once and records both orderings when similar.
pub fn extract_pairs(batch_users: &[usize], oracle: &SimilarityOracle) -> Result<PairSets> {
    let mut users: Vec<usize> = Vec::with_capacity(batch_users.len());
    let mut seen = std::collections::HashSet::with_capacity(batch_users.len());
    for &u in batch_users {
        if seen.insert(u) {
            users.push(u);
        }
    }
    if users.len() < 2 {
        return Ok(PairSets {
            users,
            similar: Vec::new(),
        });
    }
    let mut similar = Vec::new();
    for x in 0..users.len() {
        for y in x + 1..users.len() {
            if oracle.similar(users[x], users[y])? {
                similar.push((x, y));
                similar.push((y, x));
            }
        }
    }
    similar.sort_unstable();
    Ok(PairSets { users, similar })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[0.3, -2.0], &[0.3, -2.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn strict_threshold() {
        let rows = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.95, (1.0f64 - 0.95 * 0.95).sqrt()]]);
        let o = SimilarityOracle::from_embeddings(rows.clone(), 0.9).unwrap();
        assert!(o.similar(0, 1).unwrap());
        let c = o.cosine(0, 1).unwrap();
        let at_gamma = SimilarityOracle::from_embeddings(rows, c).unwrap();
        assert!(!at_gamma.similar(0, 1).unwrap());
        assert!(!at_gamma.similar(1, 0).unwrap());
    }

    #[test]
    fn identical_history_always_similar() {
        let train = InteractionSet::new(5, vec![vec![0, 2, 3], vec![0, 2, 3], vec![1]]).unwrap();
        let o = SimilarityOracle::from_history(train, 0.999).unwrap();
        assert!(o.similar(0, 1).unwrap());
        assert!(!o.similar(0, 2).unwrap());
    }

    #[test]
    fn history_cosine_matches_dense() {
        let train = InteractionSet::new(6, vec![vec![0, 2, 3, 5], vec![2, 3, 4]]).unwrap();
        let o = SimilarityOracle::from_history(train.clone(), 0.5).unwrap();
        let dense = |u: usize| -> Vec<f64> { (0..6).map(|i| if train.contains(u, i) { 1.0 } else { 0.0 }).collect() };
        assert_eq!(o.cosine(0, 1).unwrap(), cosine(&dense(0), &dense(1)));
    }

    #[test]
    fn out_of_range_is_error() {
        let o = SimilarityOracle::from_embeddings(Matrix::zeros(2, 2), 0.9).unwrap();
        assert!(matches!(o.similar(0, 2), Err(Error::OutOfRange { index: 2, len: 2 })));
        assert!(SimilarityOracle::from_embeddings(Matrix::zeros(2, 2), -1.0).is_err());
    }

    #[test]
    fn duplicate_batch_users() {
        let o = SimilarityOracle::from_embeddings(Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]), 0.9).unwrap();
        let p = extract_pairs(&[1, 1, 2], &o).unwrap();
        assert_eq!(p.users, vec![1, 2]);
        assert_eq!(p.n_all(), 2);
        assert_eq!(p.similar_users(), vec![(1, 2), (2, 1)]);
    }

    #[test]
    fn only_one_similar_pair() {
        let rows = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
        let o = SimilarityOracle::from_embeddings(rows, 0.9).unwrap();
        let p = extract_pairs(&[0, 1, 2], &o).unwrap();
        assert_eq!(p.n_all(), 6);
        assert_eq!(p.all_pairs().count(), 6);
        let s: BTreeSet<_> = p.similar_users().into_iter().collect();
        assert_eq!(s, BTreeSet::from([(1, 2), (2, 1)]));
    }

    #[test]
    fn degenerate_batches() {
        let o = SimilarityOracle::from_embeddings(Matrix::from_rows(&[vec![1.0], vec![-1.0]]), 0.9).unwrap();
        let p = extract_pairs(&[0, 0], &o).unwrap();
        assert_eq!((p.n_all(), p.similar.len()), (0, 0));
        let p = extract_pairs(&[0, 1], &o).unwrap();
        assert!(p.similar.is_empty());
        assert_eq!(p.n_all(), 2);
    }

    proptest! {
        #[test]
        fn lazy_equals_materialized(
            vals in proptest::collection::vec(-1.0f64..1.0, 150),
            batch in proptest::collection::vec(0usize..50, 0..60),
            gamma in -0.5f64..0.95,
            scale in 0.1f64..10.0,
        ) {
            let m = Matrix::from_vec(50, 3, vals);
            let o = SimilarityOracle::from_embeddings(m.clone(), gamma).unwrap();
            // brute force: full binary matrix, then restrict to the batch
            let full: Vec<Vec<bool>> = (0..50)
                .map(|p| (0..50).map(|q| cosine(m.row(p), m.row(q)) > gamma).collect())
                .collect();
            let pairs = extract_pairs(&batch, &o).unwrap();
            let distinct: BTreeSet<usize> = batch.iter().copied().collect();
            let expected: BTreeSet<(usize, usize)> = distinct
                .iter()
                .flat_map(|&p| distinct.iter().map(move |&q| (p, q)))
                .filter(|&(p, q)| p != q && full[p][q])
                .collect();
            let got: BTreeSet<(usize, usize)> = pairs.similar_users().into_iter().collect();
            prop_assert_eq!(&got, &expected);
            prop_assert_eq!(pairs.n_all(), distinct.len() * distinct.len().saturating_sub(1));
            for &(a, b) in &got {
                prop_assert!(got.contains(&(b, a)));
            }
            // positive row scaling leaves answers unchanged
            let mut scaled = m.clone();
            for d in 0..3 { scaled.row_mut(7)[d] *= scale; }
            let o2 = SimilarityOracle::from_embeddings(scaled, gamma).unwrap();
            for q in 0..50 {
                let a = o.cosine(7, q).unwrap();
                let b = o2.cosine(7, q).unwrap();
                if (a - gamma).abs() > 1e-9 {
                    prop_assert_eq!(a > gamma, b > gamma);
                }
            }
        }
    }
}
