use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::dataset::{CrossDomainDataset, DomainData, InteractionSet};
use crate::error::{Error, Result};

/// Train/valid/test partition of one domain over a shared index space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: InteractionSet,
    pub valid: InteractionSet,
    pub test: InteractionSet,
    pub split_seed: u64,
}

impl SplitDataset {
    pub fn n_users(&self) -> usize {
        self.train.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.train.n_items()
    }

    /// Items to hide when ranking for test: train ∪ valid.
    pub fn seen_items(&self, user: usize) -> Vec<usize> {
        let mut seen: Vec<usize> = self
            .train
            .row(user)
            .iter()
            .chain(self.valid.row(user))
            .copied()
            .collect();
        seen.sort_unstable();
        seen
    }
}

/// Source and target splits of one cross-domain dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossDomainSplit {
    pub source: SplitDataset,
    pub target: SplitDataset,
}

/// Per-part sizes for `n` interactions: every part after the first gets
/// `floor(n * r / sum)` but at least one item when `n` is large enough to give
/// each part one; the first part (train) takes the remainder.
pub fn split_counts(n: usize, ratios: &[u32]) -> Vec<usize> {
    let total: u32 = ratios.iter().sum();
    let mut counts = vec![0usize; ratios.len()];
    if n == 0 || total == 0 {
        return counts;
    }
    let with_minimum = n >= ratios.len();
    for (k, &r) in ratios.iter().enumerate().skip(1) {
        let mut c = n * r as usize / total as usize;
        if with_minimum && r > 0 {
            c = c.max(1);
        }
        counts[k] = c;
    }
    let rest: usize = counts[1..].iter().sum();
    counts[0] = n.saturating_sub(rest);
    counts
}

fn split_domain(data: &DomainData, ratios: &[u32], seed: u64) -> Result<SplitDataset> {
    if ratios.is_empty() || ratios.len() > 3 || ratios[0] == 0 {
        return Err(Error::InvalidArgument(format!("bad split ratios {ratios:?}")));
    }
    let set = &data.interactions;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<Vec<usize>>; 3] = Default::default();
    for u in 0..set.n_users() {
        let mut order: Vec<usize> = set.row(u).to_vec();
        match &data.times {
            Some(times) => {
                let mut keyed: Vec<(i64, usize)> = times[u].iter().copied().zip(order).collect();
                keyed.sort_unstable();
                order = keyed.into_iter().map(|(_, i)| i).collect();
            }
            None => order.shuffle(&mut rng),
        }
        let counts = split_counts(order.len(), ratios);
        let mut start = 0;
        for (k, part) in parts.iter_mut().enumerate() {
            let c = counts.get(k).copied().unwrap_or(0);
            part.push(order[start..start + c].to_vec());
            start += c;
        }
    }
    let [train, valid, test] = parts;
    Ok(SplitDataset {
        train: InteractionSet::new(set.n_items(), train)?,
        valid: InteractionSet::new(set.n_items(), valid)?,
        test: InteractionSet::new(set.n_items(), test)?,
        split_seed: seed,
    })
}

/// Per-user train/valid/test split of the target domain. Chronological when
/// timestamps exist (oldest to train), seeded-uniform otherwise.
pub fn split_target(ds: &CrossDomainDataset, ratios: (u32, u32, u32), seed: u64) -> Result<SplitDataset> {
    split_domain(&ds.target, &[ratios.0, ratios.1, ratios.2], seed)
}

/// Per-user train/valid split of the source domain; the test part is empty.
pub fn split_source(ds: &CrossDomainDataset, ratios: (u32, u32), seed: u64) -> Result<SplitDataset> {
    split_domain(&ds.source, &[ratios.0, ratios.1], seed)
}

pub fn split_cross_domain(ds: &CrossDomainDataset, seed: u64) -> Result<CrossDomainSplit> {
    Ok(CrossDomainSplit {
        source: split_source(ds, (8, 2), seed)?,
        target: split_target(ds, (8, 1, 1), seed)?,
    })
}

/// Keeps `ceil(fraction * nnz)` uniformly chosen training interactions;
/// valid and test are left untouched.
pub fn subsample_target(split: &SplitDataset, retain_fraction: f64, seed: u64) -> Result<SplitDataset> {
    if !(retain_fraction > 0.0 && retain_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "retain fraction {retain_fraction} not in (0, 1]"
        )));
    }
    if retain_fraction == 1.0 {
        return Ok(split.clone());
    }
    let pairs: Vec<(usize, usize)> = split.train.pairs().collect();
    let keep = ((retain_fraction * pairs.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, pairs.len(), keep.min(pairs.len())).into_vec();
    chosen.sort_unstable();
    let mut rows = vec![Vec::new(); split.n_users()];
    for idx in chosen {
        let (u, i) = pairs[idx];
        rows[u].push(i);
    }
    Ok(SplitDataset {
        train: InteractionSet::new(split.n_items(), rows)?,
        valid: split.valid.clone(),
        test: split.test.clone(),
        split_seed: split.split_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::dataset::build_cross_domain;
    use crate::corpus::raw::{DomainId, RawInteractions, Record};
    use proptest::prelude::*;

    fn dataset(per_user: &[usize], with_times: bool) -> CrossDomainDataset {
        let mut recs = Vec::new();
        for (u, &n) in per_user.iter().enumerate() {
            for i in 0..n {
                recs.push(Record {
                    user: format!("u{u}"),
                    item: format!("i{i:03}"),
                    timestamp: with_times.then_some(100 - i as i64),
                });
            }
        }
        let t = RawInteractions::from_records(DomainId::Target, recs.clone()).unwrap();
        let s = RawInteractions::from_records(DomainId::Source, recs).unwrap();
        build_cross_domain(&s, &t).unwrap()
    }

    #[test]
    fn counts_follow_floor_with_minimums() {
        assert_eq!(split_counts(10, &[8, 1, 1]), vec![8, 1, 1]);
        assert_eq!(split_counts(5, &[8, 1, 1]), vec![3, 1, 1]);
        assert_eq!(split_counts(10, &[8, 2]), vec![8, 2]);
        assert_eq!(split_counts(5, &[8, 2]), vec![4, 1]);
        assert_eq!(split_counts(25, &[8, 1, 1]), vec![21, 2, 2]);
        assert_eq!(split_counts(2, &[8, 1, 1]), vec![2, 0, 0]);
    }

    #[test]
    fn target_split_sizes() {
        let ds = dataset(&[10, 5], false);
        let sp = split_target(&ds, (8, 1, 1), 3).unwrap();
        assert_eq!(
            (sp.train.row(0).len(), sp.valid.row(0).len(), sp.test.row(0).len()),
            (8, 1, 1)
        );
        assert_eq!(
            (sp.train.row(1).len(), sp.valid.row(1).len(), sp.test.row(1).len()),
            (3, 1, 1)
        );
    }

    #[test]
    fn source_split_has_no_test() {
        let ds = dataset(&[10, 5], false);
        let sp = split_source(&ds, (8, 2), 3).unwrap();
        assert_eq!((sp.train.row(0).len(), sp.valid.row(0).len()), (8, 2));
        assert_eq!((sp.train.row(1).len(), sp.valid.row(1).len()), (4, 1));
        assert_eq!(sp.test.nnz(), 0);
    }

    #[test]
    fn chronological_puts_newest_in_test() {
        let recs: Vec<Record> = (1..=5)
            .map(|ts| Record {
                user: "u".into(),
                item: format!("i{}", 9 - ts),
                timestamp: Some(ts),
            })
            .collect();
        let t = RawInteractions::from_records(DomainId::Target, recs.clone()).unwrap();
        let s = RawInteractions::from_records(DomainId::Source, recs).unwrap();
        let ds = build_cross_domain(&s, &t).unwrap();
        let sp = split_target(&ds, (8, 1, 1), 0).unwrap();
        // ts 5 -> token "i4", which sorts first
        let idx = ds.target.item_tokens.iter().position(|t| t == "i4").unwrap();
        assert_eq!(sp.test.row(0), &[idx]);
        let v = ds.target.item_tokens.iter().position(|t| t == "i5").unwrap();
        assert_eq!(sp.valid.row(0), &[v]);
    }

    #[test]
    fn subsample_fraction_and_determinism() {
        let ds = dataset(&[25, 25, 25, 25, 25], false);
        let sp = split_target(&ds, (8, 1, 1), 1).unwrap();
        assert_eq!(sp.train.nnz(), 105);
        assert_eq!(subsample_target(&sp, 1.0, 9).unwrap(), sp);
        let a = subsample_target(&sp, 0.2, 9).unwrap();
        assert_eq!(a.train.nnz(), 21);
        assert_eq!(a.valid, sp.valid);
        assert_eq!(a.test, sp.test);
        assert_eq!(subsample_target(&sp, 0.2, 9).unwrap(), a);
        assert!(subsample_target(&sp, 0.0, 9).is_err());
        assert!(subsample_target(&sp, 1.5, 9).is_err());
    }

    #[test]
    fn subsample_hundred_keeps_twenty() {
        let rows = (0..10).map(|_| (0..10).collect()).collect();
        let sp = SplitDataset {
            train: InteractionSet::new(10, rows).unwrap(),
            valid: InteractionSet::empty(10, 10),
            test: InteractionSet::empty(10, 10),
            split_seed: 0,
        };
        assert_eq!(subsample_target(&sp, 0.2, 4).unwrap().train.nnz(), 20);
        assert_eq!(subsample_target(&sp, 0.7, 4).unwrap().train.nnz(), 70);
    }

    proptest! {
        #[test]
        fn split_is_a_partition(sizes in proptest::collection::vec(5usize..40, 1..8), seed in 0u64..1000, times in any::<bool>()) {
            let ds = dataset(&sizes, times);
            let sp = split_target(&ds, (8, 1, 1), seed).unwrap();
            for u in 0..sizes.len() {
                let mut all: Vec<usize> = sp.train.row(u).iter().chain(sp.valid.row(u)).chain(sp.test.row(u)).copied().collect();
                let n = all.len();
                all.sort_unstable();
                all.dedup();
                prop_assert_eq!(all.len(), n);
                prop_assert_eq!(all.as_slice(), ds.target.interactions.row(u));
                prop_assert!(!sp.test.row(u).is_empty());
            }
            prop_assert_eq!(split_target(&ds, (8, 1, 1), seed).unwrap(), sp);
        }
    }
}
