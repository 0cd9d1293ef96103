//! Full-ranking top-K evaluation on the target domain.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbone::matrix::{dot, Matrix};
use crate::corpus::{InteractionSet, SplitDataset};
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 10;

/// Anything that can produce final target-domain user and item embeddings.
pub trait TargetScorer {
    fn target_embeddings(&self) -> (Matrix, Matrix);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Hide the user's train (and, for test, valid) items.
    #[default]
    Seen,
    /// Rank every item.
    None,
}

#[derive(Clone, Copy)]
struct Candidate {
    score: f64,
    item: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    /// Greater means ranked later: lower score, then higher index.
    fn cmp(&self, other: &Self) -> Ordering {
        other.score.total_cmp(&self.score).then(self.item.cmp(&other.item))
    }
}

/// Top-K items by score, skipping `mask` (sorted), ties broken by ascending
/// item index. Returns fewer than K items when the unmasked set is smaller.
pub fn rank_items(scores: &[f64], mask: &[usize], k: usize) -> Vec<usize> {
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
    if k == 0 {
        return Vec::new();
    }
    for (item, &score) in scores.iter().enumerate() {
        if mask.binary_search(&item).is_ok() {
            continue;
        }
        let c = Candidate { score, item };
        if heap.len() < k {
            heap.push(c);
        } else if c < *heap.peek().expect("non-empty heap") {
            heap.pop();
            heap.push(c);
        }
    }
    heap.into_sorted_vec().into_iter().map(|c| c.item).collect()
}

fn hits(topk: &[usize], test: &[usize]) -> usize {
    topk.iter().filter(|i| test.binary_search(i).is_ok()).count()
}

/// `test` must be sorted.
pub fn ndcg_at_k(topk: &[usize], test: &[usize], k: usize) -> f64 {
    let dcg: f64 = topk
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| test.binary_search(i).is_ok())
        .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..k.min(test.len())).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

pub fn recall_at_k(topk: &[usize], test: &[usize], k: usize) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    hits(&topk[..k.min(topk.len())], test) as f64 / test.len() as f64
}

pub fn hr_at_k(topk: &[usize], test: &[usize], k: usize) -> f64 {
    if hits(&topk[..k.min(topk.len())], test) > 0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    pub std: f64,
}

impl MetricStat {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MetricStat { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MetricStat { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub recall: MetricStat,
    pub hr: MetricStat,
    pub ndcg: MetricStat,
    #[serde(rename = "K")]
    pub k: usize,
    pub users: usize,
    pub seed: Option<u64>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:<12} {:>10} {:>10}", "metric", "mean", "std").unwrap();
        for (name, m) in [("recall", self.recall), ("hr", self.hr), ("ndcg", self.ndcg)] {
            writeln!(
                s,
                "{:<12} {:>10.6} {:>10.6}",
                format!("{name}@{}", self.k),
                m.mean,
                m.std
            )
            .unwrap();
        }
        writeln!(s, "users: {}", self.users).unwrap();
        if let Some(seed) = self.seed {
            writeln!(s, "seed: {seed}").unwrap();
        }
        s
    }
}

/// Per-user metrics against `truth`, hiding `mask(u)` from the ranking.
/// Users with no truth items are skipped.
pub fn evaluate_embeddings<F>(
    users: &Matrix,
    items: &Matrix,
    truth: &InteractionSet,
    mask: F,
    k: usize,
) -> Result<MetricsReport>
where
    F: Fn(usize) -> Vec<usize> + Sync,
{
    if k == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    let per_user: Vec<(f64, f64, f64)> = (0..truth.n_users())
        .into_par_iter()
        .filter(|&u| !truth.row(u).is_empty())
        .map(|u| {
            let ur = users.row(u);
            let scores: Vec<f64> = (0..items.rows()).map(|i| dot(ur, items.row(i))).collect();
            let top = rank_items(&scores, &mask(u), k);
            let test = truth.row(u);
            (
                recall_at_k(&top, test, k),
                hr_at_k(&top, test, k),
                ndcg_at_k(&top, test, k),
            )
        })
        .collect();
    if per_user.is_empty() {
        return Err(Error::NoEvaluableUsers);
    }
    let col = |f: fn(&(f64, f64, f64)) -> f64| per_user.iter().map(f).collect::<Vec<_>>();
    Ok(MetricsReport {
        recall: MetricStat::of(&col(|t| t.0)),
        hr: MetricStat::of(&col(|t| t.1)),
        ndcg: MetricStat::of(&col(|t| t.2)),
        k,
        users: per_user.len(),
        seed: None,
    })
}

/// Test-set evaluation: ranks all target items, hiding train ∪ valid in
/// [`MaskMode::Seen`].
pub fn evaluate_full(
    model: &impl TargetScorer,
    split: &SplitDataset,
    k: usize,
    mode: MaskMode,
) -> Result<MetricsReport> {
    let (users, items) = model.target_embeddings();
    evaluate_embeddings(
        &users,
        &items,
        &split.test,
        |u| match mode {
            MaskMode::Seen => split.seen_items(u),
            MaskMode::None => Vec::new(),
        },
        k,
    )
}

/// Validation-set evaluation used for early stopping (train items hidden).
pub fn evaluate_valid(users: &Matrix, items: &Matrix, split: &SplitDataset, k: usize) -> Result<MetricsReport> {
    evaluate_embeddings(users, items, &split.valid, |u| split.train.row(u).to_vec(), k)
}
