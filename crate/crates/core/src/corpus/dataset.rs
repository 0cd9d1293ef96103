use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::raw::{DomainId, RawInteractions};
use crate::error::{Error, Result};

/// Sparse binary user-item matrix stored as sorted rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionSet {
    n_items: usize,
    rows: Vec<Vec<usize>>,
}

impl InteractionSet {
    /// Rows are sorted and deduplicated; any index `>= n_items` is rejected.
    pub fn new(n_items: usize, mut rows: Vec<Vec<usize>>) -> Result<Self> {
        for (u, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if let Some(&last) = row.last() {
                if last >= n_items {
                    return Err(Error::InvalidArgument(format!(
                        "user {u}: item index {last} >= n_items {n_items}"
                    )));
                }
            }
        }
        Ok(InteractionSet { n_items, rows })
    }

    pub fn empty(n_users: usize, n_items: usize) -> Self {
        InteractionSet {
            n_items,
            rows: vec![Vec::new(); n_users],
        }
    }

    pub fn n_users(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn row(&self, user: usize) -> &[usize] {
        &self.rows[user]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.rows[user].binary_search(&item).is_ok()
    }

    /// All (user, item) pairs in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |&i| (u, i)))
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_items];
        for (_, i) in self.pairs() {
            deg[i] += 1;
        }
        deg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserRole {
    TargetOnly,
    Overlap,
    SourceOnly,
}

/// Sizes of the three user roles. Global user indices are laid out as
/// `[target-only | overlap | source-only]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserPartition {
    pub target_only: usize,
    pub overlap: usize,
    pub source_only: usize,
}

impl UserPartition {
    pub fn total(&self) -> usize {
        self.target_only + self.overlap + self.source_only
    }

    /// Number of users present in the target domain (n).
    pub fn n_target(&self) -> usize {
        self.target_only + self.overlap
    }

    /// Number of users present in the source domain (k).
    pub fn n_source(&self) -> usize {
        self.overlap + self.source_only
    }

    pub fn role(&self, global: usize) -> UserRole {
        if global < self.target_only {
            UserRole::TargetOnly
        } else if global < self.target_only + self.overlap {
            UserRole::Overlap
        } else {
            UserRole::SourceOnly
        }
    }

    /// Target-domain local index equals the global index.
    pub fn target_local(&self, global: usize) -> Option<usize> {
        (global < self.n_target()).then_some(global)
    }

    pub fn source_local(&self, global: usize) -> Option<usize> {
        (global >= self.target_only && global < self.total()).then(|| global - self.target_only)
    }

    pub fn source_to_global(&self, local: usize) -> usize {
        local + self.target_only
    }
}

/// One domain's interactions plus its item vocabulary. Rows are indexed by
/// the domain-local user index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainData {
    pub interactions: InteractionSet,
    /// Per-row timestamps aligned with `interactions.row(u)`; present only
    /// when every raw record had one.
    pub times: Option<Vec<Vec<i64>>>,
    pub item_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossDomainDataset {
    pub user_tokens: Vec<String>,
    pub partition: UserPartition,
    pub source: DomainData,
    pub target: DomainData,
}

impl CrossDomainDataset {
    pub fn domain(&self, domain: DomainId) -> &DomainData {
        match domain {
            DomainId::Source => &self.source,
            DomainId::Target => &self.target,
        }
    }

    pub fn user_index(&self) -> HashMap<&str, usize> {
        self.user_tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect()
    }

    /// Rebuilds a domain's rows from raw records using fixed token maps.
    pub(crate) fn domain_from_maps(
        raw: &RawInteractions,
        user_to_local: &HashMap<&str, usize>,
        n_users: usize,
        item_tokens: Vec<String>,
    ) -> Result<DomainData> {
        let item_index: HashMap<&str, usize> = item_tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let mut rows: Vec<Vec<(usize, Option<i64>)>> = vec![Vec::new(); n_users];
        for rec in raw.records() {
            let u = *user_to_local
                .get(rec.user.as_str())
                .ok_or_else(|| Error::InvalidArgument(format!("{} user {:?} not in index", raw.domain(), rec.user)))?;
            let i = *item_index
                .get(rec.item.as_str())
                .ok_or_else(|| Error::InvalidArgument(format!("{} item {:?} not in index", raw.domain(), rec.item)))?;
            rows[u].push((i, rec.timestamp));
        }
        let with_times = raw.has_timestamps();
        let mut times = Vec::with_capacity(n_users);
        let mut item_rows = Vec::with_capacity(n_users);
        for mut row in rows {
            row.sort_unstable_by_key(|&(i, _)| i);
            times.push(row.iter().map(|&(_, t)| t.unwrap_or_default()).collect());
            item_rows.push(row.into_iter().map(|(i, _)| i).collect());
        }
        Ok(DomainData {
            interactions: InteractionSet::new(item_tokens.len(), item_rows)?,
            times: with_times.then_some(times),
            item_tokens,
        })
    }
}

fn sorted_items(raw: &RawInteractions) -> Vec<String> {
    let set: BTreeSet<&str> = raw.records().iter().map(|r| r.item.as_str()).collect();
    set.into_iter().map(str::to_string).collect()
}

/// Assigns users to roles by token intersection and lays out indices as
/// sorted target-only, then sorted overlap, then sorted source-only tokens.
/// Item vocabularies are kept per domain even when tokens coincide.
pub fn build_cross_domain(source: &RawInteractions, target: &RawInteractions) -> Result<CrossDomainDataset> {
    let src_users: BTreeSet<&str> = source.records().iter().map(|r| r.user.as_str()).collect();
    let tgt_users: BTreeSet<&str> = target.records().iter().map(|r| r.user.as_str()).collect();
    let target_only: Vec<&str> = tgt_users.difference(&src_users).copied().collect();
    let overlap: Vec<&str> = tgt_users.intersection(&src_users).copied().collect();
    let source_only: Vec<&str> = src_users.difference(&tgt_users).copied().collect();
    if overlap.is_empty() {
        log::warn!("no overlapping users between source and target");
    }
    let partition = UserPartition {
        target_only: target_only.len(),
        overlap: overlap.len(),
        source_only: source_only.len(),
    };
    let user_tokens: Vec<String> = target_only
        .iter()
        .chain(&overlap)
        .chain(&source_only)
        .map(|s| s.to_string())
        .collect();
    let global: HashMap<&str, usize> = user_tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let tgt_local: HashMap<&str, usize> = global
        .iter()
        .filter_map(|(t, &g)| partition.target_local(g).map(|l| (*t, l)))
        .collect();
    let src_local: HashMap<&str, usize> = global
        .iter()
        .filter_map(|(t, &g)| partition.source_local(g).map(|l| (*t, l)))
        .collect();
    let target_data =
        CrossDomainDataset::domain_from_maps(target, &tgt_local, partition.n_target(), sorted_items(target))?;
    let source_data =
        CrossDomainDataset::domain_from_maps(source, &src_local, partition.n_source(), sorted_items(source))?;
    Ok(CrossDomainDataset {
        user_tokens,
        partition,
        source: source_data,
        target: target_data,
    })
}
