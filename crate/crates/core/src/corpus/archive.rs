//! On-disk dataset archive: `source.tsv`, `target.tsv`, `index.json` and
//! `splits.json` in one directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::dataset::{CrossDomainDataset, DomainData, InteractionSet, UserPartition};
use crate::corpus::raw::{load_interactions, DomainId, RawInteractions, Record};
use crate::corpus::split::{CrossDomainSplit, SplitDataset};
use crate::error::{Error, Result};

pub const SOURCE_FILE: &str = "source.tsv";
pub const TARGET_FILE: &str = "target.tsv";
pub const INDEX_FILE: &str = "index.json";
pub const SPLITS_FILE: &str = "splits.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexFile {
    users: Vec<String>,
    partition: UserPartition,
    source_items: Vec<String>,
    target_items: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainSplitFile {
    seed: u64,
    n_items: usize,
    train: Vec<Vec<usize>>,
    valid: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    test: Vec<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitsFile {
    source: DomainSplitFile,
    target: DomainSplitFile,
}

impl DomainSplitFile {
    fn from_split(s: &SplitDataset) -> Self {
        let test = if s.test.nnz() == 0 {
            Vec::new()
        } else {
            s.test.rows().to_vec()
        };
        DomainSplitFile {
            seed: s.split_seed,
            n_items: s.n_items(),
            train: s.train.rows().to_vec(),
            valid: s.valid.rows().to_vec(),
            test,
        }
    }

    fn into_split(self) -> Result<SplitDataset> {
        let n_users = self.train.len();
        let test = if self.test.is_empty() {
            InteractionSet::empty(n_users, self.n_items)
        } else {
            InteractionSet::new(self.n_items, self.test)?
        };
        Ok(SplitDataset {
            train: InteractionSet::new(self.n_items, self.train)?,
            valid: InteractionSet::new(self.n_items, self.valid)?,
            test,
            split_seed: self.seed,
        })
    }
}

fn domain_records(ds: &CrossDomainDataset, domain: DomainId) -> Vec<Record> {
    let data = ds.domain(domain);
    let mut out = Vec::with_capacity(data.interactions.nnz());
    for (u, row) in data.interactions.rows().iter().enumerate() {
        let global = match domain {
            DomainId::Target => u,
            DomainId::Source => ds.partition.source_to_global(u),
        };
        for (pos, &i) in row.iter().enumerate() {
            out.push(Record {
                user: ds.user_tokens[global].clone(),
                item: data.item_tokens[i].clone(),
                timestamp: data.times.as_ref().map(|t| t[u][pos]),
            });
        }
    }
    out
}

/// Reconstructs the raw log of one domain from the indexed dataset.
pub fn to_raw(ds: &CrossDomainDataset, domain: DomainId) -> Result<RawInteractions> {
    RawInteractions::from_records(domain, domain_records(ds, domain))
}

/// Writes the archive files into `dir` and returns the written paths.
pub fn save_archive(dir: &Path, ds: &CrossDomainDataset, split: &CrossDomainSplit) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let src = dir.join(SOURCE_FILE);
    let tgt = dir.join(TARGET_FILE);
    to_raw(ds, DomainId::Source)?.write_tsv(&src)?;
    to_raw(ds, DomainId::Target)?.write_tsv(&tgt)?;
    let index = IndexFile {
        users: ds.user_tokens.clone(),
        partition: ds.partition,
        source_items: ds.source.item_tokens.clone(),
        target_items: ds.target.item_tokens.clone(),
    };
    let idx_path = dir.join(INDEX_FILE);
    fs::write(&idx_path, serde_json::to_vec(&index)?).map_err(|e| Error::io(&idx_path, e))?;
    let splits = SplitsFile {
        source: DomainSplitFile::from_split(&split.source),
        target: DomainSplitFile::from_split(&split.target),
    };
    let sp_path = dir.join(SPLITS_FILE);
    fs::write(&sp_path, serde_json::to_vec(&splits)?).map_err(|e| Error::io(&sp_path, e))?;
    Ok(vec![src, tgt, idx_path, sp_path])
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn load_archive(dir: &Path) -> Result<(CrossDomainDataset, CrossDomainSplit)> {
    let index: IndexFile = read_json(&dir.join(INDEX_FILE))?;
    let splits: SplitsFile = read_json(&dir.join(SPLITS_FILE))?;
    let source = load_interactions(&dir.join(SOURCE_FILE), DomainId::Source)?;
    let target = load_interactions(&dir.join(TARGET_FILE), DomainId::Target)?;
    let p = index.partition;
    if p.total() != index.users.len() {
        return Err(Error::InvalidArgument(format!(
            "{}: partition sizes do not sum to user count",
            dir.join(INDEX_FILE).display()
        )));
    }
    let tgt_local: HashMap<&str, usize> = index.users[..p.n_target()]
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let src_local: HashMap<&str, usize> = index.users[p.target_only..]
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let target_data: DomainData =
        CrossDomainDataset::domain_from_maps(&target, &tgt_local, p.n_target(), index.target_items)?;
    let source_data: DomainData =
        CrossDomainDataset::domain_from_maps(&source, &src_local, p.n_source(), index.source_items)?;
    let ds = CrossDomainDataset {
        user_tokens: index.users,
        partition: p,
        source: source_data,
        target: target_data,
    };
    let split = CrossDomainSplit {
        source: splits.source.into_split()?,
        target: splits.target.into_split()?,
    };
    if split.target.n_users() != p.n_target() || split.source.n_users() != p.n_source() {
        return Err(Error::InvalidArgument(format!(
            "{}: split user counts do not match index",
            dir.display()
        )));
    }
    Ok((ds, split))
}
