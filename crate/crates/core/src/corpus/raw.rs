use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainId {
    Source,
    Target,
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainId::Source => f.write_str("source"),
            DomainId::Target => f.write_str("target"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub user: String,
    pub item: String,
    pub timestamp: Option<i64>,
}

/// Deduplicated implicit-feedback log for one domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawInteractions {
    records: Vec<Record>,
    domain: DomainId,
}

impl RawInteractions {
    /// Collapses duplicate (user, item) pairs, keeping the first occurrence's
    /// position and the earliest timestamp seen for the pair.
    pub fn from_records(domain: DomainId, records: impl IntoIterator<Item = Record>) -> Result<Self> {
        let mut seen: HashMap<(String, String), usize> = HashMap::new();
        let mut out: Vec<Record> = Vec::new();
        for rec in records {
            if rec.user.is_empty() || rec.item.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "empty token in record ({:?}, {:?})",
                    rec.user, rec.item
                )));
            }
            match seen.get(&(rec.user.clone(), rec.item.clone())) {
                Some(&idx) => {
                    let kept = &mut out[idx];
                    kept.timestamp = match (kept.timestamp, rec.timestamp) {
                        (Some(a), Some(b)) => Some(a.min(b)),
                        (a, b) => a.or(b),
                    };
                }
                None => {
                    seen.insert((rec.user.clone(), rec.item.clone()), out.len());
                    out.push(rec);
                }
            }
        }
        Ok(RawInteractions { records: out, domain })
    }

    pub fn domain(&self) -> DomainId {
        self.domain
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_users(&self) -> usize {
        let mut users: Vec<&str> = self.records.iter().map(|r| r.user.as_str()).collect();
        users.sort_unstable();
        users.dedup();
        users.len()
    }

    pub fn n_items(&self) -> usize {
        let mut items: Vec<&str> = self.records.iter().map(|r| r.item.as_str()).collect();
        items.sort_unstable();
        items.dedup();
        items.len()
    }

    /// True when every record carries a timestamp.
    pub fn has_timestamps(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.timestamp.is_some())
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(self.records.len() * 24);
        for r in &self.records {
            match r.timestamp {
                Some(ts) => writeln!(buf, "{}\t{}\t{}", r.user, r.item, ts),
                None => writeln!(buf, "{}\t{}", r.user, r.item),
            }
            .expect("write to Vec");
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

fn parse_line(line: &str) -> std::result::Result<Record, String> {
    let mut fields = line.split('\t');
    let user = fields.next().unwrap_or_default();
    let item = fields.next().ok_or("expected at least two TAB-separated fields")?;
    let timestamp = match fields.next() {
        Some(ts) => Some(
            ts.trim()
                .parse::<i64>()
                .map_err(|e| format!("bad timestamp {ts:?}: {e}"))?,
        ),
        None => None,
    };
    if fields.next().is_some() {
        return Err("too many fields".into());
    }
    if user.is_empty() {
        return Err("empty user token".into());
    }
    if item.is_empty() {
        return Err("empty item token".into());
    }
    Ok(Record {
        user: user.to_string(),
        item: item.to_string(),
        timestamp,
    })
}

/// Reads a `user<TAB>item[<TAB>timestamp]` file. Lines starting with `#` and
/// blank lines are skipped.
pub fn load_interactions(path: &Path, domain: DomainId) -> Result<RawInteractions> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let rec = parse_line(line).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        })?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    let raw = RawInteractions::from_records(domain, records)?;
    log::info!(
        "{}: {} interactions, {} users, {} items",
        path.display(),
        raw.len(),
        raw.n_users(),
        raw.n_items()
    );
    Ok(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn duplicate_pairs_collapse() {
        let f = write("u1\ti1\t5\nu1\ti2\t6\nu1\ti1\t3\n");
        let raw = load_interactions(f.path(), DomainId::Source).unwrap();
        assert_eq!(raw.len(), 2);
        assert_eq!(raw.records()[0].timestamp, Some(3));
    }

    #[test]
    fn single_line_with_timestamp() {
        let f = write("u1\ti9\t100\n");
        let raw = load_interactions(f.path(), DomainId::Target).unwrap();
        assert_eq!(
            raw.records(),
            &[Record {
                user: "u1".into(),
                item: "i9".into(),
                timestamp: Some(100)
            }]
        );
    }

    #[test]
    fn empty_item_token_reports_line() {
        let f = write("# header\nu0\ti0\nu1\t\t100\n");
        match load_interactions(f.path(), DomainId::Target) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_error() {
        let f = write("# only a comment\n");
        assert!(matches!(
            load_interactions(f.path(), DomainId::Target),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_interactions(Path::new("/nonexistent/target.tsv"), DomainId::Target).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/target.tsv"));
        assert!(err.is_validation());
    }

    #[test]
    fn tsv_round_trip() {
        let raw = RawInteractions::from_records(
            DomainId::Source,
            vec![
                Record {
                    user: "a".into(),
                    item: "x".into(),
                    timestamp: Some(1),
                },
                Record {
                    user: "b".into(),
                    item: "y".into(),
                    timestamp: None,
                },
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.tsv");
        raw.write_tsv(&p).unwrap();
        assert_eq!(load_interactions(&p, DomainId::Source).unwrap(), raw);
    }
}
