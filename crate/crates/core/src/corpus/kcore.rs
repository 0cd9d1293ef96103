use std::collections::HashMap;

use crate::corpus::raw::RawInteractions;
use crate::error::{Error, Result};

/// Iterated k-core: drops users and items with fewer than `min_count`
/// interactions until no more removals happen.
pub fn filter_k_core(raw: &RawInteractions, min_count: usize) -> Result<RawInteractions> {
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be >= 1".into()));
    }
    let mut keep: Vec<bool> = vec![true; raw.len()];
    loop {
        let mut user_deg: HashMap<&str, usize> = HashMap::new();
        let mut item_deg: HashMap<&str, usize> = HashMap::new();
        for (rec, _) in raw.records().iter().zip(&keep).filter(|(_, k)| **k) {
            *user_deg.entry(rec.user.as_str()).or_default() += 1;
            *item_deg.entry(rec.item.as_str()).or_default() += 1;
        }
        let mut removed = 0usize;
        for (rec, k) in raw.records().iter().zip(keep.iter_mut()) {
            if *k && (user_deg[rec.user.as_str()] < min_count || item_deg[rec.item.as_str()] < min_count) {
                *k = false;
                removed += 1;
            }
        }
        if removed == 0 {
            break;
        }
    }
    let records: Vec<_> = raw
        .records()
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(r, _)| r.clone())
        .collect();
    if records.is_empty() {
        return Err(Error::DatasetCollapsed(min_count));
    }
    RawInteractions::from_records(raw.domain(), records)
}
