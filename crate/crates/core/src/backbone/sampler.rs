use rand::Rng;

use crate::error::{Error, Result};

/// Uniform draws from items not in `train_row` (sorted), by rejection.
pub fn sample_negatives(
    user: usize,
    train_row: &[usize],
    n_items: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if train_row.len() >= n_items {
        return Err(Error::NoNegative { user });
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let j = rng.random_range(0..n_items);
        if train_row.binary_search(&j).is_err() {
            out.push(j);
        }
    }
    Ok(out)
}
