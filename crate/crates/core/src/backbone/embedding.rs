use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::backbone::matrix::Matrix;
use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 64;
pub const INIT_STD: f64 = 0.1;

/// Which parameter block a table holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableRole {
    /// Target users of the single-domain TARGET-phase model.
    ThetaT1,
    ThetaT,
    ThetaO,
    ThetaS,
    ItemSource,
    ItemTarget,
    TransformWeight,
    TransformBias,
}

impl fmt::Display for TableRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("role serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub role: TableRole,
    pub values: Matrix,
}

impl EmbeddingTable {
    pub fn new(role: TableRole, values: Matrix) -> Self {
        EmbeddingTable { role, values }
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.dim()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        self.values.row(r)
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.values.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite {
                context: format!("embedding table {}", self.role),
            })
        }
    }
}

/// i.i.d. N(0, 0.1) entries drawn from a ChaCha stream seeded by `seed`.
pub fn init_embeddings(rows: usize, dim: usize, seed: u64, role: TableRole) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::InvalidArgument("embedding dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    let data = (0..rows * dim).map(|_| normal.sample(&mut rng)).collect();
    Ok(EmbeddingTable::new(role, Matrix::from_vec(rows, dim, data)))
}
