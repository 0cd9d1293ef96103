//! Row-sparse gradient buffers and Adam with coupled L2 weight decay.

use serde::{Deserialize, Serialize};

use crate::backbone::embedding::EmbeddingTable;
use crate::backbone::matrix::Matrix;
use crate::error::{Error, Result};

/// Gradient accumulator that remembers which rows were written, so clearing
/// and applying cost O(touched rows) instead of O(table).
#[derive(Debug, Clone)]
pub struct GradBuffer {
    values: Matrix,
    flags: Vec<bool>,
    touched: Vec<usize>,
}

impl GradBuffer {
    pub fn new(rows: usize, dim: usize) -> Self {
        GradBuffer {
            values: Matrix::zeros(rows, dim),
            flags: vec![false; rows],
            touched: Vec::new(),
        }
    }

    pub fn for_table(table: &EmbeddingTable) -> Self {
        Self::new(table.rows(), table.dim())
    }

    pub fn touch(&mut self, r: usize) {
        if !self.flags[r] {
            self.flags[r] = true;
            self.touched.push(r);
        }
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        self.touch(r);
        self.values.row_mut(r)
    }

    pub fn add_row(&mut self, r: usize, scale: f64, src: &[f64]) {
        let row = self.row_mut(r);
        for (g, s) in row.iter_mut().zip(src) {
            *g += scale * s;
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        self.values.row(r)
    }

    pub fn is_touched(&self, r: usize) -> bool {
        self.flags[r]
    }

    /// Touched rows in first-touch order.
    pub fn touched(&self) -> &[usize] {
        &self.touched
    }

    pub fn clear(&mut self) {
        for &r in &self.touched {
            self.flags[r] = false;
            self.values.row_mut(r).fill(0.0);
        }
        self.touched.clear();
    }

    pub fn is_finite(&self) -> bool {
        self.touched
            .iter()
            .all(|&r| self.values.row(r).iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Matrix,
    v: Matrix,
}

/// First/second moments per parameter table plus the shared step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub cfg: AdamConfig,
    step: u64,
    moments: Vec<Moments>,
}

impl OptimizerState {
    pub fn new(cfg: AdamConfig, tables: &[&EmbeddingTable]) -> Self {
        OptimizerState {
            cfg,
            step: 0,
            moments: tables
                .iter()
                .map(|t| Moments {
                    m: Matrix::zeros(t.rows(), t.dim()),
                    v: Matrix::zeros(t.rows(), t.dim()),
                })
                .collect(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One Adam step over every touched row of every table. Weight decay is added
/// to the gradient (`g + wd·θ`) before the moment updates; untouched rows and
/// their moments are left alone.
pub fn adam_step(tables: &mut [&mut EmbeddingTable], grads: &[&GradBuffer], state: &mut OptimizerState) -> Result<()> {
    assert_eq!(tables.len(), grads.len(), "one gradient buffer per table");
    assert_eq!(
        tables.len(),
        state.moments.len(),
        "optimizer state built for different tables"
    );
    for (t, g) in tables.iter().zip(grads) {
        if !g.is_finite() {
            return Err(Error::NonFinite {
                context: format!("gradient of {}", t.role),
            });
        }
    }
    state.step += 1;
    let cfg = state.cfg;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((table, grad), mom) in tables.iter_mut().zip(grads).zip(state.moments.iter_mut()) {
        for &r in grad.touched() {
            let g = grad.row(r);
            let theta = table.values.row_mut(r);
            let m = mom.m.row_mut(r);
            let v = mom.v.row_mut(r);
            for d in 0..g.len() {
                let gd = g[d] + cfg.weight_decay * theta[d];
                m[d] = cfg.beta1 * m[d] + (1.0 - cfg.beta1) * gd;
                v[d] = cfg.beta2 * v[d] + (1.0 - cfg.beta2) * gd * gd;
                let mhat = m[d] / bc1;
                let vhat = v[d] / bc2;
                theta[d] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
        table.ensure_finite()?;
    }
    Ok(())
}
