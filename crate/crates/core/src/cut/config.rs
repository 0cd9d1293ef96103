use serde::{Deserialize, Serialize};

use crate::backbone::loss::LossKind;
use crate::backbone::model::BackboneKind;
use crate::backbone::optim::AdamConfig;
use crate::error::{Error, Result};

/// Ablation switches for the TRANSFER phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Drop the contrastive term.
    pub no_contrastive: bool,
    /// Replace F by a fixed identity map.
    pub no_transform: bool,
    /// Derive similarity from training histories instead of TARGET-phase embeddings.
    pub history_similarity: bool,
    /// Shared user embeddings, weighted losses, no F and no contrastive term.
    pub joint_training_baseline: bool,
}

impl Ablation {
    pub fn uses_transform(&self) -> bool {
        !(self.no_transform || self.joint_training_baseline)
    }

    pub fn uses_contrastive(&self) -> bool {
        !(self.no_contrastive || self.joint_training_baseline)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    /// Source-domain loss weight.
    pub alpha: f64,
    /// Contrastive loss weight.
    pub lambda: f64,
    pub tau: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub loss: LossKind,
    pub backbone: BackboneKind,
    pub layers: usize,
    pub dim: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Validate every this many epochs.
    pub eval_every: usize,
    pub seed: u64,
    /// Initialize TRANSFER-phase target user rows from the TARGET-phase model.
    pub warm_start: bool,
    /// Use cosine instead of raw dot products inside the contrastive term.
    pub normalize_contrastive: bool,
    pub ablation: Ablation,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            alpha: 0.2,
            lambda: 1e-4,
            tau: 0.1,
            gamma: 0.9,
            batch_size: 2048,
            lr: 0.001,
            weight_decay: 1e-6,
            loss: LossKind::Bce,
            backbone: BackboneKind::Lightgcn,
            layers: 2,
            dim: 64,
            max_epochs: 300,
            patience: 10,
            eval_every: 1,
            seed: 0,
            warm_start: false,
            normalize_contrastive: false,
            ablation: Ablation::default(),
        }
    }
}

impl TrainingConfig {
    /// Amazon-style defaults: BCE, λ = 1e-4, weight decay 1e-6.
    pub fn amazon_like() -> Self {
        TrainingConfig::default()
    }

    /// Douban-style defaults: BPR, λ = 5e-5, weight decay 1e-7.
    pub fn douban_like() -> Self {
        TrainingConfig {
            loss: LossKind::Bpr,
            lambda: 5e-5,
            weight_decay: 1e-7,
            ..TrainingConfig::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "amazon-like" => Ok(Self::amazon_like()),
            "douban-like" => Ok(Self::douban_like()),
            other => Err(Error::Config {
                key: "preset".into(),
                message: format!("unknown preset {other:?} (expected amazon-like or douban-like)"),
            }),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    /// Effective LightGCN depth (0 for MF).
    pub fn graph_layers(&self) -> usize {
        match self.backbone {
            BackboneKind::Mf => 0,
            BackboneKind::Lightgcn => self.layers,
        }
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Config {
                key: key.into(),
                message,
            })
        };
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", format!("{} not in [0, 1]", self.alpha));
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda", format!("{} must be >= 0", self.lambda));
        }
        if !(self.tau > 0.0) {
            return bad("tau", format!("{} must be > 0", self.tau));
        }
        if !(self.gamma > -1.0 && self.gamma <= 1.0) {
            return bad("gamma", format!("{} not in (-1, 1]", self.gamma));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        if !(self.lr > 0.0) {
            return bad("lr", format!("{} must be > 0", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay", format!("{} must be >= 0", self.weight_decay));
        }
        if self.dim == 0 {
            return bad("dim", "must be positive".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs", "must be positive".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be positive".into());
        }
        Ok(())
    }
}
