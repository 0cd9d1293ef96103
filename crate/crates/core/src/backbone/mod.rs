//! Single-domain backbones (MF, LightGCN), losses, sampling and optimization.

pub mod checkpoint;
pub mod embedding;
pub mod graph;
pub mod loss;
pub mod matrix;
pub mod model;
pub mod optim;
pub mod sampler;

pub use checkpoint::{Checkpoint, CheckpointKind};
pub use embedding::{init_embeddings, EmbeddingTable, TableRole};
pub use graph::BipartiteGraph;
pub use loss::{bce_loss, bpr_loss, LossKind};
pub use matrix::Matrix;
pub use model::{mf_score, Backbone, BackboneKind, SingleDomainTrainer, Triple};
pub use optim::{adam_step, AdamConfig, GradBuffer, OptimizerState};
pub use sampler::sample_negatives;
