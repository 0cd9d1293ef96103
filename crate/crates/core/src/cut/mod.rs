//! Two-phase cross-domain training: a user transformation layer on target
//! users, a similarity-preserving contrastive regularizer, and the
//! TARGET/TRANSFER orchestration.

pub mod config;
pub mod contrastive;
pub mod model;
pub mod objective;
pub mod trainer;
pub mod transform;

pub use config::{Ablation, TrainingConfig};
pub use contrastive::contrastive_loss;
pub use model::{CutGrads, CutModel, CutTrainer, StepOptions};
pub use objective::{total_loss, LossBreakdown};
pub use trainer::{
    oracle_from_checkpoint, run_cut, run_target_phase, run_transfer_phase, step_options, target_model_from_checkpoint,
    CutRun, EarlyStopper, EpochLog, TargetPhase, TrainingHistory, TransferPhase, Verdict,
};
pub use transform::{transform, TransformLayer};
