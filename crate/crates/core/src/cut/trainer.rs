//! TARGET and TRANSFER phase orchestration with early stopping.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::checkpoint::{Checkpoint, CheckpointKind};
use crate::backbone::embedding::{EmbeddingTable, TableRole};
use crate::backbone::matrix::Matrix;
use crate::backbone::model::{attach_negatives, Backbone, SingleDomainTrainer};
use crate::corpus::{CrossDomainSplit, SplitDataset, UserPartition};
use crate::cut::config::TrainingConfig;
use crate::cut::model::{CutModel, CutTrainer, StepOptions};
use crate::cut::objective::LossBreakdown;
use crate::error::{Error, Result};
use crate::eval::{evaluate_valid, TargetScorer, DEFAULT_K};
use crate::similarity::SimilarityOracle;

const TARGET_STREAM: u64 = 0x7441_5247;
const TRANSFER_STREAM: u64 = 0x7452_4e53;

/// Patience-based early stopping on a metric where larger is better.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: None,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Strict improvement resets the counter; `patience` consecutive
    /// non-improving observations stop training.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> Verdict {
        let improved = match self.best {
            None => true,
            Some(b) => metric > b,
        };
        if improved {
            self.best = Some(metric);
            self.best_epoch = epoch;
            self.stale = 0;
            return Verdict::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-step losses.
    pub loss: LossBreakdown,
    pub valid_ndcg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_valid_ndcg: f64,
    pub steps: u64,
}

fn mean_breakdown(steps: &[LossBreakdown]) -> LossBreakdown {
    let n = steps.len().max(1) as f64;
    let first = steps
        .first()
        .copied()
        .unwrap_or_else(|| LossBreakdown::single_domain(0.0));
    let avg = |f: fn(&LossBreakdown) -> f64| steps.iter().map(f).sum::<f64>() / n;
    LossBreakdown::new(
        avg(|b| b.l_t),
        avg(|b| b.l_s),
        avg(|b| b.l_c),
        first.alpha,
        first.lambda,
    )
}

/// Epoch loop shared by both phases. `run_epoch` trains one epoch,
/// `valid` scores the current model on validation and `snapshot` copies it.
fn fit<S, M>(
    cfg: &TrainingConfig,
    phase: &str,
    state: &mut S,
    mut run_epoch: impl FnMut(&mut S) -> Result<Vec<LossBreakdown>>,
    valid: impl Fn(&S) -> Result<f64>,
    snapshot: impl Fn(&S) -> M,
    steps: impl Fn(&S) -> u64,
) -> Result<(M, TrainingHistory)> {
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best: Option<M> = None;
    let mut epochs = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        let losses = run_epoch(state).map_err(|e| match e {
            Error::NonFinite { context } => Error::NonFinite {
                context: format!("{phase} epoch {epoch}: {context}"),
            },
            other => other,
        })?;
        let loss = mean_breakdown(&losses);
        let mut valid_ndcg = None;
        let mut stop = false;
        if epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs {
            let v = valid(state)?;
            valid_ndcg = Some(v);
            match stopper.observe(epoch, v) {
                Verdict::Improved => best = Some(snapshot(state)),
                Verdict::Continue => {}
                Verdict::Stop => stop = true,
            }
        }
        debug!(
            "{phase} epoch {epoch}: L_all={:.6} valid NDCG={:?}",
            loss.l_all, valid_ndcg
        );
        epochs.push(EpochLog {
            epoch,
            loss,
            valid_ndcg,
        });
        if stop {
            info!(
                "{phase}: early stop at epoch {epoch}, best epoch {}",
                stopper.best_epoch()
            );
            break;
        }
    }
    let model = best.unwrap_or_else(|| snapshot(state));
    let history = TrainingHistory {
        epochs,
        best_epoch: stopper.best_epoch(),
        best_valid_ndcg: stopper.best().unwrap_or(0.0),
        steps: steps(state),
    };
    Ok((model, history))
}

fn valid_ndcg(model: &impl TargetScorer, split: &SplitDataset) -> Result<f64> {
    let (u, i) = model.target_embeddings();
    Ok(evaluate_valid(&u, &i, split, DEFAULT_K)?.ndcg.mean)
}

/// Output of the TARGET phase.
#[derive(Debug, Clone)]
pub struct TargetPhase {
    /// Best-validation single-domain model.
    pub model: Backbone,
    /// Frozen layer-0 user table of `model`, rounded to f32 so that a
    /// checkpoint reload answers similarity queries identically.
    pub theta_t1: Matrix,
    pub oracle: SimilarityOracle,
    pub checkpoint: Checkpoint,
    pub history: TrainingHistory,
}

/// Trains R1 on target TRAIN, early-stopping on target VALID NDCG@10, then
/// freezes Θ_t1 and builds the similarity oracle.
pub fn run_target_phase(target: &SplitDataset, cfg: &TrainingConfig) -> Result<TargetPhase> {
    cfg.validate()?;
    let model = Backbone::new(
        cfg.backbone,
        &target.train,
        cfg.dim,
        cfg.graph_layers(),
        cfg.seed,
        (TableRole::ThetaT1, TableRole::ItemTarget),
    )?;
    let mut trainer = SingleDomainTrainer::new(model, cfg.adam());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ TARGET_STREAM);
    let mut pairs: Vec<(usize, usize)> = target.train.pairs().collect();
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("target TRAIN split is empty".into()));
    }
    let (mut best, history) = fit(
        cfg,
        "TARGET",
        &mut trainer,
        |tr| {
            pairs.shuffle(&mut rng);
            pairs
                .chunks(cfg.batch_size)
                .map(|b| tr.train_step(b, &target.train, cfg.loss, &mut rng))
                .collect()
        },
        |tr| valid_ndcg(&tr.model, target),
        |tr| tr.model.clone(),
        |tr| tr.opt.step(),
    )?;
    best.users.values.round_to_f32();
    best.items.values.round_to_f32();
    let theta_t1 = best.users.values.clone();
    let oracle = build_oracle(cfg, &theta_t1, target)?;
    let checkpoint = Checkpoint::new(
        CheckpointKind::Target,
        cfg.backbone,
        cfg.graph_layers(),
        vec![best.users.clone(), best.items.clone()],
        serde_json::to_value(cfg)?,
        history.steps,
    );
    info!(
        "TARGET phase done: best epoch {}, valid NDCG@10 {:.4}",
        history.best_epoch, history.best_valid_ndcg
    );
    Ok(TargetPhase {
        model: best,
        theta_t1,
        oracle,
        checkpoint,
        history,
    })
}

fn build_oracle(cfg: &TrainingConfig, theta_t1: &Matrix, target: &SplitDataset) -> Result<SimilarityOracle> {
    if cfg.ablation.history_similarity {
        SimilarityOracle::from_history(target.train.clone(), cfg.gamma)
    } else {
        SimilarityOracle::from_embeddings(theta_t1.clone(), cfg.gamma)
    }
}

/// Restores the TARGET-phase model from its checkpoint.
pub fn target_model_from_checkpoint(ckpt: &Checkpoint, target: &SplitDataset) -> Result<Backbone> {
    if ckpt.header.kind != CheckpointKind::Target {
        return Err(Error::Checkpoint("expected a TARGET checkpoint".into()));
    }
    let users = ckpt.table(TableRole::ThetaT1)?.clone();
    let items = ckpt.table(TableRole::ItemTarget)?.clone();
    if users.rows() != target.n_users() || items.rows() != target.n_items() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {}x{} users/items, dataset has {}x{}",
            users.rows(),
            items.rows(),
            target.n_users(),
            target.n_items()
        )));
    }
    let graph = match ckpt.header.backbone {
        crate::backbone::BackboneKind::Mf => None,
        crate::backbone::BackboneKind::Lightgcn => Some(crate::backbone::BipartiteGraph::from_train(
            &target.train,
            ckpt.header.layers,
        )),
    };
    Ok(Backbone {
        kind: ckpt.header.backbone,
        users,
        items,
        graph,
    })
}

/// Rebuilds the similarity oracle from a TARGET checkpoint.
pub fn oracle_from_checkpoint(
    ckpt: &Checkpoint,
    target: &SplitDataset,
    cfg: &TrainingConfig,
) -> Result<SimilarityOracle> {
    let theta: &EmbeddingTable = ckpt.table(TableRole::ThetaT1)?;
    build_oracle(cfg, &theta.values, target)
}

/// Output of the TRANSFER phase.
#[derive(Debug, Clone)]
pub struct TransferPhase {
    pub model: CutModel,
    pub history: TrainingHistory,
}

impl TransferPhase {
    pub fn checkpoint(&self, cfg: &TrainingConfig) -> Result<Checkpoint> {
        self.model.to_checkpoint(serde_json::to_value(cfg)?, self.history.steps)
    }
}

/// Source interactions served in shuffled passes, reshuffled on wrap-around.
struct Recycler {
    pairs: Vec<(usize, usize)>,
    cursor: usize,
}

impl Recycler {
    fn next_batch(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(n);
        if self.pairs.is_empty() {
            return out;
        }
        while out.len() < n {
            if self.cursor == 0 {
                self.pairs.shuffle(rng);
            }
            let take = (n - out.len()).min(self.pairs.len() - self.cursor);
            out.extend_from_slice(&self.pairs[self.cursor..self.cursor + take]);
            self.cursor = (self.cursor + take) % self.pairs.len();
        }
        out
    }
}

pub fn step_options(cfg: &TrainingConfig) -> StepOptions {
    StepOptions {
        alpha: cfg.alpha,
        lambda: if cfg.ablation.joint_training_baseline {
            0.0
        } else {
            cfg.lambda
        },
        tau: cfg.tau,
        loss: cfg.loss,
        contrastive: cfg.ablation.uses_contrastive(),
        normalize: cfg.normalize_contrastive,
    }
}

/// Trains Φ2 on both domains. One epoch is one pass over the shuffled target
/// TRAIN interactions; each target batch is paired with an equally sized
/// source batch from a recycled stream. Early-stops on target VALID NDCG@10
/// and returns the best-validation model.
pub fn run_transfer_phase(
    partition: UserPartition,
    split: &CrossDomainSplit,
    cfg: &TrainingConfig,
    oracle: Option<&SimilarityOracle>,
    warm_start: Option<&Backbone>,
) -> Result<TransferPhase> {
    cfg.validate()?;
    let opts = step_options(cfg);
    if opts.contrastive && oracle.is_none() {
        return Err(Error::InvalidArgument(
            "contrastive training needs the TARGET-phase oracle".into(),
        ));
    }
    let mut model = CutModel::new(
        cfg.backbone,
        cfg.graph_layers(),
        cfg.dim,
        partition,
        &split.source.train,
        &split.target.train,
        cfg.ablation.uses_transform(),
        cfg.seed,
    )?;
    if cfg.warm_start {
        let phi1 =
            warm_start.ok_or_else(|| Error::InvalidArgument("warm_start needs the TARGET-phase model".into()))?;
        model.warm_start_from(phi1)?;
    }
    let mut trainer = CutTrainer::new(model, cfg.adam());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ TRANSFER_STREAM);
    let mut target_pairs: Vec<(usize, usize)> = split.target.train.pairs().collect();
    if target_pairs.is_empty() {
        return Err(Error::InvalidArgument("target TRAIN split is empty".into()));
    }
    let mut source = Recycler {
        pairs: split.source.train.pairs().collect(),
        cursor: 0,
    };
    let (model, history) = fit(
        cfg,
        "TRANSFER",
        &mut trainer,
        |tr| {
            target_pairs.shuffle(&mut rng);
            let mut out = Vec::with_capacity(target_pairs.len().div_ceil(cfg.batch_size));
            for tb in target_pairs.chunks(cfg.batch_size) {
                let sb = source.next_batch(tb.len(), &mut rng);
                let src = attach_negatives(&sb, &split.source.train, &mut rng)?;
                let tgt = attach_negatives(tb, &split.target.train, &mut rng)?;
                out.push(tr.step(&src, &tgt, oracle, &opts)?);
            }
            Ok(out)
        },
        |tr| valid_ndcg(&tr.model, &split.target),
        |tr| tr.model.clone(),
        |tr| tr.opt.step(),
    )?;
    info!(
        "TRANSFER phase done: best epoch {}, valid NDCG@10 {:.4}",
        history.best_epoch, history.best_valid_ndcg
    );
    Ok(TransferPhase { model, history })
}

/// Both phases end to end.
#[derive(Debug, Clone)]
pub struct CutRun {
    pub target: TargetPhase,
    pub transfer: TransferPhase,
}

pub fn run_cut(partition: UserPartition, split: &CrossDomainSplit, cfg: &TrainingConfig) -> Result<CutRun> {
    let target = run_target_phase(&split.target, cfg)?;
    let transfer = run_transfer_phase(partition, split, cfg, Some(&target.oracle), Some(&target.model))?;
    Ok(CutRun { target, transfer })
}
