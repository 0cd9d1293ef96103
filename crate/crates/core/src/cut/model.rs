use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backbone::checkpoint::{Checkpoint, CheckpointKind};
use crate::backbone::embedding::{init_embeddings, EmbeddingTable, TableRole};
use crate::backbone::graph::BipartiteGraph;
use crate::backbone::loss::LossKind;
use crate::backbone::matrix::Matrix;
use crate::backbone::model::{domain_loss_grad, Backbone, BackboneKind, Triple};
use crate::backbone::optim::{adam_step, AdamConfig, GradBuffer, OptimizerState};
use crate::corpus::{InteractionSet, UserPartition};
use crate::cut::contrastive::contrastive_loss;
use crate::cut::objective::LossBreakdown;
use crate::cut::transform::TransformLayer;
use crate::error::{Error, Result};
use crate::eval::TargetScorer;
use crate::similarity::{extract_pairs, SimilarityOracle};

/// Loss weights and switches for one TRANSFER-phase evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub alpha: f64,
    pub lambda: f64,
    pub tau: f64,
    pub loss: LossKind,
    pub contrastive: bool,
    pub normalize: bool,
}

/// Gradient buffers for every trainable table of a [`CutModel`].
#[derive(Debug, Clone)]
pub struct CutGrads {
    pub theta_t: GradBuffer,
    pub theta_o: GradBuffer,
    pub theta_s: GradBuffer,
    pub item_source: GradBuffer,
    pub item_target: GradBuffer,
    pub weight: GradBuffer,
    pub bias: GradBuffer,
}

impl CutGrads {
    pub fn for_model(m: &CutModel) -> Self {
        CutGrads {
            theta_t: GradBuffer::for_table(&m.theta_t),
            theta_o: GradBuffer::for_table(&m.theta_o),
            theta_s: GradBuffer::for_table(&m.theta_s),
            item_source: GradBuffer::for_table(&m.item_source),
            item_target: GradBuffer::for_table(&m.item_target),
            weight: GradBuffer::for_table(&m.transform.weight),
            bias: GradBuffer::for_table(&m.transform.bias),
        }
    }

    pub fn clear(&mut self) {
        for g in self.all_mut() {
            g.clear();
        }
    }

    fn all_mut(&mut self) -> [&mut GradBuffer; 7] {
        [
            &mut self.theta_t,
            &mut self.theta_o,
            &mut self.theta_s,
            &mut self.item_source,
            &mut self.item_target,
            &mut self.weight,
            &mut self.bias,
        ]
    }

    fn all(&self) -> [&GradBuffer; 7] {
        [
            &self.theta_t,
            &self.theta_o,
            &self.theta_s,
            &self.item_source,
            &self.item_target,
            &self.weight,
            &self.bias,
        ]
    }
}

/// Metadata stored next to the tables in a CUT checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CutMeta {
    partition: UserPartition,
    learn_transform: bool,
    #[serde(default)]
    config: serde_json::Value,
}

/// TRANSFER-phase model.
///
/// Target-local user `u` has base row `Θ_t[u]` when `u < target_only`, else
/// `Θ_o[u - target_only]`. Source-local user `r` has base row `Θ_o[r]` when
/// `r < overlap`, else `Θ_s[r - overlap]`. Target scoring always goes through
/// F; source scoring and items never do.
#[derive(Debug, Clone)]
pub struct CutModel {
    pub kind: BackboneKind,
    pub layers: usize,
    pub partition: UserPartition,
    pub theta_t: EmbeddingTable,
    pub theta_o: EmbeddingTable,
    pub theta_s: EmbeddingTable,
    pub item_source: EmbeddingTable,
    pub item_target: EmbeddingTable,
    pub transform: TransformLayer,
    /// False when F is a fixed identity.
    pub learn_transform: bool,
    graph_source: Option<BipartiteGraph>,
    graph_target: Option<BipartiteGraph>,
}

fn check_rows(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidArgument(format!(
            "{what}: {got} users, partition expects {want}"
        )));
    }
    Ok(())
}

impl CutModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: BackboneKind,
        layers: usize,
        dim: usize,
        partition: UserPartition,
        source_train: &InteractionSet,
        target_train: &InteractionSet,
        learn_transform: bool,
        seed: u64,
    ) -> Result<Self> {
        check_rows("source train", source_train.n_users(), partition.n_source())?;
        check_rows("target train", target_train.n_users(), partition.n_target())?;
        let s = |k: u64| seed.wrapping_add(k);
        let (graph_source, graph_target) = Self::graphs(kind, layers, source_train, target_train);
        Ok(CutModel {
            kind,
            layers,
            partition,
            theta_t: init_embeddings(partition.target_only, dim, s(0), TableRole::ThetaT)?,
            theta_o: init_embeddings(partition.overlap, dim, s(1), TableRole::ThetaO)?,
            theta_s: init_embeddings(partition.source_only, dim, s(2), TableRole::ThetaS)?,
            item_source: init_embeddings(source_train.n_items(), dim, s(3), TableRole::ItemSource)?,
            item_target: init_embeddings(target_train.n_items(), dim, s(4), TableRole::ItemTarget)?,
            transform: TransformLayer::identity(dim),
            learn_transform,
            graph_source,
            graph_target,
        })
    }

    fn graphs(
        kind: BackboneKind,
        layers: usize,
        source_train: &InteractionSet,
        target_train: &InteractionSet,
    ) -> (Option<BipartiteGraph>, Option<BipartiteGraph>) {
        match kind {
            BackboneKind::Mf => (None, None),
            BackboneKind::Lightgcn => (
                Some(BipartiteGraph::from_train(source_train, layers)),
                Some(BipartiteGraph::from_train(target_train, layers)),
            ),
        }
    }

    /// Copies TARGET-phase user and item rows into the target-side tables.
    pub fn warm_start_from(&mut self, target: &Backbone) -> Result<()> {
        let n_t = self.partition.target_only;
        check_rows("warm start", target.users.rows(), self.partition.n_target())?;
        if target.users.dim() != self.dim() || target.items.rows() != self.item_target.rows() {
            return Err(Error::InvalidArgument(
                "warm start: TARGET-phase model shape differs".into(),
            ));
        }
        for u in 0..self.partition.n_target() {
            let dst = if u < n_t {
                self.theta_t.values.row_mut(u)
            } else {
                self.theta_o.values.row_mut(u - n_t)
            };
            dst.copy_from_slice(target.users.row(u));
        }
        self.item_target = EmbeddingTable::new(TableRole::ItemTarget, target.items.values.clone());
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.item_target.dim()
    }

    pub fn n_target_users(&self) -> usize {
        self.partition.n_target()
    }

    pub fn n_source_users(&self) -> usize {
        self.partition.n_source()
    }

    /// Untransformed base row of target-local user `u`.
    pub fn target_base_row(&self, u: usize) -> &[f64] {
        let n_t = self.partition.target_only;
        if u < n_t {
            self.theta_t.row(u)
        } else {
            self.theta_o.row(u - n_t)
        }
    }

    /// Base row of source-local user `r`.
    pub fn source_base_row(&self, r: usize) -> &[f64] {
        let n_o = self.partition.overlap;
        if r < n_o {
            self.theta_o.row(r)
        } else {
            self.theta_s.row(r - n_o)
        }
    }

    /// F applied to target-local user `u`.
    pub fn target_user(&self, u: usize) -> Vec<f64> {
        self.apply_f(self.target_base_row(u))
    }

    fn apply_f(&self, base: &[f64]) -> Vec<f64> {
        if self.learn_transform {
            self.transform.apply(base)
        } else {
            base.to_vec()
        }
    }

    /// Layer-0 target user matrix (every row through F).
    pub fn target_layer0(&self) -> Matrix {
        let n = self.n_target_users();
        let mut m = Matrix::zeros(n, self.dim());
        for u in 0..n {
            m.row_mut(u).copy_from_slice(&self.target_user(u));
        }
        m
    }

    /// Layer-0 source user matrix (raw rows).
    pub fn source_layer0(&self) -> Matrix {
        let n = self.n_source_users();
        let mut m = Matrix::zeros(n, self.dim());
        for r in 0..n {
            m.row_mut(r).copy_from_slice(self.source_base_row(r));
        }
        m
    }

    /// Output embeddings of the source domain.
    pub fn source_embeddings(&self) -> (Matrix, Matrix) {
        let users = self.source_layer0();
        match &self.graph_source {
            Some(g) => g.propagate(&users, &self.item_source.values),
            None => (users, self.item_source.values.clone()),
        }
    }

    /// Loss of one paired batch and its gradient with respect to every
    /// trainable table. `src` uses source-local users and source items, `tgt`
    /// target-local users and target items. Buffers are accumulated into, not
    /// cleared.
    pub fn loss_and_grads(
        &self,
        src: &[Triple],
        tgt: &[Triple],
        oracle: Option<&SimilarityOracle>,
        opts: &StepOptions,
        grads: &mut CutGrads,
    ) -> Result<LossBreakdown> {
        let dim = self.dim();
        let lightgcn = self.kind == BackboneKind::Lightgcn;

        // Target domain: rows -> F -> backbone.
        let (t_ids, t_pos) = row_set(tgt, self.n_target_users(), lightgcn);
        let mut t_base = Matrix::zeros(t_ids.len(), dim);
        let mut h = Matrix::zeros(t_ids.len(), dim);
        for (k, &u) in t_ids.iter().enumerate() {
            let base = self.target_base_row(u);
            t_base.row_mut(k).copy_from_slice(base);
            if self.learn_transform {
                self.transform.apply_into(base, h.row_mut(k));
            } else {
                h.row_mut(k).copy_from_slice(base);
            }
        }
        let mut gh = GradBuffer::new(t_ids.len(), dim);
        let mut l_t = 0.0;
        let mut l_c = 0.0;
        if !tgt.is_empty() {
            let remapped = remap(tgt, &t_pos);
            l_t = domain_loss_grad(
                self.graph_target.as_ref(),
                &h,
                &self.item_target.values,
                &remapped,
                opts.loss,
                1.0 - opts.alpha,
                &mut gh,
                &mut grads.item_target,
            );
            if opts.contrastive {
                let oracle = oracle
                    .ok_or_else(|| Error::InvalidArgument("contrastive term needs a similarity oracle".into()))?;
                let batch_users: Vec<usize> = tgt.iter().map(|t| t.0).collect();
                let pairs = extract_pairs(&batch_users, oracle)?;
                let mut hb = Matrix::zeros(pairs.users.len(), dim);
                for (k, u) in pairs.users.iter().enumerate() {
                    hb.row_mut(k).copy_from_slice(h.row(t_pos[u]));
                }
                let (lc, dhb) = contrastive_loss(&hb, &pairs, opts.tau, opts.normalize);
                l_c = lc;
                if !pairs.similar.is_empty() {
                    for (k, u) in pairs.users.iter().enumerate() {
                        gh.add_row(t_pos[u], opts.lambda, dhb.row(k));
                    }
                }
            }
        }

        // Back through F into the base tables.
        let n_t = self.partition.target_only;
        let mut d_w = vec![0.0; dim * dim];
        let mut d_b = vec![0.0; dim];
        for &r in gh.touched() {
            let g = gh.row(r);
            let du = if self.learn_transform {
                self.transform.backward(t_base.row(r), g, &mut d_w, &mut d_b)
            } else {
                g.to_vec()
            };
            let u = t_ids[r];
            if u < n_t {
                grads.theta_t.add_row(u, 1.0, &du);
            } else {
                grads.theta_o.add_row(u - n_t, 1.0, &du);
            }
        }
        if self.learn_transform && !gh.touched().is_empty() {
            for a in 0..dim {
                grads.weight.add_row(a, 1.0, &d_w[a * dim..(a + 1) * dim]);
            }
            grads.bias.add_row(0, 1.0, &d_b);
        }

        // Source domain: raw rows -> backbone.
        let mut l_s = 0.0;
        if !src.is_empty() {
            let (s_ids, s_pos) = row_set(src, self.n_source_users(), lightgcn);
            let mut s_base = Matrix::zeros(s_ids.len(), dim);
            for (k, &r) in s_ids.iter().enumerate() {
                s_base.row_mut(k).copy_from_slice(self.source_base_row(r));
            }
            let mut gs = GradBuffer::new(s_ids.len(), dim);
            l_s = domain_loss_grad(
                self.graph_source.as_ref(),
                &s_base,
                &self.item_source.values,
                &remap(src, &s_pos),
                opts.loss,
                opts.alpha,
                &mut gs,
                &mut grads.item_source,
            );
            let n_o = self.partition.overlap;
            for &k in gs.touched() {
                let r = s_ids[k];
                if r < n_o {
                    grads.theta_o.add_row(r, 1.0, gs.row(k));
                } else {
                    grads.theta_s.add_row(r - n_o, 1.0, gs.row(k));
                }
            }
        }

        let out = LossBreakdown::new(l_t, l_s, l_c, opts.alpha, opts.lambda);
        if !out.is_finite() {
            return Err(Error::NonFinite {
                context: format!("transfer loss (L_t={l_t}, L_s={l_s}, L_c={l_c})"),
            });
        }
        Ok(out)
    }

    pub fn tables(&self) -> [&EmbeddingTable; 7] {
        [
            &self.theta_t,
            &self.theta_o,
            &self.theta_s,
            &self.item_source,
            &self.item_target,
            &self.transform.weight,
            &self.transform.bias,
        ]
    }

    fn tables_mut(&mut self) -> [&mut EmbeddingTable; 7] {
        [
            &mut self.theta_t,
            &mut self.theta_o,
            &mut self.theta_s,
            &mut self.item_source,
            &mut self.item_target,
            &mut self.transform.weight,
            &mut self.transform.bias,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tables().iter().all(|t| t.values.is_finite())
    }

    pub fn to_checkpoint(&self, config: serde_json::Value, step: u64) -> Result<Checkpoint> {
        let meta = CutMeta {
            partition: self.partition,
            learn_transform: self.learn_transform,
            config,
        };
        Ok(Checkpoint::new(
            CheckpointKind::Cut,
            self.kind,
            self.layers,
            self.tables().into_iter().cloned().collect(),
            serde_json::to_value(meta)?,
            step,
        ))
    }

    /// Rebuilds a model from a checkpoint; graphs come from the train splits.
    pub fn from_checkpoint(
        ckpt: &Checkpoint,
        source_train: &InteractionSet,
        target_train: &InteractionSet,
    ) -> Result<Self> {
        if ckpt.header.kind != CheckpointKind::Cut {
            return Err(Error::Checkpoint("expected a CUT checkpoint".into()));
        }
        let meta: CutMeta = serde_json::from_value(ckpt.header.hyperparameters.clone())
            .map_err(|e| Error::Checkpoint(format!("bad CUT metadata: {e}")))?;
        let p = meta.partition;
        check_rows("source train", source_train.n_users(), p.n_source())?;
        check_rows("target train", target_train.n_users(), p.n_target())?;
        let get = |role: TableRole, rows: usize| -> Result<EmbeddingTable> {
            let t = ckpt.table(role)?.clone();
            if t.rows() != rows {
                return Err(Error::Checkpoint(format!(
                    "table {role}: {} rows, expected {rows}",
                    t.rows()
                )));
            }
            Ok(t)
        };
        let item_source = get(TableRole::ItemSource, source_train.n_items())?;
        let item_target = get(TableRole::ItemTarget, target_train.n_items())?;
        let dim = item_target.dim();
        let weight = get(TableRole::TransformWeight, dim)?;
        let bias = get(TableRole::TransformBias, 1)?;
        let (graph_source, graph_target) =
            Self::graphs(ckpt.header.backbone, ckpt.header.layers, source_train, target_train);
        let model = CutModel {
            kind: ckpt.header.backbone,
            layers: ckpt.header.layers,
            partition: p,
            theta_t: get(TableRole::ThetaT, p.target_only)?,
            theta_o: get(TableRole::ThetaO, p.overlap)?,
            theta_s: get(TableRole::ThetaS, p.source_only)?,
            item_source,
            item_target,
            transform: TransformLayer { weight, bias },
            learn_transform: meta.learn_transform,
            graph_source,
            graph_target,
        };
        if model
            .tables()
            .iter()
            .any(|t| t.dim() != dim && t.role != TableRole::TransformBias)
        {
            return Err(Error::Checkpoint("tables disagree on embedding dim".into()));
        }
        Ok(model)
    }
}

impl TargetScorer for CutModel {
    fn target_embeddings(&self) -> (Matrix, Matrix) {
        let users = self.target_layer0();
        match &self.graph_target {
            Some(g) => g.propagate(&users, &self.item_target.values),
            None => (users, self.item_target.values.clone()),
        }
    }
}

/// Rows a batch needs: every row when propagating over a graph, otherwise
/// the distinct batch users. Returns the row ids and their positions.
fn row_set(triples: &[Triple], n: usize, all: bool) -> (Vec<usize>, HashMap<usize, usize>) {
    if all {
        return ((0..n).collect(), (0..n).map(|u| (u, u)).collect());
    }
    let mut ids = Vec::new();
    let mut pos = HashMap::new();
    for &(u, _, _) in triples {
        pos.entry(u).or_insert_with(|| {
            ids.push(u);
            ids.len() - 1
        });
    }
    (ids, pos)
}

fn remap(triples: &[Triple], pos: &HashMap<usize, usize>) -> Vec<Triple> {
    triples.iter().map(|&(u, p, n)| (pos[&u], p, n)).collect()
}

/// A [`CutModel`] with its optimizer and scratch buffers.
pub struct CutTrainer {
    pub model: CutModel,
    pub opt: OptimizerState,
    grads: CutGrads,
}

impl CutTrainer {
    pub fn new(model: CutModel, adam: AdamConfig) -> Self {
        let opt = OptimizerState::new(adam, &model.tables());
        let grads = CutGrads::for_model(&model);
        CutTrainer { model, opt, grads }
    }

    /// One paired step: forward, backward, one Adam update over every touched
    /// row (W and b included when F is learnable).
    pub fn step(
        &mut self,
        src: &[Triple],
        tgt: &[Triple],
        oracle: Option<&SimilarityOracle>,
        opts: &StepOptions,
    ) -> Result<LossBreakdown> {
        self.grads.clear();
        let out = self
            .model
            .loss_and_grads(src, tgt, oracle, opts, &mut self.grads)
            .map_err(|e| match e {
                Error::NonFinite { context } => Error::NonFinite {
                    context: format!("{context} at step {}", self.opt.step() + 1),
                },
                other => other,
            })?;
        adam_step(&mut self.model.tables_mut(), &self.grads.all(), &mut self.opt)?;
        Ok(out)
    }

    pub fn grads(&self) -> &CutGrads {
        &self.grads
    }
}
