use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::embedding::{init_embeddings, EmbeddingTable, TableRole};
use crate::backbone::graph::BipartiteGraph;
use crate::backbone::loss::{score_loss, LossKind};
use crate::backbone::matrix::{axpy, dot, Matrix};
use crate::backbone::optim::{adam_step, AdamConfig, GradBuffer, OptimizerState};
use crate::backbone::sampler::sample_negatives;
use crate::corpus::InteractionSet;
use crate::cut::LossBreakdown;
use crate::error::{Error, Result};
use crate::eval::TargetScorer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Mf,
    Lightgcn,
}

/// (user, positive item, negative item), domain-local indices.
pub type Triple = (usize, usize, usize);

/// Dot-product score.
#[inline]
pub fn mf_score(user: &[f64], item: &[f64]) -> f64 {
    dot(user, item)
}

/// Samples one negative per (user, positive) pair.
pub fn attach_negatives(batch: &[(usize, usize)], train: &InteractionSet, rng: &mut impl Rng) -> Result<Vec<Triple>> {
    batch
        .iter()
        .map(|&(u, p)| {
            let n = sample_negatives(u, train.row(u), train.n_items(), 1, rng)?[0];
            Ok((u, p, n))
        })
        .collect()
}

/// Prediction loss of one domain batch and its gradient with respect to the
/// layer-0 user and item embeddings.
///
/// `scale · dL/dE` is accumulated into the buffers. With a graph the scores
/// use LightGCN output embeddings and the gradient is pushed back through the
/// (symmetric) propagation; without one, scores use `users0`/`items0`
/// directly and only the rows named in `triples` need to be valid.
#[allow(clippy::too_many_arguments)]
pub fn domain_loss_grad(
    graph: Option<&BipartiteGraph>,
    users0: &Matrix,
    items0: &Matrix,
    triples: &[Triple],
    loss: LossKind,
    scale: f64,
    user_grad: &mut GradBuffer,
    item_grad: &mut GradBuffer,
) -> f64 {
    let propagated;
    let (fu, fi) = match graph {
        Some(g) => {
            propagated = g.propagate(users0, items0);
            (&propagated.0, &propagated.1)
        }
        None => (users0, items0),
    };
    let pos: Vec<f64> = triples
        .iter()
        .map(|&(u, p, _)| mf_score(fu.row(u), fi.row(p)))
        .collect();
    let neg: Vec<f64> = triples
        .iter()
        .map(|&(u, _, n)| mf_score(fu.row(u), fi.row(n)))
        .collect();
    let l = score_loss(loss, &pos, &neg);
    match graph {
        None => {
            for (k, &(u, p, n)) in triples.iter().enumerate() {
                let (gp, gn) = (scale * l.d_pos[k], scale * l.d_neg[k]);
                user_grad.add_row(u, gp, fi.row(p));
                user_grad.add_row(u, gn, fi.row(n));
                item_grad.add_row(p, gp, fu.row(u));
                item_grad.add_row(n, gn, fu.row(u));
            }
        }
        Some(g) => {
            let dim = users0.dim();
            let mut gu = Matrix::zeros(users0.rows(), dim);
            let mut gi = Matrix::zeros(items0.rows(), dim);
            let mut seed_users = Vec::with_capacity(triples.len());
            let mut seed_items = Vec::with_capacity(2 * triples.len());
            for (k, &(u, p, n)) in triples.iter().enumerate() {
                let (gp, gn) = (scale * l.d_pos[k], scale * l.d_neg[k]);
                axpy(gp, fi.row(p), gu.row_mut(u));
                axpy(gn, fi.row(n), gu.row_mut(u));
                axpy(gp, fu.row(u), gi.row_mut(p));
                axpy(gn, fu.row(u), gi.row_mut(n));
                seed_users.push(u);
                seed_items.push(p);
                seed_items.push(n);
            }
            let (bu, bi) = g.propagate(&gu, &gi);
            let (ru, ri) = g.reach(&seed_users, &seed_items);
            for (u, hit) in ru.iter().enumerate() {
                if *hit {
                    user_grad.add_row(u, 1.0, bu.row(u));
                }
            }
            for (i, hit) in ri.iter().enumerate() {
                if *hit {
                    item_grad.add_row(i, 1.0, bi.row(i));
                }
            }
        }
    }
    l.loss
}

/// Single-domain recommender: user and item tables, optionally a LightGCN
/// graph over the training interactions.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub kind: BackboneKind,
    pub users: EmbeddingTable,
    pub items: EmbeddingTable,
    pub graph: Option<BipartiteGraph>,
}

impl Backbone {
    pub fn new(
        kind: BackboneKind,
        train: &InteractionSet,
        dim: usize,
        layers: usize,
        seed: u64,
        roles: (TableRole, TableRole),
    ) -> Result<Self> {
        let users = init_embeddings(train.n_users(), dim, seed, roles.0)?;
        let items = init_embeddings(train.n_items(), dim, seed.wrapping_add(1), roles.1)?;
        let graph = match kind {
            BackboneKind::Mf => None,
            BackboneKind::Lightgcn => Some(BipartiteGraph::from_train(train, layers)),
        };
        Ok(Backbone {
            kind,
            users,
            items,
            graph,
        })
    }

    /// Output embeddings used for scoring.
    pub fn final_embeddings(&self) -> (Matrix, Matrix) {
        match &self.graph {
            Some(g) => g.propagate(&self.users.values, &self.items.values),
            None => (self.users.values.clone(), self.items.values.clone()),
        }
    }

    pub fn loss_and_grads(
        &self,
        triples: &[Triple],
        loss: LossKind,
        user_grad: &mut GradBuffer,
        item_grad: &mut GradBuffer,
    ) -> f64 {
        domain_loss_grad(
            self.graph.as_ref(),
            &self.users.values,
            &self.items.values,
            triples,
            loss,
            1.0,
            user_grad,
            item_grad,
        )
    }
}

impl TargetScorer for Backbone {
    fn target_embeddings(&self) -> (Matrix, Matrix) {
        self.final_embeddings()
    }
}

/// Backbone plus the optimizer and scratch buffers needed to train it.
pub struct SingleDomainTrainer {
    pub model: Backbone,
    pub opt: OptimizerState,
    user_grad: GradBuffer,
    item_grad: GradBuffer,
}

impl SingleDomainTrainer {
    pub fn new(model: Backbone, adam: AdamConfig) -> Self {
        let opt = OptimizerState::new(adam, &[&model.users, &model.items]);
        let user_grad = GradBuffer::for_table(&model.users);
        let item_grad = GradBuffer::for_table(&model.items);
        SingleDomainTrainer {
            model,
            opt,
            user_grad,
            item_grad,
        }
    }

    /// Forward, negative sampling, loss, backward and one Adam step.
    pub fn train_step(
        &mut self,
        batch: &[(usize, usize)],
        train: &InteractionSet,
        loss: LossKind,
        rng: &mut impl Rng,
    ) -> Result<LossBreakdown> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty training batch".into()));
        }
        let triples = attach_negatives(batch, train, rng)?;
        self.step_on_triples(&triples, loss)
    }

    pub fn step_on_triples(&mut self, triples: &[Triple], loss: LossKind) -> Result<LossBreakdown> {
        self.user_grad.clear();
        self.item_grad.clear();
        let l = self
            .model
            .loss_and_grads(triples, loss, &mut self.user_grad, &mut self.item_grad);
        if !l.is_finite() {
            return Err(Error::NonFinite {
                context: format!("single-domain loss at step {}", self.opt.step() + 1),
            });
        }
        adam_step(
            &mut [&mut self.model.users, &mut self.model.items],
            &[&self.user_grad, &self.item_grad],
            &mut self.opt,
        )?;
        Ok(LossBreakdown::single_domain(l))
    }

    pub fn touched_users(&self) -> &[usize] {
        self.user_grad.touched()
    }

    pub fn touched_items(&self) -> &[usize] {
        self.item_grad.touched()
    }
}
