//! Brute-force references and finite-difference drivers shared by the
//! integration tests and the acceptance harness.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cutrec::backbone::{Backbone, BackboneKind, GradBuffer, LossKind, Matrix, TableRole, Triple};
use cutrec::corpus::{InteractionSet, UserPartition};
use cutrec::cut::{CutGrads, CutModel, StepOptions};
use cutrec::similarity::{cosine, SimilarityOracle};

pub const FD_STEP: f64 = 1e-5;

pub fn random_train(rng: &mut ChaCha8Rng, users: usize, items: usize) -> InteractionSet {
    let rows = (0..users)
        .map(|_| {
            let n = rng.random_range(1..=items.min(4));
            (0..n).map(|_| rng.random_range(0..items)).collect()
        })
        .collect();
    InteractionSet::new(items, rows).unwrap()
}

pub fn random_triples(rng: &mut ChaCha8Rng, train: &InteractionSet, n: usize) -> Vec<Triple> {
    (0..n)
        .map(|_| {
            let u = rng.random_range(0..train.n_users());
            let row = train.row(u);
            let p = row[rng.random_range(0..row.len())];
            (u, p, rng.random_range(0..train.n_items()))
        })
        .collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        dim,
        (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
}

fn dense(g: &GradBuffer, rows: usize) -> Vec<f64> {
    (0..rows).flat_map(|r| g.row(r).to_vec()).collect()
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, floored for all-zero gradients.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-8)
}

fn numeric_grad<M>(model: &mut M, table: fn(&mut M) -> &mut Matrix, f: &dyn Fn(&M) -> f64) -> Vec<f64> {
    let len = table(model).as_slice().len();
    (0..len)
        .map(|k| {
            let orig = table(model).as_slice()[k];
            table(model).as_mut_slice()[k] = orig + FD_STEP;
            let up = f(model);
            table(model).as_mut_slice()[k] = orig - FD_STEP;
            let down = f(model);
            table(model).as_mut_slice()[k] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Worst relative gradient error over the user and item tables of one random
/// single-domain instance.
pub fn backbone_fd_error(kind: BackboneKind, loss: LossKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nu, ni, dim) = (rng.random_range(3..8), rng.random_range(3..9), rng.random_range(2..6));
    let train = random_train(&mut rng, nu, ni);
    let layers = if kind == BackboneKind::Lightgcn { 2 } else { 0 };
    let mut model = Backbone::new(
        kind,
        &train,
        dim,
        layers,
        seed,
        (TableRole::ThetaT1, TableRole::ItemTarget),
    )
    .unwrap();
    // the default init is tiny; scaling keeps the check away from a flat region
    for x in model
        .users
        .values
        .as_mut_slice()
        .iter_mut()
        .chain(model.items.values.as_mut_slice())
    {
        *x *= 5.0;
    }
    let n = rng.random_range(1..10);
    let triples = random_triples(&mut rng, &train, n);
    let mut gu = GradBuffer::for_table(&model.users);
    let mut gi = GradBuffer::for_table(&model.items);
    model.loss_and_grads(&triples, loss, &mut gu, &mut gi);
    let f = |m: &Backbone| {
        let mut a = GradBuffer::for_table(&m.users);
        let mut b = GradBuffer::for_table(&m.items);
        m.loss_and_grads(&triples, loss, &mut a, &mut b)
    };
    let nu_grad = numeric_grad(&mut model, |m| &mut m.users.values, &f);
    let ni_grad = numeric_grad(&mut model, |m| &mut m.items.values, &f);
    rel_err(&dense(&gu, nu), &nu_grad).max(rel_err(&dense(&gi, ni), &ni_grad))
}

type Accessor = fn(&mut CutModel) -> &mut Matrix;

pub fn cut_tables() -> [(&'static str, Accessor); 7] {
    [
        ("theta_t", |m| &mut m.theta_t.values),
        ("theta_o", |m| &mut m.theta_o.values),
        ("theta_s", |m| &mut m.theta_s.values),
        ("item_source", |m| &mut m.item_source.values),
        ("item_target", |m| &mut m.item_target.values),
        ("W", |m| &mut m.transform.weight.values),
        ("b", |m| &mut m.transform.bias.values),
    ]
}

pub fn grad_of<'a>(g: &'a CutGrads, name: &str) -> &'a GradBuffer {
    match name {
        "theta_t" => &g.theta_t,
        "theta_o" => &g.theta_o,
        "theta_s" => &g.theta_s,
        "item_source" => &g.item_source,
        "item_target" => &g.item_target,
        "W" => &g.weight,
        "b" => &g.bias,
        other => panic!("unknown table {other}"),
    }
}

pub struct CutInstance {
    pub model: CutModel,
    pub src: Vec<Triple>,
    pub tgt: Vec<Triple>,
    pub oracle: SimilarityOracle,
    pub opts: StepOptions,
}

/// Random CUT step. `sizes` is (target-only, overlap, source-only, items);
/// every target user appears in the target batch so L_c sees several users,
/// and γ = 0 on random Θ_t1 marks roughly half the pairs similar.
pub fn cut_instance(seed: u64, kind: BackboneKind, sizes: Option<(usize, usize, usize, usize)>) -> CutInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t_only, overlap, s_only, items) = sizes.unwrap_or((
        rng.random_range(1..4),
        rng.random_range(1..4),
        rng.random_range(1..4),
        rng.random_range(4..9),
    ));
    let dim = rng.random_range(2..5);
    let p = UserPartition {
        target_only: t_only,
        overlap,
        source_only: s_only,
    };
    let src_train = random_train(&mut rng, p.n_source(), items);
    let tgt_train = random_train(&mut rng, p.n_target(), items);
    let layers = if kind == BackboneKind::Lightgcn { 2 } else { 0 };
    let mut model = CutModel::new(kind, layers, dim, p, &src_train, &tgt_train, true, seed).unwrap();
    for (_, t) in cut_tables() {
        for x in t(&mut model).as_mut_slice() {
            *x += rng.random_range(-0.5..0.5);
        }
    }
    let n = rng.random_range(1..8);
    let src = random_triples(&mut rng, &src_train, n);
    let n = rng.random_range(1..6);
    let mut tgt = random_triples(&mut rng, &tgt_train, n);
    for u in 0..p.n_target() {
        let row = tgt_train.row(u);
        tgt.push((u, row[0], rng.random_range(0..items)));
    }
    let theta = random_matrix(&mut rng, p.n_target(), 3);
    let oracle = SimilarityOracle::from_embeddings(theta, 0.0).unwrap();
    let opts = StepOptions {
        alpha: rng.random_range(0.05..0.95),
        lambda: rng.random_range(0.1..1.0),
        tau: rng.random_range(0.3..1.0),
        loss: if rng.random_bool(0.5) {
            LossKind::Bce
        } else {
            LossKind::Bpr
        },
        contrastive: true,
        normalize: false,
    };
    CutInstance {
        model,
        src,
        tgt,
        oracle,
        opts,
    }
}

/// Worst relative error of the L_all gradient over all seven tables.
pub fn cut_fd_error(mut inst: CutInstance) -> (f64, &'static str) {
    let mut grads = CutGrads::for_model(&inst.model);
    inst.model
        .loss_and_grads(&inst.src, &inst.tgt, Some(&inst.oracle), &inst.opts, &mut grads)
        .unwrap();
    let (src, tgt, oracle, opts) = (inst.src.clone(), inst.tgt.clone(), &inst.oracle, inst.opts);
    let f = |m: &CutModel| {
        let mut g = CutGrads::for_model(m);
        m.loss_and_grads(&src, &tgt, Some(oracle), &opts, &mut g).unwrap().l_all
    };
    let mut worst = (0.0, "");
    for (name, acc) in cut_tables() {
        let rows = acc(&mut inst.model).rows();
        let numeric = numeric_grad(&mut inst.model, acc, &f);
        let e = rel_err(&dense(grad_of(&grads, name), rows), &numeric);
        if e > worst.0 {
            worst = (e, name);
        }
    }
    worst
}

/// Layer-averaged LightGCN by explicit powers of the dense normalized
/// adjacency over users ∪ items.
pub fn dense_lightgcn(train: &InteractionSet, users: &Matrix, items: &Matrix, layers: usize) -> (Matrix, Matrix) {
    let (nu, ni, dim) = (train.n_users(), train.n_items(), users.dim());
    let n = nu + ni;
    let mut a = vec![vec![0.0; n]; n];
    for (u, i) in train.pairs() {
        a[u][nu + i] = 1.0;
        a[nu + i][u] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    for x in 0..n {
        for y in 0..n {
            if a[x][y] != 0.0 {
                a[x][y] /= (deg[x] * deg[y]).sqrt();
            }
        }
    }
    let mut e: Vec<Vec<f64>> = (0..nu)
        .map(|u| users.row(u).to_vec())
        .chain((0..ni).map(|i| items.row(i).to_vec()))
        .collect();
    let mut acc = e.clone();
    for _ in 0..layers {
        let next: Vec<Vec<f64>> = (0..n)
            .map(|x| (0..dim).map(|d| (0..n).map(|y| a[x][y] * e[y][d]).sum()).collect())
            .collect();
        for x in 0..n {
            for d in 0..dim {
                acc[x][d] += next[x][d];
            }
        }
        e = next;
    }
    let s = 1.0 / (layers + 1) as f64;
    let rows: Vec<Vec<f64>> = acc
        .into_iter()
        .map(|r| r.into_iter().map(|v| v * s).collect())
        .collect();
    (Matrix::from_rows(&rows[..nu]), Matrix::from_rows(&rows[nu..]))
}

/// Contrastive loss straight from its definition over ordered pairs, with no
/// log-sum-exp shift.
pub fn brute_contrastive(h: &Matrix, similar: &[(usize, usize)], tau: f64, normalize: bool) -> f64 {
    let u = h.rows();
    if similar.is_empty() || u < 2 {
        return 0.0;
    }
    let z = |x: usize, y: usize| {
        let (a, b) = (h.row(x), h.row(y));
        let d: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
        if normalize {
            cosine(a, b)
        } else {
            d
        }
    };
    let mut denom = 0.0;
    let mut n_all = 0.0;
    for x in 0..u {
        for y in 0..u {
            if x != y {
                denom += (z(x, y) / tau).exp();
                n_all += 1.0;
            }
        }
    }
    let total: f64 = similar
        .iter()
        .map(|&(i, j)| (n_all * (z(i, j) / tau).exp() / denom).ln())
        .sum();
    -total / similar.len() as f64
}

/// Reference top-K: sort every unmasked item by (score desc, index asc).
pub fn full_sort_topk(scores: &[f64], mask: &[usize], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|i| !mask.contains(i)).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Similar pairs read off a fully materialized cosine matrix, as ordered
/// (user, user) pairs.
pub fn materialized_pairs(batch: &[usize], theta: &Matrix, gamma: f64) -> Vec<(usize, usize)> {
    let n = theta.rows();
    let sim: Vec<Vec<f64>> = (0..n)
        .map(|p| (0..n).map(|q| cosine(theta.row(p), theta.row(q))).collect())
        .collect();
    let mut distinct: Vec<usize> = batch.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mut out = Vec::new();
    for &p in &distinct {
        for &q in &distinct {
            if p != q && sim[p][q] > gamma {
                out.push((p, q));
            }
        }
    }
    out.sort_unstable();
    out
}
