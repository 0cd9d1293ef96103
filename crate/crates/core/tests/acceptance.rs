//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p cutrec --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cutrec::backbone::{BackboneKind, BipartiteGraph, LossKind, Matrix};
use cutrec::cut::contrastive::contrastive_loss;
use cutrec::cut::{total_loss, CutGrads};
use cutrec::eval::rank_items;
use cutrec::experiment::{run_experiment, ExperimentConfig, ExperimentReport, Variant};
use cutrec::similarity::{extract_pairs, SimilarityOracle};

use common::{
    backbone_fd_error, brute_contrastive, cut_fd_error, cut_instance, dense_lightgcn, full_sort_topk,
    materialized_pairs, random_matrix, random_train,
};

const FD_INSTANCES: u64 = 20;
const FD_TOL: f64 = 1e-4;
const FD_BUDGET_S: f64 = 60.0;
const LIGHTGCN_TOL: f64 = 1e-6;
const CONTRASTIVE_TOL: f64 = 1e-10;
const RECOMBINE_TOL: f64 = 1e-12;
const BENCH_BUDGET_S: f64 = 600.0;
const ORACLE_CASES: u64 = 200;

/// Synthetic benchmark: 500 users and 300 items per domain, latent dim 16.
/// `{delta}` is substituted per criterion.
const BENCH_SYNTH: &str = r#"{"n_users": 500, "n_items_per_domain": 300, "latent_dim": 16,
    "distortion": {delta}, "overlap_fraction": 0.8,
    "interactions_per_user": 10, "source_interactions_per_user": 50}"#;
const BENCH_TRAINING: &str = r#"{"backbone": "mf", "loss": "bce", "dim": 16, "batch_size": 256, "lr": 0.001,
    "max_epochs": 300, "eval_every": 5, "patience": 10, "alpha": 0.8, "lambda": 0.03, "gamma": 0.7}"#;

struct Suite {
    failed: usize,
}

impl Suite {
    fn report(&mut self, id: &str, pass: bool, detail: String) {
        println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed += 1;
        }
    }
}

fn bench(delta: f64, variants: &[&str], seeds: &str) -> (ExperimentReport, f64) {
    let text = format!(
        r#"{{"data": {{"synth": {}}}, "training": {BENCH_TRAINING}, "seeds": {seeds}, "variants": {:?}}}"#,
        BENCH_SYNTH.replace("{delta}", &format!("{delta:?}")),
        variants
    );
    let cfg = ExperimentConfig::from_json(&text).expect("benchmark config");
    let t = Instant::now();
    let report = run_experiment(&cfg, true).expect("benchmark run");
    (report, t.elapsed().as_secs_f64())
}

fn mean(r: &ExperimentReport, v: Variant) -> f64 {
    r.summary_for(v, 1.0).expect("variant ran").ndcg.mean
}

fn fmt_seeds(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn gradient_suite(s: &mut Suite) {
    let t = Instant::now();
    let mut worst = Vec::new();
    for (name, kind, loss) in [
        ("MF+BCE", BackboneKind::Mf, LossKind::Bce),
        ("MF+BPR", BackboneKind::Mf, LossKind::Bpr),
        ("LightGCN(K=2)+BPR", BackboneKind::Lightgcn, LossKind::Bpr),
    ] {
        let e = (0..FD_INSTANCES)
            .map(|seed| backbone_fd_error(kind, loss, seed))
            .fold(0.0, f64::max);
        worst.push((name, e));
    }
    let e = (0..FD_INSTANCES)
        .map(|seed| cut_fd_error(cut_instance(1000 + seed, BackboneKind::Lightgcn, None)).0)
        .fold(0.0, f64::max);
    worst.push(("CUT step with L_c", e));
    let secs = t.elapsed().as_secs_f64();
    let ok = worst.iter().all(|&(_, e)| e <= FD_TOL) && secs < FD_BUDGET_S;
    let detail: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    s.report(
        "C1 finite-difference gradients",
        ok,
        format!(
            "{FD_INSTANCES} instances each, max rel err: {} (tol {FD_TOL:e}), {secs:.1}s",
            detail.join(", ")
        ),
    );
}

fn oracle_suite(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut lgcn_err: f64 = 0.0;
    let mut c_err: f64 = 0.0;
    let mut topk_ok = true;
    let mut pairs_ok = true;
    for _ in 0..ORACLE_CASES {
        // at most 20 graph nodes
        let nu = rng.random_range(1..=10);
        let ni = rng.random_range(1..=10);
        let train = random_train(&mut rng, nu, ni);
        let users = random_matrix(&mut rng, nu, 4);
        let items = random_matrix(&mut rng, ni, 4);
        let layers = rng.random_range(0..=3);
        let (fu, fi) = BipartiteGraph::from_train(&train, layers).propagate(&users, &items);
        let (du, di) = dense_lightgcn(&train, &users, &items, layers);
        for (a, b) in [(&fu, &du), (&fi, &di)] {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                lgcn_err = lgcn_err.max((x - y).abs());
            }
        }

        let n = rng.random_range(2..=9);
        let oracle =
            SimilarityOracle::from_embeddings(random_matrix(&mut rng, n, 3), rng.random_range(-0.5..0.8)).unwrap();
        let batch: Vec<usize> = (0..n).collect();
        let pairs = extract_pairs(&batch, &oracle).unwrap();
        let h = random_matrix(&mut rng, n, 5);
        let (tau, normalize) = (rng.random_range(0.2..2.0), rng.random_bool(0.5));
        let fast = contrastive_loss(&h, &pairs, tau, normalize).0;
        let slow = brute_contrastive(&h, &pairs.similar, tau, normalize);
        c_err = c_err.max((fast - slow).abs() / slow.abs().max(1.0));

        let len = rng.random_range(1..80);
        let scores: Vec<f64> = (0..len)
            .map(|_| {
                if rng.random_bool(0.3) {
                    rng.random_range(-2..2) as f64
                } else {
                    rng.random_range(-3.0..3.0)
                }
            })
            .collect();
        let mask: Vec<usize> = (0..len).filter(|_| rng.random_bool(0.2)).collect();
        let k = rng.random_range(0..30);
        topk_ok &= rank_items(&scores, &mask, k) == full_sort_topk(&scores, &mask, k);

        let users = rng.random_range(2..=50);
        let theta = random_matrix(&mut rng, users, 4);
        let gamma = rng.random_range(-0.9..0.95);
        let batch: Vec<usize> = (0..rng.random_range(1..100))
            .map(|_| rng.random_range(0..users))
            .collect();
        let oracle = SimilarityOracle::from_embeddings(theta.clone(), gamma).unwrap();
        let mut lazy = extract_pairs(&batch, &oracle).unwrap().similar_users();
        lazy.sort_unstable();
        pairs_ok &= lazy == materialized_pairs(&batch, &theta, gamma);
    }
    s.report(
        "C2a LightGCN vs dense adjacency powers",
        lgcn_err <= LIGHTGCN_TOL,
        format!("{ORACLE_CASES} graphs <= 20 nodes, max abs err {lgcn_err:.1e} (tol {LIGHTGCN_TOL:e})"),
    );
    s.report(
        "C2b contrastive value vs brute force",
        c_err <= CONTRASTIVE_TOL,
        format!("{ORACLE_CASES} batches, max rel err {c_err:.1e} (tol {CONTRASTIVE_TOL:e})"),
    );
    s.report(
        "C2c top-K vs full sort",
        topk_ok,
        format!("{ORACLE_CASES} score vectors, exact"),
    );
    s.report(
        "C2d lazy pairs vs materialized similarity matrix",
        pairs_ok,
        format!("{ORACLE_CASES} batches over <= 50 users, exact"),
    );
}

fn objective_suite(s: &mut Suite) {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let inst = cut_instance(5000 + seed, BackboneKind::Lightgcn, None);
        let mut g = CutGrads::for_model(&inst.model);
        let b = inst
            .model
            .loss_and_grads(&inst.src, &inst.tgt, Some(&inst.oracle), &inst.opts, &mut g)
            .unwrap();
        // each component recomputed on its own
        let mut off = inst.opts;
        off.contrastive = false;
        let l_t = inst
            .model
            .loss_and_grads(&[], &inst.tgt, None, &off, &mut g)
            .unwrap()
            .l_t;
        let l_s = inst
            .model
            .loss_and_grads(&inst.src, &[], None, &off, &mut g)
            .unwrap()
            .l_s;
        let users: Vec<usize> = inst.tgt.iter().map(|t| t.0).collect();
        let pairs = extract_pairs(&users, &inst.oracle).unwrap();
        let h = Matrix::from_rows(
            &pairs
                .users
                .iter()
                .map(|&u| inst.model.transform.apply(inst.model.target_base_row(u)))
                .collect::<Vec<_>>(),
        );
        let l_c = contrastive_loss(&h, &pairs, inst.opts.tau, inst.opts.normalize).0;
        let want = total_loss(l_t, l_s, l_c, inst.opts.alpha, inst.opts.lambda);
        worst = worst.max((b.l_all - want).abs() / want.abs());
    }
    let theta = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8]]);
    let oracle = SimilarityOracle::from_embeddings(theta, 0.6).unwrap();
    let at_gamma = oracle.cosine(0, 1).unwrap() == 0.6 && !oracle.similar(0, 1).unwrap();
    s.report(
        "C3 objective recombination and strict threshold",
        worst <= RECOMBINE_TOL && at_gamma,
        format!("max rel err {worst:.1e} (tol {RECOMBINE_TOL:e}); cos == gamma -> not similar: {at_gamma}"),
    );
}

fn delta_one(s: &mut Suite) {
    let (r, secs) = bench(
        1.0,
        &["target_only", "cut", "joint_training", "no_transform", "no_contrastive"],
        "[0, 1, 2, 3, 4]",
    );
    print!("{}", r.to_table());
    let cut = r.ndcg_by_seed(Variant::Cut, 1.0);
    let joint = r.ndcg_by_seed(Variant::JointTraining, 1.0);
    let wins = cut.iter().zip(&joint).filter(|(c, j)| c >= j).count();
    let (m_t, m_j) = (mean(&r, Variant::TargetOnly), mean(&r, Variant::JointTraining));
    s.report(
        "C4 negative transfer and recovery (delta=1)",
        m_j < m_t && wins >= 4 && secs < BENCH_BUDGET_S,
        format!(
            "joint {m_j:.4} < target-only {m_t:.4}: {}; CUT >= joint in {wins}/5 seeds (cut {}, joint {}); {secs:.0}s",
            m_j < m_t,
            fmt_seeds(&cut),
            fmt_seeds(&joint)
        ),
    );
    let (m_c, m_nt, m_nc) = (
        mean(&r, Variant::Cut),
        mean(&r, Variant::NoTransform),
        mean(&r, Variant::NoContrastive),
    );
    s.report(
        "C5 ablation ordering (delta=1)",
        m_c >= m_nt && m_nt >= m_nc,
        format!("cut {m_c:.4} >= no_transform {m_nt:.4} >= no_contrastive {m_nc:.4}"),
    );
}

fn delta_half(s: &mut Suite) {
    let (r, secs) = bench(0.5, &["cut", "history_similarity"], "[0, 1, 2, 3, 4]");
    print!("{}", r.to_table());
    let e = r.summary_for(Variant::Cut, 1.0).unwrap().ndcg;
    let h = r.summary_for(Variant::HistorySimilarity, 1.0).unwrap().ndcg;
    // a shortfall of at most 1% of the larger across-seed std counts as a tie
    let slack = 0.01 * e.std.max(h.std);
    s.report(
        "C6 embedding vs history similarity (delta=0.5)",
        e.mean >= h.mean - slack,
        format!(
            "embedding {:.4} vs history {:.4} (tie slack {slack:.1e}); {secs:.0}s",
            e.mean, h.mean
        ),
    );
}

fn delta_zero(s: &mut Suite) {
    let (r, secs) = bench(0.0, &["target_only", "cut"], "[0, 1, 2, 3, 4]");
    print!("{}", r.to_table());
    let (m_c, m_t) = (mean(&r, Variant::Cut), mean(&r, Variant::TargetOnly));
    s.report(
        "C7 no harm without distortion (delta=0)",
        m_c >= 0.95 * m_t,
        format!(
            "cut {m_c:.4} >= 0.95 x target-only {m_t:.4} = {:.4}; {secs:.0}s",
            0.95 * m_t
        ),
    );
}

fn determinism(s: &mut Suite) {
    let text = r#"{"data": {"synth": {"n_users": 150, "n_items_per_domain": 100, "latent_dim": 8, "seed": 11}},
        "training": {"backbone": "lightgcn", "dim": 8, "batch_size": 256, "lr": 0.005, "max_epochs": 10, "patience": 3},
        "seeds": [0, 1],
        "variants": ["target_only", "cut", "joint_training", "no_transform", "no_contrastive", "history_similarity"]}"#;
    let cfg = ExperimentConfig::from_json(text).unwrap();
    let a = run_experiment(&cfg, false).unwrap().to_json().unwrap();
    let b = run_experiment(&cfg, true).unwrap().to_json().unwrap();
    s.report(
        "C8 byte-identical metrics on rerun",
        a == b,
        format!("{} bytes of metrics JSON, serial vs parallel rerun", a.len()),
    );
}

fn main() -> ExitCode {
    let mut s = Suite { failed: 0 };
    gradient_suite(&mut s);
    oracle_suite(&mut s);
    objective_suite(&mut s);
    determinism(&mut s);
    delta_one(&mut s);
    delta_half(&mut s);
    delta_zero(&mut s);
    if s.failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", s.failed);
        ExitCode::FAILURE
    }
}
