//! Analytic gradients against central finite differences.

mod common;

use cutrec::backbone::{BackboneKind, LossKind};

use common::{backbone_fd_error, cut_fd_error, cut_instance};

const INSTANCES: u64 = 20;
const TOL: f64 = 1e-4;

fn backbone_case(kind: BackboneKind, loss: LossKind) {
    for seed in 0..INSTANCES {
        let e = backbone_fd_error(kind, loss, seed);
        assert!(e < TOL, "{kind:?}/{loss:?} seed {seed}: relative error {e:e}");
    }
}

#[test]
fn mf_bce_gradients() {
    backbone_case(BackboneKind::Mf, LossKind::Bce);
}

#[test]
fn mf_bpr_gradients() {
    backbone_case(BackboneKind::Mf, LossKind::Bpr);
}

#[test]
fn lightgcn_k2_bpr_gradients() {
    backbone_case(BackboneKind::Lightgcn, LossKind::Bpr);
}

#[test]
fn lightgcn_k2_bce_gradients() {
    backbone_case(BackboneKind::Lightgcn, LossKind::Bce);
}

#[test]
fn full_cut_step_gradients_mf() {
    for seed in 0..INSTANCES {
        let (e, table) = cut_fd_error(cut_instance(seed, BackboneKind::Mf, None));
        assert!(e < TOL, "seed {seed}: {table} relative error {e:e}");
    }
}

#[test]
fn full_cut_step_gradients_lightgcn() {
    for seed in 0..INSTANCES {
        let (e, table) = cut_fd_error(cut_instance(100 + seed, BackboneKind::Lightgcn, None));
        assert!(e < TOL, "seed {seed}: {table} relative error {e:e}");
    }
}

#[test]
fn six_users_eight_items_combined_gradient() {
    // 2 target-only + 2 overlap + 2 source-only users, 8 items per domain
    for seed in 0..INSTANCES {
        let inst = cut_instance(200 + seed, BackboneKind::Lightgcn, Some((2, 2, 2, 8)));
        let (e, table) = cut_fd_error(inst);
        assert!(e < TOL, "seed {seed}: {table} relative error {e:e}");
    }
}

#[test]
fn normalized_contrastive_gradients() {
    for seed in 0..INSTANCES {
        let mut inst = cut_instance(300 + seed, BackboneKind::Mf, None);
        inst.opts.normalize = true;
        let (e, table) = cut_fd_error(inst);
        assert!(e < TOL, "seed {seed}: {table} relative error {e:e}");
    }
}
