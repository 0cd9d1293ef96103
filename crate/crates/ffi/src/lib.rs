//! C ABI for cutrec.
//!
//! Objects cross the boundary as opaque handles (`CutrecDataset`,
//! `CutrecModel`) that the caller releases with the matching `_free`
//! function. Every fallible call returns a `CutrecStatus`; on failure a
//! message is available from `cutrec_last_error_message` on the same thread.
//! Panics are caught and reported as `CUTREC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cutrec::backbone::{Backbone, Checkpoint, CheckpointKind, Matrix};
use cutrec::corpus::{build_cross_domain, load_archive, split_cross_domain, CrossDomainDataset, CrossDomainSplit};
use cutrec::cut::{run_cut, target_model_from_checkpoint, CutModel, TrainingConfig};
use cutrec::eval::{evaluate_full, rank_items, MaskMode, TargetScorer};
use cutrec::experiment::{resolve_training, run_experiment, ExperimentConfig};
use cutrec::synthgen::{generate, SynthConfig};
use cutrec::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutrecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    Checkpoint = 6,
    VersionMismatch = 7,
    NonFinite = 8,
    NoEvaluableUsers = 9,
    OutOfRange = 10,
    Panic = 11,
    Internal = 12,
}

impl From<&Error> for CutrecStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } | Error::WouldOverwrite { .. } => CutrecStatus::Io,
            Error::Parse { .. } | Error::EmptyInput(_) | Error::Json(_) => CutrecStatus::Parse,
            Error::Config { .. } => CutrecStatus::Config,
            Error::InvalidArgument(_) | Error::DatasetCollapsed(_) | Error::NoNegative { .. } => {
                CutrecStatus::InvalidArgument
            }
            Error::Checkpoint(_) => CutrecStatus::Checkpoint,
            Error::VersionMismatch { .. } => CutrecStatus::VersionMismatch,
            Error::NonFinite { .. } => CutrecStatus::NonFinite,
            Error::NoEvaluableUsers => CutrecStatus::NoEvaluableUsers,
            Error::OutOfRange { .. } => CutrecStatus::OutOfRange,
        }
    }
}

/// Cross-domain dataset with its train/valid/test split.
pub struct CutrecDataset {
    dataset: CrossDomainDataset,
    split: CrossDomainSplit,
}

enum Inner {
    Target(Box<Backbone>),
    Cut(Box<CutModel>),
}

/// Trained model plus its cached target-domain scoring embeddings.
pub struct CutrecModel {
    inner: Inner,
    users: Matrix,
    items: Matrix,
}

impl CutrecModel {
    fn new(inner: Inner) -> Self {
        let (users, items) = match &inner {
            Inner::Target(m) => m.target_embeddings(),
            Inner::Cut(m) => m.target_embeddings(),
        };
        CutrecModel { inner, users, items }
    }
}

/// Test-set metrics (means and population standard deviations over users).
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CutrecMetrics {
    pub recall: f64,
    pub recall_std: f64,
    pub hr: f64,
    pub hr_std: f64,
    pub ndcg: f64,
    pub ndcg_std: f64,
    pub k: usize,
    pub users: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: CutrecStatus, msg: impl Into<String>) -> CutrecStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, converting errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), CutrecStatus>) -> CutrecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CutrecStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(CutrecStatus::Panic, msg)
        }
    }
}

fn check<T>(r: cutrec::Result<T>) -> Result<T, CutrecStatus> {
    r.map_err(|e| fail(CutrecStatus::from(&e), e.to_string()))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, CutrecStatus> {
    if p.is_null() {
        return Err(fail(CutrecStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CutrecStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn opt_c_str<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, CutrecStatus> {
    if p.is_null() {
        Ok(None)
    } else {
        c_str(p, what).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, CutrecStatus> {
    p.as_ref()
        .ok_or_else(|| fail(CutrecStatus::NullPointer, format!("{what} is NULL")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), CutrecStatus> {
    if p.is_null() {
        Err(fail(CutrecStatus::NullPointer, format!("{what} is NULL")))
    } else {
        Ok(())
    }
}

fn json_err(key: &str, e: serde_json::Error) -> CutrecStatus {
    fail(CutrecStatus::Config, format!("config key `{key}`: {e}"))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cutrec_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cutrec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a dataset archive directory written by `cutrec ingest` or `cutrec synth`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cutrec_dataset_load(dir: *const c_char, out: *mut *mut CutrecDataset) -> CutrecStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let dir = PathBuf::from(c_str(dir, "dir")?);
        let (dataset, split) = check(load_archive(&dir))?;
        *out = Box::into_raw(Box::new(CutrecDataset { dataset, split }));
        Ok(())
    })
}

/// Generates a synthetic dataset in memory. `config_json` is a synth config
/// object or NULL for defaults.
///
/// # Safety
/// `config_json` must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cutrec_dataset_synth(
    config_json: *const c_char,
    out: *mut *mut CutrecDataset,
) -> CutrecStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let cfg: SynthConfig = match opt_c_str(config_json, "config_json")? {
            Some(s) => serde_json::from_str(s).map_err(|e| json_err("synth", e))?,
            None => SynthConfig::default(),
        };
        let (s, t) = check(generate(&cfg))?;
        let dataset = check(build_cross_domain(&s, &t))?;
        let split = check(split_cross_domain(&dataset, cfg.seed))?;
        *out = Box::into_raw(Box::new(CutrecDataset { dataset, split }));
        Ok(())
    })
}

/// Number of target-domain users (target-only plus overlapping).
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn cutrec_dataset_n_target_users(ds: *const CutrecDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.dataset.partition.n_target())
}

/// Number of target-domain items.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn cutrec_dataset_n_target_items(ds: *const CutrecDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.split.target.n_items())
}

/// Number of users shared by both domains.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn cutrec_dataset_n_overlap_users(ds: *const CutrecDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.dataset.partition.overlap)
}

/// # Safety
/// `ds` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cutrec_dataset_free(ds: *mut CutrecDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Runs both training phases. `config_json` holds an optional `preset` key
/// plus training-field overrides, or is NULL for defaults.
///
/// # Safety
/// `ds` must be a live dataset; `config_json` NULL or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cutrec_model_train(
    ds: *const CutrecDataset,
    config_json: *const c_char,
    out: *mut *mut CutrecModel,
) -> CutrecStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let ds = handle(ds, "ds")?;
        let cfg = match opt_c_str(config_json, "config_json")? {
            Some(s) => training_config(s)?,
            None => TrainingConfig::default(),
        };
        let run = check(run_cut(ds.dataset.partition, &ds.split, &cfg))?;
        *out = Box::into_raw(Box::new(CutrecModel::new(Inner::Cut(Box::new(run.transfer.model)))));
        Ok(())
    })
}

fn training_config(json: &str) -> Result<TrainingConfig, CutrecStatus> {
    let mut map: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(json).map_err(|e| json_err("training", e))?;
    let preset = match map.remove("preset") {
        None => "amazon-like".to_string(),
        Some(serde_json::Value::String(s)) => s,
        Some(_) => return Err(fail(CutrecStatus::Config, "config key `preset`: must be a string")),
    };
    let base = check(TrainingConfig::preset(&preset))?;
    check(resolve_training(&base, &map))
}

/// Loads a TARGET or CUT checkpoint against the dataset it was trained on.
///
/// # Safety
/// `ds` must be a live dataset; `path` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cutrec_model_load(
    ds: *const CutrecDataset,
    path: *const c_char,
    out: *mut *mut CutrecModel,
) -> CutrecStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let ds = handle(ds, "ds")?;
        let ckpt = check(Checkpoint::read(&PathBuf::from(c_str(path, "path")?)))?;
        let inner = match ckpt.header.kind {
            CheckpointKind::Target => {
                Inner::Target(Box::new(check(target_model_from_checkpoint(&ckpt, &ds.split.target))?))
            }
            CheckpointKind::Cut => Inner::Cut(Box::new(check(CutModel::from_checkpoint(
                &ckpt,
                &ds.split.source.train,
                &ds.split.target.train,
            ))?)),
        };
        *out = Box::into_raw(Box::new(CutrecModel::new(inner)));
        Ok(())
    })
}

/// Writes a CUT model checkpoint.
///
/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cutrec_model_save(model: *const CutrecModel, path: *const c_char) -> CutrecStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let path = PathBuf::from(c_str(path, "path")?);
        match &model.inner {
            Inner::Cut(m) => check(check(m.to_checkpoint(serde_json::Value::Null, 0))?.write(&path)),
            Inner::Target(_) => Err(fail(
                CutrecStatus::InvalidArgument,
                "TARGET-phase models are saved by the trainer, not through this call",
            )),
        }
    })
}

/// Top-`k` target items for target-local user `user`, hiding the user's
/// train and valid items. Writes up to `k` indices to `items` and the count
/// to `n_written`.
///
/// # Safety
/// `model`, `ds` live handles; `items` has room for `k` entries; `n_written` writable.
#[no_mangle]
pub unsafe extern "C" fn cutrec_model_recommend(
    model: *const CutrecModel,
    ds: *const CutrecDataset,
    user: usize,
    k: usize,
    items: *mut usize,
    n_written: *mut usize,
) -> CutrecStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let ds = handle(ds, "ds")?;
        out_ptr(n_written, "n_written")?;
        if k > 0 {
            out_ptr(items, "items")?;
        }
        if model.users.rows() != ds.split.target.n_users() || model.items.rows() != ds.split.target.n_items() {
            return Err(fail(
                CutrecStatus::InvalidArgument,
                "model and dataset disagree on target shape",
            ));
        }
        if user >= model.users.rows() {
            return Err(fail(
                CutrecStatus::OutOfRange,
                format!("user {user} out of range (len {})", model.users.rows()),
            ));
        }
        let u = model.users.row(user);
        let scores: Vec<f64> = (0..model.items.rows())
            .map(|i| u.iter().zip(model.items.row(i)).map(|(a, b)| a * b).sum())
            .collect();
        let top = rank_items(&scores, &ds.split.target.seen_items(user), k);
        for (j, &i) in top.iter().enumerate() {
            *items.add(j) = i;
        }
        *n_written = top.len();
        Ok(())
    })
}

/// Test-set Recall/HR/NDCG@`k` with train and valid items masked.
///
/// # Safety
/// `model`, `ds` live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cutrec_model_evaluate(
    model: *const CutrecModel,
    ds: *const CutrecDataset,
    k: usize,
    out: *mut CutrecMetrics,
) -> CutrecStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let model = handle(model, "model")?;
        let ds = handle(ds, "ds")?;
        let r = match &model.inner {
            Inner::Target(m) => check(evaluate_full(m.as_ref(), &ds.split.target, k, MaskMode::Seen))?,
            Inner::Cut(m) => check(evaluate_full(m.as_ref(), &ds.split.target, k, MaskMode::Seen))?,
        };
        *out = CutrecMetrics {
            recall: r.recall.mean,
            recall_std: r.recall.std,
            hr: r.hr.mean,
            hr_std: r.hr.std,
            ndcg: r.ndcg.mean,
            ndcg_std: r.ndcg.std,
            k: r.k,
            users: r.users,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cutrec_model_free(model: *mut CutrecModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Runs an experiment config and returns the metrics report as a JSON
/// string, to be released with `cutrec_string_free`.
///
/// # Safety
/// `config_json` NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cutrec_experiment_run(config_json: *const c_char, out_json: *mut *mut c_char) -> CutrecStatus {
    guard(|| {
        out_ptr(out_json, "out_json")?;
        let cfg = check(ExperimentConfig::from_json(c_str(config_json, "config_json")?))?;
        let report = check(run_experiment(&cfg, false))?;
        let json = check(report.to_json())?;
        *out_json = CString::new(json).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cutrec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
