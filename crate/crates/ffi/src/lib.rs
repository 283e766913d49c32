//! C ABI over the rerankit core.
//!
//! Handles (`RkScorer`, `RkRun`, `RkQrels`) are opaque and owned by the
//! caller once returned; release them with the matching `*_free`. Every
//! fallible call returns an [`RkStatus`] and, on failure, leaves a message
//! for [`rk_last_error`] on the calling thread. Panics never cross the
//! boundary; they surface as `RK_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use rerankit::corpus::{self, Qrels, RankedRun};
use rerankit::objectives::{self, ObjectiveConfig};
use rerankit::scorer::{self, ScorerParams};
use rerankit::trainer::{self, TrainerConfig};
use rerankit::{diagnostics, metrics, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    DimensionMismatch = 6,
    MissingData = 7,
    NonFinite = 8,
    Config = 9,
    /// The result is mathematically undefined, e.g. a delta against a zero baseline.
    Undefined = 10,
    Panic = 99,
}

impl From<&Error> for RkStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => RkStatus::Io,
            Error::Parse { .. } => RkStatus::Parse,
            Error::Validation(_) => RkStatus::Validation,
            Error::DimensionMismatch { .. } => RkStatus::DimensionMismatch,
            Error::MissingFeature { .. } | Error::MissingJudgment { .. } => RkStatus::MissingData,
            Error::NonFinite(_) => RkStatus::NonFinite,
            Error::InvalidArgument(_) => RkStatus::InvalidArgument,
            Error::Config(_) => RkStatus::Config,
        }
    }
}

/// Opaque scorer parameters.
pub struct RkScorer {
    params: ScorerParams,
}

/// Opaque ranked run.
pub struct RkRun {
    run: RankedRun,
}

/// Opaque relevance judgments.
pub struct RkQrels {
    qrels: Qrels,
}

/// Objective settings; obtain defaults from [`rk_objective_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RkObjective {
    pub tau_pair: f64,
    pub tau_teacher: f64,
    pub tau_point: f64,
    pub lambda_teacher: f64,
    pub lambda_point: f64,
    pub soft_negative_target: f64,
    pub negative_weight: f64,
    pub enable_pair: bool,
    pub enable_teacher: bool,
    pub enable_point: bool,
}

impl From<&ObjectiveConfig> for RkObjective {
    fn from(c: &ObjectiveConfig) -> Self {
        RkObjective {
            tau_pair: c.tau_pair,
            tau_teacher: c.tau_teacher,
            tau_point: c.tau_point,
            lambda_teacher: c.lambda_teacher,
            lambda_point: c.lambda_point,
            soft_negative_target: c.soft_negative_target,
            negative_weight: c.negative_weight,
            enable_pair: c.enable_pair,
            enable_teacher: c.enable_teacher,
            enable_point: c.enable_point,
        }
    }
}

impl From<&RkObjective> for ObjectiveConfig {
    fn from(o: &RkObjective) -> Self {
        ObjectiveConfig {
            tau_pair: o.tau_pair,
            tau_teacher: o.tau_teacher,
            tau_point: o.tau_point,
            lambda_teacher: o.lambda_teacher,
            lambda_point: o.lambda_point,
            soft_negative_target: o.soft_negative_target,
            negative_weight: o.negative_weight,
            enable_pair: o.enable_pair,
            enable_teacher: o.enable_teacher,
            enable_point: o.enable_point,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct RkLoss {
    pub pair: f64,
    pub teacher: f64,
    pub point: f64,
    pub total: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct RkSeparation {
    pub mean_gap: f64,
    pub overlap: f64,
    pub auc: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

struct Failure(RkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(RkStatus::from(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(RkStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus last-error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RkStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RkStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            RkStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(RkStatus::NullPointer, format!("{what} is NULL")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be NULL or point to a NUL-terminated string.
unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    non_null(p, "path")?;
    CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not valid UTF-8"))
}

/// # Safety
/// `p` must be NULL only when `len` is 0, else point to `len` readable values.
unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn rk_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn rk_objective_default() -> RkObjective {
    RkObjective::from(&ObjectiveConfig::default())
}

/// Seeded random scorer of dimension `dim`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn rk_scorer_init(dim: usize, seed: u64, out: *mut *mut RkScorer) -> RkStatus {
    guard(|| {
        non_null(out, "out")?;
        let params = scorer::init_params(dim, seed)?;
        *out = Box::into_raw(Box::new(RkScorer { params }));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rk_scorer_load(path: *const c_char, out: *mut *mut RkScorer) -> RkStatus {
    guard(|| {
        non_null(out, "out")?;
        let params = scorer::load_checkpoint(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(RkScorer { params }));
        Ok(())
    })
}

/// # Safety
/// `scorer` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rk_scorer_save(scorer: *const RkScorer, path: *const c_char) -> RkStatus {
    guard(|| {
        non_null(scorer, "scorer")?;
        let comments = [format!("rerankit {} (C API)", env!("CARGO_PKG_VERSION"))];
        scorer::write_checkpoint(&(*scorer).params, path_arg(path)?, &comments)?;
        Ok(())
    })
}

/// # Safety
/// `scorer` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rk_scorer_free(scorer: *mut RkScorer) {
    if !scorer.is_null() {
        drop(Box::from_raw(scorer));
    }
}

/// Feature dimension of the scorer, or 0 for NULL.
///
/// # Safety
/// `scorer` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rk_scorer_dim(scorer: *const RkScorer) -> usize {
    scorer.as_ref().map_or(0, |s| s.params.dim())
}

/// Scores one pair: `score = logit_yes − logit_no`. Any of the three outputs may be NULL.
///
/// # Safety
/// `q` and `v` must each point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn rk_scorer_score(
    scorer: *const RkScorer,
    q: *const f64,
    v: *const f64,
    dim: usize,
    logit_yes: *mut f64,
    logit_no: *mut f64,
    score: *mut f64,
) -> RkStatus {
    guard(|| {
        non_null(scorer, "scorer")?;
        let q = slice_arg(q, dim, "q")?;
        let v = slice_arg(v, dim, "v")?;
        let r = scorer::score_pair(&(*scorer).params, q, v)?;
        for (dst, val) in [(logit_yes, r.logit_yes), (logit_no, r.logit_no), (score, r.score)] {
            if !dst.is_null() {
                *dst = val;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rk_run_load(path: *const c_char, out: *mut *mut RkRun) -> RkStatus {
    guard(|| {
        non_null(out, "out")?;
        let run = corpus::load_run(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(RkRun { run }));
        Ok(())
    })
}

/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rk_run_num_queries(run: *const RkRun) -> usize {
    run.as_ref().map_or(0, |r| r.run.num_queries())
}

/// # Safety
/// `run` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rk_run_free(run: *mut RkRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rk_qrels_load(path: *const c_char, out: *mut *mut RkQrels) -> RkStatus {
    guard(|| {
        non_null(out, "out")?;
        let (qrels, _warnings) = corpus::load_qrels(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(RkQrels { qrels }));
        Ok(())
    })
}

/// # Safety
/// `qrels` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rk_qrels_free(qrels: *mut RkQrels) {
    if !qrels.is_null() {
        drop(Box::from_raw(qrels));
    }
}

/// Mean Recall@k and nDCG@k over queries with at least one relevant judgment.
///
/// # Safety
/// Handles must be live; `recall` and `ndcg` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rk_eval(
    run: *const RkRun,
    qrels: *const RkQrels,
    k: usize,
    recall: *mut f64,
    ndcg: *mut f64,
) -> RkStatus {
    guard(|| {
        non_null(run, "run")?;
        non_null(qrels, "qrels")?;
        non_null(recall, "recall")?;
        non_null(ndcg, "ndcg")?;
        let (run, qrels) = (&(*run).run, &(*qrels).qrels);
        *recall = metrics::recall_at(run, qrels, k)?.mean;
        *ndcg = metrics::ndcg_at(run, qrels, k)?.mean;
        Ok(())
    })
}

/// Composite group loss. `score_grads` may be NULL; otherwise it receives
/// `n` derivatives of the total loss with respect to each score.
///
/// # Safety
/// `scores`, `teacher_probs` and `labels` must each hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn rk_group_loss(
    scores: *const f64,
    teacher_probs: *const f64,
    labels: *const u8,
    n: usize,
    positive_index: usize,
    objective: *const RkObjective,
    out: *mut RkLoss,
    score_grads: *mut f64,
) -> RkStatus {
    guard(|| {
        non_null(objective, "objective")?;
        non_null(out, "out")?;
        let cfg = ObjectiveConfig::from(&*objective);
        cfg.validate()?;
        let b = objectives::group_loss(
            slice_arg(scores, n, "scores")?,
            positive_index,
            slice_arg(teacher_probs, n, "teacher_probs")?,
            slice_arg(labels, n, "labels")?,
            &cfg,
        )?;
        *out = RkLoss { pair: b.l_pair, teacher: b.l_teacher, point: b.l_point, total: b.total };
        if !score_grads.is_null() {
            slice::from_raw_parts_mut(score_grads, n).copy_from_slice(&b.per_candidate_score_grads);
        }
        Ok(())
    })
}

/// `100·(method − baseline)/baseline`; `RK_STATUS_UNDEFINED` when baseline ≤ 0.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rk_delta_pct(baseline: f64, method: f64, out: *mut f64) -> RkStatus {
    guard(|| {
        non_null(out, "out")?;
        match metrics::delta_pct(baseline, method) {
            Some(d) => {
                *out = d;
                Ok(())
            }
            None => Err(Failure(RkStatus::Undefined, format!("delta undefined for baseline {baseline}"))),
        }
    })
}

/// Learning rate at a 0-based step under linear warmup then cosine decay.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rk_lr_at(
    step: usize,
    total_steps: usize,
    base_lr: f64,
    warmup_proportion: f64,
    out: *mut f64,
) -> RkStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = TrainerConfig { base_lr, warmup_proportion, ..TrainerConfig::default() };
        cfg.validate()?;
        *out = trainer::lr_at(step, total_steps, &cfg)?;
        Ok(())
    })
}

/// # Safety
/// `relevant` and `nonrelevant` must hold `n_relevant` and `n_nonrelevant` values.
#[no_mangle]
pub unsafe extern "C" fn rk_separation(
    relevant: *const f64,
    n_relevant: usize,
    nonrelevant: *const f64,
    n_nonrelevant: usize,
    out: *mut RkSeparation,
) -> RkStatus {
    guard(|| {
        non_null(out, "out")?;
        let s = diagnostics::separation_stats(
            slice_arg(relevant, n_relevant, "relevant")?,
            slice_arg(nonrelevant, n_nonrelevant, "nonrelevant")?,
        )?;
        *out = RkSeparation { mean_gap: s.mean_gap, overlap: s.overlap, auc: s.auc };
        Ok(())
    })
}
