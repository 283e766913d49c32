use std::ffi::{CStr, CString};
use std::fs;
use std::ptr;

use rerankit_ffi::*;

fn last_error() -> String {
    let p = rk_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn scorer_lifecycle_and_scoring() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("s.ckpt").to_str().unwrap()).unwrap();
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(rk_scorer_init(3, 7, &mut s), RkStatus::Ok);
        assert_eq!(rk_scorer_dim(s), 3);
        let (q, v) = ([0.5, -1.0, 2.0], [1.0, 0.25, -0.5]);
        let (mut y, mut n, mut score) = (0.0, 0.0, 0.0);
        assert_eq!(rk_scorer_score(s, q.as_ptr(), v.as_ptr(), 3, &mut y, &mut n, &mut score), RkStatus::Ok);
        assert_eq!(score, y - n);

        assert_eq!(rk_scorer_save(s, path.as_ptr()), RkStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(rk_scorer_load(path.as_ptr(), &mut loaded), RkStatus::Ok);
        let mut again = 0.0;
        assert_eq!(
            rk_scorer_score(loaded, q.as_ptr(), v.as_ptr(), 3, ptr::null_mut(), ptr::null_mut(), &mut again),
            RkStatus::Ok
        );
        assert_eq!(again, score);

        assert_eq!(
            rk_scorer_score(s, q.as_ptr(), v.as_ptr(), 2, ptr::null_mut(), ptr::null_mut(), &mut again),
            RkStatus::DimensionMismatch
        );
        assert!(last_error().contains("dimension mismatch"));
        rk_scorer_free(s);
        rk_scorer_free(loaded);
        rk_scorer_free(ptr::null_mut());
    }
}

#[test]
fn missing_checkpoint_reports_io_and_path() {
    let path = CString::new("/nonexistent/scorer.ckpt").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { rk_scorer_load(path.as_ptr(), &mut s) }, RkStatus::Io);
    assert!(s.is_null());
    assert!(last_error().contains("/nonexistent/scorer.ckpt"));
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        assert_eq!(rk_scorer_init(3, 0, ptr::null_mut()), RkStatus::NullPointer);
        assert_eq!(rk_delta_pct(1.0, 2.0, ptr::null_mut()), RkStatus::NullPointer);
        assert_eq!(rk_scorer_dim(ptr::null()), 0);
    }
}

#[test]
fn loss_delta_schedule_and_separation() {
    unsafe {
        let obj = rk_objective_default();
        let (scores, probs, labels) = ([0.0, 0.0], [0.5, 0.5], [1u8, 0]);
        let mut loss = RkLoss::default();
        let mut grads = [0.0; 2];
        let st = rk_group_loss(
            scores.as_ptr(),
            probs.as_ptr(),
            labels.as_ptr(),
            2,
            0,
            &obj,
            &mut loss,
            grads.as_mut_ptr(),
        );
        assert_eq!(st, RkStatus::Ok);
        assert!((loss.total - 4.418813).abs() < 1e-6);
        assert!((loss.pair - std::f64::consts::LN_2).abs() < 1e-12);

        let mut d = 0.0;
        assert_eq!(rk_delta_pct(0.523, 0.570, &mut d), RkStatus::Ok);
        assert_eq!(format!("{d:.2}"), "8.99");
        assert_eq!(rk_delta_pct(0.0, 0.5, &mut d), RkStatus::Undefined);

        let mut lr = 0.0;
        assert_eq!(rk_lr_at(0, 100, 1e-5, 0.03, &mut lr), RkStatus::Ok);
        assert!((lr - 1e-5 / 3.0).abs() < 1e-18);
        assert_eq!(rk_lr_at(0, 0, 1e-5, 0.03, &mut lr), RkStatus::InvalidArgument);

        let (rel, non) = ([2.0, 0.0], [1.0, -1.0]);
        let mut sep = RkSeparation::default();
        assert_eq!(rk_separation(rel.as_ptr(), 2, non.as_ptr(), 2, &mut sep), RkStatus::Ok);
        assert_eq!(sep.auc, 0.75);
        assert_eq!(rk_separation(rel.as_ptr(), 2, non.as_ptr(), 0, &mut sep), RkStatus::InvalidArgument);
    }
}

#[test]
fn run_and_qrels_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let run_path = dir.path().join("r.run");
    let qrels_path = dir.path().join("q.qrels");
    fs::write(&run_path, "q Q0 a 1 3 t\nq Q0 b 2 2 t\nq Q0 c 3 1 t\n").unwrap();
    fs::write(&qrels_path, "q 0 a 1\nq 0 c 1\n").unwrap();
    let run_c = CString::new(run_path.to_str().unwrap()).unwrap();
    let qrels_c = CString::new(qrels_path.to_str().unwrap()).unwrap();
    unsafe {
        let (mut run, mut qrels) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(rk_run_load(run_c.as_ptr(), &mut run), RkStatus::Ok);
        assert_eq!(rk_qrels_load(qrels_c.as_ptr(), &mut qrels), RkStatus::Ok);
        assert_eq!(rk_run_num_queries(run), 1);
        let (mut recall, mut ndcg) = (0.0, 0.0);
        assert_eq!(rk_eval(run, qrels, 2, &mut recall, &mut ndcg), RkStatus::Ok);
        assert_eq!(recall, 0.5);
        assert_eq!(rk_eval(run, qrels, 3, &mut recall, &mut ndcg), RkStatus::Ok);
        assert!((ndcg - 0.919721).abs() < 1e-6);
        assert_eq!(rk_eval(run, qrels, 0, &mut recall, &mut ndcg), RkStatus::InvalidArgument);
        rk_run_free(run);
        rk_qrels_free(qrels);
    }
    fs::write(&run_path, "q Q0 a 1 3 t\nq Q0 b 3 2 t\n").unwrap();
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { rk_run_load(run_c.as_ptr(), &mut run) }, RkStatus::Validation);
    assert!(last_error().contains("rank gap"));
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(rk_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
