//! Compiles and runs a small C program against the generated header and the
//! static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "rerankit.h"

int main(void) {
    RkScorer *s = NULL;
    if (rk_scorer_init(4, 1, &s) != RK_STATUS_OK) return 1;
    double q[4] = {1, 0, 0, 0}, v[4] = {0, 1, 0, 0}, score = 0;
    if (rk_scorer_score(s, q, v, 4, NULL, NULL, &score) != RK_STATUS_OK) return 2;
    rk_scorer_free(s);

    double d = 0;
    if (rk_delta_pct(0.306, 0.478, &d) != RK_STATUS_OK) return 3;
    if (fabs(d - 56.21) > 0.005) return 4;
    if (rk_delta_pct(0.0, 1.0, &d) != RK_STATUS_UNDEFINED) return 5;
    if (rk_last_error() == NULL) return 6;

    RkObjective obj = rk_objective_default();
    double scores[2] = {0, 0}, probs[2] = {0.5, 0.5};
    uint8_t labels[2] = {1, 0};
    RkLoss loss;
    if (rk_group_loss(scores, probs, labels, 2, 0, &obj, &loss, NULL) != RK_STATUS_OK) return 7;
    if (fabs(loss.total - 4.418813) > 1e-6) return 8;
    printf("ok %s\n", rk_version());
    return 0;
}
"#;

/// `target/<profile>` of the running test binary.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = profile_dir().join("librerankit_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    let bin = tmp.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("run C compiler");
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "smoke program exited with {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), format!("ok {}", env!("CARGO_PKG_VERSION")));
}
