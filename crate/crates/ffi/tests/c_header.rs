//! Compiles and runs a C program against the generated header and the
//! static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "homlab.h"

int main(void) {
    HomlabModel *model = NULL;
    if (homlab_model_new("layered", "sine1", "sine-sine", &model) != HOMLAB_STATUS_OK) return 1;
    HomlabCellSolution *cell = NULL;
    if (homlab_cell_solve(model, 32, &cell) != HOMLAB_STATUS_OK) return 2;
    double a[4];
    homlab_cell_effective_matrix(cell, a);
    double m = 0.0;
    homlab_cell_effective_potential(cell, &m);
    printf("%.6f %.6f %.6e\n", a[0], a[3], m);
    homlab_cell_free(cell);
    homlab_model_free(model);

    HomlabModel *bad = NULL;
    if (homlab_model_new("layered", "nope", "one", &bad) != HOMLAB_STATUS_CONFIG) return 3;
    char msg[256];
    homlab_last_error_message(msg, sizeof msg);
    printf("%s\n", msg);
    return bad == NULL ? 0 : 4;
}
"#;

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<this test>
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib_dir = target_dir();
    assert!(lib_dir.join("libhomlab_ffi.a").exists(), "static library not found in {}", lib_dir.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("smoke.c");
    let bin = work.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(lib_dir.join("libhomlab_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .expect("C compiler available");
    assert!(status.success(), "C build failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let nums: Vec<f64> = lines.next().unwrap().split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert!((nums[0] - 3f64.sqrt()).abs() < 5e-3, "{text}");
    assert!((nums[1] - 2.0).abs() < 1e-3, "{text}");
    assert!(nums[2] < 0.0, "{text}");
    assert!(lines.next().unwrap().contains("nope"), "{text}");
}
