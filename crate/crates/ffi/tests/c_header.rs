//! Compiles a C program against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    // <target>/<profile>/deps/<test binary>
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = manifest.join("include/fibrig.h");
    assert!(header.exists(), "header not generated");
    let dir = target_dir();
    let lib = [dir.join("libfibrig_ffi.a"), dir.join("deps/libfibrig_ffi.a")]
        .into_iter()
        .find(|p| p.exists())
        .expect("static library built alongside the tests");
    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let src = tmp.join("fibrig_smoke.c");
    let exe = tmp.join("fibrig_smoke");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include "fibrig.h"

int main(void) {
    FibrigLayout *l = NULL;
    if (fibrig_layout_new(1, 8, 0.25, 0.4, &l) != FIBRIG_STATUS_OK) return 1;
    FibrigField *u = NULL;
    if (fibrig_sequence_new("shear", l, &u) != FIBRIG_STATUS_OK) return 2;
    double x[3] = {0.0625, 0.0625, 0.5}, g[9];
    if (fibrig_field_gradient(u, x, 1e-4, g) != FIBRIG_STATUS_OK) return 3;
    if (!(fibrig_dist_so3(g) < 1e-12)) return 4;
    if (fibrig_layout_new(1, 0, 0.25, 0.4, &l) != FIBRIG_STATUS_INVALID_ARGUMENT) return 5;
    if (fibrig_last_error()[0] == '\0') return 6;
    fibrig_field_free(u);
    printf("fibrig %s ok\n", fibrig_version());
    return 0;
}
"#,
    )
    .unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("fibrig 0.1.0 ok"));
}
