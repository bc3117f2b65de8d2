use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "tsca.h"

int main(void) {
    TscaModel *m = NULL;
    if (tsca_model_init(TSCA_PRESET_TINY, 7, &m) != TSCA_STATUS_OK) return 1;
    size_t len = tsca_model_seq_len(m);
    double x[16], z[8];
    for (size_t i = 0; i < len; i++) x[i] = (double)(i % 5);
    if (tsca_model_project(m, x, len, z, 8) != TSCA_STATUS_OK) return 2;
    if (tsca_model_load("/nonexistent/x.tsca", &m) != TSCA_STATUS_IO) return 3;
    if (tsca_last_error_message() == NULL) return 4;
    tsca_model_free(m);
    printf("ok %zu\n", len);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

fn compiler() -> Option<String> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
        .map(str::to_string)
}

#[test]
fn header_compiles_and_links_from_c() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let lib = target_dir().join("libtsca_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = dir.path().join("main");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(
        out.status.success(),
        "C program exited with {:?}",
        out.status
    );
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok 16");
}
