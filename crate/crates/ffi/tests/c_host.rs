//! Builds examples/host.c against the static library from this test build.

use std::path::{Path, PathBuf};
use std::process::Command;

fn static_lib() -> Option<PathBuf> {
    let deps = std::env::current_exe().ok()?.parent()?.to_path_buf();
    let lib = deps.join("libadaptics_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_host_links_and_runs() {
    let Some(lib) = static_lib() else {
        eprintln!("skipped: static library not found next to the test binary");
        return;
    };
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("adaptics_host");
    let compiled = Command::new("cc")
        .args(["-std=c11", "-D_POSIX_C_SOURCE=199309L", "-Wall", "-Wextra", "-Werror", "-o"])
        .arg(&out)
        .arg(manifest.join("examples/host.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status();
    let Ok(compiled) = compiled else {
        eprintln!("skipped: no C compiler");
        return;
    };
    assert!(compiled.success());

    let run = Command::new(&out).arg(manifest.join("../../corpus/loading.adaptics")).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("finished=1") && stdout.contains("after deinit: invalid-handle"), "{stdout}");

    let missing = Command::new(&out).arg(manifest.join("missing.adaptics")).output().unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error 4 io:"));
}
