use std::path::{Path, PathBuf};
use std::process::Command;

/// The static library sits next to this test binary in `target/<profile>/deps`.
fn static_lib() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().unwrap().join("libhesearch_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    lib
}

#[test]
fn c_program_links_and_runs() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(root.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(static_lib())
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .expect("C compiler");
    assert!(status.success());
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), format!("ok {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn header_compiles_as_cpp() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let status = Command::new("c++")
        .args(["-fsyntax-only", "-x", "c++", "-I"])
        .arg(root.join("include"))
        .arg(root.join("include/hesearch.h"))
        .status()
        .expect("C++ compiler");
    assert!(status.success());
}
