use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "ibdwaves.h"

int main(void) {
    IbdParams *p = NULL;
    double v = 0.0;
    char msg[128];
    if (ibd_params_unit_rates(2.0, 0.05, &p) != IBD_STATUS_OK) return 1;
    if (ibd_uptw_min_speed(p, 2.0, &v) != IBD_STATUS_OK) return 2;
    if (v < 1.15 || v > 1.16) return 3;
    if (ibd_uptw_min_speed(p, 0.5, &v) == IBD_STATUS_OK) return 4;
    if (ibd_last_error(msg, sizeof msg) == 0) return 5;
    ibd_params_free(p);
    printf("%s\n", ibd_version());
    return 0;
}
"#;

fn include_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

#[test]
fn header_declares_the_exported_symbols() {
    let header = std::fs::read_to_string(include_dir().join("ibdwaves.h")).unwrap();
    for name in [
        "ibd_last_error",
        "ibd_params_unit_rates",
        "ibd_params_free",
        "ibd_profile_solve",
        "ibd_profile_copy",
        "ibd_simulate",
        "ibd_simulation_front_speed",
        "IBD_STATUS_BUFFER_TOO_SMALL",
        "typedef struct IbdProfile IbdProfile;",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    let test_exe = std::env::current_exe().unwrap();
    let profile_dir = test_exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libibdwaves_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let dir = std::env::temp_dir().join(format!("ibdwaves-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("main.c");
    let exe = dir.join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(include_dir())
        .arg(&src)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
    std::fs::remove_dir_all(&dir).ok();
}
