use std::path::{Path, PathBuf};
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(crate_dir().join("include/spinorbit.h")).unwrap();
    for sym in [
        "so_version",
        "so_last_error",
        "so_crystal_quartz",
        "so_crystal_load",
        "so_crystal_free",
        "so_grid_scan",
        "so_grid_free",
        "so_grid_winding",
        "so_grid_oam",
        "so_grid_interference",
        "so_coil_phase",
        "so_run_config",
        "so_run_preset",
        "typedef struct SoGrid SoGrid;",
        "SO_STATUS_PHYSICS = 4",
    ] {
        assert!(h.contains(sym), "header lacks {sym}");
    }
}

fn static_lib() -> Option<PathBuf> {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().ok()?;
    let profile = exe.parent()?.parent()?;
    let lib = profile.join("libspinorbit_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = static_lib().expect("static library next to the test binary");
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success(), "C compilation failed");
    let run = Command::new(Path::new(&exe)).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let line = String::from_utf8(run.stdout).unwrap();
    assert!(line.starts_with(env!("CARGO_PKG_VERSION")), "{line}");
}
