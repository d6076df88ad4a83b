use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn spinorbit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinorbit")).args(args).output().unwrap()
}

fn config(out: &Path) -> String {
    format!(
        r#"
[geometry]
kind = "bragg"
hkl = [1, 1, 0]
thickness_um = 300.0
wavelength = 2.0

[scan]
theta = {{ half_width = 1.0, unit = "darwin", n = 32 }}
rho = {{ half_width = 0.2, unit = "deg", n = 32 }}

[output]
dir = "{}"

[[analysis]]
mode = "polarization"
name = "pol"
layout = "map"

[[analysis]]
mode = "oam"
name = "oam"
truncation = 8

[[analysis]]
mode = "phase-map"
name = "phase"
loops = [4, 10]

[[analysis]]
mode = "instrument"
name = "coil"
coil = {{ tilt_deg = 5.0, alpha_deg = {{ half_width = 1.0, unit = "deg", n = 9 }}, guide_field_mt = [0.0, 1.0], wavelength = 1.8, noise = 1e-4 }}
"#,
        out.display()
    )
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn error_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {text}"))
}

#[test]
fn repeated_runs_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        let cfg = tmp.path().join(format!("run{i}.toml"));
        std::fs::write(&cfg, config(&out)).unwrap();
        let o = spinorbit(&["--threads", threads, "--seed", "7", "run", cfg.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(files(&out));
    }
    assert!(outputs[0].contains_key("summary.json"));
    assert!(outputs[0].keys().any(|k| k.starts_with("coil-fit")));
    assert_eq!(outputs[0].keys().collect::<Vec<_>>(), outputs[1].keys().collect::<Vec<_>>());
    for (name, bytes) in &outputs[0] {
        // the config hash differs only through the output path, which is
        // not part of the tables' numeric content
        let strip = |b: &[u8]| {
            String::from_utf8_lossy(b)
                .lines()
                .filter(|l| !l.contains("sha256"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip(bytes), strip(&outputs[1][name]), "{name}");
    }
}

#[test]
fn same_config_reproduces_its_files_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, config(&out)).unwrap();
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let o = spinorbit(&["run", cfg.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        snapshots.push(files(&out));
    }
    assert_eq!(snapshots[0], snapshots[1]);
}

#[test]
fn summary_lines_name_every_section() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, config(&out)).unwrap();
    let o = spinorbit(&["run", cfg.to_str().unwrap()]);
    let stdout = String::from_utf8(o.stdout).unwrap();
    for name in ["pol", "oam", "phase", "coil"] {
        assert!(stdout.lines().any(|l| l.starts_with(name)), "{name}: {stdout}");
    }
}

#[test]
fn empty_theta_range_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    let text = config(&tmp.path().join("out")).replace(
        "theta = { half_width = 1.0, unit = \"darwin\", n = 32 }",
        "theta = { start = 1.0, end = 1.0, unit = \"arcsec\", n = 32 }",
    );
    std::fs::write(&cfg, text).unwrap();
    let o = spinorbit(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["error"], "config");
    assert_eq!(e["key"], "scan.theta");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn unknown_key_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, config(&tmp.path().join("out")).replace("wavelength = 2.0", "wavelength = 2.0\ncolour = 1")).unwrap();
    let o = spinorbit(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_json(&o)["key"].as_str().unwrap().starts_with("geometry"));
}

#[test]
fn missing_config_file_exits_with_io_code() {
    let o = spinorbit(&["run", "/no/such/config.toml"]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_json(&o)["error"], "io");
}

#[test]
fn unknown_preset_is_a_config_error() {
    let o = spinorbit(&["preset", "fig9"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["key"], "preset");
}

#[test]
fn list_presets_is_sorted() {
    let o = spinorbit(&["list-presets"]);
    assert!(o.status.success());
    let names: Vec<String> = String::from_utf8(o.stdout).unwrap().lines().map(str::to_string).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    assert!(names.iter().any(|n| n == "fig4"));
}

#[test]
fn preset_writes_into_the_requested_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("coil");
    let o = spinorbit(&["preset", "coil-model", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("coil-model-phase.csv").exists());
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["sections"].as_array().unwrap().len() == 1);
}
