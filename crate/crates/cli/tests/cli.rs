use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

const CONV4_BEST: &str = "Fw(3) Fh(3) X(8) K(16) Y(8) C(32) Y(56) K(256) C(128) X(56)";

fn convblock(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convblock"))
        .args(args)
        .env_remove("CONVBLOCK_ENERGY_TABLE")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid json")
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("convblock-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

#[test]
fn analyze_reports_conv4_macs() {
    let v = json(&convblock(&["analyze", "--layer", "conv4", "--string", CONV4_BEST, "--format", "json"]));
    assert_eq!(v["report"]["total_macs"], 924_844_032u64);
    assert!(v["report"]["total_pj"].as_f64().unwrap() > 0.0);
}

#[test]
fn analyze_csv_has_one_row_per_buffer() {
    let out = convblock(&["analyze", "--layer", "conv4", "--string", CONV4_BEST, "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("kind,level,owner_pos"));
    let v = json(&convblock(&["analyze", "--layer", "conv4", "--string", CONV4_BEST, "--format", "json"]));
    assert_eq!(lines.count(), v["buffers"].as_array().unwrap().len());
}

#[test]
fn simulate_check_passes_on_a_custom_layer() {
    let layer = scratch("small.json", r#"{"x":6,"y":4,"c":3,"k":4,"fw":3,"fh":1}"#);
    let out = convblock(&[
        "simulate",
        "--layer",
        layer.to_str().unwrap(),
        "--string",
        "Fw(3) X(2) C(3) K(2) X(6) Y(4) K(4)",
        "--check",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn optimize_is_deterministic_across_threads() {
    let args = |threads: &'static str| {
        convblock(&[
            "optimize", "--layer", "conv3", "--mode", "fixed", "--hierarchy", "diannao", "--search", "beam",
            "--seed", "7", "--format", "json", "--threads", threads,
        ])
    };
    let one = args("1");
    let four = args("4");
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn invalid_string_exits_one() {
    let out = convblock(&["analyze", "--layer", "conv4", "--string", "Fw(3) Fh(3) X(8)"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid blocking string"));
}

#[test]
fn unschedulable_hierarchy_exits_two() {
    let h = scratch(
        "tiny.json",
        r#"{"levels":[{"name":"L0","kb":0.001,"width":64,"kind":"SRAM"},{"name":"DRAM","kind":"DRAM"}]}"#,
    );
    let out = convblock(&["optimize", "--layer", "conv3", "--mode", "fixed", "--hierarchy", h.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn energy_table_env_is_honoured() {
    let args = ["analyze", "--layer", "conv4", "--string", CONV4_BEST, "--format", "json"];
    let base = json(&convblock(&args));
    let mut table = convblock::EnergyTable::default();
    table.dram_pj *= 2.0;
    let path = scratch("table.json", &serde_json::to_string(&table).unwrap());
    let run = |file: &PathBuf| {
        Command::new(env!("CARGO_BIN_EXE_convblock")).args(args).env("CONVBLOCK_ENERGY_TABLE", file).output().unwrap()
    };
    let doubled = json(&run(&path));
    let dram = |v: &Value| v["report"]["dram_pj"].as_f64().unwrap();
    assert!((dram(&doubled) - 2.0 * dram(&base)).abs() <= 1e-9 * dram(&doubled));

    let bad = scratch("bad_table.json", "{ not json");
    assert_eq!(run(&bad).status.code(), Some(1));
}

#[test]
fn multicore_csv_covers_every_core_count() {
    let out = convblock(&[
        "multicore", "--layer", "conv3", "--string", "Fw(4) Fh(4) X(8) K(8) Y(8) C(54) K(200) X(32) Y(32) C(108)",
        "--cores", "1,2", "--scheme", "k", "--format", "csv",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn layer_files_may_be_named_or_listed() {
    let named = scratch("named.json", r#"{"name":"small","x":6,"y":4,"c":3,"k":4,"fw":3,"fh":1}"#);
    let v = json(&convblock(&[
        "analyze", "--layer", named.to_str().unwrap(), "--string", "Fw(3) X(6) Y(4) C(3) K(4)", "--format", "json",
    ]));
    assert_eq!(v["report"]["total_macs"], 6 * 4 * 3 * 4 * 3);

    let list = scratch(
        "list.json",
        r#"[{"name":"a","x":4,"y":4,"c":2,"k":2,"fw":1,"fh":1},{"name":"b","x":4,"y":4,"c":2,"k":4,"fw":3,"fh":3}]"#,
    );
    let out = convblock(&["codesign", "--layer", list.to_str().unwrap(), "--points", "2", "--format", "json"]);
    let v = json(&out);
    assert_eq!(v["joint"]["schedules"].as_array().map(Vec::len), Some(2), "{v}");
}
