use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use wireless_fl::table::Table;

fn wfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wfl")).args(args).output().expect("wfl runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = wfl(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn manifest_hash(dir: &Path) -> String {
    let text = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    assert!(text.contains("version = wireless-fl "));
    text.lines().find_map(|l| l.strip_prefix("config_hash = ")).unwrap().to_string()
}

fn check_tables(dir: &Path, names: &[&str]) {
    let hash = manifest_hash(dir);
    for name in names {
        let t = Table::load(&dir.join(format!("{name}.csv"))).unwrap();
        assert!(!t.is_empty(), "{name} is empty");
        assert_eq!(t.config_hash(), hash, "{name}");
    }
}

#[test]
fn every_subcommand_writes_tables_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = |n: &str| tmp.path().join(n).to_string_lossy().into_owned();
    let small = ["--rounds", "10", "--replications", "2"];

    run_ok(&[&["simulate", "--out", &out("sim"), "--scheme", "analog"][..], &small].concat());
    check_tables(&tmp.path().join("sim"), &["trace", "summary"]);

    run_ok(&["bounds", "--out", &out("bounds")]);
    check_tables(&tmp.path().join("bounds"), &["bounds", "gap_vs_bits"]);

    run_ok(&["optimize", "--out", &out("opt"), "--b-max", "10"]);
    check_tables(&tmp.path().join("opt"), &["inclusion", "optimizer", "dinkelbach_trace", "search"]);

    run_ok(&["sweep", "--out", &out("sweep"), "--axis", "rho", "--grid", "0.5,0.9", "--replications", "0"]);
    check_tables(&tmp.path().join("sweep"), &["sweep"]);

    run_ok(&[&["compare", "--out", &out("cmp"), "--plans", "uniform,optimized"][..], &small].concat());
    check_tables(&tmp.path().join("cmp"), &["compare"]);
    let t = Table::load(&tmp.path().join("cmp/compare.csv")).unwrap();
    assert_eq!(t.len(), 4);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# bounds only\npreset = reference\nquant_bits = 4\n").unwrap();
    let cfg = cfg.to_string_lossy().into_owned();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&["bounds", "--config", &cfg, "--quant_bits", "6", "--out", a.to_str().unwrap()]);
    run_ok(&["bounds", "--preset", "reference", "--quant-bits", "6", "--out", b.to_str().unwrap()]);
    assert_eq!(manifest_hash(&a), manifest_hash(&b));
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("quant_bits = 6"));
    assert!(manifest.contains("preset = reference"));
}

#[test]
fn dbm_alias_matches_watts() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&["bounds", "--power_dbm", "30", "--out", a.to_str().unwrap()]);
    run_ok(&["bounds", "--power_budget_w", "1", "--out", b.to_str().unwrap()]);
    assert_eq!(manifest_hash(&a), manifest_hash(&b));
}

#[test]
fn bad_input_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "quant_bits = 8\nnot_a_key = 1\n").unwrap();
    let out = wfl(&["bounds", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("not_a_key"), "{err}");

    fs::write(&cfg, "quant_bits eight\n").unwrap();
    let out = wfl(&["bounds", "--config", cfg.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    let out = wfl(&["bounds", "--quant_bits", "many"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--quant_bits"));

    assert!(!wfl(&["sweep", "--axis", "colour", "--grid", "1"]).status.success());
    assert!(!wfl(&["compare", "--plans", "psychic"]).status.success());
}

#[test]
fn infeasible_sweep_points_are_flagged_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let res = run_ok(&[
        "sweep",
        "--preset",
        "reference",
        "--axis",
        "devices",
        "--grid",
        "1,5,12",
        "--replications",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("note:"));
    let t = Table::load(&out.join("sweep.csv")).unwrap();
    assert_eq!(t.len(), 6);
    let feasible: Vec<&str> = (0..t.len()).map(|i| t.get(i, "feasible").unwrap()).collect();
    assert_eq!(feasible, ["false", "false", "true", "true", "false", "false"]);
    assert!(t.get(4, "note").unwrap().contains("num_subbands"));
}
