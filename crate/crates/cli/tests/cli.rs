use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn nsl(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nsl"));
    cmd.args(args).env("NSL_THREADS", "1");
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("NSL_") && k != "NSL_THREADS") {
        cmd.env_remove(k);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = nsl(args, &[]);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn generate(dir: &TempDir, name: &str, family: &[&str]) -> String {
    let path = dir.path().join(name);
    let p = path.to_str().unwrap().to_string();
    let mut args = vec!["generate"];
    args.extend_from_slice(family);
    args.extend_from_slice(&["-o", &p]);
    ok(&args);
    p
}

#[test]
fn generate_then_sample_mandarin() {
    let dir = TempDir::new().unwrap();
    let g = generate(&dir, "m7.json", &["mandarin", "7"]);
    let out = dir.path().join("s.json");
    ok(&["sample", "-g", &g, "-N", "10000", "--seed", "1", "-o", out.to_str().unwrap()]);
    let doc = read(&out);
    assert_eq!(doc["result"]["beta"], 6);
    let probs: Vec<f64> = serde_json::from_value(doc["result"]["distribution"]["probs"].clone()).unwrap();
    assert_eq!(probs.len(), 7);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(doc["manifest"]["subcommand"], "sample");
    assert_eq!(doc["manifest"]["config"]["seed"], 1);
    assert_eq!(doc["manifest"]["graph_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn oracle_and_sampler_agree_on_dumbbell() {
    let dir = TempDir::new().unwrap();
    let g = generate(&dir, "d.json", &["dumbbell"]);
    let o = dir.path().join("o.json");
    let s = dir.path().join("s.json");
    let c = dir.path().join("c.json");
    let table = dir.path().join("modes.csv");
    ok(&["oracle", "-g", &g, "--modes", "500", "--lengths-seed", "3", "--table", table.to_str().unwrap(), "-o", o.to_str().unwrap()]);
    ok(&["sample", "-g", &g, "-N", "20000", "--lengths-seed", "3", "-o", s.to_str().unwrap()]);
    ok(&["compare", o.to_str().unwrap(), s.to_str().unwrap(), "-o", c.to_str().unwrap()]);
    let doc = read(&c);
    assert_eq!(doc["result"]["verdict"], "pass");
    assert_eq!(read(&o)["result"]["lengths"], read(&s)["result"]["weights"]);
    let csv = std::fs::read_to_string(table).unwrap();
    assert!(csv.starts_with("n,k,multiplicity,generic,reason,zero_count,surplus\n"));
}

#[test]
fn betti_mismatch_in_compare_is_a_domain_error() {
    let dir = TempDir::new().unwrap();
    let d = generate(&dir, "d.json", &["dumbbell"]);
    let l = generate(&dir, "l.json", &["lollipop"]);
    let s1 = dir.path().join("s1.json");
    let s2 = dir.path().join("s2.json");
    ok(&["sample", "-g", &d, "-N", "200", "-o", s1.to_str().unwrap()]);
    ok(&["sample", "-g", &l, "-N", "200", "-o", s2.to_str().unwrap()]);
    let out = nsl(&["compare", s1.to_str().unwrap(), s2.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let out = nsl(&["sample", "--bogus"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(nsl(&["--help"], &[]).status.code(), Some(0));
}

#[test]
fn seed_precedence_flag_over_environment() {
    let dir = TempDir::new().unwrap();
    let g = generate(&dir, "l.json", &["lollipop"]);
    let out = dir.path().join("a.json");
    let o = out.to_str().unwrap();
    let r = nsl(&["sample", "-g", &g, "-N", "100", "-o", o], &[("NSL_SEED", "5")]);
    assert!(r.status.success());
    assert_eq!(read(&out)["manifest"]["config"]["seed"], 5);
    assert_eq!(read(&out)["manifest"]["seeds"]["master"], 5);
    let r = nsl(&["sample", "-g", &g, "-N", "100", "--seed", "7", "-o", o], &[("NSL_SEED", "5")]);
    assert!(r.status.success());
    assert_eq!(read(&out)["manifest"]["config"]["seed"], 7);
    let r = nsl(&["sample", "-g", &g, "-o", o], &[("NSL_SAMPLES", "64")]);
    assert!(r.status.success());
    assert_eq!(read(&out)["result"]["distribution"]["n_samples"], 64);
}

#[test]
fn weight_length_mismatch_exits_one() {
    let dir = TempDir::new().unwrap();
    let g = generate(&dir, "d.json", &["dumbbell"]);
    let out = nsl(&["sample", "-g", &g, "-N", "10", "--weights", "1,2"], &[]);
    assert_eq!(out.status.code(), Some(1));
    let out = nsl(&["sample", "-g", &g, "-N", "10", "--weights", "1,2,3", "--lengths-seed", "2"], &[]);
    assert_eq!(out.status.code(), Some(1), "contradictory flags");
}

#[test]
fn invalid_graph_file_exits_one() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"vertices":3,"edges":[[0,1],[1,2],[2,0]]}"#).unwrap();
    let out = nsl(&["sample", "-g", path.to_str().unwrap(), "-N", "10"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid graph"));
    let out = nsl(&["generate", "complete", "3"], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn discard_threshold_breach_exits_two() {
    let dir = TempDir::new().unwrap();
    let g = generate(&dir, "l.json", &["lollipop"]);
    let out = nsl(&["sample", "-g", &g, "-N", "10", "--max-discard=-1"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

fn result_of(path: &Path) -> Value {
    read(path)["result"].clone()
}

#[test]
fn output_is_independent_of_thread_count_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let g = generate(&dir, "k5.json", &["complete", "5"]);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let o = a.to_str().unwrap();
    ok(&["sample", "-g", &g, "-N", "300", "--all-edges", "--threads", "1", "-o", o]);
    let first = std::fs::read_to_string(&a).unwrap();
    ok(&["sample", "-g", &g, "-N", "300", "--all-edges", "--threads", "1", "-o", o]);
    let second = std::fs::read_to_string(&a).unwrap();
    ok(&["sample", "-g", &g, "-N", "300", "--all-edges", "--threads", "3", "-o", b.to_str().unwrap()]);
    assert_eq!(result_of(&a), result_of(&b));
    // identical manifests apart from the clock give byte-identical documents
    let strip = |t: &str| t.lines().filter(|l| !l.contains("wall_time_s")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&first), strip(&second));
    let doc = read(&a);
    assert!(doc["result"]["per_edge"]["reconstruction_residual"].as_f64().unwrap() < 1e-12);
    assert_eq!(doc["result"]["per_edge"]["edges"].as_array().unwrap().len(), 10);
}

#[test]
fn orbits_of_complete_and_stower() {
    let dir = TempDir::new().unwrap();
    let g = generate(&dir, "k5.json", &["complete", "5"]);
    let out = ok(&["orbits", "-g", &g]);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["result"]["orbits"].as_array().unwrap().len(), 1);
    let s = generate(&dir, "s.json", &["stower", "3", "4"]);
    let out = ok(&["orbits", "-g", &s]);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["result"]["orbits"], serde_json::json!([[0, 1, 2], [3, 4, 5, 6]]));
}

#[test]
fn generated_graph_round_trips_and_floats_have_fixed_width() {
    let dir = TempDir::new().unwrap();
    let g = generate(&dir, "r.json", &["regular", "5", "8", "--seed", "4"]);
    let doc = read(Path::new(&g));
    assert_eq!(doc["vertices"], 8);
    assert_eq!(doc["betti"], 13);
    assert_eq!(doc["manifest"]["seeds"]["master"], 4);
    let s = dir.path().join("s.json");
    ok(&["sample", "-g", &g, "-N", "40", "-o", s.to_str().unwrap()]);
    let text = std::fs::read_to_string(&s).unwrap();
    let probs_line = text.lines().find(|l| l.contains("e-") || l.contains("e0")).unwrap();
    let number = probs_line.trim().trim_end_matches(',').rsplit(' ').next().unwrap();
    let mantissa = number.split('e').next().unwrap().trim_start_matches('-');
    assert_eq!(mantissa.len(), 18, "{number}");
}

#[test]
fn sweep_writes_table_and_figures() {
    let dir = TempDir::new().unwrap();
    let table = dir.path().join("sweep.csv");
    let figs = dir.path().join("figs");
    let json = dir.path().join("sweep.json");
    ok(&[
        "sweep",
        "--preset",
        "desk",
        "--budget",
        "1500",
        "-o",
        table.to_str().unwrap(),
        "--figures",
        figs.to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(&table).unwrap();
    assert_eq!(csv.lines().count(), 10);
    for f in ["ks.csv", "variances.csv", "normalized.csv"] {
        assert!(figs.join(f).exists());
    }
    let doc = read(&json);
    assert_eq!(doc["result"]["table"]["records"].as_array().unwrap().len(), 9);
    assert!(doc["result"]["ks_trend"]["points"].is_array());
    let out = nsl(&["sweep", "--preset", "laptop"], &[]);
    assert_eq!(out.status.code(), Some(1));
}
