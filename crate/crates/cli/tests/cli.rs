use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn entropic(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entropic")).current_dir(dir).args(args).output().expect("binary runs")
}

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("u12.tsv"), "#field p=5\n1\t1/2\n2\t1/2\n").unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn entropy_of_product_with_sum() {
    let dir = setup();
    let o = entropic(
        dir.path(),
        &["entropy", "--field", "p=5", "--bind", "X=u12.tsv", "--bind", "Y=u12.tsv", "--bind", "Z=u12.tsv", "H[X*(Y+Z)]", "--out", "e.json"],
    );
    assert!(o.status.success());
    let bits: f64 = stdout(&o).trim().split('\t').nth(1).unwrap().parse().unwrap();
    assert!((bits - 1.905639).abs() < 1e-6);
    let v = json(dir.path(), "e.json");
    assert!(v.to_string().contains("1.9056390622"));
}

#[test]
fn unbound_variable_is_usage_error() {
    let dir = setup();
    let o = entropic(dir.path(), &["entropy", "--bind", "X=u12.tsv", "H[X+Q]"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains('Q'));
}

#[test]
fn bad_flags_and_suites_exit_two() {
    let dir = setup();
    assert_eq!(entropic(dir.path(), &["verify", "--suite", "nope"]).status.code(), Some(2));
    assert_eq!(entropic(dir.path(), &["entropy", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(entropic(dir.path(), &["entropy", "--bind", "X=missing.tsv", "H[X]"]).status.code(), Some(2));
}

#[test]
fn tiny_budget_is_resource_error() {
    let dir = setup();
    let o = entropic(
        dir.path(),
        &["--budget", "4", "entropy", "--bind", "X=u12.tsv", "--bind", "Y=u12.tsv", "--bind", "Z=u12.tsv", "H[X*(Y+Z)]"],
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_report_is_reproducible() {
    let dir = setup();
    let run = |out: &str| {
        let o = entropic(dir.path(), &["verify", "--suite", "flat-decomposition", "--trials", "20", "--seed", "9", "--out", out]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let mut v = json(dir.path(), out);
        v["wall_time"] = Value::from(0.0);
        (stdout(&o), v)
    };
    let (s1, a) = run("a.json");
    let (s2, b) = run("b.json");
    assert_eq!(a, b);
    assert_eq!(s1, s2);
    assert_eq!(a["summary"]["trials"], 20);
    assert!(s1.contains("violations\t0"));
}

#[test]
fn generators_are_seeded() {
    let dir = setup();
    let gen = |seed: &str| stdout(&entropic(dir.path(), &["gen", "corpus", "--field", "p=11", "--seed", seed, "--index", "2"]));
    assert_eq!(gen("3"), gen("3"));
    assert_ne!(gen("3"), gen("4"));
    let o = entropic(dir.path(), &["gen", "uniform", "--field", "p=7", "--values", "1,2,3"]);
    assert_eq!(stdout(&o), "#field p=7\n1\t1/3\n2\t1/3\n3\t1/3\n");
}

#[test]
fn decompose_extract_search_smoke() {
    let dir = setup();
    assert!(entropic(dir.path(), &["gen", "binomial", "--n", "8", "--out", "b.tsv"]).status.success());
    assert!(entropic(dir.path(), &["decompose", "--source", "b.tsv", "--out", "d.json"]).status.success());
    assert_eq!(json(dir.path(), "d.json")["m"], 1);

    let o = entropic(dir.path(), &["extract", "--p", "5", "--source", "u12.tsv"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("1.9056390622"));

    let o = entropic(dir.path(), &["search", "--p", "7", "--k", "3", "--iters", "50", "--outer", "3", "--seed", "1", "--out", "s.json"]);
    assert!(o.status.success());
    assert!(dir.path().join("s.json").exists());
}

#[test]
fn incidence_counts() {
    let dir = setup();
    let p = dir.path();
    fs::write(p.join("a.tsv"), "#field Q\n1\n2\n3\n").unwrap();
    fs::write(p.join("pts.tsv"), "#field Q\n0 0 0\n1 0 0\n0 1 0\n").unwrap();
    fs::write(p.join("planes.tsv"), "#field Q\n0 0 1 0\n1 0 0 1\n").unwrap();
    // brute force over {1,2,3}^6 gives 79
    let o = entropic(p, &["incidence", "--sets", "a.tsv", "a.tsv", "a.tsv"]);
    assert!(stdout(&o).contains("energy\t79"));
    let o = entropic(p, &["incidence", "--points", "pts.tsv", "--planes", "planes.tsv"]);
    assert_eq!(stdout(&o).trim(), "incidences\t4");
}
