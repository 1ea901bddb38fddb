use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn privelet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privelet"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PRIVELET_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = privelet(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn prepare(dir: &Path) {
    ok(&["synth", "--n", "2000", "--m", "256", "--seed", "3", "--out-dir", "."], dir);
    ok(&["ingest", "--schema", "schema.json", "--data", "data.csv", "--out", "exact.txt"], dir);
}

#[test]
fn pipeline_from_synthetic_data_to_query_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    ok(
        &["publish", "--schema", "schema.json", "--matrix", "exact.txt", "--method", "privelet+", "--epsilon", "1", "--split", "auto", "--seed", "5", "--out", "noisy.txt"],
        d,
    );
    ok(&["workload", "--schema", "schema.json", "--count", "50", "--seed", "1", "--out", "q.txt"], d);
    ok(
        &["query", "--schema", "schema.json", "--matrix", "noisy.txt", "--exact", "exact.txt", "--queries", "q.txt", "--out", "r.csv"],
        d,
    );
    let results = fs::read_to_string(d.join("r.csv")).unwrap();
    let mut lines = results.lines();
    assert_eq!(lines.next().unwrap(), "query,exact,noisy,selectivity,coverage,square_error,relative_error");
    assert_eq!(lines.count(), 50);

    let noisy = fs::read_to_string(d.join("noisy.txt")).unwrap();
    assert!(noisy.contains("privelet+"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    for out in ["a.txt", "b.txt"] {
        ok(
            &["publish", "--schema", "schema.json", "--matrix", "exact.txt", "--method", "privelet", "--epsilon", "0.5", "--seed", "9", "--out", out],
            d,
        );
    }
    assert_eq!(fs::read(d.join("a.txt")).unwrap(), fs::read(d.join("b.txt")).unwrap());
}

#[test]
fn splitting_every_attribute_publishes_what_basic_publishes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    ok(
        &["publish", "--schema", "schema.json", "--matrix", "exact.txt", "--method", "basic", "--epsilon", "1", "--seed", "2", "--out", "basic.txt"],
        d,
    );
    ok(
        &["publish", "--schema", "schema.json", "--matrix", "exact.txt", "--method", "privelet+", "--epsilon", "1", "--split", "ord1,ord2,nom1,nom2", "--seed", "2", "--out", "plus.txt"],
        d,
    );
    ok(&["workload", "--schema", "schema.json", "--count", "30", "--out", "q.txt"], d);
    let answers = |m: &str| ok(&["query", "--schema", "schema.json", "--matrix", m, "--queries", "q.txt"], d).stdout;
    assert_eq!(answers("basic.txt"), answers("plus.txt"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(privelet(&["publish", "--schema", "schema.json"], d).status.code(), Some(1));
    assert_eq!(privelet(&["frobnicate"], d).status.code(), Some(1));
    prepare(d);
    let bad = privelet(
        &["publish", "--schema", "schema.json", "--matrix", "exact.txt", "--method", "nope", "--epsilon", "1", "--out", "x.txt"],
        d,
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("nope"));
    let neg = privelet(
        &["publish", "--schema", "schema.json", "--matrix", "exact.txt", "--method", "basic", "--epsilon", "0", "--out", "x.txt"],
        d,
    );
    assert_eq!(neg.status.code(), Some(2));
    assert_eq!(privelet(&["ingest", "--schema", "missing.json", "--data", "data.csv", "--out", "x"], d).status.code(), Some(2));
}

#[test]
fn bench_writes_one_table_per_method_and_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &["bench", "--n", "3000", "--m", "256", "--epsilons", "0.5,1", "--queries", "500", "--out-dir", "out"],
        d,
    );
    let mut names: Vec<String> = fs::read_dir(d.join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 5, "{names:?}");
    assert!(names.contains(&"notes.txt".to_string()));
}

#[test]
fn quick_verification_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = privelet(&["verify", "--level", "quick"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("0 failed"));
}
