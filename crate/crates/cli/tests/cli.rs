//! End-to-end runs of the `incrq` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

fn incrq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_incrq"))
}

#[test]
fn generate_run_both_mode_groupby() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let status = incrq()
        .args([
            "generate", "--kind", "pairs", "--out",
            data.to_str().unwrap(),
            "--seed", "3", "--initial", "500", "--batches", "3", "--batch-size", "50",
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let out = tmp.path().join("out");
    let output = incrq()
        .args([
            "run", "--fixture", "groupby-avg",
            "--source", &format!("0={}", data.join("initial-0.csv").display()),
            "--batches", &format!("0={}", data.join("batches-0").display()),
            "--mode", "both",
            "--out", out.to_str().unwrap(),
            "--metrics", out.join("metrics.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("0 mismatch(es)"), "{stdout}");
    assert!(out.join("snapshot-0000.csv").exists());
    assert!(out.join("metrics.csv").exists());
}

#[test]
fn run_a_plan_file() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = tmp.path().join("plan.lisp");
    fs::write(
        &plan,
        "(reduce sum (cmap (lambda (p) (bag (snd p))) (source 0)))",
    )
    .unwrap();
    let initial = tmp.path().join("init.csv");
    fs::write(&initial, "1,10\n2,20\n").unwrap();
    let batches = tmp.path().join("batches");
    fs::create_dir_all(&batches).unwrap();
    fs::write(batches.join("b0.csv"), "3,5\n").unwrap();

    let out = tmp.path().join("out");
    let output = incrq()
        .args([
            "run", "--plan", plan.to_str().unwrap(),
            "--source", &format!("0={}", initial.display()),
            "--batches", &format!("0={}", batches.display()),
            "--schema", "0=int,int",
            "--mode", "both",
            "--out", out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    // Totals: 30 then 35.
    assert_eq!(fs::read_to_string(out.join("snapshot-0000.txt")).unwrap(), "30\n");
    assert_eq!(fs::read_to_string(out.join("snapshot-0001.txt")).unwrap(), "35\n");
}

#[test]
fn explain_fixture_prints_the_triple() {
    let output = incrq()
        .args(["explain", "--fixture", "groupby-avg"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("merger:   lift((box x (+ x +)))"), "{stdout}");
    assert!(stdout.contains("h:        (smap1"), "{stdout}");
    assert!(stdout.contains("answer:"), "{stdout}");
}

#[test]
fn bad_plans_exit_nonzero_with_a_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = tmp.path().join("plan.lisp");
    fs::write(&plan, "(cogroup (source 0))").unwrap();
    let output = incrq()
        .args(["explain", "--plan", plan.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("cogroup takes 2"), "{stderr}");
}

#[test]
fn mismatch_in_both_mode_fails() {
    // A query that cannot be incrementalized exits nonzero with a clear
    // message rather than producing wrong answers.
    let tmp = tempfile::tempdir().unwrap();
    let plan = tmp.path().join("plan.lisp");
    // Average at the top level: reduce over a division of reduces has no
    // homomorphic split (nothing to extract below the reduce head's body).
    fs::write(
        &plan,
        "(cmap (lambda (k s) (bag (tuple (elem s) k))) (groupby (cmap (lambda (p) (bag (tuple (fst p) (snd p)))) (source 0))))",
    )
    .unwrap();
    let initial = tmp.path().join("init.csv");
    fs::write(&initial, "1,10\n").unwrap();
    let output = incrq()
        .args([
            "run", "--plan", plan.to_str().unwrap(),
            "--source", &format!("0={}", initial.display()),
            "--schema", "0=int,int",
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("not incrementalizable"), "{stderr}");
}

#[test]
fn wrong_dataset_kind_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let output = incrq()
        .args(["generate", "--kind", "zipf", "--out", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!output.status.success());
}

#[test]
fn generated_rmat_dataset_replays_through_pagerank() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("graph");
    let status = incrq()
        .args([
            "generate", "--kind", "rmat", "--out", data.to_str().unwrap(),
            "--seed", "9", "--nodes", "60", "--edges", "300",
            "--batches", "2", "--increment-nodes", "10", "--increment-edges", "20",
            "--dedup",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let out = tmp.path().join("out");
    let output = incrq()
        .args([
            "run", "--fixture", "pagerank", "--iterations", "5",
            "--source", &format!("0={}", data.join("initial-0.csv").display()),
            "--batches", &format!("0={}", data.join("batches-0").display()),
            "--out", out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(Path::new(&out.join("snapshot-0002.csv")).exists());
}
