use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use playtest_core::game::default_script;
use playtest_core::mutation::enumerate_mutants;

fn playtest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_playtest")).args(args).env_remove("PLAYTEST_STORE").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn mutate_list_is_the_enumeration() {
    let a = stdout(&playtest(&["mutate", "--list"]));
    let b = stdout(&playtest(&["mutate", "--list"]));
    assert_eq!(a, b);
    let expected: Vec<String> = enumerate_mutants(&default_script()).iter().map(|m| m.descriptor()).collect();
    assert_eq!(a.lines().collect::<Vec<_>>(), expected);
}

#[test]
fn bot_match_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path| stdout(&playtest(&["bot-match", "--seed", "17", "--bots", "greedy,greedy", "--out", dir.to_str().unwrap()]));
    assert_eq!(run(a.path()), run(b.path()));
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(ta.iter().any(|(n, _)| n.ends_with("commands.log")));
    assert_eq!(ta, tb);
}

#[test]
fn eval_suite_on_empty_dir_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&playtest(&["eval-suite", "--tests", dir.path().to_str().unwrap(), "--mutants", "all"]));
    assert!(out.starts_with("mutant_id\tkilled\tkilling_test\n"));
    assert_eq!(out.lines().last(), Some("score\t0.000000"));
}

#[test]
fn pipeline_end_to_end() {
    let store = tempfile::tempdir().unwrap();
    let tests = tempfile::tempdir().unwrap();
    let s = store.path().to_str().unwrap();
    let t = tests.path().to_str().unwrap();
    stdout(&playtest(&["bot-match", "--seed", "0", "--count", "3", "--out", s]));
    let summary = stdout(&playtest(&["export-tests", "--store", s, "--out", t]));
    assert!(summary.contains("matches\t3"));
    let report = stdout(&playtest(&["eval-suite", "--tests", t, "--mutants", "12", "--seed", "5"]));
    assert_eq!(report.lines().count(), 1 + 12 + 1);
    let score: f64 = report.lines().last().unwrap().strip_prefix("score\t").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&score));
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let o = playtest(&["eval-suite", "--tests", "/definitely/not/here"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/definitely/not/here"));

    let o = playtest(&["mutate", "--script", "/no/such.rules", "--list"]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());

    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.test"), "STATIC\tdeadbeef\t1\nPROVENANCE\tm\t0\nACTIONS\tRight\n").unwrap();
    let o = playtest(&["eval-suite", "--tests", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash mismatch"));

    let o = playtest(&["bot-match", "--seed", "1", "--bots", "greedy", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn store_env_override_is_read_by_serve_help() {
    let o = playtest(&["serve", "--help"]);
    assert!(stdout(&o).contains("PLAYTEST_STORE"));
}
