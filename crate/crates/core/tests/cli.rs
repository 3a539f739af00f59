use std::process::Command;

use serde_json::Value;

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pirogov")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).expect("utf-8 output"))
}

fn doc(args: &[&str]) -> Value {
    let (code, text) = run(args);
    assert_eq!(code, 0, "{args:?}");
    serde_json::from_str(&text).expect("one JSON document")
}

#[test]
fn count_is_within_epsilon_of_oracle() {
    let base = ["--model", "hardcore-polymer", "--box", "4x4", "--z", "0.05"];
    let approx = doc(&[&["count"], &base[..], &["--epsilon", "0.01"]].concat());
    let exact = doc(&[&["oracle", "count"], &base[..]].concat());
    assert_eq!(exact["exact"], true);
    let err = approx["log_approx_Z"].as_f64().unwrap() - exact["log_Z"].as_f64().unwrap();
    assert!(err.abs() <= 0.01, "{err}");
    assert_eq!(approx["v"], 1);
    assert_eq!(approx["config"]["z"], 0.05);
    assert!(approx["version"].as_str().is_some_and(|v| !v.is_empty()));
    assert_eq!(approx["log_coeffs"][1], "16/1");
}

#[test]
fn same_config_gives_identical_bytes() {
    let args = ["sample", "--model", "potts-contour", "--box", "6x6", "--z", "0.3", "--delta", "1", "--samples", "20", "--seed", "9"];
    let (a, first) = run(&args);
    let (b, second) = run(&[&["--threads", "1"], &args[..]].concat());
    assert_eq!((a, b), (0, 0));
    assert_eq!(first, second);
    assert_eq!(first.lines().count(), 21);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["count", "--model", "hardcore-polymer", "--box", "4x4", "--z", "0.5"]).0, 3);
    assert_eq!(run(&["count", "--model", "hardcore-polymer", "--box", "4x4", "--z", "0.01", "--epsilon", "0"]).0, 2);
    assert_eq!(run(&["count", "--model", "potts-contour", "--box", "6x6", "--z", "0.01", "--beta", "2"]).0, 2);
    assert_eq!(run(&["oracle", "count", "--model", "hardcore-polymer", "--box", "5x6", "--z", "0.01"]).0, 4);
    assert_eq!(run(&["count", "--model", "nope", "--box", "4x4", "--z", "0.01"]).0, 2);
    assert_eq!(run(&["verify", "--suite", "ursell"]).0, 0);
}

#[test]
fn forced_count_is_tagged() {
    let v = doc(&["count", "--model", "hardcore-polymer", "--box", "3x3", "--z", "0.2", "--force"]);
    assert_eq!(v["forced"], true);
    assert!(v["warning"].is_string());
}

#[test]
fn torus_count_reports_the_big_term() {
    let args = ["--model", "potts-contour", "--geometry", "torus", "--n", "4", "--z", "0.01"];
    let v = doc(&[&["count"], &args[..], &["--epsilon", "0.05", "--force"]].concat());
    assert_eq!(v["dropped_big_term"], true);
    assert_eq!(v["below_floor"], true);
    let exact = doc(&[&["oracle", "count"], &args[..]].concat());
    assert_eq!(v["big_term_exact"], exact["big_term_exact"]);
    let (z, big) = (exact["Z"].as_f64().unwrap(), exact["big_term_exact"].as_f64().unwrap());
    let err = v["log_approx_Z"].as_f64().unwrap() - (z - big).ln();
    assert!(err.abs() <= 0.05);
}

#[test]
fn contour_count_matches_oracle_after_prefactor() {
    let args = ["--model", "hardcore-contour", "--box", "7x7", "--lambda", "100000", "--boundary", "odd"];
    let approx = doc(&[&["count"], &args[..]].concat());
    let exact = doc(&[&["oracle", "count"], &args[..]].concat());
    let err = approx["log_approx_Z_spin"].as_f64().unwrap() - exact["log_Z_spin"].as_f64().unwrap();
    assert!(err.abs() <= 0.01, "{err}");
    assert_eq!(approx["prefactor"], exact["prefactor"]);
    assert_eq!(approx["boundary"], "odd");
}

#[test]
fn oracle_samples_are_exact_lines() {
    let dir = std::env::temp_dir().join(format!("pirogov-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("samples.jsonl");
    let (code, _) = run(&[
        "oracle", "sample", "--model", "hardcore-polymer", "--box", "2x3", "--z", "0.5", "--samples", "5", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0]["kind"], "header");
    assert!(lines[1..].iter().all(|l| l["exact"] == true && l["polymers"].is_array()));
    std::fs::remove_dir_all(&dir).ok();
}
