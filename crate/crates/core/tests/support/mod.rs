#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use rrac::commands::{ReportFile, Solution};
use rrac::scenario::{load_scenario, Scenario};

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Every scenario file of the corpus, sorted by path.
pub fn corpus() -> Vec<(PathBuf, Scenario)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let s = load_scenario(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            (p, s)
        })
        .collect()
}

pub fn scenario(name: &str) -> (PathBuf, Scenario) {
    let p = corpus_dir().join(format!("{name}.json"));
    let s = load_scenario(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    (p, s)
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn rrac(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_rrac"))
        .args(args)
        .env_remove("RRAC_OUT_DIR")
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).expect("utf-8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf-8 stderr"),
    }
}

/// Runs `rrac <command> <scenario> --out <dir>`.
pub fn run_command(command: &str, scenario: &Path, out: &Path) -> Run {
    rrac(&[
        command,
        scenario.to_str().expect("utf-8 path"),
        "--out",
        out.to_str().expect("utf-8 path"),
    ])
}

pub fn read_report(path: &Path) -> ReportFile {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn solution(report: &ReportFile) -> Solution {
    serde_json::from_value(report.solution.clone()).expect("solve report carries a solution")
}

/// Column `name` of a trace CSV as (n, atom, value) rows.
pub fn trace_column(csv: &str, name: &str) -> Vec<(usize, usize, f64)> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().expect("header").split(',').collect();
    let col = header.iter().position(|h| *h == name).expect("column present");
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].parse().expect("n"),
                f[1].parse().expect("atom"),
                f[col].parse().expect("value"),
            )
        })
        .collect()
}

pub fn euclid(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}
