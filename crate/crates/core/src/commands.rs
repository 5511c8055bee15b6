//! The `validate`, `solve`, `certify` and `report` pipelines. Each command
//! builds a deterministic JSON report (no timestamps, no absolute paths) and
//! writes it atomically.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checker::{full_hypothesis_audit, lemma_suite};
use crate::error::Error;
use crate::prob_space::L0Value;
use crate::report::{CertificationReport, StageRecord, Verdict};
use crate::scenario::{load_scenario, Scenario, ScenarioError};
use crate::solver::{
    adjacent_distance_check, cauchy_check, default_horizon, epsilon_lambda_report, orbit_trace,
    picard_solve, trace_csv, uniqueness_cross_check, Cutoff, IterationTrace,
};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_CERTIFICATION_FAILURE: i32 = 1;
pub const EXIT_NON_CONVERGENCE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA_FORMAT: i32 = 65;
pub const EXIT_NO_INPUT: i32 = 66;
pub const EXIT_IO: i32 = 74;

/// Default output directory when neither `--out` nor the environment sets one.
pub const DEFAULT_OUT_DIR: &str = "rrac-out";
pub const OUT_DIR_ENV: &str = "RRAC_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report {path}: {message}")]
    MalformedReport { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Scenario(ScenarioError::Io { .. }) | CommandError::Read { .. } => EXIT_NO_INPUT,
            CommandError::Scenario(_) | CommandError::Core(_) | CommandError::MalformedReport { .. } => {
                EXIT_DATA_FORMAT
            }
            CommandError::Write { .. } => EXIT_IO,
            CommandError::Usage(_) => EXIT_USAGE,
        }
    }
}

/// Every report file shares this envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub exit_code: i32,
    pub certification: CertificationReport,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub solution: serde_json::Value,
}

impl ReportFile {
    fn new(command: &str, s: &Scenario, certification: CertificationReport, exit_code: i32) -> Self {
        ReportFile {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            scenario: s.name().into(),
            scenario_hash: s.hash.clone(),
            seed: s.certify().seed,
            exit_code,
            certification,
            solution: serde_json::Value::Null,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("reports serialize");
        text.push('\n');
        text
    }
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CommandError> {
    let wrap = |source| CommandError::Write {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(wrap)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(contents).map_err(wrap)?;
    tmp.as_file().sync_all().map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

fn exit_for_verdict(v: Verdict) -> i32 {
    if v.is_fail() || v == Verdict::Inconclusive {
        EXIT_CERTIFICATION_FAILURE
    } else {
        EXIT_SUCCESS
    }
}

fn verdict_summary(command: &str, s: &Scenario, r: &CertificationReport) -> String {
    match &r.first_failure {
        Some(stage) => format!("{command} {}: {} (first failure: {stage})", s.name(), r.verdict),
        None => format!("{command} {}: {}", s.name(), r.verdict),
    }
}

/// The staged hypothesis audit. Exit 0 iff no stage fails or is inconclusive.
pub fn validate_report(s: &Scenario) -> Result<ReportFile, CommandError> {
    let audit = full_hypothesis_audit(s)?;
    let code = exit_for_verdict(audit.verdict);
    Ok(ReportFile::new("validate", s, audit, code))
}

/// The lemma suite. Exit 0 iff every stage passes or probe-passes.
pub fn certify_report(s: &Scenario) -> Result<ReportFile, CommandError> {
    let suite = lemma_suite(s)?;
    let code = exit_for_verdict(suite.verdict);
    Ok(ReportFile::new("certify", s, suite, code))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub z: Vec<Vec<f64>>,
    pub residual: L0Value,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostic_horizon: usize,
    pub window: usize,
    pub tail_fraction: f64,
    pub r_hat: L0Value,
    pub l_hat: L0Value,
    pub cutoffs: Vec<Cutoff>,
    pub uniqueness_spread: Option<L0Value>,
    pub uniqueness_iterations: Vec<usize>,
    pub trace_file: String,
}

/// Solves from x0, then runs the tail diagnostics, the uniqueness cross-check
/// over the scenario starts and the (ε,λ) table. Returns the report and the
/// trace CSV. Exit 0 iff the solve from x0 converged, 2 otherwise.
pub fn solve_report(s: &Scenario, trace_file: &str) -> Result<(ReportFile, String), CommandError> {
    let f = &s.operator;
    let cfg = s.solve();
    let c = s.certify();
    let result = picard_solve(f, &s.x0, cfg.tol, cfg.max_iter, cfg.window)?;
    let mut report = CertificationReport::new(crate::report::SamplingInfo {
        seed: c.seed,
        ..Default::default()
    });
    let detail = if result.converged {
        format!("converged at n = {}", result.iterations)
    } else {
        format!("no convergence after {} iterations", result.iterations)
    };
    report.push(StageRecord::new("picard_solve", Verdict::from_bool(result.converged), detail));

    // Tail diagnostics use a fixed-length orbit past the stopping index so that
    // the trailing window reflects the limit, not the stopping tolerance.
    let horizon = cfg
        .horizon
        .unwrap_or_else(|| default_horizon(result.iterations, cfg.max_iter));
    let diagnostic: IterationTrace = if result.converged {
        orbit_trace(f, &s.x0, horizon, cfg.window, cfg.tail_fraction)?
    } else {
        result.trace.clone()
    };
    let adj = adjacent_distance_check(&diagnostic, cfg.tail_fraction, cfg.tol)?;
    report.push(
        StageRecord::new(
            "adjacent_distance_check",
            adj.verdict,
            format!("tail of {} steps from n = {}", adj.tail_len, adj.tail_start),
        )
        .with_metrics(&adj),
    );
    match cauchy_check(&diagnostic, cfg.tail_fraction, cfg.tol) {
        Ok(cauchy) => report.push(
            StageRecord::new(
                "cauchy_check",
                cauchy.verdict,
                format!("window W = {} (a_n is a windowed surrogate of the full sup)", cauchy.window),
            )
            .with_metrics(&cauchy),
        ),
        Err(e) => report.push(StageRecord::new("cauchy_check", Verdict::Skipped, e.to_string())),
    }

    let (uniqueness_spread, uniqueness_iterations) =
        match uniqueness_cross_check(f, &s.starts, cfg.tol, cfg.max_iter, cfg.window) {
            Ok(u) => {
                let detail = if u.nonconverged_starts.is_empty() {
                    format!(
                        "{} starts, max spread {:e} against {:e}",
                        u.limits.len(),
                        u.spread.max(),
                        u.agreement_tol
                    )
                } else {
                    format!("starts {:?} did not converge", u.nonconverged_starts)
                };
                report.push(StageRecord::new("uniqueness_cross_check", u.verdict, detail).with_metrics(&u));
                (Some(u.spread), u.iterations)
            }
            Err(e) => {
                report.push(StageRecord::new("uniqueness_cross_check", Verdict::Skipped, e.to_string()));
                (None, Vec::new())
            }
        };

    let cutoffs = epsilon_lambda_report(&s.space, &result.trace, &result.z, &c.epsilons, &c.lambdas)?;
    let all_found = cutoffs.iter().all(|c| c.cutoff.is_some());
    report.push(
        StageRecord::new(
            "epsilon_lambda_report",
            if all_found { Verdict::Pass } else { Verdict::Inconclusive },
            format!("{} (ε, λ) pairs", cutoffs.len()),
        )
        .with_metrics(&cutoffs),
    );

    let csv = trace_csv(&result.trace, Some(&result.z))?;
    let solution = Solution {
        z: result.z.to_blocks(),
        residual: result.residual.clone(),
        iterations: result.iterations,
        converged: result.converged,
        diagnostic_horizon: diagnostic.len(),
        window: cfg.window,
        tail_fraction: cfg.tail_fraction,
        r_hat: diagnostic.r_hat.clone(),
        l_hat: diagnostic.l_hat.clone(),
        cutoffs,
        uniqueness_spread,
        uniqueness_iterations,
        trace_file: trace_file.into(),
    };
    let code = if result.converged { EXIT_SUCCESS } else { EXIT_NON_CONVERGENCE };
    let mut file = ReportFile::new("solve", s, report, code);
    file.solution = serde_json::to_value(&solution).expect("solution serializes");
    Ok((file, csv))
}

fn report_path(out_dir: &Path, s: &Scenario, suffix: &str) -> PathBuf {
    out_dir.join(format!("{}.{suffix}", s.name()))
}

pub fn cmd_validate(scenario: &Path, out_dir: &Path) -> Result<CommandOutcome, CommandError> {
    let s = load_scenario(scenario)?;
    let r = validate_report(&s)?;
    let path = report_path(out_dir, &s, "validate.json");
    write_atomic(&path, r.to_json().as_bytes())?;
    Ok(CommandOutcome {
        exit_code: r.exit_code,
        summary: verdict_summary("validate", &s, &r.certification),
        files: vec![path],
    })
}

pub fn cmd_certify(scenario: &Path, out_dir: &Path) -> Result<CommandOutcome, CommandError> {
    let s = load_scenario(scenario)?;
    let r = certify_report(&s)?;
    let path = report_path(out_dir, &s, "certify.json");
    write_atomic(&path, r.to_json().as_bytes())?;
    Ok(CommandOutcome {
        exit_code: r.exit_code,
        summary: verdict_summary("certify", &s, &r.certification),
        files: vec![path],
    })
}

pub fn cmd_solve(scenario: &Path, out_dir: &Path) -> Result<CommandOutcome, CommandError> {
    let s = load_scenario(scenario)?;
    let trace_name = format!("{}.trace.csv", s.name());
    let (r, csv) = solve_report(&s, &trace_name)?;
    let json_path = report_path(out_dir, &s, "solve.json");
    let csv_path = out_dir.join(&trace_name);
    write_atomic(&csv_path, csv.as_bytes())?;
    write_atomic(&json_path, r.to_json().as_bytes())?;
    let iterations = r.solution["iterations"].as_u64().unwrap_or_default();
    let summary = if r.exit_code == EXIT_SUCCESS {
        format!("solve {}: converged at n = {iterations}", s.name())
    } else {
        format!("solve {}: no convergence after {iterations} iterations", s.name())
    };
    Ok(CommandOutcome {
        exit_code: r.exit_code,
        summary,
        files: vec![json_path, csv_path],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub command: String,
    pub stage: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    /// (scenario, command, first failing stage)
    pub failing: Vec<(String, String, String)>,
}

impl Summary {
    pub fn render(&self) -> String {
        let width = |f: fn(&SummaryRow) -> &str, title: &str| {
            self.rows.iter().map(|r| f(r).len()).max().unwrap_or(0).max(title.len())
        };
        let ws = width(|r| &r.scenario, "scenario");
        let wc = width(|r| &r.command, "command");
        let wt = width(|r| &r.stage, "stage");
        let mut out = String::new();
        let _ = writeln!(out, "{:ws$}  {:wc$}  {:wt$}  verdict", "scenario", "command", "stage");
        for r in &self.rows {
            let flag = if r.verdict.is_fail() { "  <- FAIL" } else { "" };
            let _ = writeln!(out, "{:ws$}  {:wc$}  {:wt$}  {}{flag}", r.scenario, r.command, r.stage, r.verdict);
        }
        if self.failing.is_empty() {
            out.push_str("all reports pass\n");
        } else {
            for (scenario, command, stage) in &self.failing {
                let _ = writeln!(out, "failing: {scenario} ({command}) at {stage}");
            }
        }
        out
    }
}

/// Merges report files into one scenario × stage × verdict table.
pub fn merge_reports(paths: &[PathBuf]) -> Result<Summary, CommandError> {
    if paths.is_empty() {
        return Err(CommandError::Usage("report needs at least one report file".into()));
    }
    let mut rows = Vec::new();
    let mut failing = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path).map_err(|source| CommandError::Read {
            path: path.clone(),
            source,
        })?;
        let r: ReportFile = serde_json::from_str(&text).map_err(|e| CommandError::MalformedReport {
            path: path.clone(),
            message: e.to_string(),
        })?;
        for st in &r.certification.stages {
            rows.push(SummaryRow {
                scenario: r.scenario.clone(),
                command: r.command.clone(),
                stage: st.id.clone(),
                verdict: st.verdict,
            });
        }
        if let Some(stage) = &r.certification.first_failure {
            failing.push((r.scenario.clone(), r.command.clone(), stage.clone()));
        }
    }
    Ok(Summary { rows, failing })
}

/// Prints nothing itself; exit 1 when any merged report has a failing stage.
pub fn cmd_report(paths: &[PathBuf]) -> Result<(CommandOutcome, Summary), CommandError> {
    let summary = merge_reports(paths)?;
    let exit_code = if summary.failing.is_empty() {
        EXIT_SUCCESS
    } else {
        EXIT_CERTIFICATION_FAILURE
    };
    Ok((
        CommandOutcome {
            exit_code,
            summary: summary.render(),
            files: Vec::new(),
        },
        summary,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_with(scenario: &str, verdicts: &[(&str, Verdict)]) -> ReportFile {
        let mut c = CertificationReport::new(Default::default());
        for (id, v) in verdicts {
            c.push(StageRecord::new(*id, *v, ""));
        }
        ReportFile {
            tool: "rrac".into(),
            version: "0".into(),
            command: "validate".into(),
            scenario: scenario.into(),
            scenario_hash: String::new(),
            seed: 0,
            exit_code: 0,
            certification: c,
            solution: serde_json::Value::Null,
        }
    }

    #[test]
    fn merge_flags_failing_stage() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        write_atomic(&a, report_with("good", &[("s1", Verdict::Pass), ("s2", Verdict::ProbePass)]).to_json().as_bytes()).unwrap();
        write_atomic(&b, report_with("bad", &[("s1", Verdict::Pass), ("s2", Verdict::Fail)]).to_json().as_bytes()).unwrap();

        let (out, summary) = cmd_report(std::slice::from_ref(&a)).unwrap();
        assert_eq!(out.exit_code, EXIT_SUCCESS);
        assert!(summary.failing.is_empty());

        let (out, summary) = cmd_report(&[a, b]).unwrap();
        assert_eq!(out.exit_code, EXIT_CERTIFICATION_FAILURE);
        assert_eq!(summary.rows.len(), 4);
        assert_eq!(summary.failing, vec![("bad".into(), "validate".into(), "s2".into())]);
        assert!(out.summary.contains("failing: bad (validate) at s2"));
    }

    #[test]
    fn merge_rejects_empty_and_malformed_input() {
        assert_eq!(merge_reports(&[]).unwrap_err().exit_code(), EXIT_USAGE);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        std::fs::write(&p, "{\"tool\": 3}").unwrap();
        assert_eq!(merge_reports(&[p]).unwrap_err().exit_code(), EXIT_DATA_FORMAT);
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
