//! Verdicts and the certification report shared by every check and command.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Outcome of a single check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    /// Passed a numerical probe that cannot amount to a proof.
    ProbePass,
    /// Not enough data to decide.
    Inconclusive,
    /// The check does not apply to this scenario.
    Skipped,
    Fail,
}

impl Verdict {
    pub fn is_fail(self) -> bool {
        self == Verdict::Fail
    }

    /// Pass or probe-pass.
    pub fn is_pass(self) -> bool {
        matches!(self, Verdict::Pass | Verdict::ProbePass)
    }

    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// Combines verdicts of sub-checks: any fail wins, then inconclusive,
    /// then probe-pass. Skipped sub-checks are ignored unless all are skipped.
    pub fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
        let mut seen = Vec::new();
        for v in verdicts {
            seen.push(v);
        }
        if seen.is_empty() || seen.iter().all(|v| *v == Verdict::Skipped) {
            return Verdict::Skipped;
        }
        for v in [Verdict::Fail, Verdict::Inconclusive, Verdict::ProbePass] {
            if seen.contains(&v) {
                return v;
            }
        }
        Verdict::Pass
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::ProbePass => "probe-pass",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Skipped => "skipped",
            Verdict::Fail => "fail",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A reproducible record of one failed (or nearly failed) inequality.
///
/// `sample` indexes the seeded pair stream, so `(seed, sample)` replays the
/// pair; `x` and `y` are the blocks at `atom` for direct inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub check: String,
    pub atom: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sample: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub y: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
    /// rhs − lhs; negative on violation.
    pub slack: f64,
}

/// One stage of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub id: String,
    pub verdict: Verdict,
    pub detail: String,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub metrics: serde_json::Value,
}

impl StageRecord {
    pub fn new(id: impl Into<String>, verdict: Verdict, detail: impl Into<String>) -> Self {
        StageRecord {
            id: id.into(),
            verdict,
            detail: detail.into(),
            metrics: serde_json::Value::Null,
        }
    }

    pub fn with_metrics(mut self, metrics: impl Serialize) -> Self {
        self.metrics = serde_json::to_value(metrics).expect("metrics serialize");
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingInfo {
    pub seed: u64,
    pub sample_count: usize,
    pub n_max: usize,
    pub grid_density: usize,
    /// Atoms whose finite region was enumerated instead of sampled.
    pub exhaustive_atoms: Vec<usize>,
}

/// The outcome of a certification run: ordered stages, the violations they
/// recorded, and the sampling metadata needed to replay them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub verdict: Verdict,
    pub first_failure: Option<String>,
    pub stages: Vec<StageRecord>,
    pub violations: Vec<ViolationRecord>,
    pub sampling: SamplingInfo,
}

impl CertificationReport {
    pub fn new(sampling: SamplingInfo) -> Self {
        CertificationReport {
            verdict: Verdict::Skipped,
            first_failure: None,
            stages: Vec::new(),
            violations: Vec::new(),
            sampling,
        }
    }

    pub fn push(&mut self, stage: StageRecord) {
        if stage.verdict.is_fail() && self.first_failure.is_none() {
            self.first_failure = Some(stage.id.clone());
        }
        self.stages.push(stage);
        self.verdict = Verdict::combine(self.stages.iter().map(|s| s.verdict));
    }

    pub fn stage(&self, id: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.id == id)
    }

    pub fn has_failed(&self) -> bool {
        self.first_failure.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_orders_verdicts() {
        use Verdict::*;
        assert_eq!(Verdict::combine([Pass, ProbePass]), ProbePass);
        assert_eq!(Verdict::combine([Pass, Skipped]), Pass);
        assert_eq!(Verdict::combine([Skipped]), Skipped);
        assert_eq!(Verdict::combine([Pass, Inconclusive, ProbePass]), Inconclusive);
        assert_eq!(Verdict::combine([Pass, Fail, Inconclusive]), Fail);
    }

    #[test]
    fn first_failure_is_sticky() {
        let mut r = CertificationReport::new(SamplingInfo::default());
        r.push(StageRecord::new("a", Verdict::Pass, ""));
        r.push(StageRecord::new("b", Verdict::Fail, ""));
        r.push(StageRecord::new("c", Verdict::Fail, ""));
        assert_eq!(r.first_failure.as_deref(), Some("b"));
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn verdicts_serialize_kebab_case() {
        assert_eq!(serde_json::to_string(&Verdict::ProbePass).unwrap(), "\"probe-pass\"");
    }
}
