//! Picard iteration x_{n+1} = f(x_n) with per-atom orbit diagnostics, the
//! uniqueness cross-check and (ε,λ) cutoff tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::boyd_wong::BoundSequence;
use crate::error::{Error, Result};
use crate::operators::RandomOperator;
use crate::prob_space::{converges_in_probability, L0Value, ProbSpace};
use crate::report::Verdict;
use crate::rn_module::{dist, random_distance, require_member, FibrePoint};

pub const DEFAULT_WINDOW: usize = 16;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.25;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Limits from different starts may differ by this multiple of the tolerance.
pub const AGREEMENT_FACTOR: f64 = 10.0;
/// Slack in the orbit inequality.
pub const ORBIT_TOL: f64 = 1e-9;

const MAX_LISTED_VIOLATIONS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Residual at or below tolerance at every atom.
    Converged,
    MaxIter,
    /// Fixed-length orbit, no stopping rule.
    Horizon,
}

/// Orbit x_0, x_1, … with per-step distances. Entry n of each sequence
/// describes x_n; `iterates` holds one more point than the sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iterates: Vec<FibrePoint>,
    /// d(x_n, x_{n+1})
    pub d: Vec<L0Value>,
    /// max over 1 ≤ p ≤ W of d(x_n, x_{n+p}), truncated at the end of the orbit
    pub a_window: Vec<L0Value>,
    /// d(x_n, f(x_n))
    pub residual: Vec<L0Value>,
    pub window: usize,
    pub tail_fraction: f64,
    /// tail sup of d_n per atom
    pub r_hat: L0Value,
    /// tail sup of a_n per atom
    pub l_hat: L0Value,
    /// diameter of each atom's region
    pub diam_bound: L0Value,
    pub stop: StopReason,
}

impl IterationTrace {
    fn build(
        f: &RandomOperator,
        iterates: Vec<FibrePoint>,
        window: usize,
        tail_fraction: f64,
        stop: StopReason,
    ) -> Result<Self> {
        let steps = iterates.len() - 1;
        let atoms = f.atoms();
        let d = (0..steps)
            .map(|n| random_distance(&iterates[n], &iterates[n + 1]))
            .collect::<Result<Vec<_>>>()?;
        let a_window = (0..steps)
            .map(|n| {
                let reach = window.min(steps - n);
                L0Value::new(
                    (0..atoms)
                        .map(|a| {
                            (1..=reach)
                                .map(|p| dist(iterates[n].block(a), iterates[n + p].block(a)))
                                .fold(0.0, f64::max)
                        })
                        .collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let residual = d.clone();
        let diam_bound = L0Value::new(
            f.domain().regions().iter().map(|r| r.diameter()).collect(),
        )?;
        let r_hat = tail_sup(&d, tail_fraction, atoms)?;
        let l_hat = tail_sup(&a_window, tail_fraction, atoms)?;
        Ok(IterationTrace {
            iterates,
            d,
            a_window,
            residual,
            window,
            tail_fraction,
            r_hat,
            l_hat,
            diam_bound,
            stop,
        })
    }

    /// Number of recorded indices n.
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn atoms(&self) -> usize {
        self.iterates[0].atoms()
    }

    /// ‖x_n − z‖ for every recorded n.
    pub fn distances_to(&self, z: &FibrePoint) -> Result<Vec<L0Value>> {
        self.iterates[..self.len()]
            .iter()
            .map(|x| random_distance(x, z))
            .collect()
    }
}

/// First index of the trailing `fraction` of a sequence of length `len`.
pub fn tail_start(len: usize, fraction: f64) -> usize {
    let tail = ((len as f64 * fraction).ceil() as usize).clamp(1, len.max(1));
    len.saturating_sub(tail)
}

fn tail_sup(seq: &[L0Value], fraction: f64, atoms: usize) -> Result<L0Value> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain(format!("tail fraction must lie in (0,1], got {fraction}")));
    }
    let start = tail_start(seq.len(), fraction);
    Ok(L0Value::from_fn(atoms, |a| {
        seq[start..].iter().map(|v| v.get(a)).fold(0.0, f64::max)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    /// Last iterate.
    pub z: FibrePoint,
    /// ‖f(z) − z‖
    pub residual: L0Value,
    /// Index n of the returned iterate z = x_n.
    pub iterations: usize,
    pub converged: bool,
    pub trace: IterationTrace,
}

fn check_iteration_args(tol: f64, window: usize) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    if window == 0 {
        return Err(Error::Domain("window must be at least 1".into()));
    }
    Ok(())
}

/// Iterates until the residual ‖x_n − f(x_n)‖ is at most `tol` at every atom
/// or n reaches `max_iter`. Non-convergence is reported, not raised.
pub fn picard_solve(
    f: &RandomOperator,
    x0: &FibrePoint,
    tol: f64,
    max_iter: usize,
    window: usize,
) -> Result<FixedPointResult> {
    check_iteration_args(tol, window)?;
    require_member(f.domain(), x0)?;
    let mut iterates = vec![x0.clone()];
    let mut n = 0;
    let (stop, residual) = loop {
        let image = f.apply(&iterates[n])?;
        let residual = random_distance(&iterates[n], &image)?;
        iterates.push(image);
        if residual.max() <= tol {
            break (StopReason::Converged, residual);
        }
        if n == max_iter {
            break (StopReason::MaxIter, residual);
        }
        n += 1;
    };
    let z = iterates[n].clone();
    let trace = IterationTrace::build(f, iterates, window, DEFAULT_TAIL_FRACTION, stop)?;
    Ok(FixedPointResult {
        z,
        residual,
        iterations: n,
        converged: stop == StopReason::Converged,
        trace,
    })
}

/// The orbit x_0, …, x_horizon without a stopping rule.
pub fn orbit_trace(
    f: &RandomOperator,
    x0: &FibrePoint,
    horizon: usize,
    window: usize,
    tail_fraction: f64,
) -> Result<IterationTrace> {
    check_iteration_args(1.0, window)?;
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let mut iterates = vec![x0.clone()];
    for n in 0..horizon {
        iterates.push(f.apply(&iterates[n])?);
    }
    IterationTrace::build(f, iterates, window, tail_fraction, StopReason::Horizon)
}

/// Orbit length used for tail diagnostics after a solve that stopped at
/// index `iterations`: max(4·(iterations + 1), 32), capped at `max_iter`.
pub fn default_horizon(iterations: usize, max_iter: usize) -> usize {
    (4 * (iterations + 1)).max(32).min(max_iter.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub verdict: Verdict,
    pub tail_start: usize,
    pub tail_len: usize,
    pub tolerance: f64,
    /// Tail sup per atom.
    pub estimate: Option<L0Value>,
    pub failing_atoms: Vec<usize>,
}

fn tail_report(seq: &[L0Value], atoms: usize, tail_fraction: f64, tol: f64) -> Result<TailReport> {
    if seq.len() < 2 {
        return Ok(TailReport {
            verdict: Verdict::Inconclusive,
            tail_start: 0,
            tail_len: seq.len(),
            tolerance: tol,
            estimate: None,
            failing_atoms: Vec::new(),
        });
    }
    let estimate = tail_sup(seq, tail_fraction, atoms)?;
    let start = tail_start(seq.len(), tail_fraction);
    let failing_atoms: Vec<usize> = (0..atoms).filter(|&a| estimate.get(a) > tol).collect();
    Ok(TailReport {
        verdict: Verdict::from_bool(failing_atoms.is_empty()),
        tail_start: start,
        tail_len: seq.len() - start,
        tolerance: tol,
        estimate: Some(estimate),
        failing_atoms,
    })
}

/// Tail sup of d_n per atom against `tol`. Fewer than two recorded steps is
/// inconclusive.
pub fn adjacent_distance_check(trace: &IterationTrace, tail_fraction: f64, tol: f64) -> Result<TailReport> {
    tail_report(&trace.d, trace.atoms(), tail_fraction, tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyReport {
    pub verdict: Verdict,
    pub window: usize,
    pub tail: TailReport,
    /// a_n ≥ d_n at every recorded n and atom.
    pub dominates_adjacent: bool,
    /// a_n ≤ diameter of the region at every recorded n and atom.
    pub within_diameter: bool,
}

/// Tail sup of the windowed a_n per atom against `tol`, plus the entrywise
/// relations a_n ≥ d_n and a_n ≤ D′ over the whole trace.
pub fn cauchy_check(trace: &IterationTrace, tail_fraction: f64, tol: f64) -> Result<CauchyReport> {
    if trace.window < 2 {
        return Err(Error::Precondition(format!(
            "cauchy check needs a window of at least 2, trace has {}",
            trace.window
        )));
    }
    let tail = tail_report(&trace.a_window, trace.atoms(), tail_fraction, tol)?;
    let dominates_adjacent = trace
        .a_window
        .iter()
        .zip(&trace.d)
        .all(|(a, d)| a.values().iter().zip(d.values()).all(|(a, d)| a >= d));
    let within_diameter = trace.a_window.iter().all(|a| {
        a.values()
            .iter()
            .zip(trace.diam_bound.values())
            .all(|(v, diam)| *v <= diam + crate::rn_module::MEMBERSHIP_TOL)
    });
    let verdict = if !(dominates_adjacent && within_diameter) {
        Verdict::Fail
    } else {
        tail.verdict
    };
    Ok(CauchyReport {
        verdict,
        window: trace.window,
        tail,
        dominates_adjacent,
        within_diameter,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub verdict: Verdict,
    pub limits: Vec<FibrePoint>,
    pub iterations: Vec<usize>,
    /// Largest distance between any two limits, per atom.
    pub spread: L0Value,
    pub agreement_tol: f64,
    pub nonconverged_starts: Vec<usize>,
}

/// Solves from every start and compares the limits atom by atom.
pub fn uniqueness_cross_check(
    f: &RandomOperator,
    starts: &[FibrePoint],
    tol: f64,
    max_iter: usize,
    window: usize,
) -> Result<UniquenessReport> {
    let distinct = starts
        .iter()
        .enumerate()
        .filter(|(i, s)| starts[..*i].iter().all(|t| t != *s))
        .count();
    if distinct < 2 {
        return Err(Error::Precondition(format!(
            "uniqueness check needs at least 2 distinct starts, got {distinct}"
        )));
    }
    let mut limits = Vec::with_capacity(starts.len());
    let mut iterations = Vec::with_capacity(starts.len());
    let mut nonconverged_starts = Vec::new();
    for (i, s) in starts.iter().enumerate() {
        let r = picard_solve(f, s, tol, max_iter, window)?;
        if !r.converged {
            nonconverged_starts.push(i);
        }
        iterations.push(r.iterations);
        limits.push(r.z);
    }
    let spread = L0Value::from_fn(f.atoms(), |a| {
        let mut worst: f64 = 0.0;
        for i in 0..limits.len() {
            for j in i + 1..limits.len() {
                worst = worst.max(dist(limits[i].block(a), limits[j].block(a)));
            }
        }
        worst
    });
    let agreement_tol = AGREEMENT_FACTOR * tol;
    let verdict = if !nonconverged_starts.is_empty() {
        Verdict::Inconclusive
    } else {
        Verdict::from_bool(spread.max() <= agreement_tol)
    };
    Ok(UniquenessReport {
        verdict,
        limits,
        iterations,
        spread,
        agreement_tol,
        nonconverged_starts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub epsilon: f64,
    pub lambda: f64,
    /// First n from which P(‖x_m − z‖ < ε) ≥ 1 − λ for every recorded m ≥ n.
    pub cutoff: Option<usize>,
}

/// Cutoff table over every (ε, λ) pair for a sequence of random distances.
pub fn cutoff_table(
    space: &ProbSpace,
    distances: &[L0Value],
    epsilons: &[f64],
    lambdas: &[f64],
) -> Result<Vec<Cutoff>> {
    let mut table = Vec::with_capacity(epsilons.len() * lambdas.len());
    for &epsilon in epsilons {
        for &lambda in lambdas {
            let c = converges_in_probability(space, distances, epsilon, lambda)?;
            table.push(Cutoff {
                epsilon,
                lambda,
                cutoff: c.cutoff,
            });
        }
    }
    Ok(table)
}

/// Cutoff table for the distances from the recorded iterates to `z`.
pub fn epsilon_lambda_report(
    space: &ProbSpace,
    trace: &IterationTrace,
    z: &FibrePoint,
    epsilons: &[f64],
    lambdas: &[f64],
) -> Result<Vec<Cutoff>> {
    cutoff_table(space, &trace.distances_to(z)?, epsilons, lambdas)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitViolation {
    pub atom: usize,
    pub n: usize,
    pub m: usize,
    /// d_{n+m+1}
    pub lhs: f64,
    /// Ψ_m(ω, max{d_n, d_{n+1}})
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitAuditReport {
    pub verdict: Verdict,
    pub checked: usize,
    pub worst_slack: f64,
    pub violation_count: usize,
    /// The first violations found, in (n, m, atom) order.
    pub violations: Vec<OrbitViolation>,
}

/// Checks d_{n+m+1} ≤ Ψ_m(ω, max{d_n, d_{n+1}}) along the orbit of x0 for
/// m ≥ 1 and n + m + 1 ≤ n_max.
pub fn orbit_inequality_audit(
    f: &RandomOperator,
    x0: &FibrePoint,
    bounds: &BoundSequence,
    n_max: usize,
) -> Result<OrbitAuditReport> {
    bounds.check_atoms(f.atoms())?;
    let trace = orbit_trace(f, x0, n_max + 1, 1, 1.0)?;
    let d = &trace.d;
    let mut report = OrbitAuditReport {
        verdict: Verdict::Pass,
        checked: 0,
        worst_slack: f64::INFINITY,
        violation_count: 0,
        violations: Vec::new(),
    };
    for n in 0..n_max {
        for m in 1..n_max - n {
            for a in 0..f.atoms() {
                let lhs = d[n + m + 1].get(a);
                let rhs = bounds.evaluate(m, a, d[n].get(a).max(d[n + 1].get(a)));
                let slack = rhs - lhs;
                report.checked += 1;
                report.worst_slack = report.worst_slack.min(slack);
                if slack < -ORBIT_TOL {
                    report.violation_count += 1;
                    if report.violations.len() < MAX_LISTED_VIOLATIONS {
                        report.violations.push(OrbitViolation { atom: a, n, m, lhs, rhs });
                    }
                }
            }
        }
    }
    if report.checked == 0 {
        report.worst_slack = 0.0;
        report.verdict = Verdict::Inconclusive;
    } else if report.violation_count > 0 {
        report.verdict = Verdict::Fail;
    }
    Ok(report)
}

pub const TRACE_CSV_HEADER: &str = "n,atom_id,d_n,a_n_window,residual_n,dist_to_z";

/// One row per (n, atom). `dist_to_z` is left empty when `z` is not given.
pub fn trace_csv(trace: &IterationTrace, z: Option<&FibrePoint>) -> Result<String> {
    let to_z = z.map(|z| trace.distances_to(z)).transpose()?;
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for n in 0..trace.len() {
        for a in 0..trace.atoms() {
            let dz = to_z
                .as_ref()
                .map(|v| format!("{:e}", v[n].get(a)))
                .unwrap_or_default();
            writeln!(
                out,
                "{n},{a},{:e},{:e},{:e},{dz}",
                trace.d[n].get(a),
                trace.a_window[n].get(a),
                trace.residual[n].get(a)
            )
            .expect("writing to a String");
        }
    }
    Ok(out)
}
