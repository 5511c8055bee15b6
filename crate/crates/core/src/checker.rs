//! Certification of the relaxed asymptotic contraction inequality, the Kirk
//! reduction, fixed-point metric identities, the staged hypothesis audit and
//! the lemma suite.
//!
//! Continuous regions are sampled with a seeded ChaCha8 stream per pair, so
//! `(seed, sample)` replays any recorded pair. Finite regions are enumerated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::boyd_wong::{
    limsup_exchange_oracle, local_uniform_convergence_check, uniform_grid, verify_gauge,
    verify_majorant_props, BoundSequence, GaugeSequence, GridReport,
};
use crate::error::{Error, Result};
use crate::operators::{
    check_local_property, check_sigma_compat, fibre_continuity_probe, RandomOperator,
};
use crate::prob_space::{AtomEvent, L0Value};
use crate::quasi_metrics::FibreDistances;
use crate::report::{CertificationReport, SamplingInfo, StageRecord, Verdict, ViolationRecord};
use crate::rn_module::{check_norm_axioms, dist, essential_bound_check, require_member, FibrePoint, FibreSet};
use crate::scenario::{sub_seed, Scenario};
use crate::solver::{default_horizon, orbit_inequality_audit, orbit_trace, picard_solve};

/// Slack allowed in the contraction and Kirk inequalities.
pub const SLACK_TOL: f64 = 1e-9;
/// Orbit-adjacent pairs must reproduce d_{n+1} this closely.
pub const ZERO_BRANCH_MATCH_TOL: f64 = 1e-12;

const MAX_RECORDS: usize = 64;
const CONTINUITY_RADII: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];
const CONTINUITY_POINTS: usize = 5;
const SCALAR_SAMPLES: usize = 8;
const MAX_PARTITION_PIECES: usize = 3;

pub const STAGE_ESSENTIAL_BOUND: &str = "essential_bound_check";
pub const STAGE_NORM_AXIOMS: &str = "check_norm_axioms";
pub const STAGE_LOCAL_PROPERTY: &str = "check_local_property";
pub const STAGE_SIGMA_COMPAT: &str = "check_sigma_compat";
pub const STAGE_CONTINUITY: &str = "fibre_continuity_probe";
pub const STAGE_GAUGE: &str = "verify_gauge";
pub const STAGE_MAJORANT: &str = "verify_majorant_props";
pub const STAGE_UNIFORM: &str = "local_uniform_convergence_check";
pub const STAGE_CONTRACTION: &str = "verify_contraction";

pub const AUDIT_STAGES: [&str; 9] = [
    STAGE_ESSENTIAL_BOUND,
    STAGE_NORM_AXIOMS,
    STAGE_LOCAL_PROPERTY,
    STAGE_SIGMA_COMPAT,
    STAGE_CONTINUITY,
    STAGE_GAUGE,
    STAGE_MAJORANT,
    STAGE_UNIFORM,
    STAGE_CONTRACTION,
];

pub const STAGE_COMPARISONS: &str = "quasi_metric_comparisons";
pub const STAGE_ZERO_BRANCH: &str = "orbit_zero_branch";
pub const STAGE_SAFE_ESTIMATE: &str = "safe_estimate_oracle";
pub const STAGE_LIMSUP: &str = "limsup_exchange_oracle";
pub const STAGE_ORBIT: &str = "orbit_inequality_audit";
pub const STAGE_KIRK_CONDITION: &str = "kirk_condition_check";
pub const STAGE_KIRK_REDUCE: &str = "kirk_reduce";
pub const STAGE_KIRK_CONTRACTION: &str = "kirk_verify_contraction";

/// Sub-seed labels.
pub const SEED_PAIRS: &str = "pairs";
pub const SEED_SAFE: &str = "safe";
pub const SEED_STRUCTURAL: &str = "structural";

/// Replays pair number `index` of the seeded stream.
pub fn sample_pair(g: &FibreSet, seed: u64, index: usize) -> (FibrePoint, FibrePoint) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (g.sample(&mut rng), g.sample(&mut rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestPair {
    /// Index in the seeded stream or the explicit list; `None` when enumerated.
    pub sample: Option<usize>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Block pairs to test, atom by atom.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    per_atom: Vec<Vec<TestPair>>,
    exhaustive_atoms: Vec<usize>,
    sample_count: usize,
    seed: u64,
}

impl PairSet {
    /// `sample_count` seeded pairs on continuous regions, every ordered pair
    /// of points on finite regions.
    pub fn seeded(g: &FibreSet, sample_count: usize, seed: u64) -> Self {
        let sampled: Vec<(FibrePoint, FibrePoint)> =
            (0..sample_count).map(|k| sample_pair(g, seed, k)).collect();
        let mut per_atom = Vec::with_capacity(g.atoms());
        let mut exhaustive_atoms = Vec::new();
        for a in 0..g.atoms() {
            match g.region(a).finite_points() {
                Some(points) => {
                    exhaustive_atoms.push(a);
                    per_atom.push(
                        points
                            .iter()
                            .flat_map(|u| {
                                points.iter().map(move |v| TestPair {
                                    sample: None,
                                    u: u.clone(),
                                    v: v.clone(),
                                })
                            })
                            .collect(),
                    );
                }
                None => per_atom.push(
                    sampled
                        .iter()
                        .enumerate()
                        .map(|(k, (x, y))| TestPair {
                            sample: Some(k),
                            u: x.block(a).to_vec(),
                            v: y.block(a).to_vec(),
                        })
                        .collect(),
                ),
            }
        }
        PairSet {
            per_atom,
            exhaustive_atoms,
            sample_count,
            seed,
        }
    }

    /// Exactly the given pairs of points of G.
    pub fn explicit(g: &FibreSet, pairs: &[(FibrePoint, FibrePoint)]) -> Result<Self> {
        for (x, y) in pairs {
            require_member(g, x)?;
            require_member(g, y)?;
        }
        let per_atom = (0..g.atoms())
            .map(|a| {
                pairs
                    .iter()
                    .enumerate()
                    .map(|(k, (x, y))| TestPair {
                        sample: Some(k),
                        u: x.block(a).to_vec(),
                        v: y.block(a).to_vec(),
                    })
                    .collect()
            })
            .collect();
        Ok(PairSet {
            per_atom,
            exhaustive_atoms: Vec::new(),
            sample_count: pairs.len(),
            seed: 0,
        })
    }

    pub fn atom(&self, atom: usize) -> &[TestPair] {
        &self.per_atom[atom]
    }

    pub fn atoms(&self) -> usize {
        self.per_atom.len()
    }

    pub fn total(&self) -> usize {
        self.per_atom.iter().map(Vec::len).sum()
    }

    fn sampling(&self, n_max: usize) -> SamplingInfo {
        SamplingInfo {
            seed: self.seed,
            sample_count: self.sample_count,
            n_max,
            grid_density: 0,
            exhaustive_atoms: self.exhaustive_atoms.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
struct InequalityTally {
    checked: usize,
    worst_slack: Option<f64>,
    violation_count: usize,
    near_miss_count: usize,
}

/// Evaluates `eval(atom, pair)` → [(n, lhs, rhs)] over every pair and
/// classifies each slack rhs − lhs.
fn run_inequality(
    check: &str,
    pairs: &PairSet,
    n_max: usize,
    mut eval: impl FnMut(usize, &TestPair) -> Result<Vec<(usize, f64, f64)>>,
) -> Result<CertificationReport> {
    let mut tally = InequalityTally::default();
    let mut records = Vec::new();
    for a in 0..pairs.atoms() {
        for pair in pairs.atom(a) {
            for (n, lhs, rhs) in eval(a, pair)? {
                let slack = rhs - lhs;
                tally.checked += 1;
                tally.worst_slack = Some(tally.worst_slack.map_or(slack, |w: f64| w.min(slack)));
                if slack >= 0.0 {
                    continue;
                }
                if slack < -SLACK_TOL {
                    tally.violation_count += 1;
                } else {
                    tally.near_miss_count += 1;
                }
                if records.len() < MAX_RECORDS {
                    records.push(ViolationRecord {
                        check: check.into(),
                        atom: a,
                        sample: pair.sample,
                        x: Some(pair.u.clone()),
                        y: Some(pair.v.clone()),
                        n: Some(n),
                        lhs,
                        rhs,
                        slack,
                    });
                }
            }
        }
    }
    let verdict = if tally.violation_count > 0 {
        Verdict::Fail
    } else if tally.near_miss_count > 0 {
        Verdict::ProbePass
    } else {
        Verdict::Pass
    };
    let detail = format!(
        "{} inequalities on {} pairs ({} exhaustive atoms), {} violations, {} within tolerance",
        tally.checked,
        pairs.total(),
        pairs.exhaustive_atoms.len(),
        tally.violation_count,
        tally.near_miss_count
    );
    let mut report = CertificationReport::new(pairs.sampling(n_max));
    report.push(StageRecord::new(check, verdict, detail).with_metrics(&tally));
    report.violations = records;
    Ok(report)
}

fn block_orbit(f: &RandomOperator, atom: usize, start: &[f64], len: usize) -> Result<Vec<Vec<f64>>> {
    let mut orbit = vec![start.to_vec()];
    for k in 0..len {
        let next = f.apply_fibre(atom, &orbit[k])?;
        orbit.push(next);
    }
    Ok(orbit)
}

/// Checks L_f(fⁿx, fⁿy)(ω) ≤ Ψ_n(ω, U_f(x, y)(ω)) for 1 ≤ n ≤ n_max on
/// every pair.
pub fn verify_contraction_on(
    f: &RandomOperator,
    bounds: &BoundSequence,
    pairs: &PairSet,
    n_max: usize,
) -> Result<CertificationReport> {
    bounds.check_atoms(f.atoms())?;
    run_inequality(STAGE_CONTRACTION, pairs, n_max, |a, pair| {
        let us = block_orbit(f, a, &pair.u, n_max + 1)?;
        let vs = block_orbit(f, a, &pair.v, n_max + 1)?;
        let upper = FibreDistances::from_images(&us[0], &vs[0], &us[1], &vs[1]).u();
        Ok((1..=n_max)
            .map(|n| {
                let lower = FibreDistances::from_images(&us[n], &vs[n], &us[n + 1], &vs[n + 1]).l();
                (n, lower, bounds.evaluate(n, a, upper))
            })
            .collect())
    })
}

pub fn verify_contraction(
    f: &RandomOperator,
    bounds: &BoundSequence,
    sample_count: usize,
    n_max: usize,
    seed: u64,
) -> Result<CertificationReport> {
    if sample_count == 0 {
        return Err(Error::Precondition("sample_count must be at least 1".into()));
    }
    verify_contraction_on(f, bounds, &PairSet::seeded(f.domain(), sample_count, seed), n_max)
}

/// Checks ‖fⁿx − fⁿy‖(ω) ≤ ψ_n(‖x − y‖(ω)) for 1 ≤ n ≤ n_max on every pair.
pub fn kirk_condition_on(
    f: &RandomOperator,
    psi_seq: &GaugeSequence,
    pairs: &PairSet,
    n_max: usize,
) -> Result<CertificationReport> {
    run_inequality(STAGE_KIRK_CONDITION, pairs, n_max, |a, pair| {
        let us = block_orbit(f, a, &pair.u, n_max)?;
        let vs = block_orbit(f, a, &pair.v, n_max)?;
        let t = dist(&pair.u, &pair.v);
        Ok((1..=n_max)
            .map(|n| (n, dist(&us[n], &vs[n]), psi_seq.eval(n, t)))
            .collect())
    })
}

pub fn kirk_condition_check(
    f: &RandomOperator,
    psi_seq: &GaugeSequence,
    sample_count: usize,
    n_max: usize,
    seed: u64,
) -> Result<CertificationReport> {
    kirk_condition_on(f, psi_seq, &PairSet::seeded(f.domain(), sample_count, seed), n_max)
}

/// Ψ_n(ω, t) = ψ_{n+1}(t) for every atom, after checking ψ_1, …, ψ_{n_max+1}
/// are nondecreasing on `grid`.
pub fn kirk_reduce(psi_seq: &GaugeSequence, grid: &[f64], n_max: usize) -> Result<BoundSequence> {
    crate::boyd_wong::validate_grid(grid)?;
    for n in 1..=n_max + 1 {
        let mut prev = psi_seq.eval(n, 0.0);
        for &t in grid {
            let v = psi_seq.eval(n, t);
            if v < prev - crate::boyd_wong::GAUGE_TOL {
                return Err(Error::InvalidSequence(format!(
                    "ψ_{n} decreases at t = {t} ({prev} to {v})"
                )));
            }
            prev = v;
        }
    }
    BoundSequence::new(
        psi_seq.limit.clone(),
        psi_seq.perturbation,
        vec![psi_seq.schedule.clone()],
        1,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomIdentities {
    pub atom: usize,
    pub p: f64,
    pub l: f64,
    pub u: f64,
    pub distance: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub verdict: Verdict,
    pub tolerance: f64,
    pub atoms: Vec<AtomIdentities>,
}

/// At fixed points z1, z2: P_f = U_f = L_f = ‖z1 − z2‖ at every atom, up to
/// twice the larger residual plus 1e-12.
pub fn fixed_point_metric_identities(
    f: &RandomOperator,
    z1: &FibrePoint,
    z2: &FibrePoint,
    tol: f64,
) -> Result<IdentityReport> {
    require_member(f.domain(), z1)?;
    require_member(f.domain(), z2)?;
    let mut worst_residual: f64 = 0.0;
    for (name, z) in [("z1", z1), ("z2", z2)] {
        let r = crate::rn_module::random_distance(z, &f.apply(z)?)?;
        if r.max() > tol {
            return Err(Error::Precondition(format!(
                "{name} is not a fixed point: residual {:?} exceeds {tol}",
                r.values()
            )));
        }
        worst_residual = worst_residual.max(r.max());
    }
    let tolerance = 2.0 * worst_residual + 1e-12;
    let atoms: Vec<AtomIdentities> = (0..f.atoms())
        .map(|a| {
            let d = FibreDistances::new(f, a, z1.block(a), z2.block(a))?;
            let distance = d.u_v;
            let (p, l, u) = (d.p(), d.l(), d.u());
            let holds = [p, l, u].iter().all(|q| (q - distance).abs() <= tolerance);
            Ok(AtomIdentities {
                atom: a,
                p,
                l,
                u,
                distance,
                holds,
            })
        })
        .collect::<Result<_>>()?;
    Ok(IdentityReport {
        verdict: Verdict::from_bool(atoms.iter().all(|a| a.holds)),
        tolerance,
        atoms,
    })
}

fn grid_stage(id: &str, r: &GridReport) -> StageRecord {
    let failed = r.failed_checks();
    let detail = if failed.is_empty() {
        format!("{} grid checks passed", r.checks.len())
    } else {
        format!("failed: {}", failed.join(", "))
    };
    StageRecord::new(id, r.verdict, detail).with_metrics(r)
}

/// Points, scalars, events and partitions for the structural stages.
struct StructuralInputs {
    samples: Vec<FibrePoint>,
    scalars: Vec<L0Value>,
    events: Vec<AtomEvent>,
    partitions: Vec<Vec<AtomEvent>>,
    point_lists: Vec<Vec<FibrePoint>>,
}

fn structural_inputs(g: &FibreSet, count: usize, seed: u64) -> StructuralInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms = g.atoms();
    let samples: Vec<FibrePoint> = (0..count).map(|_| g.sample(&mut rng)).collect();
    let scalars = (0..SCALAR_SAMPLES)
        .map(|_| L0Value::from_fn(atoms, |_| rng.random_range(-3.0..3.0)))
        .collect();
    let events = (0..count)
        .map(|_| {
            let members = (0..atoms).filter(|_| rng.random_bool(0.5)).collect();
            AtomEvent::new(members).expect("distinct atoms")
        })
        .collect();
    let mut partitions = Vec::with_capacity(count);
    let mut point_lists = Vec::with_capacity(count);
    for k in 0..count {
        let owner: Vec<usize> = (0..atoms)
            .map(|_| rng.random_range(0..MAX_PARTITION_PIECES))
            .collect();
        let pieces: Vec<AtomEvent> = (0..MAX_PARTITION_PIECES)
            .map(|p| AtomEvent::new((0..atoms).filter(|a| owner[*a] == p).collect()).expect("distinct atoms"))
            .filter(|e| !e.is_empty())
            .collect();
        point_lists.push(
            (0..pieces.len())
                .map(|j| samples[(k + j) % samples.len()].clone())
                .collect(),
        );
        partitions.push(pieces);
    }
    StructuralInputs {
        samples,
        scalars,
        events,
        partitions,
        point_lists,
    }
}

fn run_stage(id: &str, s: &Scenario, inputs: &StructuralInputs) -> Result<StageRecord> {
    let f = &s.operator;
    let g = f.domain();
    let c = s.certify();
    let interval_end = 2.0 * g.essential_bound();
    let grid = uniform_grid(interval_end, c.grid_density);
    Ok(match id {
        STAGE_ESSENTIAL_BOUND => {
            let b = essential_bound_check(g);
            let detail = if b.bounded {
                format!("every region lies within radius {}", b.essential_bound)
            } else {
                format!(
                    "atoms {:?} exceed M = {} (worst radius {} at atom {})",
                    b.violating_atoms, b.essential_bound, b.worst_radius, b.worst_atom
                )
            };
            StageRecord::new(id, Verdict::from_bool(b.bounded), detail).with_metrics(&b)
        }
        STAGE_NORM_AXIOMS => {
            let r = check_norm_axioms(&s.space, &inputs.samples, &inputs.scalars)?;
            let detail = format!("{} checks, {} violations", r.checks, r.violations.len());
            StageRecord::new(id, Verdict::from_bool(r.violations.is_empty()), detail).with_metrics(&r)
        }
        STAGE_LOCAL_PROPERTY => {
            let r = check_local_property(f, &inputs.samples, &inputs.events)?;
            if !r.applicable {
                let note = r.note.clone().unwrap_or_default();
                StageRecord::new(id, Verdict::Skipped, note).with_metrics(&r)
            } else {
                let detail = format!(
                    "{} checks, {} violations, {} atom checks reduced to the masked form",
                    r.checked,
                    r.violations.len(),
                    r.literal_exempt_atoms
                );
                StageRecord::new(id, Verdict::from_bool(r.violations.is_empty()), detail).with_metrics(&r)
            }
        }
        STAGE_SIGMA_COMPAT => {
            let r = check_sigma_compat(f, &inputs.partitions, &inputs.point_lists)?;
            let detail = format!("{} checks, {} violations", r.checked, r.violations.len());
            StageRecord::new(id, Verdict::from_bool(r.violations.is_empty()), detail).with_metrics(&r)
        }
        STAGE_CONTINUITY => {
            let mut reports = Vec::new();
            for x in inputs.samples.iter().take(CONTINUITY_POINTS) {
                reports.push(fibre_continuity_probe(f, x, &CONTINUITY_RADII)?);
            }
            let flagged: usize = reports
                .iter()
                .map(|r| r.atoms.iter().filter(|a| a.flagged).count())
                .sum();
            let verdict = if flagged == 0 { Verdict::ProbePass } else { Verdict::Fail };
            let detail = format!("{} base points, {flagged} flagged atoms", reports.len());
            StageRecord::new(id, verdict, detail).with_metrics(&reports)
        }
        STAGE_GAUGE => grid_stage(id, &verify_gauge(s.gauge(), &grid, c.probe_depth)?),
        STAGE_MAJORANT => grid_stage(
            id,
            &verify_majorant_props(s.gauge(), &grid, c.grid_density, c.probe_depth)?,
        ),
        STAGE_UNIFORM => {
            let r = local_uniform_convergence_check(
                &s.bounds,
                f.atoms(),
                interval_end,
                c.convergence_n_max,
                &c.epsilons,
                c.grid_density,
            )?;
            let detail = r
                .certified
                .iter()
                .map(|ci| match ci.index {
                    Some(n) => format!("N({}) = {n}", ci.epsilon),
                    None => format!("N({}) > {}", ci.epsilon, c.convergence_n_max),
                })
                .collect::<Vec<_>>()
                .join(", ");
            StageRecord::new(id, r.verdict, detail).with_metrics(&r)
        }
        STAGE_CONTRACTION => unreachable!("contraction stage carries violation records"),
        other => return Err(Error::Precondition(format!("unknown audit stage {other}"))),
    })
}

fn merge_stage(report: &mut CertificationReport, sub: CertificationReport, seed_label: &str, seed: u64) {
    for mut stage in sub.stages {
        if let serde_json::Value::Object(m) = &mut stage.metrics {
            m.insert("seed_label".into(), json!(seed_label));
            m.insert("stage_seed".into(), json!(seed));
        }
        report.push(stage);
    }
    report.violations.extend(sub.violations);
    for a in sub.sampling.exhaustive_atoms {
        if !report.sampling.exhaustive_atoms.contains(&a) {
            report.sampling.exhaustive_atoms.push(a);
        }
    }
}

fn scenario_sampling(s: &Scenario) -> SamplingInfo {
    let c = s.certify();
    SamplingInfo {
        seed: c.seed,
        sample_count: c.sample_count,
        n_max: c.n_max,
        grid_density: c.grid_density,
        exhaustive_atoms: Vec::new(),
    }
}

/// Runs the hypothesis stages in order and stops at the first failure; the
/// stages after it are recorded as skipped.
pub fn full_hypothesis_audit(s: &Scenario) -> Result<CertificationReport> {
    let c = s.certify();
    let mut report = CertificationReport::new(scenario_sampling(s));
    let inputs = structural_inputs(s.fibre(), c.structural_sample_count, sub_seed(c.seed, SEED_STRUCTURAL));
    for id in AUDIT_STAGES {
        if report.has_failed() {
            report.push(StageRecord::new(id, Verdict::Skipped, "not run: an earlier stage failed"));
            continue;
        }
        if id == STAGE_CONTRACTION {
            let seed = sub_seed(c.seed, SEED_PAIRS);
            let sub = verify_contraction(&s.operator, &s.bounds, c.sample_count, c.n_max, seed)?;
            merge_stage(&mut report, sub, SEED_PAIRS, seed);
        } else {
            report.push(run_stage(id, s, &inputs)?);
        }
    }
    Ok(report)
}

/// Comparisons L ≤ ‖f(x) − f(y)‖, ‖x − y‖ ≤ U and P ≤ U on every pair.
fn comparison_stage(f: &RandomOperator, pairs: &PairSet) -> Result<CertificationReport> {
    run_inequality(STAGE_COMPARISONS, pairs, 0, |a, pair| {
        let d = FibreDistances::new(f, a, &pair.u, &pair.v)?;
        // n encodes which comparison: 0, 1, 2
        Ok(vec![(0, d.l(), d.fu_fv), (1, d.u_v, d.u()), (2, d.p(), d.u())])
    })
    .map(|mut r| {
        relabel_near_misses(&mut r);
        r
    })
}

/// ‖f(u) − f(v)‖ ≤ P_f(u,v) + ‖f(u) − u‖ + ‖f(v) − v‖ where P_f(u,v) > 0.
fn safe_estimate_stage(f: &RandomOperator, pairs: &PairSet) -> Result<CertificationReport> {
    let mut skipped = 0usize;
    let mut r = run_inequality(STAGE_SAFE_ESTIMATE, pairs, 0, |a, pair| {
        let d = FibreDistances::new(f, a, &pair.u, &pair.v)?;
        if d.takes_zero_branch() {
            skipped += 1;
            return Ok(vec![]);
        }
        Ok(vec![(0, d.fu_fv, d.p() + d.fu_u + d.fv_v)])
    })?;
    relabel_near_misses(&mut r);
    if let Some(stage) = r.stages.last_mut() {
        stage.detail.push_str(&format!(", {skipped} pairs with P = 0 skipped"));
    }
    Ok(r)
}

/// The comparison identities are exact up to rounding: near misses count as
/// passes rather than probes.
fn relabel_near_misses(r: &mut CertificationReport) {
    if let Some(stage) = r.stages.last_mut() {
        if stage.verdict == Verdict::ProbePass {
            stage.verdict = Verdict::Pass;
        }
    }
    r.violations.retain(|v| v.slack < -SLACK_TOL);
    r.verdict = Verdict::combine(r.stages.iter().map(|s| s.verdict));
}

#[derive(Debug, Clone, Serialize)]
struct ZeroBranchMetrics {
    checked: usize,
    off_branch: usize,
    worst_gap: f64,
}

/// Along the orbit of x0: P_f(x_n, x_{n+1}) = 0 and L_f(x_n, x_{n+1}) = d_{n+1}.
pub fn orbit_zero_branch_check(f: &RandomOperator, x0: &FibrePoint, horizon: usize) -> Result<StageRecord> {
    let trace = orbit_trace(f, x0, horizon + 1, 1, 1.0)?;
    let mut m = ZeroBranchMetrics {
        checked: 0,
        off_branch: 0,
        worst_gap: 0.0,
    };
    for n in 0..horizon {
        for a in 0..f.atoms() {
            let d = FibreDistances::new(f, a, trace.iterates[n].block(a), trace.iterates[n + 1].block(a))?;
            m.checked += 1;
            if !d.takes_zero_branch() {
                m.off_branch += 1;
            }
            m.worst_gap = m.worst_gap.max((d.l() - trace.d[n + 1].get(a)).abs());
        }
    }
    let ok = m.off_branch == 0 && m.worst_gap <= ZERO_BRANCH_MATCH_TOL;
    let detail = format!(
        "{} orbit pairs, {} off the zero branch, worst |L − d_(n+1)| = {:e}",
        m.checked, m.off_branch, m.worst_gap
    );
    Ok(StageRecord::new(STAGE_ZERO_BRANCH, Verdict::from_bool(ok), detail).with_metrics(&m))
}

/// Lemma checks over a scenario: gauge and majorant properties of every
/// declared gauge, quasi-metric comparisons, the zero-branch identity along
/// the orbit, the safe estimate, limsup exchange on orbit distances, the
/// orbit inequality, and the Kirk round trip when a Kirk sequence is given.
/// Every stage runs.
pub fn lemma_suite(s: &Scenario) -> Result<CertificationReport> {
    let f = &s.operator;
    let g = f.domain();
    let c = s.certify();
    let mut report = CertificationReport::new(scenario_sampling(s));
    let interval_end = 2.0 * g.essential_bound();
    let grid = uniform_grid(interval_end, c.grid_density);

    for (name, psi) in &s.spec.gauges {
        let r = verify_gauge(psi, &grid, c.probe_depth)?;
        report.push(grid_stage(&format!("{STAGE_GAUGE}:{name}"), &r));
        let r = verify_majorant_props(psi, &grid, c.grid_density, c.probe_depth)?;
        report.push(grid_stage(&format!("{STAGE_MAJORANT}:{name}"), &r));
    }

    let pair_seed = sub_seed(c.seed, SEED_PAIRS);
    let pairs = PairSet::seeded(g, c.sample_count, pair_seed);
    merge_stage(&mut report, comparison_stage(f, &pairs)?, SEED_PAIRS, pair_seed);

    let solve = s.solve();
    let solved = picard_solve(f, &s.x0, solve.tol, solve.max_iter, solve.window)?;
    let horizon = solve
        .horizon
        .unwrap_or_else(|| default_horizon(solved.iterations, solve.max_iter));
    report.push(orbit_zero_branch_check(f, &s.x0, horizon)?);

    let safe_seed = sub_seed(c.seed, SEED_SAFE);
    let safe_pairs = PairSet::seeded(g, c.safe_sample_count, safe_seed);
    merge_stage(&mut report, safe_estimate_stage(f, &safe_pairs)?, SEED_SAFE, safe_seed);

    let trace = orbit_trace(f, &s.x0, horizon, solve.window, solve.tail_fraction)?;
    let mut limsup = Vec::with_capacity(f.atoms());
    for a in 0..f.atoms() {
        let seq: Vec<f64> = trace.d.iter().map(|d| d.get(a)).collect();
        limsup.push(limsup_exchange_oracle(&seq, s.gauge(), solve.tail_fraction, c.grid_density)?);
    }
    let verdict = Verdict::combine(limsup.iter().map(|r| r.verdict));
    report.push(
        StageRecord::new(STAGE_LIMSUP, verdict, format!("orbit d_n at {} atoms over {horizon} steps", f.atoms()))
            .with_metrics(&limsup),
    );

    let orbit = orbit_inequality_audit(f, &s.x0, &s.bounds, c.n_max)?;
    let detail = format!(
        "{} inequalities, {} violations, worst slack {:e}",
        orbit.checked, orbit.violation_count, orbit.worst_slack
    );
    report.push(StageRecord::new(STAGE_ORBIT, orbit.verdict, detail).with_metrics(&orbit));

    if let Some(kirk) = &s.kirk {
        let sub = kirk_condition_on(f, kirk, &pairs, c.n_max + 1)?;
        merge_stage(&mut report, sub, SEED_PAIRS, pair_seed);
        match kirk_reduce(kirk, &grid, c.n_max) {
            Ok(reduced) => {
                let r = local_uniform_convergence_check(
                    &reduced,
                    f.atoms(),
                    interval_end,
                    c.convergence_n_max,
                    &c.epsilons,
                    c.grid_density,
                )?;
                let detail = r
                    .certified
                    .iter()
                    .map(|ci| match ci.index {
                        Some(n) => format!("N({}) = {n}", ci.epsilon),
                        None => format!("N({}) > {}", ci.epsilon, c.convergence_n_max),
                    })
                    .collect::<Vec<_>>()
                    .join(", ");
                report.push(StageRecord::new(STAGE_KIRK_REDUCE, r.verdict, detail).with_metrics(&r));
                let mut sub = verify_contraction_on(f, &reduced, &pairs, c.n_max)?;
                for st in &mut sub.stages {
                    st.id = STAGE_KIRK_CONTRACTION.into();
                }
                for v in &mut sub.violations {
                    v.check = STAGE_KIRK_CONTRACTION.into();
                }
                merge_stage(&mut report, sub, SEED_PAIRS, pair_seed);
            }
            Err(e) => report.push(StageRecord::new(STAGE_KIRK_REDUCE, Verdict::Fail, e.to_string())),
        }
    }
    Ok(report)
}
