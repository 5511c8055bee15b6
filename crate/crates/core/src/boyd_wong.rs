//! Boyd–Wong gauges ψ, their monotone majorant g(t) = sup_{0≤s≤t} ψ(s), the
//! perturbed bound sequences Ψ_n(ω, ·), and oracles for the scalar lemmas.
//!
//! Right upper semicontinuity and right continuity cannot be decided from
//! finitely many evaluations. Both are checked with a dyadic right-probe and
//! reported as [`Verdict::ProbePass`], never as a plain pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::Verdict;

/// Absolute tolerance for all gauge comparisons.
pub const GAUGE_TOL: f64 = 1e-9;

/// Default number of grid points per bounded interval.
pub const DEFAULT_GRID_DENSITY: usize = 1024;

/// Default depth of the dyadic right-probe.
pub const DEFAULT_PROBE_DEPTH: u32 = 20;

const REFINE_ROUNDS: usize = 120;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub slope: f64,
    pub intercept: f64,
}

impl Segment {
    fn at(&self, t: f64) -> f64 {
        self.intercept + self.slope * t
    }
}

/// A gauge function ψ : [0, ∞) → ℝ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GaugeSpec {
    /// α·t
    Linear { alpha: f64 },
    /// t / (1 + t)
    Rational,
    /// Affine segments on [0, b₁), (b₁, b₂), …, (b_k, ∞). The value at a
    /// breakpoint is `at_breakpoints[i]` when given, else the right segment's.
    Piecewise {
        breakpoints: Vec<f64>,
        segments: Vec<Segment>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at_breakpoints: Option<Vec<f64>>,
    },
    /// min(α·t, cap)
    Capped { alpha: f64, cap: f64 },
}

impl GaugeSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGauge(m));
        match self {
            GaugeSpec::Linear { alpha } => {
                if !(alpha.is_finite() && *alpha >= 0.0) {
                    return bad(format!("linear alpha must be finite and nonnegative, got {alpha}"));
                }
            }
            GaugeSpec::Rational => {}
            GaugeSpec::Piecewise {
                breakpoints,
                segments,
                at_breakpoints,
            } => {
                if breakpoints.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
                    return bad("breakpoints must be positive and finite".into());
                }
                if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("breakpoints must be strictly increasing".into());
                }
                if segments.len() != breakpoints.len() + 1 {
                    return bad(format!(
                        "{} breakpoints need {} segments, got {}",
                        breakpoints.len(),
                        breakpoints.len() + 1,
                        segments.len()
                    ));
                }
                if segments
                    .iter()
                    .any(|s| !(s.slope.is_finite() && s.intercept.is_finite()))
                {
                    return bad("segment coefficients must be finite".into());
                }
                if let Some(v) = at_breakpoints {
                    if v.len() != breakpoints.len() || v.iter().any(|x| !x.is_finite()) {
                        return bad("at_breakpoints must give one finite value per breakpoint".into());
                    }
                }
            }
            GaugeSpec::Capped { alpha, cap } => {
                if !(alpha.is_finite() && *alpha >= 0.0 && cap.is_finite() && *cap >= 0.0) {
                    return bad("capped alpha and cap must be finite and nonnegative".into());
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            GaugeSpec::Linear { alpha } => alpha * t,
            GaugeSpec::Rational => t / (1.0 + t),
            GaugeSpec::Piecewise {
                breakpoints,
                segments,
                at_breakpoints,
            } => {
                // number of breakpoints strictly below t
                let k = breakpoints.partition_point(|b| *b < t);
                match (breakpoints.get(k), at_breakpoints) {
                    (Some(b), Some(vals)) if *b == t => vals[k],
                    (Some(b), None) if *b == t => segments[k + 1].at(t),
                    _ => segments[k].at(t),
                }
            }
            GaugeSpec::Capped { alpha, cap } => (alpha * t).min(*cap),
        }
    }

    /// Linear, rational and capped gauges with valid parameters.
    pub fn is_nondecreasing(&self) -> bool {
        !matches!(self, GaugeSpec::Piecewise { .. })
    }

    /// Points where the gauge may be discontinuous.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            GaugeSpec::Piecewise { breakpoints, .. } => breakpoints,
            _ => &[],
        }
    }
}

/// Checks a grid is nonempty, positive, finite and strictly increasing.
pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Domain("grid is empty".into()));
    }
    if grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Domain("grid points must be positive and finite".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `density` evenly spaced points on (0, end], ending exactly at `end`.
pub fn uniform_grid(end: f64, density: usize) -> Vec<f64> {
    let h = end / density as f64;
    let mut grid: Vec<f64> = (1..=density).map(|i| i as f64 * h).collect();
    if let Some(last) = grid.last_mut() {
        *last = end;
    }
    grid
}

/// One named property checked over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCheck {
    pub name: String,
    pub verdict: Verdict,
    /// (t, offending value) pairs, at most a handful.
    pub failures: Vec<(f64, f64)>,
    pub failure_count: usize,
}

const MAX_LISTED_FAILURES: usize = 8;

fn grid_check(name: &str, probe: bool, failures: Vec<(f64, f64)>) -> GridCheck {
    let verdict = match (failures.is_empty(), probe) {
        (false, _) => Verdict::Fail,
        (true, true) => Verdict::ProbePass,
        (true, false) => Verdict::Pass,
    };
    let failure_count = failures.len();
    GridCheck {
        name: name.into(),
        verdict,
        failures: failures.into_iter().take(MAX_LISTED_FAILURES).collect(),
        failure_count,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub checks: Vec<GridCheck>,
    pub verdict: Verdict,
}

impl GridReport {
    fn new(checks: Vec<GridCheck>) -> Self {
        let verdict = Verdict::combine(checks.iter().map(|c| c.verdict));
        GridReport { checks, verdict }
    }

    pub fn check(&self, name: &str) -> Option<&GridCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| c.verdict.is_fail())
            .map(|c| c.name.as_str())
            .collect()
    }
}

/// Dyadic right-probe at t: the excess e_k = h(t + 2⁻ᵏ) − h(t) (or its
/// absolute value) must be within tolerance at depth, or still shrinking by at
/// least a factor 4 between depth/2 and depth.
fn right_probe(h: impl Fn(f64) -> f64, t: f64, depth: u32, two_sided: bool) -> Option<f64> {
    let at = h(t);
    let excess = |k: u32| {
        let d = h(t + 0.5f64.powi(k as i32)) - at;
        if two_sided {
            d.abs()
        } else {
            d.max(0.0)
        }
    };
    let deep = excess(depth);
    let mid = excess(depth / 2);
    if deep <= GAUGE_TOL || deep <= mid / 4.0 {
        None
    } else {
        Some(deep)
    }
}

pub const CHECK_ZERO: &str = "ψ(0) = 0";
pub const CHECK_NONNEGATIVE: &str = "ψ(t) ≥ 0";
pub const CHECK_MONOTONE: &str = "ψ nondecreasing";
pub const CHECK_BELOW_IDENTITY: &str = "ψ(t) < t";
pub const CHECK_RIGHT_USC: &str = "right-usc probe";

/// Grid verification of the Boyd–Wong properties of ψ.
pub fn verify_gauge(psi: &GaugeSpec, grid: &[f64], probe_depth: u32) -> Result<GridReport> {
    validate_grid(grid)?;
    let values: Vec<f64> = grid.iter().map(|&t| psi.eval(t)).collect();
    let zero = psi.eval(0.0);

    let zero_fail = if zero.abs() > GAUGE_TOL { vec![(0.0, zero)] } else { vec![] };
    let negative: Vec<(f64, f64)> = std::iter::once((0.0, zero))
        .chain(grid.iter().copied().zip(values.iter().copied()))
        .filter(|(_, v)| *v < -GAUGE_TOL)
        .collect();
    let mut non_monotone = Vec::new();
    let mut prev = zero;
    for (&t, &v) in grid.iter().zip(&values) {
        if v < prev - GAUGE_TOL {
            non_monotone.push((t, v));
        }
        prev = v;
    }
    let not_below: Vec<(f64, f64)> = grid
        .iter()
        .copied()
        .zip(values.iter().copied())
        .filter(|(t, v)| !(v < t))
        .collect();
    let probe_fail: Vec<(f64, f64)> = std::iter::once(0.0)
        .chain(grid.iter().copied())
        .filter_map(|t| right_probe(|s| psi.eval(s), t, probe_depth, false).map(|e| (t, e)))
        .collect();

    Ok(GridReport::new(vec![
        grid_check(CHECK_ZERO, false, zero_fail),
        grid_check(CHECK_NONNEGATIVE, false, negative),
        grid_check(CHECK_MONOTONE, false, non_monotone),
        grid_check(CHECK_BELOW_IDENTITY, false, not_below),
        grid_check(CHECK_RIGHT_USC, true, probe_fail),
    ]))
}

/// g(t) = sup_{0≤s≤t} ψ(s), approximated by a uniform grid of `grid_density`
/// points on [0, t] plus every breakpoint of ψ in [0, t], refined by local
/// bisection around the best grid point. Families nondecreasing by
/// construction return ψ(t).
pub fn majorant(psi: &GaugeSpec, t: f64, grid_density: usize) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("majorant needs t >= 0, got {t}")));
    }
    if grid_density < 2 {
        return Err(Error::Domain("grid density must be at least 2".into()));
    }
    if t == 0.0 || psi.is_nondecreasing() {
        return Ok(psi.eval(t));
    }
    let h = t / (grid_density - 1) as f64;
    let mut best = f64::NEG_INFINITY;
    let mut best_s = 0.0;
    for i in 0..grid_density {
        let s = if i + 1 == grid_density { t } else { i as f64 * h };
        let v = psi.eval(s);
        if v > best {
            best = v;
            best_s = s;
        }
    }
    if let GaugeSpec::Piecewise {
        breakpoints,
        segments,
        ..
    } = psi
    {
        // value and left limit at each breakpoint in (0, t]
        for (k, &b) in breakpoints.iter().enumerate().filter(|(_, b)| **b <= t) {
            best = best.max(psi.eval(b)).max(segments[k].at(b));
        }
    }
    // ternary refinement around the best grid point
    let (mut lo, mut hi) = ((best_s - h).max(0.0), (best_s + h).min(t));
    for _ in 0..REFINE_ROUNDS {
        let left_s = lo + 0.25 * (hi - lo);
        let right_s = hi - 0.25 * (hi - lo);
        let (left, right) = (psi.eval(left_s), psi.eval(right_s));
        best = best.max(left).max(right);
        if right >= left {
            lo = left_s;
        } else {
            hi = right_s;
        }
    }
    Ok(best)
}

pub const CHECK_G_ZERO: &str = "g(0) = 0";
pub const CHECK_G_MONOTONE: &str = "g nondecreasing";
pub const CHECK_G_AT_MOST: &str = "g(t) ≤ t";
pub const CHECK_G_BELOW: &str = "g(t) < t";
pub const CHECK_G_RIGHT_CONT: &str = "right-continuity probe";

/// Grid verification of the majorant's properties: g(0) = 0, g nondecreasing,
/// g(t) ≤ t, g(t) < t for t > 0, and a right-continuity probe.
pub fn verify_majorant_props(
    psi: &GaugeSpec,
    grid: &[f64],
    grid_density: usize,
    probe_depth: u32,
) -> Result<GridReport> {
    validate_grid(grid)?;
    let g = |t: f64| majorant(psi, t, grid_density).expect("t is nonnegative");
    let zero = g(0.0);
    let values: Vec<f64> = grid.iter().map(|&t| g(t)).collect();

    let zero_fail = if zero.abs() > GAUGE_TOL { vec![(0.0, zero)] } else { vec![] };
    let mut non_monotone = Vec::new();
    let mut prev = zero;
    for (&t, &v) in grid.iter().zip(&values) {
        if v < prev - GAUGE_TOL {
            non_monotone.push((t, v));
        }
        prev = v;
    }
    let above: Vec<(f64, f64)> = grid
        .iter()
        .copied()
        .zip(values.iter().copied())
        .filter(|(t, v)| *v > t + GAUGE_TOL)
        .collect();
    let not_below: Vec<(f64, f64)> = grid
        .iter()
        .copied()
        .zip(values.iter().copied())
        .filter(|(t, v)| !(v < t))
        .collect();
    let probe_fail: Vec<(f64, f64)> = std::iter::once(0.0)
        .chain(grid.iter().copied())
        .filter_map(|t| right_probe(g, t, probe_depth, true).map(|e| (t, e)))
        .collect();

    Ok(GridReport::new(vec![
        grid_check(CHECK_G_ZERO, false, zero_fail),
        grid_check(CHECK_G_MONOTONE, false, non_monotone),
        grid_check(CHECK_G_AT_MOST, false, above),
        grid_check(CHECK_G_BELOW, false, not_below),
        grid_check(CHECK_G_RIGHT_CONT, true, probe_fail),
    ]))
}

/// A nonnegative decay schedule c_n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Zero,
    /// scale · ratioⁿ
    Geometric { scale: f64, ratio: f64 },
    /// scale / (n + shift)
    Harmonic { scale: f64, shift: f64 },
}

impl Schedule {
    /// `first_index` is the smallest n at which the schedule will be evaluated.
    pub fn validate(&self, first_index: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSequence(m));
        match self {
            Schedule::Zero => {}
            Schedule::Geometric { scale, ratio } => {
                if !(scale.is_finite() && *scale >= 0.0) {
                    return bad(format!("geometric scale must be nonnegative, got {scale}"));
                }
                if !(0.0..=1.0).contains(ratio) {
                    return bad(format!("geometric ratio must lie in [0,1], got {ratio}"));
                }
            }
            Schedule::Harmonic { scale, shift } => {
                if !(scale.is_finite() && *scale >= 0.0) {
                    return bad(format!("harmonic scale must be nonnegative, got {scale}"));
                }
                if !(shift.is_finite() && first_index as f64 + shift > 0.0) {
                    return bad(format!(
                        "harmonic shift {shift} makes n + shift nonpositive at n = {first_index}"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, n: usize) -> f64 {
        match self {
            Schedule::Zero => 0.0,
            Schedule::Geometric { scale, ratio } => scale * ratio.powi(n as i32),
            Schedule::Harmonic { scale, shift } => scale / (n as f64 + shift),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// ψ(t) + c_n
    Additive,
    /// (1 + e_n) ψ(t)
    Multiplicative,
}

impl Perturbation {
    fn combine(self, psi_t: f64, c: f64) -> f64 {
        match self {
            Perturbation::Additive => psi_t + c,
            Perturbation::Multiplicative => (1.0 + c) * psi_t,
        }
    }
}

/// The bound family Ψ_n(ω, t) = ψ(t) ⊕ c_{n + offset}(ω).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSequence {
    pub base: GaugeSpec,
    pub perturbation: Perturbation,
    /// One schedule per atom, or a single schedule shared by all atoms.
    pub schedules: Vec<Schedule>,
    #[serde(default)]
    pub index_offset: usize,
}

impl BoundSequence {
    pub fn new(
        base: GaugeSpec,
        perturbation: Perturbation,
        schedules: Vec<Schedule>,
        index_offset: usize,
    ) -> Result<Self> {
        base.validate()?;
        if schedules.is_empty() {
            return Err(Error::InvalidSequence("at least one schedule is required".into()));
        }
        for s in &schedules {
            s.validate(index_offset)?;
        }
        Ok(BoundSequence {
            base,
            perturbation,
            schedules,
            index_offset,
        })
    }

    /// The unperturbed sequence Ψ_n ≡ ψ.
    pub fn constant(base: GaugeSpec) -> Self {
        BoundSequence {
            base,
            perturbation: Perturbation::Additive,
            schedules: vec![Schedule::Zero],
            index_offset: 0,
        }
    }

    /// Checks the schedule count against an atom count.
    pub fn check_atoms(&self, atoms: usize) -> Result<()> {
        if self.schedules.len() == 1 || self.schedules.len() == atoms {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{} schedules given for {atoms} atoms (expected 1 or {atoms})",
                self.schedules.len()
            )))
        }
    }

    fn schedule(&self, atom: usize) -> &Schedule {
        if self.schedules.len() == 1 {
            &self.schedules[0]
        } else {
            &self.schedules[atom]
        }
    }

    /// Ψ_n(ω, t).
    pub fn evaluate(&self, n: usize, atom: usize, t: f64) -> f64 {
        let c = self.schedule(atom).value(n + self.index_offset);
        self.perturbation.combine(self.base.eval(t), c)
    }
}

/// Ψ_n(ω, t) at the given index, atom and argument.
pub fn evaluate_bound(bounds: &BoundSequence, n: usize, atom: usize, t: f64) -> f64 {
    bounds.evaluate(n, atom, t)
}

/// An atom-independent gauge sequence ψ_n = ψ ⊕ c_n, indexed from n = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeSequence {
    pub limit: GaugeSpec,
    pub perturbation: Perturbation,
    pub schedule: Schedule,
}

impl GaugeSequence {
    pub fn new(limit: GaugeSpec, perturbation: Perturbation, schedule: Schedule) -> Result<Self> {
        limit.validate()?;
        schedule.validate(1)?;
        Ok(GaugeSequence {
            limit,
            perturbation,
            schedule,
        })
    }

    /// ψ_n(t), n ≥ 1.
    pub fn eval(&self, n: usize, t: f64) -> f64 {
        self.perturbation
            .combine(self.limit.eval(t), self.schedule.value(n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedIndex {
    pub epsilon: f64,
    /// Smallest n ≤ n_max with sup deviation ≤ ε, if any.
    pub index: Option<usize>,
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformConvergenceReport {
    pub interval_end: f64,
    pub n_max: usize,
    pub grid_density: usize,
    pub certified: Vec<CertifiedIndex>,
    pub verdict: Verdict,
}

impl UniformConvergenceReport {
    pub fn index_for(&self, epsilon: f64) -> Option<usize> {
        self.certified
            .iter()
            .find(|c| c.epsilon == epsilon)
            .and_then(|c| c.index)
    }
}

/// For each ε, the smallest n ≤ n_max with
/// sup_{ω, t ∈ grid on [0, D]} |Ψ_n(ω, t) − ψ(t)| ≤ ε.
pub fn local_uniform_convergence_check(
    bounds: &BoundSequence,
    atoms: usize,
    interval_end: f64,
    n_max: usize,
    epsilons: &[f64],
    grid_density: usize,
) -> Result<UniformConvergenceReport> {
    if !(interval_end > 0.0 && interval_end.is_finite()) {
        return Err(Error::Domain(format!("interval end must be positive, got {interval_end}")));
    }
    if epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Domain("epsilons must be positive".into()));
    }
    bounds.check_atoms(atoms)?;
    let grid: Vec<f64> = std::iter::once(0.0)
        .chain(uniform_grid(interval_end, grid_density.max(1)))
        .collect();
    let psi: Vec<f64> = grid.iter().map(|&t| bounds.base.eval(t)).collect();
    let deviation = |n: usize| {
        let mut sup: f64 = 0.0;
        for a in 0..atoms {
            for (&t, &p) in grid.iter().zip(&psi) {
                sup = sup.max((bounds.evaluate(n, a, t) - p).abs());
            }
        }
        sup
    };
    let mut certified: Vec<CertifiedIndex> = epsilons
        .iter()
        .map(|&epsilon| CertifiedIndex {
            epsilon,
            index: None,
            deviation: None,
        })
        .collect();
    for n in 0..=n_max {
        if certified.iter().all(|c| c.index.is_some()) {
            break;
        }
        let dev = deviation(n);
        for c in certified.iter_mut().filter(|c| c.index.is_none()) {
            if dev <= c.epsilon + GAUGE_TOL * 1e-3 {
                c.index = Some(n);
                c.deviation = Some(dev);
            }
        }
    }
    let verdict = Verdict::from_bool(certified.iter().all(|c| c.index.is_some()));
    Ok(UniformConvergenceReport {
        interval_end,
        n_max,
        grid_density,
        certified,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimsupReport {
    pub window_start: usize,
    pub window_len: usize,
    /// tail sup of a_n
    pub tail_sup: f64,
    /// tail sup of g(a_n)
    pub tail_sup_of_g: f64,
    /// g(tail sup of a_n)
    pub g_of_tail_sup: f64,
    pub verdict: Verdict,
}

/// Compares limsup g(a_n) with g(limsup a_n), approximating both limsups by
/// the sup over the trailing `tail_fraction` of the sequence.
pub fn limsup_exchange_oracle(
    sequence: &[f64],
    psi: &GaugeSpec,
    tail_fraction: f64,
    grid_density: usize,
) -> Result<LimsupReport> {
    if sequence.is_empty() {
        return Err(Error::Domain("sequence is empty".into()));
    }
    if sequence.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::Domain("sequence must be finite and nonnegative".into()));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::Domain(format!("tail fraction must lie in (0,1], got {tail_fraction}")));
    }
    let window_len = ((sequence.len() as f64 * tail_fraction).ceil() as usize).clamp(1, sequence.len());
    let window_start = sequence.len() - window_len;
    let tail = &sequence[window_start..];
    let tail_sup = tail.iter().copied().fold(0.0, f64::max);
    let mut tail_sup_of_g = f64::NEG_INFINITY;
    for &a in tail {
        tail_sup_of_g = tail_sup_of_g.max(majorant(psi, a, grid_density)?);
    }
    let g_of_tail_sup = majorant(psi, tail_sup, grid_density)?;
    Ok(LimsupReport {
        window_start,
        window_len,
        tail_sup,
        tail_sup_of_g,
        g_of_tail_sup,
        verdict: Verdict::from_bool(tail_sup_of_g <= g_of_tail_sup + GAUGE_TOL),
    })
}
