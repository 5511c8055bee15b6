//! Scenario files: one JSON document bundling the space, the fibre set, the
//! operator, the gauges and bounds, and the solve and certify settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boyd_wong::{
    BoundSequence, GaugeSequence, GaugeSpec, Perturbation, Schedule, DEFAULT_GRID_DENSITY,
    DEFAULT_PROBE_DEPTH,
};
use crate::error::Error;
use crate::operators::{Family, FibreMap, RandomOperator};
use crate::prob_space::ProbSpace;
use crate::rn_module::{require_member, FibrePoint, FibreSet, Region};
use crate::solver::{DEFAULT_MAX_ITER, DEFAULT_TAIL_FRACTION, DEFAULT_TOL, DEFAULT_WINDOW};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invariant {check} violated: {source}")]
    Invariant {
        check: String,
        #[source]
        source: Error,
    },
}

impl ScenarioError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    fn invariant(check: &str) -> impl FnOnce(Error) -> Self + '_ {
        move |source| ScenarioError::Invariant {
            check: check.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FibreSpec {
    pub dimension: usize,
    /// One region per atom, or one shared region.
    pub regions: Vec<Region>,
    pub essential_bound: f64,
    pub theta_in_g: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub family: Family,
    /// One parameter block per atom, or one shared block.
    pub params: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    /// Name of a declared gauge.
    pub base: String,
    pub perturbation: Perturbation,
    pub schedules: Vec<Schedule>,
    #[serde(default)]
    pub index_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KirkSpec {
    /// Name of a declared gauge.
    pub limit: String,
    pub perturbation: Perturbation,
    pub schedule: Schedule,
}

/// A point given block by block, or one block repeated at every atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Blocks(Vec<Vec<f64>>),
    Constant { constant: Vec<f64> },
}

impl PointSpec {
    fn build(&self, atoms: usize) -> crate::Result<FibrePoint> {
        match self {
            PointSpec::Blocks(b) => FibrePoint::from_blocks(b.clone()),
            PointSpec::Constant { constant } => Ok(FibrePoint::constant(atoms, constant)),
        }
    }
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}
fn default_window() -> usize {
    DEFAULT_WINDOW
}
fn default_tail_fraction() -> f64 {
    DEFAULT_TAIL_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSpec {
    pub x0: PointSpec,
    /// Extra starts for the uniqueness cross-check. When fewer than two are
    /// given, x0 and seeded samples from G are used.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub starts: Vec<PointSpec>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_tail_fraction")]
    pub tail_fraction: f64,
    /// Length of the diagnostic orbit; derived from the iteration count when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

fn default_seed() -> u64 {
    42
}
fn default_sample_count() -> usize {
    500
}
fn default_safe_sample_count() -> usize {
    200
}
fn default_structural_sample_count() -> usize {
    50
}
fn default_n_max() -> usize {
    20
}
fn default_grid_density() -> usize {
    DEFAULT_GRID_DENSITY
}
fn default_probe_depth() -> u32 {
    DEFAULT_PROBE_DEPTH
}
fn default_convergence_n_max() -> usize {
    1000
}
fn default_epsilons() -> Vec<f64> {
    vec![0.1, 0.01]
}
fn default_lambdas() -> Vec<f64> {
    vec![0.1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Pairs drawn per continuous region for the contraction and comparison checks.
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    #[serde(default = "default_safe_sample_count")]
    pub safe_sample_count: usize,
    /// Points and events drawn for the structural checks.
    #[serde(default = "default_structural_sample_count")]
    pub structural_sample_count: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_grid_density")]
    pub grid_density: usize,
    #[serde(default = "default_probe_depth")]
    pub probe_depth: u32,
    /// Largest index searched when certifying Ψ_n → ψ.
    #[serde(default = "default_convergence_n_max")]
    pub convergence_n_max: usize,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
}

impl Default for CertifySpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

/// The file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub space: SpaceSpec,
    pub fibre: FibreSpec,
    pub operator: OperatorSpec,
    pub gauges: BTreeMap<String, GaugeSpec>,
    pub bounds: BoundsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kirk: Option<KirkSpec>,
    pub solve: SolveSpec,
    #[serde(default)]
    pub certify: CertifySpec,
}

/// A validated scenario with every object built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub space: ProbSpace,
    pub operator: RandomOperator,
    pub bounds: BoundSequence,
    pub kirk: Option<GaugeSequence>,
    pub x0: FibrePoint,
    pub starts: Vec<FibrePoint>,
    /// sha256 of the canonical serialization of `spec`.
    pub hash: String,
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

/// Deterministic per-stage seed.
pub fn sub_seed(seed: u64, label: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(label.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

const DERIVED_STARTS: usize = 3;

impl Scenario {
    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn fibre(&self) -> &FibreSet {
        self.operator.domain()
    }

    pub fn certify(&self) -> &CertifySpec {
        &self.spec.certify
    }

    pub fn solve(&self) -> &SolveSpec {
        &self.spec.solve
    }

    /// The base gauge ψ of the bound sequence.
    pub fn gauge(&self) -> &GaugeSpec {
        &self.bounds.base
    }

    pub fn to_json(&self) -> String {
        to_json(&self.spec)
    }

    pub fn from_spec(spec: ScenarioSpec) -> Result<Self, ScenarioError> {
        let space = ProbSpace::new(spec.space.weights.clone())
            .map_err(ScenarioError::invariant("space.weights"))?;
        let atoms = space.atoms();
        let fibre = FibreSet::new(
            spec.fibre.dimension,
            spec.fibre.regions.clone(),
            atoms,
            spec.fibre.essential_bound,
            spec.fibre.theta_in_g,
        )
        .map_err(ScenarioError::invariant("fibre"))?;

        if spec.operator.params.is_empty() {
            return Err(ScenarioError::schema("operator.params", "at least one parameter block is required"));
        }
        let maps = spec
            .operator
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                FibreMap::from_params(spec.operator.family, p.clone()).map_err(|e| {
                    ScenarioError::schema(format!("operator.params[{i}]"), e.to_string())
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let operator = RandomOperator::new(fibre, maps).map_err(ScenarioError::invariant("operator"))?;

        let base = spec.gauges.get(&spec.bounds.base).ok_or_else(|| {
            ScenarioError::schema(
                "bounds.base",
                format!("gauge {:?} is not declared in gauges", spec.bounds.base),
            )
        })?;
        for (name, g) in &spec.gauges {
            g.validate()
                .map_err(|e| ScenarioError::schema(format!("gauges.{name}"), e.to_string()))?;
        }
        let bounds = BoundSequence::new(
            base.clone(),
            spec.bounds.perturbation,
            spec.bounds.schedules.clone(),
            spec.bounds.index_offset,
        )
        .map_err(ScenarioError::invariant("bounds"))?;
        bounds
            .check_atoms(atoms)
            .map_err(ScenarioError::invariant("bounds.schedules"))?;

        let kirk = spec
            .kirk
            .as_ref()
            .map(|k| {
                let limit = spec.gauges.get(&k.limit).ok_or_else(|| {
                    ScenarioError::schema("kirk.limit", format!("gauge {:?} is not declared in gauges", k.limit))
                })?;
                GaugeSequence::new(limit.clone(), k.perturbation, k.schedule.clone())
                    .map_err(ScenarioError::invariant("kirk"))
            })
            .transpose()?;

        let solve = &spec.solve;
        if !(solve.tol > 0.0 && solve.tol.is_finite()) {
            return Err(ScenarioError::schema("solve.tol", "must be positive"));
        }
        if solve.window == 0 {
            return Err(ScenarioError::schema("solve.window", "must be at least 1"));
        }
        if !(solve.tail_fraction > 0.0 && solve.tail_fraction <= 1.0) {
            return Err(ScenarioError::schema("solve.tail_fraction", "must lie in (0, 1]"));
        }
        if solve.horizon == Some(0) {
            return Err(ScenarioError::schema("solve.horizon", "must be at least 1"));
        }
        let x0 = solve
            .x0
            .build(atoms)
            .map_err(ScenarioError::invariant("solve.x0"))?;
        operator
            .domain()
            .check_shape(&x0)
            .and_then(|_| require_member(operator.domain(), &x0))
            .map_err(ScenarioError::invariant("solve.x0"))?;
        let mut starts = Vec::with_capacity(solve.starts.len());
        for (i, s) in solve.starts.iter().enumerate() {
            let check = format!("solve.starts[{i}]");
            let p = s
                .build(atoms)
                .and_then(|p| {
                    operator.domain().check_shape(&p)?;
                    require_member(operator.domain(), &p)?;
                    Ok(p)
                })
                .map_err(ScenarioError::invariant(&check))?;
            starts.push(p);
        }

        let c = &spec.certify;
        if c.sample_count == 0 || c.safe_sample_count == 0 || c.structural_sample_count < 2 {
            return Err(ScenarioError::schema(
                "certify",
                "sample counts must be positive (structural_sample_count at least 2)",
            ));
        }
        if c.n_max == 0 {
            return Err(ScenarioError::schema("certify.n_max", "must be at least 1"));
        }
        if c.grid_density < 2 {
            return Err(ScenarioError::schema("certify.grid_density", "must be at least 2"));
        }
        if c.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(ScenarioError::schema("certify.epsilons", "must be positive"));
        }
        if c.lambdas.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(ScenarioError::schema("certify.lambdas", "must lie in (0, 1)"));
        }

        let starts = if starts.len() >= 2 {
            starts
        } else {
            derived_starts(&operator, &x0, starts, c.seed)
        };
        let hash = hex::encode(Sha256::digest(to_json(&spec).as_bytes()));
        Ok(Scenario {
            spec,
            space,
            operator,
            bounds,
            kirk,
            x0,
            starts,
            hash,
        })
    }
}

/// x0, the declared starts, then seeded samples from G until there are
/// three distinct starts (or a finite G runs out of points).
fn derived_starts(f: &RandomOperator, x0: &FibrePoint, declared: Vec<FibrePoint>, seed: u64) -> Vec<FibrePoint> {
    let mut starts = vec![x0.clone()];
    for p in declared {
        if !starts.contains(&p) {
            starts.push(p);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "starts"));
    for _ in 0..64 {
        if starts.len() >= DERIVED_STARTS {
            break;
        }
        let p = f.domain().sample(&mut rng);
        if !starts.contains(&p) {
            starts.push(p);
        }
    }
    starts
}

pub fn to_json(spec: &ScenarioSpec) -> String {
    serde_json::to_string_pretty(spec).expect("scenario specs serialize")
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: ScenarioSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => ScenarioError::Schema {
                path,
                message: strip_position(&inner),
            },
            _ => ScenarioError::Parse {
                line: inner.line(),
                column: inner.column(),
                message: strip_position(&inner),
            },
        }
    })?;
    Scenario::from_spec(spec)
}

fn strip_position(e: &serde_json::Error) -> String {
    let full = e.to_string();
    match full.rfind(" at line ") {
        Some(i) => full[..i].to_string(),
        None => full,
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"{
      "name": "basic",
      "space": { "weights": [0.5, 0.5] },
      "fibre": {
        "dimension": 1,
        "regions": [{ "kind": "ball", "center": [0.0], "radius": 1.0 }],
        "essential_bound": 1.0,
        "theta_in_g": true
      },
      "operator": { "family": "scale", "params": [{ "alpha": 0.5 }, { "alpha": 0.25 }] },
      "gauges": { "psi": { "family": "linear", "alpha": 0.5 } },
      "bounds": {
        "base": "psi",
        "perturbation": "additive",
        "schedules": [{ "kind": "harmonic", "scale": 1.0, "shift": 1.0 }]
      },
      "solve": { "x0": [[1.0], [1.0]] }
    }"#;

    #[test]
    fn loads_and_fills_defaults() {
        let s = parse_scenario(BASIC).unwrap();
        assert_eq!(s.space.atoms(), 2);
        assert_eq!(s.fibre().dimension(), 1);
        assert_eq!(s.solve().window, DEFAULT_WINDOW);
        assert_eq!(s.certify().sample_count, 500);
        assert_eq!(s.starts.len(), 3);
        assert_eq!(s.starts[0], s.x0);
        assert_eq!(s.hash.len(), 64);
    }

    #[test]
    fn round_trip_reproduces_scenario() {
        let s = parse_scenario(BASIC).unwrap();
        let again = parse_scenario(&s.to_json()).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.hash, again.hash);
        assert_eq!(s.starts, again.starts);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let text = BASIC.replace("[0.5, 0.5]", "[0.5, 0.6]");
        let err = parse_scenario(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::Invariant { ref check, .. } if check == "space.weights"));
        assert!(err.to_string().contains("weights sum to 1.1"), "{err}");
    }

    #[test]
    fn undeclared_gauge_is_a_schema_error() {
        let text = BASIC.replace(r#""base": "psi""#, r#""base": "phi""#);
        match parse_scenario(&text).unwrap_err() {
            ScenarioError::Schema { path, .. } => assert_eq!(path, "bounds.base"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn schema_errors_carry_field_paths() {
        let text = BASIC.replace(r#""alpha": 0.25"#, r#""alpha": "x""#);
        match parse_scenario(&text).unwrap_err() {
            ScenarioError::Schema { path, .. } => assert_eq!(path, "operator.params[1]"),
            other => panic!("unexpected {other}"),
        }
        let text = BASIC.replace(r#""dimension": 1"#, r#""dimension": -1"#);
        match parse_scenario(&text).unwrap_err() {
            ScenarioError::Schema { path, .. } => assert_eq!(path, "fibre.dimension"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_scenario("{\n  \"name\": \"x\",\n  oops\n}").unwrap_err();
        match err {
            ScenarioError::Parse { line, column, .. } => assert_eq!((line, column), (3, 3)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn start_outside_domain_is_rejected() {
        let text = BASIC.replace(r#""x0": [[1.0], [1.0]]"#, r#""x0": [[1.0], [3.0]]"#);
        let err = parse_scenario(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::Invariant { ref check, .. } if check == "solve.x0"));
    }

    #[test]
    fn sub_seeds_differ_by_label() {
        assert_ne!(sub_seed(1, "a"), sub_seed(1, "b"));
        assert_eq!(sub_seed(1, "a"), sub_seed(1, "a"));
    }
}
