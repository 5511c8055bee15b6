//! Random operators given by their fibre maps f_ω.
//!
//! `(f(x))(ω) = f_ω(x(ω))` holds by construction; the structural checks
//! below re-verify the local property and σ-stability compatibility on
//! samples so that user-supplied tables cannot silently break them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob_space::AtomEvent;
use crate::rn_module::{dist, require_member, sigma_mix_points, FibrePoint, FibreSet, Region};

/// Catalog keys, as used in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Affine,
    Scale,
    ShiftedScale,
    Antipode,
    Table,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Affine => "affine",
            Family::Scale => "scale",
            Family::ShiftedScale => "shifted_scale",
            Family::Antipode => "antipode",
            Family::Table => "table",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineParams {
    /// Row-major d×d matrix.
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleParams {
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftedScaleParams {
    pub alpha: f64,
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntipodeParams {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableParams {
    pub from: Vec<Vec<f64>>,
    pub to: Vec<Vec<f64>>,
}

/// One fibre map f_ω.
#[derive(Debug, Clone, PartialEq)]
pub enum FibreMap {
    /// x ↦ P_{G_ω}(A x + b)
    Affine(AffineParams),
    /// x ↦ α x
    Scale(ScaleParams),
    /// x ↦ α x + (1 − α) c
    ShiftedScale(ShiftedScaleParams),
    /// x ↦ −x
    Antipode,
    /// explicit map on a finite region
    Table(TableParams),
}

impl FibreMap {
    pub fn family(&self) -> Family {
        match self {
            FibreMap::Affine(_) => Family::Affine,
            FibreMap::Scale(_) => Family::Scale,
            FibreMap::ShiftedScale(_) => Family::ShiftedScale,
            FibreMap::Antipode => Family::Antipode,
            FibreMap::Table(_) => Family::Table,
        }
    }

    /// Parses the per-atom parameter block of `family`.
    pub fn from_params(family: Family, params: serde_json::Value) -> serde_json::Result<Self> {
        Ok(match family {
            Family::Affine => FibreMap::Affine(serde_json::from_value(params)?),
            Family::Scale => FibreMap::Scale(serde_json::from_value(params)?),
            Family::ShiftedScale => FibreMap::ShiftedScale(serde_json::from_value(params)?),
            Family::Antipode => {
                let _: AntipodeParams = serde_json::from_value(params)?;
                FibreMap::Antipode
            }
            Family::Table => FibreMap::Table(serde_json::from_value(params)?),
        })
    }

    pub fn to_params(&self) -> serde_json::Value {
        match self {
            FibreMap::Affine(p) => serde_json::to_value(p),
            FibreMap::Scale(p) => serde_json::to_value(p),
            FibreMap::ShiftedScale(p) => serde_json::to_value(p),
            FibreMap::Antipode => serde_json::to_value(AntipodeParams {}),
            FibreMap::Table(p) => serde_json::to_value(p),
        }
        .expect("parameter structs serialize")
    }

    fn validate(&self, dim: usize, region: &Region) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidOperator(msg));
        let finite = |v: &[f64]| v.iter().all(|c| c.is_finite());
        match self {
            FibreMap::Affine(p) => {
                if p.matrix.len() != dim
                    || p.matrix.iter().any(|r| r.len() != dim || !finite(r))
                {
                    return bad(format!("affine matrix must be {dim}x{dim} and finite"));
                }
                if p.offset.len() != dim || !finite(&p.offset) {
                    return bad(format!("affine offset must have {dim} finite entries"));
                }
            }
            FibreMap::Scale(p) => {
                if !(0.0..1.0).contains(&p.alpha) {
                    return bad(format!("scale alpha must lie in [0,1), got {}", p.alpha));
                }
            }
            FibreMap::ShiftedScale(p) => {
                if !(0.0..1.0).contains(&p.alpha) {
                    return bad(format!("shifted_scale alpha must lie in [0,1), got {}", p.alpha));
                }
                if p.center.len() != dim || !finite(&p.center) {
                    return bad(format!("shifted_scale center must have {dim} finite entries"));
                }
            }
            FibreMap::Antipode => {}
            FibreMap::Table(p) => {
                if region.finite_points().is_none() {
                    return bad("table maps require a finite region".into());
                }
                if p.from.len() != p.to.len() {
                    return bad("table from/to lists differ in length".into());
                }
                if p.from.iter().chain(&p.to).any(|q| q.len() != dim || !finite(q)) {
                    return bad(format!("table entries must have {dim} finite coordinates"));
                }
            }
        }
        Ok(())
    }

    /// Evaluates f_ω on a block. `region` is G_ω, used by the affine family's
    /// projection.
    pub fn eval(&self, region: &Region, x: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            FibreMap::Affine(p) => {
                let y: Vec<f64> = p
                    .matrix
                    .iter()
                    .zip(&p.offset)
                    .map(|(row, b)| row.iter().zip(x).map(|(m, v)| m * v).sum::<f64>() + b)
                    .collect();
                region.project(&y)
            }
            FibreMap::Scale(p) => x.iter().map(|v| p.alpha * v).collect(),
            FibreMap::ShiftedScale(p) => x
                .iter()
                .zip(&p.center)
                .map(|(v, c)| p.alpha * v + (1.0 - p.alpha) * c)
                .collect(),
            FibreMap::Antipode => x.iter().map(|v| -v).collect(),
            FibreMap::Table(p) => {
                let i = p
                    .from
                    .iter()
                    .position(|q| dist(q, x) <= crate::rn_module::MEMBERSHIP_TOL)
                    .ok_or_else(|| Error::Domain(format!("block {x:?} is not in the table")))?;
                p.to[i].clone()
            }
        })
    }
}

/// A random operator on a fibre set, realized by one fibre map per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomOperator {
    family: Family,
    maps: Vec<FibreMap>,
    domain: FibreSet,
}

/// Number of seeded spot samples per continuous region used at construction.
const SPOT_SAMPLES: usize = 16;

impl RandomOperator {
    /// A single map is broadcast to all atoms. Construction spot-checks the
    /// self-map property: finite regions exhaustively, continuous regions on
    /// seeded samples.
    pub fn new(domain: FibreSet, maps: Vec<FibreMap>) -> Result<Self> {
        let atoms = domain.atoms();
        let maps = match maps.len() {
            1 => vec![maps[0].clone(); atoms],
            n if n == atoms => maps,
            n => {
                return Err(Error::Shape(format!(
                    "{n} fibre maps given for {atoms} atoms (expected 1 or {atoms})"
                )))
            }
        };
        let family = maps[0].family();
        if let Some(a) = maps.iter().position(|m| m.family() != family) {
            return Err(Error::InvalidOperator(format!(
                "atom {a} uses family {} but atom 0 uses {}",
                maps[a].family().as_str(),
                family.as_str()
            )));
        }
        for (a, m) in maps.iter().enumerate() {
            m.validate(domain.dimension(), domain.region(a))
                .map_err(|e| Error::InvalidOperator(format!("atom {a}: {e}")))?;
        }
        let op = RandomOperator {
            family,
            maps,
            domain,
        };
        op.spot_check_self_map()?;
        Ok(op)
    }

    fn spot_check_self_map(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for a in 0..self.atoms() {
            let region = self.domain.region(a);
            let probes: Vec<Vec<f64>> = match region.finite_points() {
                Some(points) => points.to_vec(),
                None => (0..SPOT_SAMPLES).map(|_| region.sample(&mut rng)).collect(),
            };
            for p in probes {
                let image = self.apply_fibre(a, &p)?;
                if !region.contains(&image) {
                    return Err(Error::SelfMap { atom: a });
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn maps(&self) -> &[FibreMap] {
        &self.maps
    }

    pub fn domain(&self) -> &FibreSet {
        &self.domain
    }

    pub fn atoms(&self) -> usize {
        self.domain.atoms()
    }

    /// f_ω on a single block, without membership checks.
    pub fn apply_fibre(&self, atom: usize, block: &[f64]) -> Result<Vec<f64>> {
        self.maps[atom].eval(self.domain.region(atom), block)
    }

    /// f_ωⁿ on a single block.
    pub fn iterate_fibre(&self, atom: usize, block: &[f64], n: usize) -> Result<Vec<f64>> {
        let mut x = block.to_vec();
        for _ in 0..n {
            x = self.apply_fibre(atom, &x)?;
        }
        Ok(x)
    }

    /// Whether f_ω(θ_ω) = θ_ω at `atom`.
    pub fn fixes_zero(&self, atom: usize) -> bool {
        let zero = vec![0.0; self.domain.dimension()];
        self.domain.region(atom).contains(&zero)
            && self
                .apply_fibre(atom, &zero)
                .map(|img| dist(&img, &zero) <= crate::rn_module::MEMBERSHIP_TOL)
                .unwrap_or(false)
    }

    pub fn apply(&self, x: &FibrePoint) -> Result<FibrePoint> {
        require_member(&self.domain, x)?;
        self.apply_unchecked_input(x)
    }

    fn apply_unchecked_input(&self, x: &FibrePoint) -> Result<FibrePoint> {
        let mut blocks = Vec::with_capacity(self.atoms());
        for a in 0..self.atoms() {
            let image = self.apply_fibre(a, x.block(a))?;
            if !self.domain.region(a).contains(&image) {
                return Err(Error::SelfMap { atom: a });
            }
            blocks.push(image);
        }
        FibrePoint::from_blocks(blocks)
    }

    /// fⁿ(x).
    pub fn iterate(&self, x: &FibrePoint, n: usize) -> Result<FibrePoint> {
        require_member(&self.domain, x)?;
        let mut cur = x.clone();
        for _ in 0..n {
            cur = self.apply_unchecked_input(&cur)?;
        }
        Ok(cur)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralViolation {
    /// Index of the sample (local property) or case (σ-compatibility).
    pub case: usize,
    /// Event index (local property) or partition piece (σ-compatibility).
    pub piece: usize,
    pub atom: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPropertyReport {
    pub applicable: bool,
    pub note: Option<String>,
    pub checked: usize,
    /// Atoms outside A where f_ω(θ_ω) ≠ θ_ω: there Ī_A f(x) = f(Ī_A x) cannot
    /// hold literally and only the masked form Ī_A f(x) = Ī_A f(Ī_A x) is checked.
    pub literal_exempt_atoms: usize,
    pub violations: Vec<StructuralViolation>,
}

/// Verifies Ī_A f(x) = f(Ī_A x) entrywise for every (sample, event) pair.
///
/// Requires θ ∈ G so that Ī_A x stays in G; otherwise the check is reported
/// as not applicable.
pub fn check_local_property(
    f: &RandomOperator,
    samples: &[FibrePoint],
    events: &[AtomEvent],
) -> Result<LocalPropertyReport> {
    let g = f.domain();
    if !g.theta_in_g() {
        return Ok(LocalPropertyReport {
            applicable: false,
            note: Some("θ ∉ G: masked points leave G, local-property check disabled".into()),
            checked: 0,
            literal_exempt_atoms: 0,
            violations: Vec::new(),
        });
    }
    let fixes_zero: Vec<bool> = (0..f.atoms()).map(|a| f.fixes_zero(a)).collect();
    let mut report = LocalPropertyReport {
        applicable: true,
        note: None,
        checked: 0,
        literal_exempt_atoms: 0,
        violations: Vec::new(),
    };
    for (i, x) in samples.iter().enumerate() {
        let fx = f.apply(x)?;
        for (k, event) in events.iter().enumerate() {
            let lhs = fx.masked(event)?;
            let rhs = f.apply(&x.masked(event)?)?;
            for a in 0..f.atoms() {
                report.checked += 1;
                let literal_gap = dist(lhs.block(a), rhs.block(a));
                let gap = if event.contains(a) || fixes_zero[a] {
                    literal_gap
                } else {
                    if literal_gap > crate::rn_module::MEMBERSHIP_TOL {
                        report.literal_exempt_atoms += 1;
                    }
                    // both sides of the masked form are θ_ω here
                    0.0
                };
                if gap > crate::rn_module::MEMBERSHIP_TOL {
                    report.violations.push(StructuralViolation {
                        case: i,
                        piece: k,
                        atom: a,
                        gap,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SigmaCompatReport {
    pub checked: usize,
    pub violations: Vec<StructuralViolation>,
}

/// Verifies f(Σ Ī_{A_k} x_k) = Σ Ī_{A_k} f(x_k) for each (partition, points) case.
pub fn check_sigma_compat(
    f: &RandomOperator,
    partitions: &[Vec<AtomEvent>],
    point_lists: &[Vec<FibrePoint>],
) -> Result<SigmaCompatReport> {
    if partitions.len() != point_lists.len() {
        return Err(Error::Shape(format!(
            "{} partitions but {} point lists",
            partitions.len(),
            point_lists.len()
        )));
    }
    let g = f.domain();
    let mut report = SigmaCompatReport::default();
    for (case, (partition, points)) in partitions.iter().zip(point_lists).enumerate() {
        let lhs = f.apply(&sigma_mix_points(g, partition, points)?)?;
        let images = points
            .iter()
            .map(|p| f.apply(p))
            .collect::<Result<Vec<_>>>()?;
        let rhs = sigma_mix_points(g, partition, &images)?;
        let owner = crate::prob_space::partition_owner(g.atoms(), partition)?;
        for a in 0..g.atoms() {
            report.checked += 1;
            let gap = dist(lhs.block(a), rhs.block(a));
            if gap > crate::rn_module::MEMBERSHIP_TOL {
                report.violations.push(StructuralViolation {
                    case,
                    piece: owner[a],
                    atom: a,
                    gap,
                });
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomContinuity {
    pub atom: usize,
    /// No perturbation stayed inside the region (isolated point).
    pub vacuous: bool,
    /// Largest image displacement per radius.
    pub displacements: Vec<f64>,
    /// Largest ‖f(u) − f(x)‖ / ‖u − x‖ per radius.
    pub ratios: Vec<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub radii: Vec<f64>,
    pub atoms: Vec<AtomContinuity>,
    pub passed: bool,
}

/// Samples perturbations x ± r·e_i at each radius (projected back into the
/// region) and flags atoms whose image displacement does not shrink with r.
///
/// An atom passes when displacements are nonincreasing along the radii and
/// the displacement at the smallest radius is at most the one at the largest
/// radius times √(r_min / r_max). This is a probe, not a proof of continuity.
pub fn fibre_continuity_probe(
    f: &RandomOperator,
    x: &FibrePoint,
    radii: &[f64],
) -> Result<ContinuityReport> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Domain("radii must be a nonempty list of positive reals".into()));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("radii must be strictly decreasing".into()));
    }
    require_member(f.domain(), x)?;
    let dim = f.domain().dimension();
    let slack = 1e-12;
    let mut atoms = Vec::with_capacity(f.atoms());
    for a in 0..f.atoms() {
        let region = f.domain().region(a);
        let base = x.block(a);
        let fbase = f.apply_fibre(a, base)?;
        let mut displacements = Vec::with_capacity(radii.len());
        let mut ratios = Vec::with_capacity(radii.len());
        let mut any = false;
        for &r in radii {
            let mut disp: f64 = 0.0;
            let mut ratio: f64 = 0.0;
            if region.finite_points().is_none() {
                for i in 0..dim {
                    for sign in [1.0, -1.0] {
                        let mut u = base.to_vec();
                        u[i] += sign * r;
                        let u = region.project(&u);
                        let step = dist(&u, base);
                        if step <= 0.0 {
                            continue;
                        }
                        any = true;
                        let d = dist(&f.apply_fibre(a, &u)?, &fbase);
                        disp = disp.max(d);
                        ratio = ratio.max(d / step);
                    }
                }
            }
            displacements.push(disp);
            ratios.push(ratio);
        }
        let flagged = any && {
            let monotone = displacements.windows(2).all(|w| w[1] <= w[0] + slack);
            let first = displacements[0];
            let last = *displacements.last().unwrap();
            let shrink = (radii[radii.len() - 1] / radii[0]).sqrt();
            !(monotone && last <= first * shrink + slack)
        };
        atoms.push(AtomContinuity {
            atom: a,
            vacuous: !any,
            displacements,
            ratios,
            flagged,
        });
    }
    let passed = atoms.iter().all(|c| !c.flagged);
    Ok(ContinuityReport {
        radii: radii.to_vec(),
        atoms,
        passed,
    })
}
