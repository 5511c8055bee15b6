//! The random normed module realized fibre-first.
//!
//! An element is a list of per-atom blocks in ℝᵈ, the random norm is the
//! per-atom Euclidean norm, and a σ-stable essentially bounded set is a
//! product of closed bounded per-atom regions. The fibre metric d_ω is the
//! Euclidean metric of the block, so ‖x‖(ω) = d_ω(x(ω), θ_ω) holds literally.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob_space::{partition_owner, AtomEvent, L0Value, ProbSpace};

/// Absolute tolerance on region constraints.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// An element of the module, stored as one block of `dim` coordinates per atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct FibrePoint {
    dim: usize,
    coords: Vec<f64>,
}

impl FibrePoint {
    pub fn from_blocks(blocks: Vec<Vec<f64>>) -> Result<Self> {
        let dim = blocks
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Shape("a point needs at least one atom block".into()))?;
        if dim == 0 {
            return Err(Error::Shape("blocks must have positive dimension".into()));
        }
        if let Some(a) = blocks.iter().position(|b| b.len() != dim) {
            return Err(Error::Shape(format!(
                "block at atom {a} has {} coordinates, expected {dim}",
                blocks[a].len()
            )));
        }
        let coords: Vec<f64> = blocks.into_iter().flatten().collect();
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("point has non-finite coordinates".into()));
        }
        Ok(FibrePoint { dim, coords })
    }

    /// θ, the zero element.
    pub fn zero(atoms: usize, dim: usize) -> Self {
        FibrePoint {
            dim,
            coords: vec![0.0; atoms * dim],
        }
    }

    /// The same block at every atom.
    pub fn constant(atoms: usize, block: &[f64]) -> Self {
        FibrePoint {
            dim: block.len(),
            coords: block.repeat(atoms),
        }
    }

    pub(crate) fn from_fn(atoms: usize, dim: usize, mut f: impl FnMut(usize) -> Vec<f64>) -> Self {
        let mut coords = Vec::with_capacity(atoms * dim);
        for a in 0..atoms {
            coords.extend(f(a));
        }
        debug_assert_eq!(coords.len(), atoms * dim);
        FibrePoint { dim, coords }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn block(&self, atom: usize) -> &[f64] {
        &self.coords[atom * self.dim..(atom + 1) * self.dim]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }

    pub fn to_blocks(&self) -> Vec<Vec<f64>> {
        self.blocks().map(<[f64]>::to_vec).collect()
    }

    fn check_shape(&self, other: &FibrePoint) -> Result<()> {
        if self.dim != other.dim || self.coords.len() != other.coords.len() {
            return Err(Error::Shape(format!(
                "points of shape {}x{} and {}x{}",
                self.atoms(),
                self.dim,
                other.atoms(),
                other.dim
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &FibrePoint) -> Result<FibrePoint> {
        self.check_shape(other)?;
        Ok(FibrePoint {
            dim: self.dim,
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &FibrePoint) -> Result<FibrePoint> {
        self.check_shape(other)?;
        Ok(FibrePoint {
            dim: self.dim,
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect(),
        })
    }

    /// Module action ξ·x of an L⁰ scalar.
    pub fn scale_by(&self, xi: &L0Value) -> Result<FibrePoint> {
        if xi.len() != self.atoms() {
            return Err(Error::Shape(format!(
                "scalar has {} entries, point has {} atoms",
                xi.len(),
                self.atoms()
            )));
        }
        Ok(FibrePoint::from_fn(self.atoms(), self.dim, |a| {
            self.block(a).iter().map(|c| xi.get(a) * c).collect()
        }))
    }

    /// Ī_A x: the block of x on atoms in A, the zero block elsewhere.
    pub fn masked(&self, event: &AtomEvent) -> Result<FibrePoint> {
        event.check_range(self.atoms())?;
        Ok(FibrePoint::from_fn(self.atoms(), self.dim, |a| {
            if event.contains(a) {
                self.block(a).to_vec()
            } else {
                vec![0.0; self.dim]
            }
        }))
    }

    pub fn approx_eq(&self, other: &FibrePoint, tol: f64) -> bool {
        self.dim == other.dim
            && self.coords.len() == other.coords.len()
            && self.blocks().zip(other.blocks()).all(|(a, b)| dist(a, b) <= tol)
    }
}

impl TryFrom<Vec<Vec<f64>>> for FibrePoint {
    type Error = Error;

    fn try_from(blocks: Vec<Vec<f64>>) -> Result<Self> {
        FibrePoint::from_blocks(blocks)
    }
}

impl From<FibrePoint> for Vec<Vec<f64>> {
    fn from(p: FibrePoint) -> Self {
        p.to_blocks()
    }
}

/// ‖x‖ as an L⁰ value.
pub fn random_norm(x: &FibrePoint) -> L0Value {
    L0Value::from_fn(x.atoms(), |a| norm(x.block(a)))
}

/// ‖x − y‖ as an L⁰ value.
pub fn random_distance(x: &FibrePoint, y: &FibrePoint) -> Result<L0Value> {
    x.check_shape(y)?;
    Ok(L0Value::from_fn(x.atoms(), |a| dist(x.block(a), y.block(a))))
}

/// A closed bounded subset of ℝᵈ describing one fibre of G.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Finite { points: Vec<Vec<f64>> },
}

impl Region {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|c| c.is_finite());
        match self {
            Region::Ball { center, radius } => {
                if center.len() != dim || !finite(center) {
                    return Err(Error::InvalidRegion(format!(
                        "ball center must have {dim} finite coordinates"
                    )));
                }
                if !(*radius >= 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidRegion(format!(
                        "ball radius must be finite and nonnegative, got {radius}"
                    )));
                }
            }
            Region::Box { lo, hi } => {
                if lo.len() != dim || hi.len() != dim || !finite(lo) || !finite(hi) {
                    return Err(Error::InvalidRegion(format!(
                        "box bounds must have {dim} finite coordinates"
                    )));
                }
                if lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return Err(Error::InvalidRegion("box has lo > hi".into()));
                }
            }
            Region::Finite { points } => {
                if points.is_empty() {
                    return Err(Error::InvalidRegion("finite region is empty".into()));
                }
                if points.iter().any(|p| p.len() != dim || !finite(p)) {
                    return Err(Error::InvalidRegion(format!(
                        "finite region points must have {dim} finite coordinates"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, block: &[f64]) -> bool {
        match self {
            Region::Ball { center, radius } => dist(block, center) <= radius + MEMBERSHIP_TOL,
            Region::Box { lo, hi } => block
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(x, (l, h))| *x >= l - MEMBERSHIP_TOL && *x <= h + MEMBERSHIP_TOL),
            Region::Finite { points } => points.iter().any(|p| dist(block, p) <= MEMBERSHIP_TOL),
        }
    }

    /// Nearest point of the region. Finite regions break ties by lowest index.
    pub fn project(&self, block: &[f64]) -> Vec<f64> {
        match self {
            Region::Ball { center, radius } => {
                let r = dist(block, center);
                if r <= *radius {
                    block.to_vec()
                } else {
                    let s = radius / r;
                    block
                        .iter()
                        .zip(center)
                        .map(|(x, c)| c + (x - c) * s)
                        .collect()
                }
            }
            Region::Box { lo, hi } => block
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(x, (l, h))| x.clamp(*l, *h))
                .collect(),
            Region::Finite { points } => {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (i, p) in points.iter().enumerate() {
                    let d = dist(block, p);
                    if d < best_d {
                        best = i;
                        best_d = d;
                    }
                }
                points[best].clone()
            }
        }
    }

    /// sup of the Euclidean norm over the region.
    pub fn outer_radius(&self) -> f64 {
        match self {
            Region::Ball { center, radius } => norm(center) + radius,
            Region::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| {
                    let m = l.abs().max(h.abs());
                    m * m
                })
                .sum::<f64>()
                .sqrt(),
            Region::Finite { points } => points.iter().map(|p| norm(p)).fold(0.0, f64::max),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Region::Ball { radius, .. } => 2.0 * radius,
            Region::Box { lo, hi } => dist(lo, hi),
            Region::Finite { points } => {
                let mut d: f64 = 0.0;
                for (i, p) in points.iter().enumerate() {
                    for q in &points[i + 1..] {
                        d = d.max(dist(p, q));
                    }
                }
                d
            }
        }
    }

    pub fn finite_points(&self) -> Option<&[Vec<f64>]> {
        match self {
            Region::Finite { points } => Some(points),
            _ => None,
        }
    }

    /// Uniform sample. Balls use a normalized Gaussian direction with radius
    /// R·U^{1/d}; boxes are uniform per coordinate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Region::Ball { center, radius } => {
                let dim = center.len();
                let dir: Vec<f64> = loop {
                    let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                    let n = norm(&g);
                    if n > 1e-300 {
                        break g.into_iter().map(|c| c / n).collect();
                    }
                };
                let u: f64 = rng.random();
                let r = radius * u.powf(1.0 / dim as f64);
                center.iter().zip(&dir).map(|(c, d)| c + r * d).collect()
            }
            Region::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| {
                    let u: f64 = rng.random();
                    l + (h - l) * u
                })
                .collect(),
            Region::Finite { points } => points[rng.random_range(0..points.len())].clone(),
        }
    }
}

/// Product representation of a σ-stable, essentially bounded set G.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FibreSet {
    dimension: usize,
    regions: Vec<Region>,
    essential_bound: f64,
    theta_in_g: bool,
}

impl FibreSet {
    /// A single region is broadcast to all `atoms`. When `theta_in_g` is set,
    /// the zero block must belong to every region.
    pub fn new(
        dimension: usize,
        regions: Vec<Region>,
        atoms: usize,
        essential_bound: f64,
        theta_in_g: bool,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidRegion("dimension must be positive".into()));
        }
        let regions = match regions.len() {
            1 => vec![regions[0].clone(); atoms],
            n if n == atoms => regions,
            n => {
                return Err(Error::Shape(format!(
                    "{n} regions given for {atoms} atoms (expected 1 or {atoms})"
                )))
            }
        };
        if atoms == 0 {
            return Err(Error::Shape("fibre set needs at least one atom".into()));
        }
        for (a, r) in regions.iter().enumerate() {
            r.validate(dimension)
                .map_err(|e| Error::InvalidRegion(format!("atom {a}: {e}")))?;
        }
        if !(essential_bound > 0.0 && essential_bound.is_finite()) {
            return Err(Error::InvalidRegion(format!(
                "essential bound must be positive, got {essential_bound}"
            )));
        }
        if theta_in_g {
            let zero = vec![0.0; dimension];
            if let Some(a) = regions.iter().position(|r| !r.contains(&zero)) {
                return Err(Error::InvalidRegion(format!(
                    "theta_in_g declared but the zero block is not in the region of atom {a}"
                )));
            }
        }
        Ok(FibreSet {
            dimension,
            regions,
            essential_bound,
            theta_in_g,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn atoms(&self) -> usize {
        self.regions.len()
    }

    pub fn region(&self, atom: usize) -> &Region {
        &self.regions[atom]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn essential_bound(&self) -> f64 {
        self.essential_bound
    }

    pub fn theta_in_g(&self) -> bool {
        self.theta_in_g
    }

    pub fn zero(&self) -> FibrePoint {
        FibrePoint::zero(self.atoms(), self.dimension)
    }

    pub fn max_diameter(&self) -> f64 {
        self.regions.iter().map(Region::diameter).fold(0.0, f64::max)
    }

    pub fn check_shape(&self, x: &FibrePoint) -> Result<()> {
        if x.dim() != self.dimension || x.atoms() != self.atoms() {
            return Err(Error::Shape(format!(
                "point has shape {}x{}, fibre set is {}x{}",
                x.atoms(),
                x.dim(),
                self.atoms(),
                self.dimension
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FibrePoint {
        FibrePoint::from_fn(self.atoms(), self.dimension, |a| self.regions[a].sample(rng))
    }
}

/// Per-atom membership breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    pub outside_atoms: Vec<usize>,
}

pub fn membership(g: &FibreSet, x: &FibrePoint) -> Result<Membership> {
    g.check_shape(x)?;
    let outside_atoms: Vec<usize> = (0..g.atoms())
        .filter(|&a| !g.regions[a].contains(x.block(a)))
        .collect();
    Ok(Membership {
        member: outside_atoms.is_empty(),
        outside_atoms,
    })
}

pub(crate) fn require_member(g: &FibreSet, x: &FibrePoint) -> Result<()> {
    let m = membership(g, x)?;
    if m.member {
        Ok(())
    } else {
        Err(Error::Membership {
            atoms: m.outside_atoms,
        })
    }
}

pub fn project(g: &FibreSet, x: &FibrePoint) -> Result<FibrePoint> {
    g.check_shape(x)?;
    Ok(FibrePoint::from_fn(g.atoms(), g.dimension, |a| {
        g.regions[a].project(x.block(a))
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub bounded: bool,
    pub essential_bound: f64,
    pub worst_atom: usize,
    pub worst_radius: f64,
    pub violating_atoms: Vec<usize>,
}

/// Whether every region lies in the ball of radius M about the origin.
pub fn essential_bound_check(g: &FibreSet) -> BoundCheck {
    let radii: Vec<f64> = g.regions.iter().map(Region::outer_radius).collect();
    let (worst_atom, worst_radius) = radii
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (a, r)| if r > best.1 { (a, r) } else { best });
    let violating_atoms: Vec<usize> = radii
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > g.essential_bound + MEMBERSHIP_TOL)
        .map(|(a, _)| a)
        .collect();
    BoundCheck {
        bounded: violating_atoms.is_empty(),
        essential_bound: g.essential_bound,
        worst_atom,
        worst_radius,
        violating_atoms,
    }
}

/// Σ_k Ī_{A_k} x_k for points of G. The result is re-checked for membership.
pub fn sigma_mix_points(
    g: &FibreSet,
    partition: &[AtomEvent],
    points: &[FibrePoint],
) -> Result<FibrePoint> {
    if partition.len() != points.len() {
        return Err(Error::Partition(format!(
            "{} pieces but {} points",
            partition.len(),
            points.len()
        )));
    }
    for p in points {
        require_member(g, p)?;
    }
    let owner = partition_owner(g.atoms(), partition)?;
    let mixed = FibrePoint::from_fn(g.atoms(), g.dimension, |a| {
        points[owner[a]].block(a).to_vec()
    });
    require_member(g, &mixed)?;
    Ok(mixed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormAxiom {
    Definiteness,
    Homogeneity,
    Triangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormViolation {
    pub axiom: NormAxiom,
    pub atom: usize,
    pub samples: Vec<usize>,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormAxiomReport {
    pub checks: usize,
    /// Atom blocks where ‖x‖(ω) = 0 was observed together with x(ω) = θ_ω.
    pub zero_norm_hits: usize,
    pub violations: Vec<NormViolation>,
}

/// Entrywise re-evaluation of definiteness, absolute homogeneity and the
/// triangle inequality on the given samples and scalars.
pub fn check_norm_axioms(
    space: &ProbSpace,
    samples: &[FibrePoint],
    scalars: &[L0Value],
) -> Result<NormAxiomReport> {
    if samples.len() < 2 {
        return Err(Error::Precondition("at least two samples are required".into()));
    }
    for s in samples {
        if s.atoms() != space.atoms() {
            return Err(Error::Shape("sample atom count differs from the space".into()));
        }
        s.check_shape(&samples[0])?;
    }
    for xi in scalars {
        space.check_value(xi)?;
    }
    let rel = |scale: f64| 1e-12 * (1.0 + scale);
    let mut report = NormAxiomReport::default();

    for (i, x) in samples.iter().enumerate() {
        let nx = random_norm(x);
        for a in 0..space.atoms() {
            report.checks += 1;
            let is_zero = x.block(a).iter().all(|c| *c == 0.0);
            let n = nx.get(a);
            if is_zero && n == 0.0 {
                report.zero_norm_hits += 1;
            }
            if is_zero != (n == 0.0) || n < 0.0 {
                report.violations.push(NormViolation {
                    axiom: NormAxiom::Definiteness,
                    atom: a,
                    samples: vec![i],
                    magnitude: n,
                });
            }
        }
        for (k, xi) in scalars.iter().enumerate() {
            let lhs = random_norm(&x.scale_by(xi)?);
            for a in 0..space.atoms() {
                report.checks += 1;
                let rhs = xi.get(a).abs() * nx.get(a);
                let gap = (lhs.get(a) - rhs).abs();
                if gap > rel(rhs) {
                    report.violations.push(NormViolation {
                        axiom: NormAxiom::Homogeneity,
                        atom: a,
                        samples: vec![i, k],
                        magnitude: gap,
                    });
                }
            }
        }
    }
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let (x, y) = (&samples[i], &samples[j]);
            let lhs = random_norm(&x.add(y)?);
            let (nx, ny) = (random_norm(x), random_norm(y));
            for a in 0..space.atoms() {
                report.checks += 1;
                let rhs = nx.get(a) + ny.get(a);
                let excess = lhs.get(a) - rhs;
                if excess > rel(rhs) {
                    report.violations.push(NormViolation {
                        axiom: NormAxiom::Triangle,
                        atom: a,
                        samples: vec![i, j],
                        magnitude: excess,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt(blocks: &[&[f64]]) -> FibrePoint {
        FibrePoint::from_blocks(blocks.iter().map(|b| b.to_vec()).collect()).unwrap()
    }

    fn ball(radius: f64) -> Region {
        Region::Ball {
            center: vec![0.0, 0.0],
            radius,
        }
    }

    #[test]
    fn norm_examples() {
        assert_eq!(random_norm(&FibrePoint::zero(3, 2)).values(), &[0.0; 3]);
        let x = pt(&[&[3.0, 4.0], &[0.0, 1.0]]);
        assert_eq!(random_norm(&x).values(), &[5.0, 1.0]);
        let xi = L0Value::new(vec![-2.0, 0.5]).unwrap();
        assert_eq!(random_norm(&x.scale_by(&xi).unwrap()).values(), &[10.0, 0.5]);
    }

    #[test]
    fn membership_examples() {
        let g = FibreSet::new(2, vec![ball(1.0)], 3, 1.0, true).unwrap();
        assert!(membership(&g, &g.zero()).unwrap().member);

        let bx = Region::Box {
            lo: vec![-1.0],
            hi: vec![1.0],
        };
        let g = FibreSet::new(1, vec![bx], 2, 1.0, true).unwrap();
        let m = membership(&g, &pt(&[&[0.5], &[1.5]])).unwrap();
        assert!(!m.member);
        assert_eq!(m.outside_atoms, vec![1]);

        let fin = Region::Finite {
            points: vec![vec![-1.0], vec![1.0]],
        };
        let g = FibreSet::new(1, vec![fin], 2, 1.0, false).unwrap();
        assert!(membership(&g, &pt(&[&[1.0], &[-1.0]])).unwrap().member);
        assert!(matches!(
            membership(&g, &FibrePoint::zero(2, 2)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn theta_flag_is_checked() {
        let fin = Region::Finite {
            points: vec![vec![-1.0], vec![1.0]],
        };
        assert!(FibreSet::new(1, vec![fin], 2, 1.0, true).is_err());
    }

    #[test]
    fn projection_examples() {
        let bx = Region::Box {
            lo: vec![-1.0],
            hi: vec![1.0],
        };
        assert_eq!(bx.project(&[3.0]), vec![1.0]);
        assert_eq!(bx.project(&[0.25]), vec![0.25]);
        let p = ball(2.0).project(&[3.0, 4.0]);
        assert!((p[0] - 1.2).abs() < 1e-15 && (p[1] - 1.6).abs() < 1e-15);
        let fin = Region::Finite {
            points: vec![vec![-1.0], vec![1.0]],
        };
        // equidistant: lowest index wins
        assert_eq!(fin.project(&[0.0]), vec![-1.0]);
        assert_eq!(fin.project(&[0.2]), vec![1.0]);
    }

    #[test]
    fn essential_bound_examples() {
        let g = FibreSet::new(2, vec![ball(1.0)], 2, 1.0, true).unwrap();
        assert!(essential_bound_check(&g).bounded);

        let wide = Region::Box {
            lo: vec![-2.0],
            hi: vec![2.0],
        };
        let narrow = Region::Box {
            lo: vec![-0.5],
            hi: vec![0.5],
        };
        let g = FibreSet::new(1, vec![narrow, wide], 2, 1.0, true).unwrap();
        let r = essential_bound_check(&g);
        assert!(!r.bounded);
        assert_eq!(r.violating_atoms, vec![1]);

        let regions = [0.5, 0.9, 1.0]
            .iter()
            .map(|&r| Region::Ball {
                center: vec![0.0],
                radius: r,
            })
            .collect();
        let g = FibreSet::new(1, regions, 3, 1.0, true).unwrap();
        let r = essential_bound_check(&g);
        assert!(r.bounded);
        assert_eq!(r.worst_atom, 2);
        assert_eq!(r.worst_radius, 1.0);
    }

    #[test]
    fn sigma_mix_examples() {
        let g = FibreSet::new(2, vec![ball(1.0)], 2, 1.0, true).unwrap();
        let p = pt(&[&[0.1, 0.2], &[0.3, 0.4]]);
        let q = pt(&[&[-0.5, 0.0], &[0.0, -0.5]]);
        let split = [AtomEvent::singleton(0), AtomEvent::singleton(1)];
        let mixed = sigma_mix_points(&g, &split, &[p.clone(), q.clone()]).unwrap();
        assert_eq!(mixed.block(0), p.block(0));
        assert_eq!(mixed.block(1), q.block(1));
        assert!(membership(&g, &mixed).unwrap().member);

        assert_eq!(sigma_mix_points(&g, &split, &[p.clone(), p.clone()]).unwrap(), p);
        let all = [AtomEvent::new(vec![0, 1]).unwrap()];
        assert_eq!(sigma_mix_points(&g, &all, std::slice::from_ref(&q)).unwrap(), q);

        let outside = pt(&[&[2.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(
            sigma_mix_points(&g, &split, &[p, outside]),
            Err(Error::Membership { .. })
        ));
    }

    #[test]
    fn norm_axioms_hold_for_euclidean_realization() {
        let space = ProbSpace::uniform(3).unwrap();
        let g = FibreSet::new(2, vec![ball(5.0)], 3, 5.0, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut samples: Vec<FibrePoint> = (0..100).map(|_| g.sample(&mut rng)).collect();
        samples.push(g.zero());
        let scalars: Vec<L0Value> = (0..5)
            .map(|_| L0Value::from_fn(3, |_| rng.random_range(-3.0..3.0)))
            .collect();
        let report = check_norm_axioms(&space, &samples, &scalars).unwrap();
        assert!(report.violations.is_empty(), "{:?}", report.violations);
        assert_eq!(report.zero_norm_hits, 3);
        assert!(check_norm_axioms(&space, &samples[..1], &scalars).is_err());
    }

    #[test]
    fn masking_and_norm_commute() {
        let x = pt(&[&[3.0, 4.0], &[1.0, 0.0], &[0.0, -2.0]]);
        let a = AtomEvent::new(vec![0, 2]).unwrap();
        let lhs = random_norm(&x.masked(&a).unwrap());
        let ind = L0Value::indicator(3, &a);
        let n = random_norm(&x);
        let rhs: Vec<f64> = (0..3).map(|i| ind.get(i) * n.get(i)).collect();
        assert_eq!(lhs.values(), rhs.as_slice());
    }

    #[test]
    fn ball_samples_stay_inside() {
        let r = Region::Ball {
            center: vec![0.5, -0.5, 0.0],
            radius: 0.75,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(r.contains(&r.sample(&mut rng)));
        }
    }
}
