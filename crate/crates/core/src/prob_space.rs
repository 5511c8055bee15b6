//! Finite atomic probability spaces and atom-indexed random variables.
//!
//! Every atom carries strictly positive mass, so "almost surely" collapses to
//! "at every atom" and equality of L⁰ classes collapses to entrywise equality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of the atom weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Default absolute tolerance for entrywise equality of [`L0Value`]s.
pub const L0_EQ_TOL: f64 = 1e-10;

/// A probability space on finitely many atoms, with the power set as σ-algebra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbSpace {
    weights: Vec<f64>,
}

impl ProbSpace {
    /// Builds a space from atom weights, normalizing them when their sum is
    /// within [`WEIGHT_SUM_TOL`] of one.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidSpace("at least one atom is required".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w <= 0.0)
        {
            return Err(Error::InvalidSpace(format!(
                "weight of atom {i} must be strictly positive, got {w}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidSpace(format!("weights sum to {total}")));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(ProbSpace { weights })
    }

    pub fn uniform(atoms: usize) -> Result<Self> {
        if atoms == 0 {
            return Err(Error::InvalidSpace("at least one atom is required".into()));
        }
        Ok(ProbSpace {
            weights: vec![1.0 / atoms as f64; atoms],
        })
    }

    pub fn atoms(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The event containing every atom.
    pub fn full_event(&self) -> AtomEvent {
        AtomEvent {
            members: (0..self.atoms()).collect(),
        }
    }

    pub fn probability(&self, event: &AtomEvent) -> Result<f64> {
        event.check_range(self.atoms())?;
        Ok(event.members.iter().map(|&a| self.weights[a]).sum())
    }

    /// Probability of the atoms where `pred` holds for the value at that atom.
    pub fn probability_where(&self, value: &L0Value, pred: impl Fn(f64) -> bool) -> f64 {
        self.weights
            .iter()
            .zip(&value.values)
            .filter(|(_, v)| pred(**v))
            .map(|(w, _)| w)
            .sum()
    }

    pub fn check_value(&self, value: &L0Value) -> Result<()> {
        if value.len() != self.atoms() {
            return Err(Error::Shape(format!(
                "random variable has {} entries, space has {} atoms",
                value.len(),
                self.atoms()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for ProbSpace {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        ProbSpace::new(weights)
    }
}

impl From<ProbSpace> for Vec<f64> {
    fn from(space: ProbSpace) -> Self {
        space.weights
    }
}

/// A measurable set of atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct AtomEvent {
    members: Vec<usize>,
}

impl AtomEvent {
    /// Creates an event; members are stored sorted. Range is checked against a
    /// space when the event is used.
    pub fn new(mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        if let Some(w) = members.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateAtom(w[0]));
        }
        Ok(AtomEvent { members })
    }

    pub fn empty() -> Self {
        AtomEvent {
            members: Vec::new(),
        }
    }

    pub fn singleton(atom: usize) -> Self {
        AtomEvent {
            members: vec![atom],
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn contains(&self, atom: usize) -> bool {
        self.members.binary_search(&atom).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn check_range(&self, atoms: usize) -> Result<()> {
        match self.members.last() {
            Some(&index) if index >= atoms => Err(Error::InvalidEvent { index, atoms }),
            _ => Ok(()),
        }
    }
}

impl TryFrom<Vec<usize>> for AtomEvent {
    type Error = Error;

    fn try_from(members: Vec<usize>) -> Result<Self> {
        AtomEvent::new(members)
    }
}

impl From<AtomEvent> for Vec<usize> {
    fn from(event: AtomEvent) -> Self {
        event.members
    }
}

/// Checks that `partition` is pairwise disjoint and covers `0..atoms`, and
/// returns for each atom the index of the piece that contains it.
pub fn partition_owner(atoms: usize, partition: &[AtomEvent]) -> Result<Vec<usize>> {
    let mut owner = vec![usize::MAX; atoms];
    for (k, piece) in partition.iter().enumerate() {
        piece
            .check_range(atoms)
            .map_err(|e| Error::Partition(e.to_string()))?;
        for &a in piece.members() {
            if owner[a] != usize::MAX {
                return Err(Error::Partition(format!(
                    "atom {a} belongs to pieces {} and {k}",
                    owner[a]
                )));
            }
            owner[a] = k;
        }
    }
    if let Some(a) = owner.iter().position(|&k| k == usize::MAX) {
        return Err(Error::Partition(format!("atom {a} is not covered")));
    }
    Ok(owner)
}

/// An element of L⁰: one finite real per atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct L0Value {
    values: Vec<f64>,
}

impl L0Value {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("entry {i} is not finite")));
        }
        Ok(L0Value { values })
    }

    /// Builds a value from a per-atom closure. Callers guarantee finiteness.
    pub(crate) fn from_fn(atoms: usize, f: impl FnMut(usize) -> f64) -> Self {
        L0Value {
            values: (0..atoms).map(f).collect(),
        }
    }

    pub fn constant(atoms: usize, c: f64) -> Self {
        L0Value {
            values: vec![c; atoms],
        }
    }

    /// Ī_A as a random variable.
    pub fn indicator(atoms: usize, event: &AtomEvent) -> Self {
        Self::from_fn(atoms, |a| if event.contains(a) { 1.0 } else { 0.0 })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, atom: usize) -> f64 {
        self.values[atom]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn abs(&self) -> Self {
        Self::from_fn(self.len(), |a| self.values[a].abs())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn approx_eq(&self, other: &L0Value, tol: f64) -> bool {
        self.len() == other.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

impl TryFrom<Vec<f64>> for L0Value {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        L0Value::new(values)
    }
}

impl From<L0Value> for Vec<f64> {
    fn from(value: L0Value) -> Self {
        value.values
    }
}

/// Σ_k Ī_{A_k} x_k: at each atom, the value of the piece that owns the atom.
pub fn indicator_mix(space: &ProbSpace, partition: &[AtomEvent], values: &[L0Value]) -> Result<L0Value> {
    if partition.len() != values.len() {
        return Err(Error::Partition(format!(
            "{} pieces but {} values",
            partition.len(),
            values.len()
        )));
    }
    for v in values {
        space.check_value(v)?;
    }
    let owner = partition_owner(space.atoms(), partition)?;
    Ok(L0Value::from_fn(space.atoms(), |a| values[owner[a]].get(a)))
}

/// Outcome of a finite-horizon convergence-in-probability test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbConvergence {
    pub epsilon: f64,
    pub lambda: f64,
    /// P(distance_n < ε) per index.
    pub probabilities: Vec<f64>,
    pub passes: Vec<bool>,
    /// Smallest index from which every later index passes.
    pub cutoff: Option<usize>,
    pub converged: bool,
}

/// Index `n` passes iff P(distances\[n\] < ε) ≥ 1 − λ.
///
/// The comparison allows [`WEIGHT_SUM_TOL`] of slack, the same amount by which
/// the atom weights may miss one.
pub fn converges_in_probability(
    space: &ProbSpace,
    distances: &[L0Value],
    epsilon: f64,
    lambda: f64,
) -> Result<ProbConvergence> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!("lambda must lie in (0,1), got {lambda}")));
    }
    if distances.is_empty() {
        return Err(Error::Domain("empty distance sequence".into()));
    }
    let mut probabilities = Vec::with_capacity(distances.len());
    for (n, dist) in distances.iter().enumerate() {
        space.check_value(dist)?;
        if let Some(a) = dist.values().iter().position(|v| *v < 0.0) {
            return Err(Error::Domain(format!(
                "negative distance {} at index {n}, atom {a}",
                dist.get(a)
            )));
        }
        probabilities.push(space.probability_where(dist, |v| v < epsilon));
    }
    let passes: Vec<bool> = probabilities
        .iter()
        .map(|p| p + WEIGHT_SUM_TOL >= 1.0 - lambda)
        .collect();
    let cutoff = match passes.iter().rposition(|ok| !ok) {
        None => Some(0),
        Some(last_fail) if last_fail + 1 < passes.len() => Some(last_fail + 1),
        Some(_) => None,
    };
    Ok(ProbConvergence {
        epsilon,
        lambda,
        probabilities,
        passes,
        converged: cutoff.is_some(),
        cutoff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(m: &[usize]) -> AtomEvent {
        AtomEvent::new(m.to_vec()).unwrap()
    }

    #[test]
    fn probability_examples() {
        let half = ProbSpace::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(half.probability(&AtomEvent::empty()).unwrap(), 0.0);
        assert_eq!(half.probability(&ev(&[0, 1])).unwrap(), 1.0);
        let s = ProbSpace::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!((s.probability(&ev(&[0, 2])).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn probability_rejects_out_of_range() {
        let s = ProbSpace::uniform(2).unwrap();
        assert_eq!(
            s.probability(&ev(&[0, 5])),
            Err(Error::InvalidEvent { index: 5, atoms: 2 })
        );
    }

    #[test]
    fn space_construction() {
        assert!(ProbSpace::new(vec![]).is_err());
        assert!(ProbSpace::new(vec![0.5, 0.0, 0.5]).is_err());
        let err = ProbSpace::new(vec![0.5, 0.6]).unwrap_err();
        assert_eq!(err.to_string(), "invalid probability space: weights sum to 1.1");
        // within tolerance: accepted and renormalized
        let s = ProbSpace::new(vec![0.5, 0.5 + 5e-13]).unwrap();
        assert!((s.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn events_reject_duplicates() {
        assert_eq!(AtomEvent::new(vec![1, 0, 1]), Err(Error::DuplicateAtom(1)));
    }

    #[test]
    fn indicator_mix_examples() {
        let s = ProbSpace::uniform(2).unwrap();
        let v = L0Value::new(vec![1.5, -2.0]).unwrap();
        let split = [ev(&[0]), ev(&[1])];
        assert_eq!(indicator_mix(&s, &split, &[v.clone(), v.clone()]).unwrap(), v);
        assert_eq!(indicator_mix(&s, &[ev(&[0, 1])], std::slice::from_ref(&v)).unwrap(), v);
        let a = L0Value::new(vec![3.0, 9.0]).unwrap();
        let b = L0Value::new(vec![7.0, 4.0]).unwrap();
        assert_eq!(indicator_mix(&s, &split, &[a, b]).unwrap().values(), &[3.0, 4.0]);
    }

    #[test]
    fn indicator_mix_rejects_non_partitions() {
        let s = ProbSpace::uniform(3).unwrap();
        let v = L0Value::constant(3, 1.0);
        let overlap = [ev(&[0, 1]), ev(&[1, 2])];
        assert!(matches!(
            indicator_mix(&s, &overlap, &[v.clone(), v.clone()]),
            Err(Error::Partition(_))
        ));
        let gap = [ev(&[0]), ev(&[2])];
        assert!(matches!(
            indicator_mix(&s, &gap, &[v.clone(), v.clone()]),
            Err(Error::Partition(_))
        ));
        assert!(matches!(
            indicator_mix(&s, &[ev(&[0, 1, 2])], &[v.clone(), v]),
            Err(Error::Partition(_))
        ));
    }

    #[test]
    fn convergence_all_zero() {
        let s = ProbSpace::uniform(3).unwrap();
        let d = vec![L0Value::constant(3, 0.0); 5];
        let r = converges_in_probability(&s, &d, 0.1, 0.01).unwrap();
        assert_eq!(r.cutoff, Some(0));
        assert!(r.passes.iter().all(|p| *p));
    }

    #[test]
    fn convergence_halving_single_atom() {
        let s = ProbSpace::uniform(1).unwrap();
        let d: Vec<_> = (0..10)
            .map(|n| L0Value::constant(1, 0.5f64.powi(n)))
            .collect();
        // oracle: first n with 2^-n < 0.1
        let expected = (0..).find(|&n| 0.5f64.powi(n) < 0.1).unwrap() as usize;
        let r = converges_in_probability(&s, &d, 0.1, 0.01).unwrap();
        assert_eq!(r.cutoff, Some(expected));
        assert_eq!(expected, 4);
    }

    #[test]
    fn convergence_two_atoms_half_mass() {
        let s = ProbSpace::new(vec![0.5, 0.5]).unwrap();
        let d = vec![L0Value::new(vec![0.0, 1.0]).unwrap(); 4];
        let r = converges_in_probability(&s, &d, 0.5, 0.6).unwrap();
        assert!(r.converged);
        assert_eq!(r.probabilities[0], 0.5);
        let strict = converges_in_probability(&s, &d, 0.5, 0.4).unwrap();
        assert!(!strict.converged);
        assert_eq!(strict.cutoff, None);
    }

    #[test]
    fn convergence_rejects_negative_distances() {
        let s = ProbSpace::uniform(1).unwrap();
        let d = vec![L0Value::constant(1, -0.1)];
        assert!(matches!(
            converges_in_probability(&s, &d, 0.1, 0.5),
            Err(Error::Domain(_))
        ));
    }
}
