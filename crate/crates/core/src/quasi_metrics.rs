//! The quasi-metrics P_f, L_f and U_f built from an operator, evaluated
//! atom by atom from the six distances among x, y, f(x), f(y).

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::operators::RandomOperator;
use crate::prob_space::L0Value;
use crate::rn_module::{dist, require_member, FibrePoint};

/// Computed minima at or below this value take the zero branch of L_f.
pub const ZERO_BRANCH_TOL: f64 = 1e-12;

/// Slack allowed in the comparison and safe-estimate inequalities.
pub const COMPARISON_TOL: f64 = 1e-9;

/// The distances among u, v, f_ω(u), f_ω(v) at one atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FibreDistances {
    pub u_v: f64,
    pub u_fv: f64,
    pub fu_v: f64,
    pub fu_fv: f64,
    pub fu_u: f64,
    pub fv_v: f64,
}

impl FibreDistances {
    pub fn new(f: &RandomOperator, atom: usize, u: &[f64], v: &[f64]) -> Result<Self> {
        let fu = f.apply_fibre(atom, u)?;
        let fv = f.apply_fibre(atom, v)?;
        Ok(Self::from_images(u, v, &fu, &fv))
    }

    pub fn from_images(u: &[f64], v: &[f64], fu: &[f64], fv: &[f64]) -> Self {
        FibreDistances {
            u_v: dist(u, v),
            u_fv: dist(u, fv),
            fu_v: dist(fu, v),
            fu_fv: dist(fu, fv),
            fu_u: dist(fu, u),
            fv_v: dist(fv, v),
        }
    }

    /// min{d(u,v), d(u,f v), d(f u,v), d(f u,f v)}
    pub fn p(&self) -> f64 {
        self.u_v.min(self.u_fv).min(self.fu_v).min(self.fu_fv)
    }

    pub fn takes_zero_branch(&self) -> bool {
        self.p() <= ZERO_BRANCH_TOL
    }

    /// P when P > 0, otherwise d(f u, f v).
    pub fn l(&self) -> f64 {
        if self.takes_zero_branch() {
            self.fu_fv
        } else {
            self.p()
        }
    }

    /// max{d(u,v), d(f u,u), d(f v,v), d(f u,f v)}
    pub fn u(&self) -> f64 {
        self.u_v.max(self.fu_u).max(self.fv_v).max(self.fu_fv)
    }
}

fn per_atom(
    f: &RandomOperator,
    x: &FibrePoint,
    y: &FibrePoint,
    pick: impl Fn(&FibreDistances) -> f64,
) -> Result<L0Value> {
    require_member(f.domain(), x)?;
    require_member(f.domain(), y)?;
    let values = (0..f.atoms())
        .map(|a| FibreDistances::new(f, a, x.block(a), y.block(a)).map(|d| pick(&d)))
        .collect::<Result<Vec<_>>>()?;
    L0Value::new(values)
}

pub fn distances(f: &RandomOperator, x: &FibrePoint, y: &FibrePoint) -> Result<Vec<FibreDistances>> {
    require_member(f.domain(), x)?;
    require_member(f.domain(), y)?;
    (0..f.atoms())
        .map(|a| FibreDistances::new(f, a, x.block(a), y.block(a)))
        .collect()
}

pub fn p_metric(f: &RandomOperator, x: &FibrePoint, y: &FibrePoint) -> Result<L0Value> {
    per_atom(f, x, y, FibreDistances::p)
}

pub fn l_metric(f: &RandomOperator, x: &FibrePoint, y: &FibrePoint) -> Result<L0Value> {
    per_atom(f, x, y, FibreDistances::l)
}

pub fn u_metric(f: &RandomOperator, x: &FibrePoint, y: &FibrePoint) -> Result<L0Value> {
    per_atom(f, x, y, FibreDistances::u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// L_f(x,y) ≤ ‖f(x) − f(y)‖
    LowerBelowImageDistance,
    /// ‖x − y‖ ≤ U_f(x,y)
    DistanceBelowUpper,
    /// P_f(x,y) ≤ U_f(x,y)
    LowerMinBelowUpper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonViolation {
    pub relation: Comparison,
    pub atom: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub checked: usize,
    pub violations: Vec<ComparisonViolation>,
}

impl ComparisonReport {
    pub fn merge(&mut self, other: ComparisonReport) {
        self.checked += other.checked;
        self.violations.extend(other.violations);
    }
}

/// Checks the elementary comparisons between the quasi-metrics at every atom.
pub fn basic_comparisons(f: &RandomOperator, x: &FibrePoint, y: &FibrePoint) -> Result<ComparisonReport> {
    let mut report = ComparisonReport::default();
    for (atom, d) in distances(f, x, y)?.iter().enumerate() {
        let checks = [
            (Comparison::LowerBelowImageDistance, d.l(), d.fu_fv),
            (Comparison::DistanceBelowUpper, d.u_v, d.u()),
            (Comparison::LowerMinBelowUpper, d.p(), d.u()),
        ];
        for (relation, lhs, rhs) in checks {
            report.checked += 1;
            if lhs > rhs + COMPARISON_TOL {
                report.violations.push(ComparisonViolation {
                    relation,
                    atom,
                    lhs,
                    rhs,
                });
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeEstimateViolation {
    pub atom: usize,
    /// ‖f(u) − f(v)‖
    pub lhs: f64,
    /// P_f(u,v) + ‖f(u) − u‖ + ‖f(v) − v‖
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SafeEstimateReport {
    pub checked_atoms: usize,
    /// Atoms where P_f(u,v) = 0, to which the estimate does not apply.
    pub skipped_atoms: usize,
    pub violations: Vec<SafeEstimateViolation>,
}

impl SafeEstimateReport {
    pub fn merge(&mut self, other: SafeEstimateReport) {
        self.checked_atoms += other.checked_atoms;
        self.skipped_atoms += other.skipped_atoms;
        self.violations.extend(other.violations);
    }
}

/// Where P_f(u,v) > 0, checks ‖f(u) − f(v)‖ ≤ P_f(u,v) + ‖f(u) − u‖ + ‖f(v) − v‖.
pub fn safe_estimate_oracle(f: &RandomOperator, u: &FibrePoint, v: &FibrePoint) -> Result<SafeEstimateReport> {
    let mut report = SafeEstimateReport::default();
    for (atom, d) in distances(f, u, v)?.iter().enumerate() {
        if d.takes_zero_branch() {
            report.skipped_atoms += 1;
            continue;
        }
        report.checked_atoms += 1;
        let rhs = d.p() + d.fu_u + d.fv_v;
        if d.fu_fv > rhs + COMPARISON_TOL {
            report.violations.push(SafeEstimateViolation {
                atom,
                lhs: d.fu_fv,
                rhs,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{FibreMap, ScaleParams};
    use crate::rn_module::{FibreSet, Region};

    fn halving() -> RandomOperator {
        let g = FibreSet::new(
            1,
            vec![Region::Ball {
                center: vec![0.0],
                radius: 1.0,
            }],
            1,
            1.0,
            true,
        )
        .unwrap();
        RandomOperator::new(g, vec![FibreMap::Scale(ScaleParams { alpha: 0.5 })]).unwrap()
    }

    fn p1(v: f64) -> FibrePoint {
        FibrePoint::from_blocks(vec![vec![v]]).unwrap()
    }

    #[test]
    fn p_metric_examples() {
        let f = halving();
        assert_eq!(p_metric(&f, &p1(0.3), &p1(0.3)).unwrap().values(), &[0.0]);
        // min{0.8, 0.4, 0.8, 0.4}
        let d = distances(&f, &p1(0.0), &p1(0.8)).unwrap()[0];
        assert_eq!([d.u_v, d.u_fv, d.fu_v, d.fu_fv], [0.8, 0.4, 0.8, 0.4]);
        assert_eq!(p_metric(&f, &p1(0.0), &p1(0.8)).unwrap().values(), &[0.4]);
        assert_eq!(p_metric(&f, &p1(0.8), &p1(0.4)).unwrap().values(), &[0.0]);
    }

    #[test]
    fn l_metric_examples() {
        let f = halving();
        assert_eq!(l_metric(&f, &p1(0.7), &p1(0.7)).unwrap().values(), &[0.0]);
        let l = l_metric(&f, &p1(0.8), &p1(0.4)).unwrap().get(0);
        assert!((l - 0.2).abs() < 1e-15);
        assert_eq!(l_metric(&f, &p1(0.0), &p1(0.8)).unwrap().values(), &[0.4]);
    }

    #[test]
    fn u_metric_examples() {
        let f = halving();
        assert_eq!(u_metric(&f, &p1(0.6), &p1(0.6)).unwrap().values(), &[0.3]);
        // max{2, 0.5, 0.5, 1}
        assert_eq!(u_metric(&f, &p1(1.0), &p1(-1.0)).unwrap().values(), &[2.0]);
    }

    #[test]
    fn orbit_pairs() {
        let f = halving();
        let x0 = p1(0.9);
        let x1 = f.apply(&x0).unwrap();
        let x2 = f.apply(&x1).unwrap();
        let d0 = dist(x0.block(0), x1.block(0));
        let d1 = dist(x1.block(0), x2.block(0));
        assert_eq!(u_metric(&f, &x0, &x1).unwrap().get(0), d0.max(d1));
        assert_eq!(l_metric(&f, &x0, &x1).unwrap().get(0), d1);
    }

    #[test]
    fn comparisons_hold_at_coincident_points() {
        let f = halving();
        let r = basic_comparisons(&f, &p1(0.4), &p1(0.4)).unwrap();
        assert_eq!(r.checked, 3);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn safe_estimate_examples() {
        let f = halving();
        let r = safe_estimate_oracle(&f, &p1(1.0), &p1(-1.0)).unwrap();
        assert_eq!(r.checked_atoms, 1);
        assert!(r.violations.is_empty());
        let r = safe_estimate_oracle(&f, &p1(0.5), &p1(0.5)).unwrap();
        assert_eq!((r.checked_atoms, r.skipped_atoms), (0, 1));
    }
}
