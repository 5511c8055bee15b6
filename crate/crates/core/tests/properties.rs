mod support;

use proptest::prelude::*;
use serde_json::json;

use rrac::boyd_wong::{
    evaluate_bound, local_uniform_convergence_check, majorant, uniform_grid, BoundSequence, GaugeSequence,
    GaugeSpec, Perturbation, Schedule,
};
use rrac::checker::{
    full_hypothesis_audit, kirk_condition_check, kirk_reduce, verify_contraction, STAGE_CONTRACTION,
};
use rrac::operators::{AffineParams, FibreMap, RandomOperator, ScaleParams};
use rrac::prob_space::L0Value;
use rrac::quasi_metrics::FibreDistances;
use rrac::rn_module::{membership, random_norm, FibrePoint, FibreSet, Region};
use rrac::scenario::{parse_scenario, Scenario};
use rrac::solver::{picard_solve, uniqueness_cross_check};

use support::{corpus, euclid};

fn ball(dim: usize, atoms: usize) -> FibreSet {
    FibreSet::new(
        dim,
        vec![Region::Ball {
            center: vec![0.0; dim],
            radius: 1.0,
        }],
        atoms,
        1.0,
        true,
    )
    .unwrap()
}

fn scale_op(alphas: &[f64]) -> RandomOperator {
    RandomOperator::new(
        ball(1, alphas.len()),
        alphas.iter().map(|&alpha| FibreMap::Scale(ScaleParams { alpha })).collect(),
    )
    .unwrap()
}

fn affine_op(entries: &[[f64; 4]]) -> RandomOperator {
    RandomOperator::new(
        ball(2, entries.len()),
        entries
            .iter()
            .map(|m| {
                FibreMap::Affine(AffineParams {
                    matrix: vec![vec![m[0], m[1]], vec![m[2], m[3]]],
                    offset: vec![0.1, -0.1],
                })
            })
            .collect(),
    )
    .unwrap()
}

fn blocks(atoms: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0..10.0f64, dim), atoms)
}

/// Points of the unit ball, by scaling arbitrary blocks into it.
fn ball_point(atoms: usize, dim: usize) -> impl Strategy<Value = FibrePoint> {
    blocks(atoms, dim).prop_map(|bs| {
        let inside = bs
            .into_iter()
            .map(|b| {
                let n = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                let s = if n > 1.0 { 0.999 / n } else { 1.0 };
                b.into_iter().map(|v| v * s).collect()
            })
            .collect();
        FibrePoint::from_blocks(inside).unwrap()
    })
}

fn monotone_gauge() -> impl Strategy<Value = GaugeSpec> {
    prop_oneof![
        (0.0..0.99f64).prop_map(|alpha| GaugeSpec::Linear { alpha }),
        Just(GaugeSpec::Rational),
        ((0.01..0.99f64), (0.1..5.0f64)).prop_map(|(alpha, cap)| GaugeSpec::Capped { alpha, cap }),
    ]
}

fn schedule() -> impl Strategy<Value = Schedule> {
    prop_oneof![
        Just(Schedule::Zero),
        ((0.0..2.0f64), (0.0..1.0f64)).prop_map(|(scale, ratio)| Schedule::Geometric { scale, ratio }),
        ((0.0..2.0f64), (1.0..4.0f64)).prop_map(|(scale, shift)| Schedule::Harmonic { scale, shift }),
    ]
}

fn scale_scenario(alphas: &[f64], beta: f64, seed: u64) -> Scenario {
    let params: Vec<_> = alphas.iter().map(|a| json!({ "alpha": a })).collect();
    let weight = 1.0 / alphas.len() as f64;
    let text = json!({
        "name": "generated",
        "space": { "weights": vec![weight; alphas.len()] },
        "fibre": {
            "dimension": 1,
            "regions": [{ "kind": "ball", "center": [0.0], "radius": 1.0 }],
            "essential_bound": 1.0,
            "theta_in_g": true
        },
        "operator": { "family": "scale", "params": params },
        "gauges": { "psi": { "family": "linear", "alpha": beta } },
        "bounds": {
            "base": "psi",
            "perturbation": "additive",
            "schedules": [{ "kind": "harmonic", "scale": 1.0, "shift": 1.0 }]
        },
        "solve": { "x0": { "constant": [0.7] } },
        "certify": { "seed": seed, "sample_count": 40, "structural_sample_count": 10, "n_max": 8, "grid_density": 128 }
    })
    .to_string();
    parse_scenario(&text).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_norm_satisfies_module_axioms(
        x in blocks(3, 2),
        y in blocks(3, 2),
        xi in prop::collection::vec(-5.0..5.0f64, 3),
    ) {
        let x = FibrePoint::from_blocks(x).unwrap();
        let y = FibrePoint::from_blocks(y).unwrap();
        let xi = L0Value::new(xi).unwrap();
        let nx = random_norm(&x);
        let ny = random_norm(&y);
        let sum = random_norm(&x.add(&y).unwrap());
        let scaled = random_norm(&x.scale_by(&xi).unwrap());
        for a in 0..3 {
            prop_assert!(sum.get(a) <= nx.get(a) + ny.get(a) + 1e-12);
            prop_assert!((scaled.get(a) - xi.get(a).abs() * nx.get(a)).abs() <= 1e-12 * (1.0 + nx.get(a)));
            prop_assert_eq!(nx.get(a) == 0.0, x.block(a).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn majorant_equals_gauge_when_monotone(psi in monotone_gauge(), end in 0.1..10.0f64) {
        for t in uniform_grid(end, 16) {
            prop_assert_eq!(majorant(&psi, t, 64).unwrap(), psi.eval(t));
        }
    }

    #[test]
    fn bound_is_nondecreasing_in_t(
        psi in monotone_gauge(),
        s in schedule(),
        multiplicative in any::<bool>(),
        n in 0usize..50,
    ) {
        let p = if multiplicative { Perturbation::Multiplicative } else { Perturbation::Additive };
        let b = BoundSequence::new(psi, p, vec![s], 0).unwrap();
        let grid = uniform_grid(5.0, 200);
        for w in grid.windows(2) {
            prop_assert!(evaluate_bound(&b, n, 0, w[0]) <= evaluate_bound(&b, n, 0, w[1]) + 1e-12);
        }
    }

    #[test]
    fn certified_index_shrinks_as_epsilon_grows(
        psi in monotone_gauge(),
        s in schedule(),
        e1 in 0.001..1.0f64,
        e2 in 0.001..1.0f64,
    ) {
        let (small, large) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let b = BoundSequence::new(psi, Perturbation::Additive, vec![s], 0).unwrap();
        let r = local_uniform_convergence_check(&b, 1, 2.0, 2000, &[small, large], 64).unwrap();
        match (r.index_for(small), r.index_for(large)) {
            (Some(ns), Some(nl)) => prop_assert!(nl <= ns),
            (None, _) => {}
            (Some(_), None) => prop_assert!(false, "larger ε uncertified"),
        }
    }

    #[test]
    fn iterates_compose_and_act_blockwise(
        alphas in prop::collection::vec(0.0..1.0f64, 1..5),
        seed_block in -1.0..1.0f64,
        m in 0usize..8,
        n in 0usize..8,
    ) {
        let f = scale_op(&alphas);
        let x = FibrePoint::constant(alphas.len(), &[seed_block]);
        let whole = f.iterate(&x, m + n).unwrap();
        prop_assert_eq!(&whole, &f.iterate(&f.iterate(&x, m).unwrap(), n).unwrap());
        for a in 0..alphas.len() {
            let fibre = f.iterate_fibre(a, &[seed_block], m + n).unwrap();
            prop_assert_eq!(whole.block(a), fibre.as_slice());
        }
    }

    #[test]
    fn affine_images_stay_in_the_domain(
        entries in prop::collection::vec(prop::array::uniform4(-2.0..2.0f64), 1..4),
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let f = affine_op(&entries);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = f.domain().sample(&mut rng);
        let fx = f.apply(&x).unwrap();
        prop_assert!(membership(f.domain(), &fx).unwrap().member);
    }

    #[test]
    fn quasi_metric_comparisons_hold(
        entries in prop::collection::vec(prop::array::uniform4(-1.0..1.0f64), 2),
        x in ball_point(2, 2),
        y in ball_point(2, 2),
    ) {
        let f = affine_op(&entries);
        for a in 0..2 {
            let d = FibreDistances::new(&f, a, x.block(a), y.block(a)).unwrap();
            prop_assert!(d.l() <= d.fu_fv + 1e-9);
            prop_assert!(d.u_v <= d.u() + 1e-9);
            prop_assert!(d.p() <= d.u() + 1e-9);
            prop_assert!((d.u_v - euclid(x.block(a), y.block(a))).abs() <= 1e-12);
        }
    }

    #[test]
    fn solves_are_deterministic_and_atomwise(
        alphas in prop::collection::vec(0.0..0.95f64, 2..5),
        start in -1.0..1.0f64,
    ) {
        let f = scale_op(&alphas);
        let x0 = FibrePoint::constant(alphas.len(), &[start]);
        let first = picard_solve(&f, &x0, 1e-8, 10_000, 8).unwrap();
        let second = picard_solve(&f, &x0, 1e-8, 10_000, 8).unwrap();
        prop_assert_eq!(&first, &second);

        let mut reversed = alphas.clone();
        reversed.reverse();
        let g = scale_op(&reversed);
        let mirrored = picard_solve(&g, &x0, 1e-8, 10_000, 8).unwrap();
        prop_assert_eq!(first.iterations, mirrored.iterations);
        let k = alphas.len();
        for a in 0..k {
            prop_assert_eq!(first.z.block(a), mirrored.z.block(k - 1 - a));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kirk_condition_implies_reduced_contraction(
        alpha in 0.0..0.95f64,
        beta in 0.0..0.99f64,
        seed in any::<u64>(),
    ) {
        let f = scale_op(&[alpha, alpha]);
        let seq = GaugeSequence::new(
            GaugeSpec::Linear { alpha: beta },
            Perturbation::Additive,
            Schedule::Harmonic { scale: 1.0, shift: 0.0 },
        )
        .unwrap();
        let n_max = 10;
        let kirk = kirk_condition_check(&f, &seq, 60, n_max + 1, seed).unwrap();
        prop_assume!(kirk.verdict.is_pass());
        let reduced = kirk_reduce(&seq, &uniform_grid(2.0, 128), n_max).unwrap();
        let c = verify_contraction(&f, &reduced, 60, n_max, seed).unwrap();
        prop_assert!(c.verdict.is_pass(), "{:?}", c.violations);
    }

    #[test]
    // each limit is within tol/(1 − α) of the fixed point, so 10·tol
    // agreement is guaranteed only for α < 0.8
    fn audit_pass_implies_unique_convergent_solve(
        alphas in prop::collection::vec(0.0..0.8f64, 1..4),
        slack in 0.0..0.19f64,
        seed in any::<u64>(),
    ) {
        let beta = alphas.iter().copied().fold(0.0, f64::max) + slack;
        let s = scale_scenario(&alphas, beta, seed);
        let audit = full_hypothesis_audit(&s).unwrap();
        prop_assert!(audit.stage(STAGE_CONTRACTION).unwrap().verdict.is_pass());
        prop_assume!(!audit.has_failed());
        let solved = picard_solve(&s.operator, &s.x0, 1e-8, 10_000, 16).unwrap();
        prop_assert!(solved.converged);
        let u = uniqueness_cross_check(&s.operator, &s.starts, 1e-8, 10_000, 16).unwrap();
        prop_assert!(u.verdict.is_pass());
    }
}

#[test]
fn corpus_scenarios_survive_a_round_trip() {
    for (_, s) in corpus() {
        let again = parse_scenario(&s.to_json()).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.hash, s.hash);
    }
}
