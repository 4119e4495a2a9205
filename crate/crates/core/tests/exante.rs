mod common;

use cics_core::amortize::surrogate_values;
use cics_core::constraints::Constraint;
use cics_core::exante::{ex_ante_opt_cics, ex_ante_value_bcs, LocalCurve, Objective};
use cics_core::generate::{random_chain, random_tree_mdp, TreeShape};
use cics_core::par::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn chain_curve_is_the_surrogate_revenue_curve() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let shape = TreeShape {
        max_depth: 4,
        max_branch: 3,
        max_cost: 1.5,
        ..TreeShape::default()
    };
    for _ in 0..100 {
        let t = random_chain(&mut rng, shape);
        let local = LocalCurve::from_chain(&t).unwrap();
        let want = surrogate_values(&t).unwrap().dist.revenue_curve().clip_monotone_hull();
        for k in 0..=200 {
            let q = k as f64 / 200.0;
            let (a, b) = (local.curve().eval(q).unwrap(), want.eval(q).unwrap());
            assert!((a - b).abs() <= 1e-7, "q = {q}: {a} vs {b}");
        }
    }
}

#[test]
fn local_curve_is_the_policy_envelope() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let shape = TreeShape {
        max_depth: 2,
        max_actions: 2,
        ..TreeShape::default()
    };
    for _ in 0..40 {
        let m = random_tree_mdp(&mut rng, shape);
        let local = LocalCurve::new(&m).unwrap();
        let tree = &local.tree;
        if common::local_policy_count(tree, 0) > 4096 {
            continue;
        }
        let pts = common::local_policy_points(tree, 0);
        for k in 0..=20 {
            let q = k as f64 / 20.0;
            let want = common::monotone_envelope(&pts, q);
            assert!((local.curve().eval(q).unwrap() - want).abs() <= 1e-9);
        }
    }
}

#[test]
fn committed_chains_are_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let shape = TreeShape {
        max_depth: 3,
        max_actions: 2,
        ..TreeShape::default()
    };
    for _ in 0..30 {
        let n = rng.random_range(1..=4);
        let mdps: Vec<_> = (0..n).map(|_| random_tree_mdp(&mut rng, shape)).collect();
        let c = Constraint::UniformMatroid {
            k: rng.random_range(1..=n),
        };
        let first = ex_ante_opt_cics(&c, &mdps, Objective::Max, Exec::Sequential).unwrap();
        let chains: Vec<_> = (0..n).map(|i| first.committed_chain(i).unwrap().to_mdp()).collect();
        let second = ex_ante_opt_cics(&c, &chains, Objective::Max, Exec::Sequential).unwrap();
        assert!(
            (first.value - second.value).abs() <= 1e-9,
            "{} vs {}",
            first.value,
            second.value
        );

        // On the committed chains the relaxation is the selection relaxation over surrogates.
        let dists: Vec<_> = chains
            .iter()
            .map(|m| surrogate_values(&m.unroll_chain(64).unwrap()).unwrap().dist)
            .collect();
        let bcs = ex_ante_value_bcs(&c, &dists).unwrap().value;
        assert!((bcs - second.value).abs() <= 1e-9);
    }
}

#[test]
fn parallel_matches_sequential() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let shape = TreeShape {
        max_actions: 2,
        ..TreeShape::default()
    };
    let mdps: Vec<_> = (0..5).map(|_| random_tree_mdp(&mut rng, shape)).collect();
    let c = Constraint::UniformMatroid { k: 2 };
    let a = ex_ante_opt_cics(&c, &mdps, Objective::Max, Exec::Sequential).unwrap();
    let b = ex_ante_opt_cics(&c, &mdps, Objective::Max, Exec::Parallel).unwrap();
    assert_eq!(a.value, b.value);
    assert_eq!(a.q, b.q);
}
