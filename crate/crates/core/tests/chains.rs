use std::collections::BTreeMap;

use cics_core::chains::{Commitment, Mdp, RawAction, RawMdp, RawState, RawTransition, StateDef, DEFAULT_DEPTH_CAP};
use cics_core::generate::{random_chain, random_tree_mdp, TreeShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A chain-shaped DAG on `n` states where state `i` only moves to higher ids,
/// so the same state can be reached along several histories.
fn random_dag(rng: &mut ChaCha8Rng, n: usize) -> RawMdp {
    let mut states = BTreeMap::new();
    for i in 0..n {
        let id = format!("s{i}");
        let terminal = i + 1 == n || (i > 0 && rng.random_bool(0.3));
        let st = if terminal {
            RawState {
                terminal: true,
                value: Some(rng.random_range(-2.0..5.0)),
                actions: None,
            }
        } else {
            let k = rng.random_range(1..=(n - i - 1).min(3));
            let mut targets: Vec<usize> = Vec::new();
            while targets.len() < k {
                let t = rng.random_range(i + 1..n);
                if !targets.contains(&t) {
                    targets.push(t);
                }
            }
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = w.iter().sum();
            RawState {
                terminal: false,
                value: None,
                actions: Some(vec![RawAction {
                    cost: rng.random_range(0.0..1.0),
                    transitions: targets
                        .iter()
                        .zip(&w)
                        .map(|(&t, &p)| RawTransition {
                            to: format!("s{t}"),
                            p: p / total,
                        })
                        .collect(),
                }]),
            }
        };
        states.insert(id, st);
    }
    RawMdp {
        root: "s0".into(),
        states,
    }
}

/// `(E[value], E[cost])` of walking the MDP with action `pick(s)` at each state.
fn walk_moments(m: &Mdp, s: usize, pick: &dyn Fn(usize) -> usize) -> (f64, f64) {
    match m.state(s) {
        StateDef::Terminal { value } => (*value, 0.0),
        StateDef::Internal { actions } => {
            let a = &actions[pick(s)];
            let mut v = 0.0;
            let mut c = a.cost;
            for &(to, p) in &a.transitions {
                let (cv, cc) = walk_moments(m, to, pick);
                v += p * cv;
                c += p * cc;
            }
            (v, c)
        }
    }
}

#[test]
fn reach_probabilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let shape = TreeShape {
        max_depth: 5,
        max_branch: 3,
        ..TreeShape::default()
    };
    for _ in 0..100 {
        let t = random_chain(&mut rng, shape);
        let total: f64 = t.reach_probabilities().iter().map(|x| x.1).sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }
}

#[test]
fn unroll_preserves_walk_moments_on_dags() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = rng.random_range(2..=8);
        let raw = random_dag(&mut rng, n);
        let m = Mdp::from_raw(&raw, "").unwrap();
        let (v, c) = walk_moments(&m, m.root(), &|_| 0);
        let (tv, tc) = m.unroll_chain(DEFAULT_DEPTH_CAP).unwrap().expected_full_walk();
        assert!((v - tv).abs() < 1e-12 && (c - tc).abs() < 1e-12, "{v} {c} vs {tv} {tc}");
    }
}

#[test]
fn deterministic_commitment_matches_direct_walk() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let shape = TreeShape {
        max_actions: 3,
        ..TreeShape::default()
    };
    for _ in 0..50 {
        let m = random_tree_mdp(&mut rng, shape);
        let internal: Vec<usize> = m.internal_states().collect();
        let choice: BTreeMap<usize, usize> = internal
            .iter()
            .map(|&s| (s, rng.random_range(0..m.actions(s).len())))
            .collect();
        let per_state = internal
            .iter()
            .map(|&s| {
                let mut d = vec![0.0; m.actions(s).len()];
                d[choice[&s]] = 1.0;
                (m.id(s).to_string(), d)
            })
            .collect();
        let pi = Commitment { per_state };
        assert!(pi.is_deterministic());
        let committed = m.apply_commitment(&pi).unwrap();
        assert!(committed.is_chain());
        let (v, c) = walk_moments(&m, m.root(), &|s| choice[&s]);
        let (tv, tc) = committed.unroll_chain(DEFAULT_DEPTH_CAP).unwrap().expected_full_walk();
        assert!((v - tv).abs() < 1e-12 && (c - tc).abs() < 1e-12);
    }
}

#[test]
fn committing_a_chain_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let t = random_chain(&mut rng, TreeShape::default());
        let m = t.to_mdp();
        let per_state = m.internal_states().map(|s| (m.id(s).to_string(), vec![1.0])).collect();
        let back = m.apply_commitment(&Commitment { per_state }).unwrap();
        assert_eq!(back, m);
    }
}

#[test]
fn stacked_boxes_exact_vs_sampled() {
    // Three boxes in series: each costs 0.3 and stops with some value or
    // moves on to the next box.
    let json = r#"{"root":"b1","states":{
        "b1":{"actions":[{"cost":0.3,"transitions":[{"to":"v1","p":0.4},{"to":"b2","p":0.6}]}]},
        "b2":{"actions":[{"cost":0.3,"transitions":[{"to":"v2","p":0.5},{"to":"b3","p":0.5}]}]},
        "b3":{"actions":[{"cost":0.3,"transitions":[{"to":"v3","p":0.2},{"to":"v4","p":0.8}]}]},
        "v1":{"terminal":true,"value":4},"v2":{"terminal":true,"value":2},
        "v3":{"terminal":true,"value":7},"v4":{"terminal":true,"value":0}}}"#;
    let raw: RawMdp = serde_json::from_str(json).unwrap();
    let t = Mdp::from_raw(&raw, "")
        .unwrap()
        .unroll_chain(DEFAULT_DEPTH_CAP)
        .unwrap();
    let (v, c) = t.expected_full_walk();
    // 0.4*4 + 0.3*2 + 0.3*0.2*7; costs 0.3 + 0.6*0.3 + 0.3*0.3.
    assert!((v - 2.62).abs() < 1e-12);
    assert!((c - 0.57).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let trials = 100_000;
    let (mut sv, mut sc) = (0.0, 0.0);
    for _ in 0..trials {
        let (leaf, cost) = t.sample_walk(&mut rng);
        sv += t.value(leaf).unwrap();
        sc += cost;
    }
    assert!((sv / trials as f64 - v).abs() < 0.02);
    assert!((sc / trials as f64 - c).abs() < 0.02);
}
