//! Seeded random instances for tests, benches and the CLI.

use std::collections::BTreeMap;

use rand::Rng;

use crate::chains::{MarkovChainTree, Mdp, RawAction, RawMdp, RawState, RawTransition};
use crate::constraints::{Constraint, Subset};
use crate::dist::DiscreteDist;
use crate::error::Result;

#[derive(Clone, Copy, Debug)]
pub struct TreeShape {
    pub max_depth: usize,
    pub max_branch: usize,
    pub max_actions: usize,
    pub max_cost: f64,
    pub values: (f64, f64),
    /// Chance that a node above the depth limit is internal.
    pub internal_prob: f64,
}

impl Default for TreeShape {
    fn default() -> Self {
        TreeShape {
            max_depth: 3,
            max_branch: 2,
            max_actions: 1,
            max_cost: 1.0,
            values: (0.0, 5.0),
            internal_prob: 0.7,
        }
    }
}

fn random_probs<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

struct Builder<'a, R: Rng + ?Sized> {
    rng: &'a mut R,
    shape: TreeShape,
    states: BTreeMap<String, RawState>,
    next: usize,
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn node(&mut self, depth: usize) -> String {
        let id = format!("s{}", self.next);
        self.next += 1;
        let internal = depth == 0 && self.shape.max_depth > 0
            || depth < self.shape.max_depth && self.rng.random_bool(self.shape.internal_prob);
        let state = if internal {
            let n_actions = self.rng.random_range(1..=self.shape.max_actions.max(1));
            let mut actions = Vec::with_capacity(n_actions);
            for _ in 0..n_actions {
                let b = self.rng.random_range(1..=self.shape.max_branch.max(1));
                let probs = random_probs(self.rng, b);
                let cost = if self.shape.max_cost > 0.0 {
                    self.rng.random_range(0.0..self.shape.max_cost)
                } else {
                    0.0
                };
                let transitions = probs
                    .into_iter()
                    .map(|p| RawTransition {
                        to: self.node(depth + 1),
                        p,
                    })
                    .collect();
                actions.push(RawAction { cost, transitions });
            }
            RawState {
                actions: Some(actions),
                ..Default::default()
            }
        } else {
            let (lo, hi) = self.shape.values;
            RawState {
                terminal: true,
                value: Some(self.rng.random_range(lo..=hi)),
                actions: None,
            }
        };
        self.states.insert(id.clone(), state);
        id
    }
}

/// A tree-shaped MDP; with `max_actions = 1` it is a Markov chain.
pub fn random_tree_mdp<R: Rng + ?Sized>(rng: &mut R, shape: TreeShape) -> Mdp {
    let mut b = Builder {
        rng,
        shape,
        states: BTreeMap::new(),
        next: 0,
    };
    let root = b.node(0);
    let raw = RawMdp { root, states: b.states };
    Mdp::from_raw(&raw, "").expect("generated MDPs are valid")
}

pub fn random_chain<R: Rng + ?Sized>(rng: &mut R, shape: TreeShape) -> MarkovChainTree {
    let shape = TreeShape {
        max_actions: 1,
        ..shape
    };
    random_tree_mdp(rng, shape)
        .unroll_chain(crate::chains::DEFAULT_DEPTH_CAP)
        .expect("generated chains are shallow")
}

/// `k` distinct atoms drawn from `values`, probabilities at least 0.1 before scaling.
pub fn random_dist<R: Rng + ?Sized>(rng: &mut R, k: usize, values: (f64, f64)) -> DiscreteDist {
    let probs = random_probs(rng, k);
    DiscreteDist::normalize(probs.into_iter().map(|p| (rng.random_range(values.0..=values.1), p)))
        .expect("positive probabilities")
}

/// Atoms on integers `0..=max` with probabilities that are multiples of `1/grid`.
pub fn random_grid_dist<R: Rng + ?Sized>(rng: &mut R, k: usize, max: u32, grid: u32) -> DiscreteDist {
    let k = k.clamp(1, grid as usize);
    // Split `grid` units into k positive parts.
    let mut cuts: Vec<u32> = Vec::new();
    while cuts.len() < k - 1 {
        let c = rng.random_range(1..grid);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    let mut parts = Vec::with_capacity(k);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(grid)) {
        parts.push(c - prev);
        prev = c;
    }
    DiscreteDist::normalize(
        parts
            .into_iter()
            .map(|u| (rng.random_range(0..=max) as f64, u as f64 / grid as f64)),
    )
    .expect("positive probabilities")
}

/// Maximal members of the family `{S subset [n] : pred(S)}` (`pred` downward closed).
pub fn maximal_family(n: usize, pred: impl Fn(Subset) -> bool) -> Vec<Vec<usize>> {
    let all: Vec<Subset> = (0..1u64 << n).map(Subset).filter(|&s| pred(s)).collect();
    all.iter()
        .filter(|&&s| !(0..n).any(|i| !s.contains(i) && pred(s.with(i))))
        .map(|s| s.iter().collect())
        .collect()
}

fn explicit(family: &[Vec<usize>]) -> Result<Constraint> {
    let refs: Vec<&[usize]> = family.iter().map(|v| v.as_slice()).collect();
    Constraint::explicit(&refs)
}

fn is_forest(edges: &[(usize, usize)], s: Subset) -> bool {
    let mut parent: Vec<usize> = (0..8).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in s.iter() {
        let (a, b) = edges[i];
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return false;
        }
        parent[ra] = rb;
    }
    true
}

fn random_partition<R: Rng + ?Sized>(rng: &mut R, n: usize) -> (Vec<usize>, Vec<usize>) {
    let blocks = rng.random_range(1..=n.max(1));
    let of: Vec<usize> = (0..n).map(|_| rng.random_range(0..blocks)).collect();
    let caps: Vec<usize> = (0..blocks).map(|_| rng.random_range(1..=2)).collect();
    (of, caps)
}

fn partition_ok(of: &[usize], caps: &[usize], s: Subset) -> bool {
    let mut used = vec![0; caps.len()];
    for i in s.iter() {
        used[of[i]] += 1;
        if used[of[i]] > caps[of[i]] {
            return false;
        }
    }
    true
}

/// A random uniform, partition or graphic matroid, listed explicitly.
pub fn random_explicit_matroid<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Constraint {
    let family = match rng.random_range(0..3) {
        0 => {
            let k = rng.random_range(1..=n.max(1));
            maximal_family(n, |s| s.len() <= k)
        }
        1 => {
            let (of, caps) = random_partition(rng, n);
            maximal_family(n, |s| partition_ok(&of, &caps, s))
        }
        _ => {
            let vertices = rng.random_range(2..=5usize);
            let edges: Vec<(usize, usize)> = (0..n)
                .map(|_| {
                    let a = rng.random_range(0..vertices);
                    let mut b = rng.random_range(0..vertices);
                    while b == a {
                        b = rng.random_range(0..vertices);
                    }
                    (a, b)
                })
                .collect();
            maximal_family(n, |s| is_forest(&edges, s))
        }
    };
    explicit(&family).expect("generated families are valid")
}

/// Intersection of `k` random partition matroids, declared as a `k`-system.
pub fn random_k_system<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Constraint {
    let parts: Vec<(Vec<usize>, Vec<usize>)> = (0..k).map(|_| random_partition(rng, n)).collect();
    let family = maximal_family(n, |s| parts.iter().all(|(of, caps)| partition_ok(of, caps, s)));
    let refs: Vec<&[usize]> = family.iter().map(|v| v.as_slice()).collect();
    Constraint::k_system(&refs, k).expect("matroid intersections are k-systems")
}

/// `m` random sets, closed downward.
pub fn random_explicit_family<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Constraint {
    let family: Vec<Vec<usize>> = (0..m)
        .map(|_| (0..n).filter(|_| rng.random_bool(0.5)).collect())
        .collect();
    explicit(&family).expect("generated families are valid")
}

pub fn random_knapsack<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Constraint {
    Constraint::Knapsack {
        sizes: (0..n).map(|_| rng.random_range(0.05..=1.0)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_objects_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t = random_chain(&mut rng, TreeShape::default());
            let total: f64 = t.reach_probabilities().iter().map(|x| x.1).sum();
            assert!((total - 1.0).abs() < 1e-9);
            let m = random_explicit_matroid(&mut rng, 5);
            assert!(m.is_matroid().unwrap());
            let d = random_grid_dist(&mut rng, 3, 9, 10);
            assert!(d
                .atoms()
                .iter()
                .all(|&(_, p)| (p * 10.0 - (p * 10.0).round()).abs() < 1e-9));
            random_k_system(&mut rng, 5, 2);
        }
    }
}
