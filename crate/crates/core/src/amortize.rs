//! Surrogate values for Markov chains.
//!
//! Each internal node gets a fair index `tau(s)`, the smallest retirement
//! reward `y` at which quitting is optimal (`V_y(s) = y`). A leaf's surrogate
//! is its value capped by the smallest index on its root path, and `g(s)` is
//! the largest surrogate reachable below `s`.

use serde::Serialize;

use crate::chains::{ChainKind, ChainNode, MarkovChainTree};
use crate::dist::DiscreteDist;
use crate::error::{Error, Result};
use crate::plc::{PiecewiseLinear, Shape};

pub const DEFAULT_EPSILON: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurrogateProfile {
    /// Fair index per node (`None` for leaves).
    pub tau: Vec<Option<f64>>,
    /// Surrogate value per node (`None` for internal nodes).
    pub w: Vec<Option<f64>>,
    /// Largest surrogate reachable from each node.
    pub g: Vec<f64>,
    /// Reach probability of each node.
    pub p: Vec<f64>,
    pub dist: DiscreteDist,
}

impl SurrogateProfile {
    /// `(leaf, p(t), w(t))` in node order.
    pub fn leaf_table(&self) -> Vec<(usize, f64, f64)> {
        self.w
            .iter()
            .enumerate()
            .filter_map(|(n, w)| w.map(|w| (n, self.p[n], w)))
            .collect()
    }
}

/// Shared `y` range of all optimality curves of a tree.
///
/// The left end sits below every possible index (minimum value minus the
/// largest path cost), the right end above every terminal value.
pub fn curve_domain(t: &MarkovChainTree) -> (f64, f64) {
    let mut path_cost = vec![0.0; t.len()];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for n in 0..t.len() {
        if let Some(p) = t.nodes[n].parent {
            path_cost[n] = path_cost[p] + t.cost(p);
        }
        if let Some(v) = t.value(n) {
            lo = lo.min(v);
            hi = hi.max(v);
            worst = worst.max(path_cost[n]);
        }
    }
    (lo - worst - 1.0, hi + 1.0)
}

/// Optimality curves `y -> V_y(s)` and fair indices for every node.
pub fn optimality_curves(t: &MarkovChainTree) -> Result<(Vec<PiecewiseLinear>, Vec<Option<f64>>)> {
    let (lo, hi) = curve_domain(t);
    let mut curves: Vec<Option<PiecewiseLinear>> = vec![None; t.len()];
    let mut tau = vec![None; t.len()];
    for n in (0..t.len()).rev() {
        let curve = match &t.nodes[n].kind {
            ChainKind::Leaf { value } => leaf_curve(*value, lo, hi),
            ChainKind::Internal { cost, children } => {
                let kids: Vec<(f64, &PiecewiseLinear)> = children
                    .iter()
                    .map(|&(p, c)| (p, curves[c].as_ref().expect("children follow parents")))
                    .collect();
                let cont = PiecewiseLinear::weighted_sum(&kids, -cost, Shape::Convex);
                if let Some(&s) = cont.slopes().iter().find(|&&s| !(-1e-9..=1.0 + 1e-9).contains(&s)) {
                    return Err(Error::SlopeBound(s));
                }
                let r = indifference_point(&cont, &kids, *cost)?;
                tau[n] = Some(r);
                let mut bp: Vec<(f64, f64)> = cont.breakpoints().iter().copied().take_while(|p| p.0 < r).collect();
                bp.push((r, r));
                if r < hi {
                    bp.push((hi, hi));
                }
                PiecewiseLinear::build(bp, Shape::Convex)
            }
        };
        curves[n] = Some(curve);
    }
    Ok((curves.into_iter().map(|c| c.expect("filled")).collect(), tau))
}

fn leaf_curve(v: f64, lo: f64, hi: f64) -> PiecewiseLinear {
    let mut bp = Vec::with_capacity(3);
    if lo < v {
        bp.push((lo, v));
    }
    bp.push((v, v));
    if v < hi {
        bp.push((hi, hi));
    }
    PiecewiseLinear::build(bp, Shape::Convex)
}

/// `(alpha, beta)` with `curve(y) = alpha + beta * y` on `[a, b]`.
///
/// Flat and identity pieces come back exact.
fn local_line(curve: &PiecewiseLinear, a: f64, b: f64) -> (f64, f64) {
    let bp = curve.breakpoints();
    if bp.len() == 1 {
        return (bp[0].1, 0.0);
    }
    let mid = 0.5 * (a + b);
    let i = bp.partition_point(|p| p.0 <= mid).clamp(1, bp.len() - 1);
    let (p, q) = (bp[i - 1], bp[i]);
    if p.1 == q.1 {
        return (p.1, 0.0);
    }
    if p.0 == p.1 && q.0 == q.1 {
        return (0.0, 1.0);
    }
    let beta = (q.1 - p.1) / (q.0 - p.0);
    (p.1 - beta * p.0, beta)
}

/// Smallest `y` with `cont(y) <= y`, where `cont = -cost + sum p_j V_j`.
fn indifference_point(cont: &PiecewiseLinear, kids: &[(f64, &PiecewiseLinear)], cost: f64) -> Result<f64> {
    let bp = cont.breakpoints();
    let gap = |p: (f64, f64)| p.1 - p.0;
    let tol = |p: (f64, f64)| 1e-12 * 1f64.max(p.0.abs()).max(p.1.abs());
    let k = match bp.iter().position(|&p| gap(p) <= tol(p)) {
        Some(k) => k,
        None => return cont.root_of_curve_minus_identity(),
    };
    if gap(bp[k]) >= -tol(bp[k]) || k == 0 {
        return if k == 0 {
            cont.root_of_curve_minus_identity()
        } else {
            Ok(bp[k].0)
        };
    }
    let (a, b) = (bp[k - 1].0, bp[k].0);
    // Solve -cost + sum p_j (alpha_j + beta_j y) = y child by child, so that
    // a single flat child with value v yields exactly v - cost / p.
    let lines: Vec<(f64, f64, f64)> = kids
        .iter()
        .map(|&(p, c)| {
            let (alpha, beta) = local_line(c, a, b);
            (p, alpha, beta)
        })
        .collect();
    let denom: f64 = lines.iter().filter(|l| l.2 != 1.0).map(|l| l.0 * (1.0 - l.2)).sum();
    if !(denom > 0.0) {
        return cont.root_of_curve_minus_identity();
    }
    let mut y = 0.0;
    let mut rest = 0.0;
    for &(p, alpha, beta) in &lines {
        if beta == 1.0 {
            rest += p * alpha;
        } else {
            y += (p * (1.0 - beta) / denom) * (alpha / (1.0 - beta));
        }
    }
    y += (rest - cost) / denom;
    Ok(y.clamp(a, b))
}

/// Surrogate values, indices, reach probabilities and the surrogate distribution.
pub fn surrogate_values(t: &MarkovChainTree) -> Result<SurrogateProfile> {
    let (_, tau) = optimality_curves(t)?;
    let p = t.reach();
    let n = t.len();
    // Running minimum of ancestor indices.
    let mut cap = vec![f64::INFINITY; n];
    let mut w = vec![None; n];
    for i in 0..n {
        let inherited = t.nodes[i].parent.map_or(f64::INFINITY, |par| cap[par]);
        match t.nodes[i].kind {
            ChainKind::Internal { .. } => {
                cap[i] = inherited.min(tau[i].expect("internal nodes have an index"));
            }
            ChainKind::Leaf { value } => {
                cap[i] = inherited;
                w[i] = Some(value.min(inherited));
            }
        }
    }
    let mut g = vec![f64::NEG_INFINITY; n];
    for i in (0..n).rev() {
        if let Some(wi) = w[i] {
            g[i] = wi;
        }
        if let Some(par) = t.nodes[i].parent {
            g[par] = g[par].max(g[i]);
        }
    }
    let dist = surrogate_distribution_raw(&w, &p)?;
    Ok(SurrogateProfile { tau, w, g, p, dist })
}

fn surrogate_distribution_raw(w: &[Option<f64>], p: &[f64]) -> Result<DiscreteDist> {
    DiscreteDist::normalize(w.iter().zip(p).filter_map(|(w, &p)| w.map(|w| (w, p))))
}

/// `W`: value `w(t)` with probability `p(t)`.
pub fn surrogate_distribution(profile: &SurrogateProfile) -> Result<DiscreteDist> {
    surrogate_distribution_raw(&profile.w, &profile.p)
}

/// Fair index of node `n` (`None` for leaves).
pub fn fair_index(t: &MarkovChainTree, n: usize) -> Result<Option<f64>> {
    Ok(optimality_curves(t)?.1[n])
}

/// A Markov chain whose surrogate distribution is exactly `d`.
///
/// With atoms `w_1 < ... < w_k` and `q_i = p_i / sum_{j<=i} p_j`, state `s_i`
/// pays about `eps` and stops at `t_i` (value `w_i + eps/q_i`) with
/// probability `q_i`, otherwise moves to `s_{i-1}`; `s_1` is the leaf `w_1`.
/// Each step cost is moved by at most a few ulps of `eps` so that
/// `w_i + cost/q_i` is representable with `w_i` recoverable exactly.
pub fn chain_from_distribution(d: &DiscreteDist, eps: f64) -> Result<MarkovChainTree> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("/eps", format!("epsilon must be positive, got {eps}")));
    }
    let mut asc: Vec<(f64, f64)> = d.atoms().to_vec();
    asc.reverse();
    let k = asc.len();
    let mut prefix = Vec::with_capacity(k);
    let mut acc = 0.0;
    for &(_, p) in &asc {
        acc += p;
        prefix.push(acc);
    }
    let mut nodes = Vec::with_capacity(2 * k);
    let mut parent = None;
    for i in (1..k).rev() {
        let (w, p) = asc[i];
        let q = p / prefix[i];
        let (cost, v) = exact_step(w, q, eps);
        let me = nodes.len();
        nodes.push(ChainNode {
            state: format!("s{}", i + 1),
            path: format!("s{}", i + 1),
            parent,
            kind: ChainKind::Internal {
                cost,
                children: vec![(q, me + 1), (1.0 - q, me + 2)],
            },
        });
        nodes.push(ChainNode {
            state: format!("t{}", i + 1),
            path: format!("t{}", i + 1),
            parent: Some(me),
            kind: ChainKind::Leaf { value: v },
        });
        parent = Some(me);
    }
    nodes.push(ChainNode {
        state: "t1".into(),
        path: "t1".into(),
        parent,
        kind: ChainKind::Leaf { value: asc[0].0 },
    });
    Ok(MarkovChainTree { nodes })
}

fn exact_step(w: f64, q: f64, eps: f64) -> (f64, f64) {
    let mut lo = eps;
    let mut hi = eps;
    for step in 0..256 {
        let c = if step % 2 == 0 { hi } else { lo };
        let d = c / q;
        let v = w + d;
        if v - d == w {
            return (c, v);
        }
        if step % 2 == 0 {
            hi = hi.next_up();
        } else {
            lo = lo.next_down();
        }
    }
    (eps, w + eps / q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{Mdp, RawMdp};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn tree(json: &str) -> MarkovChainTree {
        let raw: RawMdp = serde_json::from_str(json).unwrap();
        Mdp::from_raw(&raw, "").unwrap().unroll_chain(64).unwrap()
    }

    fn boxed(c: f64, hi: f64, lo: f64) -> MarkovChainTree {
        tree(&format!(
            r#"{{"root":"s","states":{{"s":{{"actions":[{{"cost":{c},"transitions":[{{"to":"a","p":0.5}},{{"to":"b","p":0.5}}]}}]}},
            "a":{{"terminal":true,"value":{hi}}},"b":{{"terminal":true,"value":{lo}}}}}}}"#
        ))
    }

    /// Bisection on E[(X - y)^+] = c for a two-point box.
    fn bisect_index(c: f64, xs: &[f64]) -> f64 {
        let f = |y: f64| xs.iter().map(|x| (x - y).max(0.0)).sum::<f64>() / xs.len() as f64 - c;
        let (mut a, mut b) = (-1e3, 1e3);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) > 0.0 {
                a = m
            } else {
                b = m
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn curve_examples() {
        let leaf = MarkovChainTree::leaf(2.0);
        let (c, _) = optimality_curves(&leaf).unwrap();
        for y in [-0.5, 2.0, 2.5] {
            assert_eq!(c[0].eval_extended(y), f64::max(2.0, y));
        }
        let (c, tau) = optimality_curves(&boxed(0.5, 2.0, 0.0)).unwrap();
        for (y, want) in [(0.0, 0.5), (1.0, 1.0), (3.0, 3.0)] {
            assert_abs_diff_eq!(c[0].eval(y).unwrap(), want, epsilon = 1e-12);
        }
        assert_eq!(tau[0], Some(1.0));

        let z = tree(
            r#"{"root":"s","states":{"s":{"actions":[{"cost":0,"transitions":[{"to":"t","p":1}]}]},
            "t":{"terminal":true,"value":1.5}}}"#,
        );
        let (c, _) = optimality_curves(&z).unwrap();
        for y in [0.0, 1.5, 2.0] {
            assert_abs_diff_eq!(c[0].eval_extended(y), f64::max(1.5, y), epsilon = 1e-12);
        }
    }

    #[test]
    fn index_examples() {
        assert_abs_diff_eq!(
            fair_index(&boxed(0.5, 2.0, 0.0), 0).unwrap().unwrap(),
            bisect_index(0.5, &[2.0, 0.0]),
            epsilon = 1e-9
        );
        assert_eq!(fair_index(&boxed(0.0, 2.0, 0.0), 0).unwrap(), Some(2.0));
        let t = fair_index(&boxed(10.0, 2.0, 0.0), 0).unwrap().unwrap();
        assert_abs_diff_eq!(t, -9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t, bisect_index(10.0, &[2.0, 0.0]), epsilon = 1e-9);
    }

    #[test]
    fn weitzman_surrogates() {
        let t = boxed(0.5, 2.0, 0.0);
        let s = surrogate_values(&t).unwrap();
        let table = s.leaf_table();
        let ws: Vec<f64> = table.iter().map(|x| x.2).collect();
        assert_eq!(ws, vec![1.0, 0.0]);
        assert_eq!(s.g[0], 1.0);
        assert_eq!(s.dist.atoms(), &[(1.0, 0.5), (0.0, 0.5)]);
        let (ev, ec) = t.expected_full_walk();
        let sum: f64 = table.iter().map(|x| x.1 * x.2).sum();
        assert_abs_diff_eq!(sum, ev - ec, epsilon = 1e-12);
        assert_eq!(surrogate_distribution(&s).unwrap(), s.dist);
    }

    #[test]
    fn zero_cost_single_level_keeps_values() {
        let t = tree(
            r#"{"root":"s","states":{"s":{"actions":[{"cost":0,"transitions":[{"to":"a","p":0.25},{"to":"b","p":0.75}]}]},
            "a":{"terminal":true,"value":3},"b":{"terminal":true,"value":-1}}}"#,
        );
        let s = surrogate_values(&t).unwrap();
        let ws: Vec<f64> = s.leaf_table().iter().map(|x| x.2).collect();
        assert_eq!(ws, vec![3.0, -1.0]);
    }

    #[test]
    fn chain_construction_example() {
        let d = DiscreteDist::normalize([(1.0, 0.5), (3.0, 0.5)]).unwrap();
        let t = chain_from_distribution(&d, 0.01).unwrap();
        assert_abs_diff_eq!(t.cost(0), 0.01, epsilon = 1e-15);
        let kids = t.children(0);
        assert_eq!(kids.len(), 2);
        assert_eq!(kids[0].0, 0.5);
        assert_abs_diff_eq!(t.value(kids[0].1).unwrap(), 3.02, epsilon = 1e-12);
        assert_eq!(t.value(kids[1].1), Some(1.0));

        let single = chain_from_distribution(&DiscreteDist::point(4.0), 1e-4).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.value(0), Some(4.0));
        assert!(chain_from_distribution(&d, 0.0).is_err());
    }

    fn arb_dist() -> impl Strategy<Value = DiscreteDist> {
        prop::collection::vec((-20.0f64..20.0, 0.05f64..1.0), 1..7).prop_map(|v| DiscreteDist::normalize(v).unwrap())
    }

    proptest! {
        #[test]
        fn round_trip(d in arb_dist()) {
            let t = chain_from_distribution(&d, DEFAULT_EPSILON).unwrap();
            let back = surrogate_values(&t).unwrap().dist;
            prop_assert_eq!(back.len(), d.len());
            for (a, b) in back.atoms().iter().zip(d.atoms()) {
                prop_assert_eq!(a.0, b.0);
                prop_assert!((a.1 - b.1).abs() <= 1e-12);
            }
        }
    }
}
