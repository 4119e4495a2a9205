//! Brute-force oracles shared by the integration tests. None of them reuse
//! the library's curve algebra or solvers.
#![allow(dead_code)]

use cics_core::chains::{ChainKind, MarkovChainTree, TreeKind, TreeMdp};
use cics_core::constraints::Subset;
use cics_core::dist::DiscreteDist;

/// Upper concave envelope of `points` plus the origin, made non-decreasing,
/// evaluated at `q`: `max sum l_j u_j` s.t. `sum l_j a_j <= q`, `sum l_j <= 1`.
pub fn monotone_envelope(points: &[(f64, f64)], q: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.push((0.0, 0.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        if hull.last().is_some_and(|h| h.0 == p.0) {
            continue;
        }
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    // Best point reachable with budget q: envelope at min(q, x) maximised over x <= q.
    let mut best = f64::NEG_INFINITY;
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.0 > q {
            break;
        }
        let x = q.min(b.0);
        let y = a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0);
        best = best.max(a.1).max(y);
    }
    if let Some(&(x, y)) = hull.last() {
        if x <= q {
            best = best.max(y);
        }
    }
    best
}

/// Number of deterministic local policies below `n` (halt or one action at
/// each internal node, accept or reject each terminal), saturating.
pub fn local_policy_count(t: &TreeMdp, n: usize) -> u128 {
    match &t.nodes[n].kind {
        TreeKind::Terminal { .. } => 2,
        TreeKind::Internal { actions } => {
            let mut total: u128 = 1;
            for a in actions {
                let mut prod: u128 = 1;
                for &(_, c) in &a.children {
                    prod = prod.saturating_mul(local_policy_count(t, c));
                }
                total = total.saturating_add(prod);
            }
            total
        }
    }
}

/// `(acceptance probability, utility)` of every deterministic local policy,
/// conditional on reaching `n`.
pub fn local_policy_points(t: &TreeMdp, n: usize) -> Vec<(f64, f64)> {
    match &t.nodes[n].kind {
        TreeKind::Terminal { value } => vec![(0.0, 0.0), (1.0, *value)],
        TreeKind::Internal { actions } => {
            let mut out = vec![(0.0, 0.0)];
            for a in actions {
                let mut acc = vec![(0.0, -a.cost)];
                for &(p, c) in &a.children {
                    let sub = local_policy_points(t, c);
                    let mut next = Vec::with_capacity(acc.len() * sub.len());
                    for &(x, y) in &acc {
                        for &(sx, sy) in &sub {
                            next.push((x + p * sx, y + p * sy));
                        }
                    }
                    acc = next;
                }
                out.extend(acc);
            }
            out
        }
    }
}

/// Utility of "advance while g >= theta, accept the leaf iff w >= theta",
/// by enumerating root-leaf paths.
pub fn threshold_sweep_utility(t: &MarkovChainTree, g: &[f64], w: &[Option<f64>], theta: f64) -> f64 {
    let reach = t.reach();
    let mut total = 0.0;
    for leaf in t.leaves() {
        let mut path = vec![leaf];
        while let Some(p) = t.nodes[*path.last().unwrap()].parent {
            path.push(p);
        }
        path.reverse();
        let mut paid = 0.0;
        let mut reached = true;
        for &s in &path[..path.len() - 1] {
            if g[s] < theta {
                reached = false;
                break;
            }
            if let ChainKind::Internal { cost, .. } = t.nodes[s].kind {
                paid += cost;
            }
        }
        let gain = if reached && w[leaf].unwrap() >= theta {
            t.value(leaf).unwrap()
        } else {
            0.0
        };
        total += reach[leaf] * (gain - paid);
    }
    total
}

/// `E[min(..)]`-free brute force: `E[max_{S in sets} sum x_i]` over the product.
pub fn expost_oracle(sets: &[Subset], dists: &[DiscreteDist]) -> f64 {
    fn rec(i: usize, dists: &[DiscreteDist], x: &mut Vec<f64>, p: f64, sets: &[Subset], acc: &mut f64) {
        if i == dists.len() {
            let best = sets
                .iter()
                .map(|s| s.iter().map(|j| x[j]).sum::<f64>())
                .fold(0.0, f64::max);
            *acc += p * best;
            return;
        }
        for &(v, q) in dists[i].atoms() {
            x.push(v);
            rec(i + 1, dists, x, p * q, sets, acc);
            x.pop();
        }
    }
    let mut acc = 0.0;
    rec(0, dists, &mut Vec::new(), 1.0, sets, &mut acc);
    acc
}

/// `q * (mean of the top-q mass)` computed from the atoms directly.
pub fn revenue(d: &DiscreteDist, q: f64) -> f64 {
    let mut left = q;
    let mut total = 0.0;
    for &(v, p) in d.atoms() {
        let take = left.min(p);
        total += take * v;
        left -= take;
        if left <= 0.0 {
            break;
        }
    }
    total
}

/// Ex-ante optimum over an explicit family by a 0.01 grid on the weights of
/// (up to three) maximal sets: `q = sum l_S 1_S`, `sum l_S <= 1`.
pub fn ex_ante_grid(maximal: &[Subset], dists: &[DiscreteDist]) -> f64 {
    assert!(maximal.len() <= 3);
    let steps = 100usize;
    let m = maximal.len();
    let mut best = 0.0f64;
    let mut l = [0usize; 3];
    loop {
        let used: usize = l[..m].iter().sum();
        if used <= steps {
            let mut q = vec![0.0; dists.len()];
            for (j, s) in maximal.iter().enumerate() {
                for i in s.iter() {
                    q[i] += l[j] as f64 / steps as f64;
                }
            }
            let v: f64 = dists.iter().zip(&q).map(|(d, &qi)| revenue(d, qi.min(1.0))).sum();
            best = best.max(v);
        }
        // Odometer over l[0..m].
        let mut k = 0;
        loop {
            if k == m {
                return best;
            }
            l[k] += 1;
            if l[k] <= steps {
                break;
            }
            l[k] = 0;
            k += 1;
        }
    }
}

/// Root of `y -> E[max(X, y)] - c - y` by bisection.
pub fn bisect_index(values: &[(f64, f64)], cost: f64) -> f64 {
    let h = |y: f64| values.iter().map(|&(v, p)| p * v.max(y)).sum::<f64>() - cost - y;
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
