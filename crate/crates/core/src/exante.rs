//! Ex-ante curves of single MDPs and the ex-ante relaxation of CICS.
//!
//! `f(q)` is the best expected utility a local policy on one MDP can earn
//! while accepting with probability `q`. It is built bottom-up on the
//! unrolled history tree and every hull vertex remembers where it came from,
//! so the optimum can be traced back into a per-history commitment.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::chains::{Commitment, MarkovChainTree, Mdp, TreeKind, TreeMdp, DEFAULT_DEPTH_CAP};
use crate::constraints::{Constraint, ExAnteSolution};
use crate::dist::DiscreteDist;
use crate::error::{Error, Result};
use crate::par::{map_indexed, Exec};
use crate::plc::{upper_hull_indices, PiecewiseLinear, Shape};

const Q_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Max,
    Min,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Halt,
    Action(usize),
    Accept,
}

#[derive(Clone, Debug)]
struct NodeCurve {
    curve: PiecewiseLinear,
    /// Hull vertices `(x, y, source)`, left to right.
    vertices: Vec<(f64, f64, Source)>,
    /// Largest useful acceptance probability.
    peak: f64,
}

/// The ex-ante curve of one MDP together with its trace data.
#[derive(Clone, Debug)]
pub struct LocalCurve {
    pub tree: TreeMdp,
    nodes: Vec<NodeCurve>,
    /// Exact-acceptance mode: curves are not flattened after their peak.
    exact: bool,
}

/// Per-node behaviour of the local policy realising `f(q)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeDecision {
    pub reach: f64,
    /// Conditional acceptance probability asked of this subtree.
    pub target: f64,
    pub halt: f64,
    /// Action distribution conditional on advancing (empty for leaves).
    pub actions: Vec<f64>,
    /// Acceptance probability at a leaf, conditional on reaching it.
    pub accept: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalTrace {
    pub q: f64,
    pub value: f64,
    pub nodes: Vec<NodeDecision>,
}

impl LocalCurve {
    pub fn new(m: &Mdp) -> Result<Self> {
        Self::build(m.unroll(DEFAULT_DEPTH_CAP)?, false)
    }

    /// Curve for exact acceptance probabilities (no monotone flattening).
    pub fn new_exact(m: &Mdp) -> Result<Self> {
        Self::build(m.unroll(DEFAULT_DEPTH_CAP)?, true)
    }

    pub fn from_chain(t: &MarkovChainTree) -> Result<Self> {
        Self::build(t.to_mdp().unroll(DEFAULT_DEPTH_CAP)?, false)
    }

    fn build(tree: TreeMdp, exact: bool) -> Result<Self> {
        let mut nodes: Vec<Option<NodeCurve>> = vec![None; tree.nodes.len()];
        for n in (0..tree.nodes.len()).rev() {
            let nc = match &tree.nodes[n].kind {
                TreeKind::Terminal { value } => {
                    let pts = vec![(0.0, 0.0, Source::Halt), (1.0, *value, Source::Accept)];
                    finish(pts, exact)
                }
                TreeKind::Internal { actions } => {
                    let mut pts = vec![(0.0, 0.0, Source::Halt)];
                    for (a, act) in actions.iter().enumerate() {
                        let kids: Vec<(f64, &PiecewiseLinear)> = act
                            .children
                            .iter()
                            .map(|&(p, c)| (p, &nodes[c].as_ref().expect("children follow parents").curve))
                            .collect();
                        let g = PiecewiseLinear::budget_merge(&kids)?.shift_add(-act.cost);
                        pts.extend(g.breakpoints().iter().map(|&(x, y)| (x, y, Source::Action(a))));
                    }
                    finish(pts, exact)
                }
            };
            nodes[n] = Some(nc);
        }
        Ok(LocalCurve {
            tree,
            nodes: nodes.into_iter().map(|n| n.expect("filled")).collect(),
            exact,
        })
    }

    /// `f` on `[0, 1]`.
    pub fn curve(&self) -> &PiecewiseLinear {
        &self.nodes[0].curve
    }

    /// The local policy realising `f(q)`: smallest useful acceptance
    /// probability, halting before lower action indices at ties.
    pub fn trace(&self, q: f64) -> Result<LocalTrace> {
        let (lo, hi) = self.curve().domain();
        if !(q >= lo - Q_TOL && q <= hi + Q_TOL) {
            return Err(Error::OutOfDomain { x: q, lo, hi });
        }
        let n = self.tree.nodes.len();
        let mut out: Vec<NodeDecision> = vec![
            NodeDecision {
                reach: 0.0,
                target: 0.0,
                halt: 0.0,
                actions: Vec::new(),
                accept: 0.0,
            };
            n
        ];
        out[0].reach = 1.0;
        out[0].target = q.clamp(lo, hi);
        for i in 0..n {
            let nc = &self.nodes[i];
            let x = if self.exact {
                out[i].target
            } else {
                out[i].target.min(nc.peak)
            };
            let mix = decompose(&nc.vertices, x);
            match &self.tree.nodes[i].kind {
                TreeKind::Terminal { .. } => {
                    out[i].accept = mix.iter().filter(|m| m.1 == Source::Accept).fold(0.0, |a, m| a + m.0);
                }
                TreeKind::Internal { actions } => {
                    let mut dist = vec![0.0; actions.len()];
                    let mut halt = 0.0;
                    let mut targets: Vec<Option<f64>> = vec![None; actions.len()];
                    for &(w, src, xs) in &mix {
                        match src {
                            Source::Action(a) => {
                                dist[a] += w;
                                targets[a] = Some(xs);
                            }
                            _ => halt += w,
                        }
                    }
                    let go = 1.0 - halt;
                    out[i].halt = halt;
                    if go > Q_TOL {
                        for d in &mut dist {
                            *d /= go;
                        }
                    } else {
                        dist.iter_mut().for_each(|d| *d = 0.0);
                        dist[0] = 1.0;
                    }
                    let reach = out[i].reach;
                    for (a, act) in actions.iter().enumerate() {
                        let Some(xa) = targets[a] else { continue };
                        let kids: Vec<(f64, &PiecewiseLinear)> =
                            act.children.iter().map(|&(p, c)| (p, &self.nodes[c].curve)).collect();
                        let split = PiecewiseLinear::budget_split(&kids, xa)?;
                        let wa = dist[a] * go;
                        for (&(p, c), &xc) in act.children.iter().zip(&split) {
                            out[c].reach = reach * wa * p;
                            out[c].target = xc;
                        }
                    }
                    out[i].actions = dist;
                }
            }
        }
        let value = self.curve().eval(q.clamp(lo, hi))?;
        Ok(LocalTrace { q, value, nodes: out })
    }

    /// Per-history commitment and per-leaf acceptance probabilities realising `f(q)`.
    ///
    /// Histories that the policy never reaches keep action 0.
    pub fn extract_commitment(&self, q: f64) -> Result<(TreeCommitment, LocalTrace)> {
        let trace = self.trace(q)?;
        let per_node = trace
            .nodes
            .iter()
            .zip(&self.tree.nodes)
            .map(|(d, node)| match &node.kind {
                TreeKind::Internal { actions } => {
                    if d.reach > 0.0 && (1.0 - d.halt) > Q_TOL {
                        d.actions.clone()
                    } else {
                        let mut v = vec![0.0; actions.len()];
                        v[0] = 1.0;
                        v
                    }
                }
                TreeKind::Terminal { .. } => Vec::new(),
            })
            .collect();
        Ok((TreeCommitment { per_node }, trace))
    }
}

/// Action distributions indexed by history-tree node.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeCommitment {
    pub per_node: Vec<Vec<f64>>,
}

impl TreeCommitment {
    pub fn to_commitment(&self, tree: &TreeMdp) -> Commitment {
        Commitment {
            per_state: tree
                .nodes
                .iter()
                .zip(&self.per_node)
                .filter(|(n, _)| matches!(n.kind, TreeKind::Internal { .. }))
                .map(|(n, d)| (n.path.clone(), d.clone()))
                .collect(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.per_node
            .iter()
            .filter(|d| !d.is_empty())
            .all(|d| d.iter().filter(|&&w| w > 0.0).count() == 1)
    }
}

fn finish(mut pts: Vec<(f64, f64, Source)>, exact: bool) -> NodeCurve {
    // Stable: at equal (x, y) the earlier source (halt, then lower action) wins.
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, p.1)).collect();
    let hull = upper_hull_indices(&xy);
    let vertices: Vec<(f64, f64, Source)> = hull.into_iter().map(|i| pts[i]).collect();
    let mut peak = vertices[0].0;
    let mut best = vertices[0].1;
    for v in &vertices[1..] {
        if v.1 > best + 1e-15 * 1f64.max(best.abs()) {
            best = v.1;
            peak = v.0;
        }
    }
    let raw = PiecewiseLinear::build(vertices.iter().map(|v| (v.0, v.1)).collect(), Shape::Concave);
    let curve = if exact { raw } else { raw.clip_monotone_hull() };
    NodeCurve { curve, vertices, peak }
}

/// Writes `x` as a convex combination of at most two hull vertices:
/// `(weight, source, vertex x)`. Adjacent vertices from one action collapse
/// into that action at `x`.
fn decompose(v: &[(f64, f64, Source)], x: f64) -> Vec<(f64, Source, f64)> {
    if v.len() == 1 || x <= v[0].0 + Q_TOL {
        return vec![(1.0, v[0].2, v[0].0)];
    }
    let last = v[v.len() - 1];
    if x >= last.0 - Q_TOL {
        return vec![(1.0, last.2, last.0)];
    }
    let k = v.partition_point(|p| p.0 <= x).clamp(1, v.len() - 1);
    let (a, b) = (v[k - 1], v[k]);
    if (x - a.0).abs() <= Q_TOL {
        return vec![(1.0, a.2, a.0)];
    }
    if (b.0 - x).abs() <= Q_TOL {
        return vec![(1.0, b.2, b.0)];
    }
    if a.2 == b.2 {
        return vec![(1.0, a.2, x)];
    }
    let lam = (b.0 - x) / (b.0 - a.0);
    vec![(lam, a.2, a.0), (1.0 - lam, b.2, b.0)]
}

/// `max_{q in P(F)} sum_i R_{D_i}(q_i)`.
pub fn ex_ante_value_bcs(c: &Constraint, dists: &[DiscreteDist]) -> Result<ExAnteSolution> {
    let curves: Vec<PiecewiseLinear> = dists.iter().map(|d| d.revenue_curve()).collect();
    c.maximize_separable_concave(&curves)
}

/// Pours every segment (negative slopes included) steepest first until
/// exactly `k` units of acceptance probability are placed.
pub fn fill_exact(curves: &[PiecewiseLinear], k: f64) -> Result<ExAnteSolution> {
    let mut segs: Vec<(usize, f64, f64)> = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        for w in c.breakpoints().windows(2) {
            segs.push((i, (w[1].1 - w[0].1) / (w[1].0 - w[0].0), w[1].0 - w[0].0));
        }
    }
    segs.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut q = vec![0.0; curves.len()];
    let mut left = k;
    for (i, _, width) in segs {
        if left <= Q_TOL {
            break;
        }
        let inc = width.min(left);
        q[i] += inc;
        left -= inc;
    }
    if left > 1e-9 {
        return Err(Error::Unsupported(format!(
            "cannot place {k} units of acceptance over {} elements",
            curves.len()
        )));
    }
    let value = curves.iter().zip(&q).fold(0.0, |a, (c, &x)| a + c.eval_extended(x));
    Ok(ExAnteSolution { q, value })
}

#[derive(Clone, Debug, Serialize)]
pub struct ExAnteCicsResult {
    pub objective: Objective,
    /// Optimal relaxed objective (a cost for minimisation).
    pub value: f64,
    pub q: Vec<f64>,
    /// Per-MDP commitments keyed by history label.
    pub commitments: Vec<Commitment>,
    /// Per-MDP leaf acceptance probabilities (conditional on reaching the leaf).
    pub accept: Vec<BTreeMap<String, f64>>,
    #[serde(skip)]
    pub locals: Vec<LocalCurve>,
    #[serde(skip)]
    pub tree_commitments: Vec<TreeCommitment>,
    #[serde(skip)]
    pub traces: Vec<LocalTrace>,
}

impl ExAnteCicsResult {
    /// The committed Markov chain of MDP `i`.
    pub fn committed_chain(&self, i: usize) -> Result<MarkovChainTree> {
        self.locals[i].tree.commit(&self.tree_commitments[i].per_node)
    }
}

/// Local curves, the ex-ante optimum over `P(F)`, and the commitments it induces.
///
/// Minimisation negates terminal values and requires exactly `k` acceptances
/// (`k = 1` for single selection, `k` for a uniform matroid).
pub fn ex_ante_opt_cics(c: &Constraint, mdps: &[Mdp], objective: Objective, exec: Exec) -> Result<ExAnteCicsResult> {
    c.check_arity(mdps.len())?;
    let exact = objective == Objective::Min;
    let built: Vec<Result<LocalCurve>> = map_indexed(exec, mdps.len(), |i| {
        if exact {
            LocalCurve::new_exact(&mdps[i].map_values(|v| -v))
        } else {
            LocalCurve::new(&mdps[i])
        }
    });
    let locals = built.into_iter().collect::<Result<Vec<_>>>()?;
    let curves: Vec<PiecewiseLinear> = locals.iter().map(|l| l.curve().clone()).collect();
    let sol = if exact {
        let k = match c {
            Constraint::SingleSelection => 1.0,
            Constraint::UniformMatroid { k } => *k as f64,
            other => {
                return Err(Error::Unsupported(format!(
                    "minimisation needs single or uniform constraints, not {}",
                    other.kind_name()
                )))
            }
        };
        fill_exact(&curves, k)?
    } else {
        c.maximize_separable_concave(&curves)?
    };
    let mut commitments = Vec::with_capacity(mdps.len());
    let mut accept = Vec::with_capacity(mdps.len());
    let mut tree_commitments = Vec::with_capacity(mdps.len());
    let mut traces = Vec::with_capacity(mdps.len());
    for (l, &q) in locals.iter().zip(&sol.q) {
        let (tc, trace) = l.extract_commitment(q)?;
        commitments.push(tc.to_commitment(&l.tree));
        accept.push(
            l.tree
                .nodes
                .iter()
                .zip(&trace.nodes)
                .filter(|(n, _)| matches!(n.kind, TreeKind::Terminal { .. }))
                .map(|(n, d)| (n.path.clone(), d.accept))
                .collect(),
        );
        tree_commitments.push(tc);
        traces.push(trace);
    }
    Ok(ExAnteCicsResult {
        objective,
        value: if exact { -sol.value } else { sol.value },
        q: sol.q,
        commitments,
        accept,
        locals,
        tree_commitments,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::RawMdp;
    use approx::assert_abs_diff_eq;

    fn mdp(json: &str) -> Mdp {
        let raw: RawMdp = serde_json::from_str(json).unwrap();
        Mdp::from_raw(&raw, "").unwrap()
    }

    const BOX: &str = r#"{"root":"s0","states":{
        "s0":{"actions":[{"cost":0.5,"transitions":[{"to":"t1","p":0.5},{"to":"t2","p":0.5}]}]},
        "t1":{"terminal":true,"value":2.0},"t2":{"terminal":true,"value":0.0}}}"#;

    fn terminal(v: f64) -> Mdp {
        mdp(&format!(
            r#"{{"root":"t","states":{{"t":{{"terminal":true,"value":{v}}}}}}}"#
        ))
    }

    #[test]
    fn local_curve_examples() {
        let l = LocalCurve::new(&mdp(BOX)).unwrap();
        assert_eq!(l.curve().breakpoints(), &[(0.0, 0.0), (0.5, 0.5), (1.0, 0.5)]);
        let l = LocalCurve::new(&terminal(3.0)).unwrap();
        assert_eq!(l.curve().breakpoints(), &[(0.0, 0.0), (1.0, 3.0)]);
        let l = LocalCurve::new(&terminal(-1.0)).unwrap();
        assert!(l.curve().breakpoints().iter().all(|p| p.1 == 0.0));
    }

    #[test]
    fn bcs_examples() {
        let b = DiscreteDist::bernoulli(1.0, 0.5).unwrap();
        let s = ex_ante_value_bcs(&Constraint::SingleSelection, &[b.clone(), b]).unwrap();
        assert_abs_diff_eq!(s.value, 1.0);
        for n in [2usize, 3, 5] {
            let d = DiscreteDist::bernoulli(1.0, 1.0 / n as f64).unwrap();
            let s = ex_ante_value_bcs(&Constraint::SingleSelection, &vec![d; n]).unwrap();
            assert_abs_diff_eq!(s.value, 1.0, epsilon = 1e-12);
            assert!(s.q.iter().all(|&q| (q - 1.0 / n as f64).abs() < 1e-12));
        }
        let ds = vec![
            DiscreteDist::normalize([(3.0, 0.5), (1.0, 0.5)]).unwrap(),
            DiscreteDist::point(-1.0),
        ];
        let s = ex_ante_value_bcs(&Constraint::UniformMatroid { k: 2 }, &ds).unwrap();
        assert_abs_diff_eq!(s.value, 2.0);
    }

    #[test]
    fn weitzman_cics() {
        let r = ex_ante_opt_cics(
            &Constraint::SingleSelection,
            &[mdp(BOX)],
            Objective::Max,
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(r.q, vec![0.5]);
        assert_abs_diff_eq!(r.value, 0.5);
        let acc: Vec<f64> = r.accept[0].values().copied().collect();
        assert_eq!(acc, vec![1.0, 0.0]);
    }

    #[test]
    fn negative_terminals_accept_nothing() {
        let r = ex_ante_opt_cics(
            &Constraint::UniformMatroid { k: 2 },
            &[terminal(-1.0), terminal(-2.0)],
            Objective::Max,
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.q, vec![0.0, 0.0]);
    }

    #[test]
    fn interpolated_acceptance() {
        let l = LocalCurve::new(&mdp(BOX)).unwrap();
        let (tc, tr) = l.extract_commitment(0.25).unwrap();
        assert!(tc.is_deterministic());
        assert_abs_diff_eq!(tr.value, 0.25);
        // The root halts half the time and accepts every 2 it opens.
        assert_abs_diff_eq!(tr.nodes[0].halt, 0.5);
        let leaf2 = l.tree.nodes.iter().position(|n| n.state == "t1").unwrap();
        assert_eq!(tr.nodes[leaf2].accept, 1.0);
    }

    #[test]
    fn two_action_midpoint_mixes() {
        // Action 0 reveals value 2 w.p. 1/2 cheaply; action 1 returns 1 for sure.
        let m = mdp(r#"{"root":"r","states":{
            "r":{"actions":[{"cost":0,"transitions":[{"to":"a","p":0.5},{"to":"b","p":0.5}]},
                            {"cost":0,"transitions":[{"to":"c","p":1}]}]},
            "a":{"terminal":true,"value":2},"b":{"terminal":true,"value":0},
            "c":{"terminal":true,"value":1.5}}}"#);
        let l = LocalCurve::new(&m).unwrap();
        assert_eq!(l.curve().breakpoints(), &[(0.0, 0.0), (0.5, 1.0), (1.0, 1.5)]);
        let (tc, tr) = l.extract_commitment(0.75).unwrap();
        assert_eq!(tc.per_node[0], vec![0.5, 0.5]);
        let chain = l.tree.commit(&tc.per_node).unwrap();
        let again = LocalCurve::from_chain(&chain).unwrap();
        assert_abs_diff_eq!(again.curve().eval(0.75).unwrap(), tr.value, epsilon = 1e-12);
    }

    #[test]
    fn fill_exact_places_k_units() {
        let cs = vec![
            PiecewiseLinear::line(0.0, 0.0, 1.0, -1.0),
            PiecewiseLinear::line(0.0, 0.0, 1.0, -3.0),
        ];
        let s = fill_exact(&cs, 1.0).unwrap();
        assert_eq!(s.q, vec![1.0, 0.0]);
        assert_eq!(s.value, -1.0);
        assert!(fill_exact(&cs, 3.0).is_err());
    }
}
