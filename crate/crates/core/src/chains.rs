//! MDPs over finite acyclic state spaces, their committed Markov chains and
//! the unrolled history trees that every per-trajectory quantity lives on.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{guard, Error, Result};

pub const DEFAULT_DEPTH_CAP: usize = 64;
const TREE_NODE_LIMIT: u128 = 2_000_000;
const PROB_TOL: f64 = 1e-9;

/// Escapes a token for use inside a JSON pointer.
pub fn pointer_token(s: &str) -> String {
    s.replace('~', "~0").replace('/', "~1")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub cost: f64,
    /// `(target state, probability)`.
    pub transitions: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StateDef {
    Terminal { value: f64 },
    Internal { actions: Vec<Action> },
}

/// A finite acyclic MDP with costly actions and valued terminals.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    ids: Vec<String>,
    states: Vec<StateDef>,
    root: usize,
}

// ---------------------------------------------------------------------------
// JSON form
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RawTransition {
    pub to: String,
    pub p: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RawAction {
    pub cost: f64,
    pub transitions: Vec<RawTransition>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawState {
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub terminal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<RawAction>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RawMdp {
    pub root: String,
    pub states: BTreeMap<String, RawState>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub pointer: String,
    pub message: String,
}

impl From<Diagnostic> for Error {
    fn from(d: Diagnostic) -> Self {
        Error::Invalid {
            pointer: d.pointer,
            message: d.message,
        }
    }
}

impl RawMdp {
    /// Every invariant violation, each tagged with its JSON pointer.
    pub fn diagnostics(&self, prefix: &str) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut push = |pointer: String, message: String| out.push(Diagnostic { pointer, message });
        if !self.states.contains_key(&self.root) {
            push(format!("{prefix}/root"), format!("unknown root state `{}`", self.root));
        }
        for (id, st) in &self.states {
            let sp = format!("{prefix}/states/{}", pointer_token(id));
            match (st.terminal, &st.actions) {
                (true, Some(a)) if !a.is_empty() => push(sp.clone(), "terminal state must not have actions".into()),
                (true, _) => match st.value {
                    Some(v) if v.is_finite() => {}
                    _ => push(format!("{sp}/value"), "terminal needs a finite value".into()),
                },
                (false, None) => push(sp.clone(), "internal state needs at least one action".into()),
                (false, Some(a)) if a.is_empty() => push(sp.clone(), "internal state needs at least one action".into()),
                (false, Some(actions)) => {
                    if st.value.is_some() {
                        push(format!("{sp}/value"), "only terminal states carry values".into());
                    }
                    for (k, a) in actions.iter().enumerate() {
                        let ap = format!("{sp}/actions/{k}");
                        if !(a.cost.is_finite() && a.cost >= 0.0) {
                            push(format!("{ap}/cost"), format!("cost {} must be finite and >= 0", a.cost));
                        }
                        if a.transitions.is_empty() {
                            push(ap.clone(), "action has no transitions".into());
                            continue;
                        }
                        let mut total = 0.0;
                        let mut bad = false;
                        for (j, t) in a.transitions.iter().enumerate() {
                            if !self.states.contains_key(&t.to) {
                                push(format!("{ap}/transitions/{j}/to"), format!("unknown state `{}`", t.to));
                            }
                            if !(t.p.is_finite() && t.p >= 0.0) {
                                bad = true;
                            }
                            total += t.p;
                        }
                        if bad || (total - 1.0).abs() > PROB_TOL {
                            push(
                                ap,
                                format!("transition probabilities must be >= 0 and sum to 1 (sum {total})"),
                            );
                        }
                    }
                }
            }
        }
        if out.is_empty() {
            if let Some(id) = self.find_cycle() {
                out.push(Diagnostic {
                    pointer: format!("{prefix}/states/{}", pointer_token(&id)),
                    message: format!("state `{id}` lies on a cycle"),
                });
            }
        }
        out
    }

    fn find_cycle(&self) -> Option<String> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut mark: HashMap<&str, u8> = HashMap::new();
        for start in self.states.keys() {
            if mark.get(start.as_str()).copied().unwrap_or(0) != 0 {
                continue;
            }
            let mut stack: Vec<(&str, usize)> = vec![(start.as_str(), 0)];
            mark.insert(start, 1);
            while let Some(&mut (id, ref mut next)) = stack.last_mut() {
                let succ: Vec<&str> = self.states[id]
                    .actions
                    .iter()
                    .flatten()
                    .flat_map(|a| a.transitions.iter().map(|t| t.to.as_str()))
                    .collect();
                if *next < succ.len() {
                    let s = succ[*next];
                    *next += 1;
                    match mark.get(s).copied().unwrap_or(0) {
                        1 => return Some(s.to_string()),
                        0 => {
                            mark.insert(s, 1);
                            stack.push((s, 0));
                        }
                        _ => {}
                    }
                } else {
                    mark.insert(id, 2);
                    stack.pop();
                }
            }
        }
        None
    }
}

impl Mdp {
    /// Builds a validated MDP; the first diagnostic becomes the error.
    pub fn from_raw(raw: &RawMdp, prefix: &str) -> Result<Self> {
        if let Some(d) = raw.diagnostics(prefix).into_iter().next() {
            if d.message.contains("cycle") {
                let id = d.message.split('`').nth(1).unwrap_or_default().to_string();
                return Err(Error::Cycle(id));
            }
            return Err(d.into());
        }
        let ids: Vec<String> = raw.states.keys().cloned().collect();
        let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let states = raw
            .states
            .values()
            .map(|st| match &st.actions {
                Some(actions) if !st.terminal => StateDef::Internal {
                    actions: actions
                        .iter()
                        .map(|a| Action {
                            cost: a.cost,
                            transitions: a
                                .transitions
                                .iter()
                                .filter(|t| t.p > 0.0)
                                .map(|t| (index[t.to.as_str()], t.p))
                                .collect(),
                        })
                        .collect(),
                },
                _ => StateDef::Terminal {
                    value: st.value.unwrap_or(0.0),
                },
            })
            .collect();
        let root = index[raw.root.as_str()];
        Ok(Mdp { ids, states, root })
    }

    pub fn to_raw(&self) -> RawMdp {
        let states = self
            .ids
            .iter()
            .zip(&self.states)
            .map(|(id, st)| {
                let raw = match st {
                    StateDef::Terminal { value } => RawState {
                        terminal: true,
                        value: Some(*value),
                        actions: None,
                    },
                    StateDef::Internal { actions } => RawState {
                        terminal: false,
                        value: None,
                        actions: Some(
                            actions
                                .iter()
                                .map(|a| RawAction {
                                    cost: a.cost,
                                    transitions: a
                                        .transitions
                                        .iter()
                                        .map(|&(to, p)| RawTransition {
                                            to: self.ids[to].clone(),
                                            p,
                                        })
                                        .collect(),
                                })
                                .collect(),
                        ),
                    },
                };
                (id.clone(), raw)
            })
            .collect();
        RawMdp {
            root: self.ids[self.root].clone(),
            states,
        }
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn id(&self, s: usize) -> &str {
        &self.ids[s]
    }

    pub fn state_index(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn state(&self, s: usize) -> &StateDef {
        &self.states[s]
    }

    pub fn states(&self) -> &[StateDef] {
        &self.states
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        matches!(self.states[s], StateDef::Terminal { .. })
    }

    pub fn actions(&self, s: usize) -> &[Action] {
        match &self.states[s] {
            StateDef::Internal { actions } => actions,
            StateDef::Terminal { .. } => &[],
        }
    }

    pub fn internal_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.states.len()).filter(|&s| !self.is_terminal(s))
    }

    pub fn action_count(&self) -> usize {
        self.states
            .iter()
            .map(|s| match s {
                StateDef::Internal { actions } => actions.len(),
                StateDef::Terminal { .. } => 0,
            })
            .sum()
    }

    /// Every internal state has exactly one action.
    pub fn is_chain(&self) -> bool {
        self.internal_states().all(|s| self.actions(s).len() == 1)
    }

    pub fn terminal_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().filter_map(|s| match s {
            StateDef::Terminal { value } => Some(*value),
            StateDef::Internal { .. } => None,
        })
    }

    /// Copy with every terminal value replaced by `f(value)`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for st in &mut out.states {
            if let StateDef::Terminal { value } = st {
                *value = f(*value);
            }
        }
        out
    }

    /// Collapses each internal state to a single mixed action.
    pub fn apply_commitment(&self, pi: &Commitment) -> Result<Mdp> {
        let mut states = Vec::with_capacity(self.states.len());
        for (s, st) in self.states.iter().enumerate() {
            match st {
                StateDef::Terminal { .. } => states.push(st.clone()),
                StateDef::Internal { actions } => {
                    let dist = pi
                        .per_state
                        .get(&self.ids[s])
                        .ok_or_else(|| Error::MissingCommitment(self.ids[s].clone()))?;
                    check_action_dist(dist, actions.len(), &self.ids[s])?;
                    let mut cost = 0.0;
                    let mut trans: BTreeMap<usize, f64> = BTreeMap::new();
                    for (a, &w) in actions.iter().zip(dist) {
                        if w <= 0.0 {
                            continue;
                        }
                        cost += w * a.cost;
                        for &(to, p) in &a.transitions {
                            *trans.entry(to).or_insert(0.0) += w * p;
                        }
                    }
                    states.push(StateDef::Internal {
                        actions: vec![Action {
                            cost,
                            transitions: trans.into_iter().collect(),
                        }],
                    });
                }
            }
        }
        Ok(Mdp {
            ids: self.ids.clone(),
            states,
            root: self.root,
        })
    }

    /// All deterministic commitments, in lexicographic order of action indices.
    pub fn deterministic_commitments(&self, limit: u128) -> Result<Vec<Commitment>> {
        let internal: Vec<usize> = self.internal_states().collect();
        let radices: Vec<usize> = internal.iter().map(|&s| self.actions(s).len()).collect();
        let total: u128 = radices.iter().map(|&r| r as u128).product();
        guard("deterministic commitments", total, limit)?;
        let mut out = Vec::with_capacity(total as usize);
        let mut digits = vec![0usize; radices.len()];
        for idx in 0..total as usize {
            crate::par::mixed_radix(idx, &radices, &mut digits);
            let per_state = internal
                .iter()
                .zip(&digits)
                .map(|(&s, &a)| {
                    let mut d = vec![0.0; self.actions(s).len()];
                    d[a] = 1.0;
                    (self.ids[s].clone(), d)
                })
                .collect();
            out.push(Commitment { per_state });
        }
        Ok(out)
    }

    /// Unrolls the reachable part into a history tree (one node per path).
    pub fn unroll(&self, depth_cap: usize) -> Result<TreeMdp> {
        let mut nodes: Vec<TreeNode> = Vec::new();
        self.unroll_into(self.root, self.ids[self.root].clone(), None, 0, depth_cap, &mut nodes)?;
        Ok(TreeMdp { nodes })
    }

    fn unroll_into(
        &self,
        s: usize,
        path: String,
        parent: Option<usize>,
        depth: usize,
        cap: usize,
        nodes: &mut Vec<TreeNode>,
    ) -> Result<usize> {
        if depth > cap {
            return Err(Error::DepthCap(cap));
        }
        guard("unrolled tree nodes", nodes.len() as u128 + 1, TREE_NODE_LIMIT)?;
        let me = nodes.len();
        nodes.push(TreeNode {
            state: self.ids[s].clone(),
            path: path.clone(),
            parent,
            kind: TreeKind::Terminal { value: 0.0 },
        });
        let kind = match &self.states[s] {
            StateDef::Terminal { value } => TreeKind::Terminal { value: *value },
            StateDef::Internal { actions } => {
                let single = actions.len() == 1;
                let mut tas = Vec::with_capacity(actions.len());
                for (a, act) in actions.iter().enumerate() {
                    let mut children = Vec::with_capacity(act.transitions.len());
                    for &(to, p) in &act.transitions {
                        let child_path = if single {
                            format!("{path}/{}", self.ids[to])
                        } else {
                            format!("{path}/{a}/{}", self.ids[to])
                        };
                        let c = self.unroll_into(to, child_path, Some(me), depth + 1, cap, nodes)?;
                        children.push((p, c));
                    }
                    tas.push(TreeAction {
                        cost: act.cost,
                        children,
                    });
                }
                TreeKind::Internal { actions: tas }
            }
        };
        nodes[me].kind = kind;
        Ok(me)
    }

    /// Unrolls a chain-shaped MDP into a [`MarkovChainTree`].
    pub fn unroll_chain(&self, depth_cap: usize) -> Result<MarkovChainTree> {
        if !self.is_chain() {
            return Err(Error::Unsupported(
                "unroll_chain needs a Markov chain (one action per state)".into(),
            ));
        }
        Ok(self.unroll(depth_cap)?.as_chain())
    }
}

fn check_action_dist(dist: &[f64], n: usize, id: &str) -> Result<()> {
    let total: f64 = dist.iter().sum();
    if dist.len() != n || dist.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > PROB_TOL {
        return Err(Error::invalid(
            format!("/{}", pointer_token(id)),
            format!("invalid action distribution {dist:?} over {n} actions"),
        ));
    }
    Ok(())
}

/// Per-state distributions over action indices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Commitment {
    pub per_state: BTreeMap<String, Vec<f64>>,
}

impl Commitment {
    pub fn is_deterministic(&self) -> bool {
        self.per_state
            .values()
            .all(|d| d.iter().filter(|&&w| w > 0.0).count() == 1)
    }
}

// ---------------------------------------------------------------------------
// History trees
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct TreeAction {
    pub cost: f64,
    pub children: Vec<(f64, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeKind {
    Terminal { value: f64 },
    Internal { actions: Vec<TreeAction> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    /// Id of the underlying MDP state.
    pub state: String,
    /// Unique history label.
    pub path: String,
    pub parent: Option<usize>,
    pub kind: TreeKind,
}

/// An MDP unrolled into histories; nodes are stored in pre-order.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeMdp {
    pub nodes: Vec<TreeNode>,
}

impl TreeMdp {
    pub fn root(&self) -> usize {
        0
    }

    /// Applies a per-node commitment; nodes only reachable through
    /// zero-weight actions are dropped.
    pub fn commit(&self, per_node: &[Vec<f64>]) -> Result<MarkovChainTree> {
        let mut out = Vec::new();
        self.commit_into(0, None, per_node, &mut out)?;
        Ok(MarkovChainTree { nodes: out })
    }

    fn commit_into(
        &self,
        n: usize,
        parent: Option<usize>,
        per_node: &[Vec<f64>],
        out: &mut Vec<ChainNode>,
    ) -> Result<usize> {
        let node = &self.nodes[n];
        let me = out.len();
        out.push(ChainNode {
            state: node.state.clone(),
            path: node.path.clone(),
            parent,
            kind: ChainKind::Leaf { value: 0.0 },
        });
        let kind = match &node.kind {
            TreeKind::Terminal { value } => ChainKind::Leaf { value: *value },
            TreeKind::Internal { actions } => {
                let dist = &per_node[n];
                check_action_dist(dist, actions.len(), &node.path)?;
                let mut cost = 0.0;
                let mut children = Vec::new();
                for (a, &w) in actions.iter().zip(dist) {
                    if w <= 0.0 {
                        continue;
                    }
                    cost += w * a.cost;
                    for &(p, c) in &a.children {
                        let ci = self.commit_into(c, Some(me), per_node, out)?;
                        children.push((w * p, ci));
                    }
                }
                ChainKind::Internal { cost, children }
            }
        };
        out[me].kind = kind;
        Ok(me)
    }

    fn as_chain(&self) -> MarkovChainTree {
        let nodes = self
            .nodes
            .iter()
            .map(|n| ChainNode {
                state: n.state.clone(),
                path: n.path.clone(),
                parent: n.parent,
                kind: match &n.kind {
                    TreeKind::Terminal { value } => ChainKind::Leaf { value: *value },
                    TreeKind::Internal { actions } => ChainKind::Internal {
                        cost: actions[0].cost,
                        children: actions[0].children.clone(),
                    },
                },
            })
            .collect();
        MarkovChainTree { nodes }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChainKind {
    Leaf { value: f64 },
    Internal { cost: f64, children: Vec<(f64, usize)> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainNode {
    pub state: String,
    pub path: String,
    pub parent: Option<usize>,
    pub kind: ChainKind,
}

/// A Markov chain as an out-tree; children always follow their parent.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovChainTree {
    pub nodes: Vec<ChainNode>,
}

impl MarkovChainTree {
    pub fn leaf(value: f64) -> Self {
        MarkovChainTree {
            nodes: vec![ChainNode {
                state: "t".into(),
                path: "t".into(),
                parent: None,
                kind: ChainKind::Leaf { value },
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_leaf(&self, n: usize) -> bool {
        matches!(self.nodes[n].kind, ChainKind::Leaf { .. })
    }

    pub fn value(&self, n: usize) -> Option<f64> {
        match self.nodes[n].kind {
            ChainKind::Leaf { value } => Some(value),
            ChainKind::Internal { .. } => None,
        }
    }

    pub fn cost(&self, n: usize) -> f64 {
        match self.nodes[n].kind {
            ChainKind::Internal { cost, .. } => cost,
            ChainKind::Leaf { .. } => 0.0,
        }
    }

    pub fn children(&self, n: usize) -> &[(f64, usize)] {
        match &self.nodes[n].kind {
            ChainKind::Internal { children, .. } => children,
            ChainKind::Leaf { .. } => &[],
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&n| self.is_leaf(n))
    }

    /// Probability that a walk from the root passes through each node.
    pub fn reach(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.nodes.len()];
        r[0] = 1.0;
        for n in 0..self.nodes.len() {
            for &(p, c) in self.children(n) {
                r[c] = r[n] * p;
            }
        }
        r
    }

    /// `p(t)` for every leaf, in node order.
    pub fn reach_probabilities(&self) -> Vec<(usize, f64)> {
        let r = self.reach();
        self.leaves().map(|t| (t, r[t])).collect()
    }

    /// Exact `(E[v(t)], E[total cost])` of walking to a terminal.
    pub fn expected_full_walk(&self) -> (f64, f64) {
        let r = self.reach();
        let mut value = 0.0;
        let mut cost = 0.0;
        for (n, node) in self.nodes.iter().enumerate() {
            match node.kind {
                ChainKind::Leaf { value: v } => value += r[n] * v,
                ChainKind::Internal { cost: c, .. } => cost += r[n] * c,
            }
        }
        (value, cost)
    }

    /// Root-to-node path (inclusive).
    pub fn path_to(&self, n: usize) -> Vec<usize> {
        let mut path = vec![n];
        let mut cur = n;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Samples a walk; returns the reached leaf and the total cost paid.
    pub fn sample_walk<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        let mut n = 0;
        let mut cost = 0.0;
        while let ChainKind::Internal { cost: c, children } = &self.nodes[n].kind {
            cost += c;
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut next = children[children.len() - 1].1;
            for &(p, child) in children {
                acc += p;
                if u < acc {
                    next = child;
                    break;
                }
            }
            n = next;
        }
        (n, cost)
    }

    pub fn max_depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        for n in 1..self.nodes.len() {
            depth[n] = depth[self.nodes[n].parent.unwrap_or(0)] + 1;
        }
        depth.into_iter().max().unwrap_or(0)
    }

    /// The tree as an MDP whose state ids are the history labels.
    pub fn to_mdp(&self) -> Mdp {
        let ids: Vec<String> = self.nodes.iter().map(|n| n.path.clone()).collect();
        let states = self
            .nodes
            .iter()
            .map(|n| match &n.kind {
                ChainKind::Leaf { value } => StateDef::Terminal { value: *value },
                ChainKind::Internal { cost, children } => StateDef::Internal {
                    actions: vec![Action {
                        cost: *cost,
                        transitions: children.iter().map(|&(p, c)| (c, p)).collect(),
                    }],
                },
            })
            .collect();
        Mdp { ids, states, root: 0 }
    }
}

// ---------------------------------------------------------------------------
// Instance validation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MdpSummary {
    pub states: usize,
    pub internal: usize,
    pub terminals: usize,
    pub actions: usize,
    pub is_chain: bool,
    pub acyclic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub mdps: Vec<MdpSummary>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Runs every invariant over raw MDPs plus the constraint arity, collecting
/// all problems instead of stopping at the first.
pub fn validate_instance(mdps: &[RawMdp], constraint: &crate::constraints::Constraint) -> ValidationReport {
    let mut diagnostics = Vec::new();
    let mut summaries = Vec::new();
    for (i, raw) in mdps.iter().enumerate() {
        let prefix = format!("/mdps/{i}");
        let diags = raw.diagnostics(&prefix);
        let acyclic = !diags.iter().any(|d| d.message.contains("cycle"));
        let internal = raw.states.values().filter(|s| !s.terminal).count();
        summaries.push(MdpSummary {
            states: raw.states.len(),
            internal,
            terminals: raw.states.len() - internal,
            actions: raw
                .states
                .values()
                .map(|s| s.actions.as_ref().map_or(0, Vec::len))
                .sum(),
            is_chain: raw
                .states
                .values()
                .filter(|s| !s.terminal)
                .all(|s| s.actions.as_ref().is_some_and(|a| a.len() == 1)),
            acyclic,
        });
        diagnostics.extend(diags);
    }
    if let Err(e) = constraint.check_arity(mdps.len()) {
        diagnostics.push(Diagnostic {
            pointer: "/constraint".into(),
            message: e.to_string(),
        });
    }
    ValidationReport {
        ok: diagnostics.is_empty(),
        mdps: summaries,
        diagnostics,
    }
}
