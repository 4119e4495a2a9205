//! CICS policies: the semi-online driven policy, exact and sampled
//! evaluation, exact optimum oracles, and the committing pipeline.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::amortize::{surrogate_values, SurrogateProfile};
use crate::chains::{MarkovChainTree, Mdp, StateDef};
use crate::constraints::{Constraint, Subset};
use crate::dist::DiscreteDist;
use crate::error::{guard, Error, Result};
use crate::exante::{ex_ante_opt_cics, ExAnteCicsResult, Objective};
use crate::par::{fold_chunks, mixed_radix, Exec};
use crate::selection::{
    evaluate_semi_online, feasible_sets, semi_online_from_frugal, FrugalRule, SemiOnline, SemiOnlineMixture,
};

/// Largest joint leaf product evaluated exactly.
pub const PLAYOUT_LIMIT: u128 = 1_000_000;
/// Largest joint state space for the optimum DP.
pub const DP_STATE_LIMIT: u128 = 1_000_000;
/// Largest number of joint deterministic commitments.
pub const COMMITMENT_LIMIT: u128 = 10_000;

#[derive(Clone, Debug)]
pub struct CicsInstance {
    pub constraint: Constraint,
    pub mdps: Vec<Mdp>,
    pub objective: Objective,
}

impl CicsInstance {
    pub fn new(constraint: Constraint, mdps: Vec<Mdp>, objective: Objective) -> Result<Self> {
        constraint.check_arity(mdps.len())?;
        Ok(CicsInstance {
            constraint,
            mdps,
            objective,
        })
    }

    pub fn is_markov_chain(&self) -> bool {
        self.mdps.iter().all(|m| m.is_chain())
    }
}

/// One decision of a policy over Markov chains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Move {
    Advance(usize),
    /// Halt and accept these chains (all of which must sit at a leaf).
    Stop(Subset),
}

/// A deterministic policy that only sees the positions it has advanced to.
pub trait ChainPolicy {
    fn decide(&mut self, pos: &[usize]) -> Result<Move>;
}

/// Builds a fresh policy for every play-out.
pub type PolicyFactory<'a> = dyn Fn() -> Box<dyn ChainPolicy + 'a> + Sync + 'a;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo { trials: usize, stderr: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyEvaluation {
    pub expected_utility: f64,
    pub expected_cost: f64,
    pub expected_value: f64,
    pub accept_probs: Vec<f64>,
    #[serde(flatten)]
    pub method: Method,
    /// Per chain, per node: probability of halting there with the chain accepted.
    #[serde(skip)]
    pub leaf_accept: Vec<Vec<f64>>,
}

impl PolicyEvaluation {
    /// `sum_i sum_t P[accept t] w_i(t)`.
    pub fn surrogate_mass(&self, profiles: &[SurrogateProfile]) -> f64 {
        self.leaf_accept
            .iter()
            .zip(profiles)
            .map(|(acc, prof)| {
                acc.iter()
                    .zip(&prof.w)
                    .filter_map(|(a, w)| w.map(|w| a * w))
                    .sum::<f64>()
            })
            .sum()
    }

    fn zero(chains: &[MarkovChainTree], method: Method) -> Self {
        PolicyEvaluation {
            expected_utility: 0.0,
            expected_cost: 0.0,
            expected_value: 0.0,
            accept_probs: vec![0.0; chains.len()],
            method,
            leaf_accept: chains.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    fn add_scaled(&mut self, other: &PolicyEvaluation, w: f64) {
        self.expected_utility += w * other.expected_utility;
        self.expected_cost += w * other.expected_cost;
        self.expected_value += w * other.expected_value;
        self.accept_probs
            .iter_mut()
            .zip(&other.accept_probs)
            .for_each(|(a, b)| *a += w * b);
        for (a, b) in self.leaf_accept.iter_mut().zip(&other.leaf_accept) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += w * y);
        }
    }
}

/// Root-to-leaf paths of each chain, indexed by leaf ordinal.
struct Trajectories {
    paths: Vec<Vec<Vec<usize>>>,
    probs: Vec<Vec<f64>>,
}

impl Trajectories {
    fn new(chains: &[MarkovChainTree]) -> Self {
        let mut paths = Vec::with_capacity(chains.len());
        let mut probs = Vec::with_capacity(chains.len());
        for t in chains {
            let reach = t.reach();
            let leaves: Vec<usize> = t.leaves().collect();
            paths.push(leaves.iter().map(|&l| t.path_to(l)).collect());
            probs.push(leaves.iter().map(|&l| reach[l]).collect());
        }
        Trajectories { paths, probs }
    }

    fn radices(&self) -> Vec<usize> {
        self.paths.iter().map(|p| p.len()).collect()
    }
}

struct Outcome {
    cost: f64,
    value: f64,
    accepted: Subset,
    pos: Vec<usize>,
}

/// Runs one play-out in which chain `i` follows `paths[i]`.
fn play(
    policy: &mut dyn ChainPolicy,
    c: &Constraint,
    chains: &[MarkovChainTree],
    paths: &[&[usize]],
) -> Result<Outcome> {
    let n = chains.len();
    let mut depth = vec![0usize; n];
    let mut pos: Vec<usize> = paths.iter().map(|p| p[0]).collect();
    let mut cost = 0.0;
    let limit: usize = paths.iter().map(|p| p.len()).sum::<usize>() + 1;
    for _ in 0..=limit {
        match policy.decide(&pos)? {
            Move::Advance(i) => {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, n });
                }
                if chains[i].is_leaf(pos[i]) {
                    return Err(Error::InfeasiblePlay);
                }
                cost += chains[i].cost(pos[i]);
                depth[i] += 1;
                pos[i] = paths[i][depth[i]];
            }
            Move::Stop(s) => {
                if s.iter().any(|i| i >= n || !chains[i].is_leaf(pos[i])) || !c.feasible(s) {
                    return Err(Error::InfeasiblePlay);
                }
                let value = s.iter().map(|i| chains[i].value(pos[i]).unwrap_or(0.0)).sum();
                return Ok(Outcome {
                    cost,
                    value,
                    accepted: s,
                    pos,
                });
            }
        }
    }
    Err(Error::Unsupported("policy advanced past every leaf".into()))
}

#[derive(Clone)]
struct Acc {
    utility: f64,
    cost: f64,
    value: f64,
    sq: f64,
    accept: Vec<f64>,
    leaf: Vec<Vec<f64>>,
}

impl Acc {
    fn new(chains: &[MarkovChainTree]) -> Self {
        Acc {
            utility: 0.0,
            cost: 0.0,
            value: 0.0,
            sq: 0.0,
            accept: vec![0.0; chains.len()],
            leaf: chains.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    fn record(&mut self, p: f64, o: &Outcome) {
        let u = o.value - o.cost;
        self.utility += p * u;
        self.sq += p * u * u;
        self.cost += p * o.cost;
        self.value += p * o.value;
        for i in o.accepted.iter() {
            self.accept[i] += p;
            self.leaf[i][o.pos[i]] += p;
        }
    }

    fn merge(&mut self, b: Acc) {
        self.utility += b.utility;
        self.cost += b.cost;
        self.value += b.value;
        self.sq += b.sq;
        self.accept.iter_mut().zip(&b.accept).for_each(|(x, y)| *x += y);
        for (x, y) in self.leaf.iter_mut().zip(&b.leaf) {
            x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
        }
    }

    fn finish(self, method: Method) -> PolicyEvaluation {
        PolicyEvaluation {
            expected_utility: self.utility,
            expected_cost: self.cost,
            expected_value: self.value,
            accept_probs: self.accept,
            method,
            leaf_accept: self.leaf,
        }
    }
}

/// Exact expectations by enumerating the product of root-leaf trajectories.
pub fn evaluate_policy_exact(
    c: &Constraint,
    chains: &[MarkovChainTree],
    factory: &PolicyFactory<'_>,
    exec: Exec,
) -> Result<PolicyEvaluation> {
    c.check_arity(chains.len())?;
    let tr = Trajectories::new(chains);
    let radices = tr.radices();
    let total: u128 = radices.iter().map(|&r| r as u128).product();
    guard("joint leaf product", total, PLAYOUT_LIMIT)?;
    let acc = fold_chunks(
        exec,
        total as usize,
        || Acc::new(chains),
        |acc, k| {
            let mut digits = vec![0; radices.len()];
            mixed_radix(k, &radices, &mut digits);
            let mut p = 1.0;
            let paths: Vec<&[usize]> = digits
                .iter()
                .enumerate()
                .map(|(i, &d)| {
                    p *= tr.probs[i][d];
                    tr.paths[i][d].as_slice()
                })
                .collect();
            let mut policy = factory();
            let o = play(policy.as_mut(), c, chains, &paths)?;
            acc.record(p, &o);
            Ok(())
        },
        |a, b| a.merge(b),
    )?;
    Ok(acc.finish(Method::Exact))
}

/// Sample-mean estimate; trial `t` draws from its own seeded stream.
pub fn evaluate_policy_monte_carlo(
    c: &Constraint,
    chains: &[MarkovChainTree],
    factory: &PolicyFactory<'_>,
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<PolicyEvaluation> {
    c.check_arity(chains.len())?;
    if trials == 0 {
        return Err(Error::invalid("/trials", "trials must be at least 1"));
    }
    let tr = Trajectories::new(chains);
    let leaf_ordinal: Vec<HashMap<usize, usize>> = chains
        .iter()
        .map(|t| t.leaves().enumerate().map(|(k, l)| (l, k)).collect())
        .collect();
    let w = 1.0 / trials as f64;
    let acc = fold_chunks(
        exec,
        trials,
        || Acc::new(chains),
        |acc, trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let paths: Vec<&[usize]> = chains
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let (leaf, _) = t.sample_walk(&mut rng);
                    tr.paths[i][leaf_ordinal[i][&leaf]].as_slice()
                })
                .collect();
            let mut policy = factory();
            let o = play(policy.as_mut(), c, chains, &paths)?;
            acc.record(w, &o);
            Ok(())
        },
        |a, b| a.merge(b),
    )?;
    let var = (acc.sq - acc.utility * acc.utility).max(0.0) * trials as f64 / (trials as f64 - 1.0).max(1.0);
    let stderr = (var / trials as f64).sqrt();
    Ok(acc.finish(Method::MonteCarlo { trials, stderr }))
}

/// Convex combination of exact evaluations.
pub fn evaluate_mixture_exact(
    c: &Constraint,
    chains: &[MarkovChainTree],
    components: &[(f64, &PolicyFactory<'_>)],
    exec: Exec,
) -> Result<PolicyEvaluation> {
    let mut out = PolicyEvaluation::zero(chains, Method::Exact);
    for (w, f) in components {
        if *w == 0.0 {
            continue;
        }
        out.add_scaled(&evaluate_policy_exact(c, chains, *f, exec)?, *w);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Concrete policies
// ---------------------------------------------------------------------------

/// Drives chain `i` while its index stays at or above the threshold that the
/// semi-online algorithm probes it with; success iff the reached leaf's
/// surrogate clears the threshold.
pub struct SemiOnlinePolicy<'a> {
    chains: &'a [MarkovChainTree],
    profiles: &'a [SurrogateProfile],
    alg: Box<dyn SemiOnline + Send>,
    probe: Option<(usize, f64)>,
}

impl<'a> SemiOnlinePolicy<'a> {
    pub fn new(
        chains: &'a [MarkovChainTree],
        profiles: &'a [SurrogateProfile],
        alg: Box<dyn SemiOnline + Send>,
    ) -> Self {
        SemiOnlinePolicy {
            chains,
            profiles,
            alg,
            probe: None,
        }
    }
}

impl ChainPolicy for SemiOnlinePolicy<'_> {
    fn decide(&mut self, pos: &[usize]) -> Result<Move> {
        loop {
            if let Some((i, tau)) = self.probe {
                let n = *pos.get(i).ok_or(Error::IndexOutOfRange { index: i, n: pos.len() })?;
                if self.chains[i].is_leaf(n) {
                    let w = self.profiles[i].w[n].expect("leaves carry a surrogate");
                    self.alg.feedback(w >= tau);
                    self.probe = None;
                } else if self.profiles[i].g[n] >= tau {
                    return Ok(Move::Advance(i));
                } else {
                    self.alg.feedback(false);
                    self.probe = None;
                }
                continue;
            }
            match self.alg.next() {
                crate::selection::Probe::Halt => return Ok(Move::Stop(self.alg.accepted())),
                crate::selection::Probe::Probe { i, tau } => self.probe = Some((i, tau)),
            }
        }
    }
}

/// Advances every chain to a leaf, then accepts all of them or the best
/// feasible subset.
pub struct FullAdvance<'a> {
    chains: &'a [MarkovChainTree],
    c: &'a Constraint,
    accept_all: bool,
}

impl<'a> FullAdvance<'a> {
    pub fn new(chains: &'a [MarkovChainTree], c: &'a Constraint, accept_all: bool) -> Self {
        FullAdvance { chains, c, accept_all }
    }
}

impl ChainPolicy for FullAdvance<'_> {
    fn decide(&mut self, pos: &[usize]) -> Result<Move> {
        if let Some(i) = (0..pos.len()).find(|&i| !self.chains[i].is_leaf(pos[i])) {
            return Ok(Move::Advance(i));
        }
        if self.accept_all {
            return Ok(Move::Stop(Subset::full(pos.len())));
        }
        let values: Vec<f64> = (0..pos.len())
            .map(|i| self.chains[i].value(pos[i]).unwrap_or(0.0))
            .collect();
        let sets = feasible_sets(self.c, pos.len())?;
        Ok(Move::Stop(crate::selection::best_feasible(&sets, &values).0))
    }
}

/// Per-chain thresholds: in index order, advance chain `i` while its index is
/// at least `theta_i`; then accept its leaf if the surrogate clears
/// `theta_i` and the set stays feasible.
pub struct ThresholdPolicy<'a> {
    chains: &'a [MarkovChainTree],
    profiles: &'a [SurrogateProfile],
    c: &'a Constraint,
    thetas: Vec<f64>,
    next: usize,
    s: Subset,
}

impl<'a> ThresholdPolicy<'a> {
    pub fn new(
        chains: &'a [MarkovChainTree],
        profiles: &'a [SurrogateProfile],
        c: &'a Constraint,
        thetas: Vec<f64>,
    ) -> Self {
        ThresholdPolicy {
            chains,
            profiles,
            c,
            thetas,
            next: 0,
            s: Subset::EMPTY,
        }
    }
}

impl ChainPolicy for ThresholdPolicy<'_> {
    fn decide(&mut self, pos: &[usize]) -> Result<Move> {
        while self.next < pos.len() {
            let i = self.next;
            let n = pos[i];
            let theta = self.thetas[i];
            if !self.chains[i].is_leaf(n) {
                if self.profiles[i].g[n] >= theta && self.c.feasible(self.s.with(i)) {
                    return Ok(Move::Advance(i));
                }
            } else if self.profiles[i].w[n].is_some_and(|w| w >= theta) && self.c.feasible(self.s.with(i)) {
                self.s = self.s.with(i);
            }
            self.next += 1;
        }
        Ok(Move::Stop(self.s))
    }
}

/// Exact utility of the policy driven by `alg` and the exact value of `alg`
/// on the surrogate product.
pub fn evaluate_semi_online_policy(
    c: &Constraint,
    chains: &[MarkovChainTree],
    profiles: &[SurrogateProfile],
    alg: &SemiOnlineMixture,
    exec: Exec,
) -> Result<(PolicyEvaluation, f64)> {
    let dists: Vec<DiscreteDist> = profiles.iter().map(|p| p.dist.clone()).collect();
    let mut out = PolicyEvaluation::zero(chains, Method::Exact);
    for (w, spec) in &alg.components {
        let factory = || -> Box<dyn ChainPolicy + '_> {
            Box::new(SemiOnlinePolicy::new(chains, profiles, spec.instantiate(c, &dists)))
        };
        out.add_scaled(&evaluate_policy_exact(c, chains, &factory, exec)?, *w);
    }
    let bcs = evaluate_semi_online(alg, c, &dists, exec)?.value;
    Ok((out, bcs))
}

// ---------------------------------------------------------------------------
// Exact optimum oracles
// ---------------------------------------------------------------------------

struct Dp<'a> {
    mdps: &'a [Mdp],
    sign: f64,
    /// Exact number of acceptances (minimisation) or none.
    exact_k: Option<usize>,
    sets: Vec<Subset>,
    memo: HashMap<Vec<u32>, f64>,
}

impl Dp<'_> {
    fn halt(&self, state: &[u32]) -> f64 {
        let mut terminal = Subset::EMPTY;
        let mut vals = vec![0.0; state.len()];
        for (i, &s) in state.iter().enumerate() {
            if let StateDef::Terminal { value } = self.mdps[i].state(s as usize) {
                terminal = terminal.with(i);
                vals[i] = self.sign * value;
            }
        }
        let mut best = if self.exact_k.is_some() { f64::NEG_INFINITY } else { 0.0 };
        for &s in &self.sets {
            if !s.is_subset_of(terminal) || self.exact_k.is_some_and(|k| s.len() != k) {
                continue;
            }
            best = best.max(s.iter().map(|i| vals[i]).sum());
        }
        best
    }

    fn value(&mut self, state: &mut Vec<u32>) -> f64 {
        if let Some(&v) = self.memo.get(state.as_slice()) {
            return v;
        }
        let mut best = self.halt(state);
        for i in 0..state.len() {
            let s = state[i] as usize;
            let StateDef::Internal { actions } = self.mdps[i].state(s) else {
                continue;
            };
            for a in actions {
                let mut v = -a.cost;
                for &(to, p) in &a.transitions {
                    state[i] = to as u32;
                    v += p * self.value(state);
                }
                state[i] = s as u32;
                best = best.max(v);
            }
        }
        self.memo.insert(state.clone(), best);
        best
    }
}

fn exact_k(c: &Constraint) -> Result<usize> {
    match c {
        Constraint::SingleSelection => Ok(1),
        Constraint::UniformMatroid { k } => Ok(*k),
        other => Err(Error::Unsupported(format!(
            "minimisation needs single or uniform constraints, not {}",
            other.kind_name()
        ))),
    }
}

fn solve_dp(c: &Constraint, mdps: &[Mdp], objective: Objective) -> Result<f64> {
    c.check_arity(mdps.len())?;
    let states: u128 = mdps.iter().map(|m| m.num_states() as u128).product();
    guard("joint state space", states, DP_STATE_LIMIT)?;
    let (sign, k) = match objective {
        Objective::Max => (1.0, None),
        Objective::Min => (-1.0, Some(exact_k(c)?)),
    };
    let mut dp = Dp {
        mdps,
        sign,
        exact_k: k,
        sets: feasible_sets(c, mdps.len())?,
        memo: HashMap::new(),
    };
    let mut root: Vec<u32> = mdps.iter().map(|m| m.root() as u32).collect();
    let v = dp.value(&mut root);
    if v == f64::NEG_INFINITY {
        return Err(Error::Unsupported("no feasible acceptance of the required size".into()));
    }
    Ok(sign * v)
}

/// Optimal utility (or cost, for minimisation) over all adaptive policies.
pub fn optimal_cics_dp(inst: &CicsInstance) -> Result<f64> {
    solve_dp(&inst.constraint, &inst.mdps, inst.objective)
}

/// Optimal utility over Markov chains.
pub fn optimal_mc_cics_dp(c: &Constraint, chains: &[MarkovChainTree], objective: Objective) -> Result<f64> {
    let mdps: Vec<Mdp> = chains.iter().map(|t| t.to_mdp()).collect();
    solve_dp(c, &mdps, objective)
}

/// Best committing policy: every joint deterministic commitment, each solved
/// as a Markov-chain instance.
pub fn optimal_committing_dp(inst: &CicsInstance, exec: Exec) -> Result<f64> {
    let per: Vec<Vec<crate::chains::Commitment>> = inst
        .mdps
        .iter()
        .map(|m| m.deterministic_commitments(COMMITMENT_LIMIT))
        .collect::<Result<_>>()?;
    let radices: Vec<usize> = per.iter().map(|p| p.len()).collect();
    let total: u128 = radices.iter().map(|&r| r as u128).product();
    guard("joint deterministic commitments", total, COMMITMENT_LIMIT)?;
    let better = |a: f64, b: f64| match inst.objective {
        Objective::Max => a.max(b),
        Objective::Min => a.min(b),
    };
    let worst = match inst.objective {
        Objective::Max => f64::NEG_INFINITY,
        Objective::Min => f64::INFINITY,
    };
    fold_chunks(
        exec,
        total as usize,
        || worst,
        |acc, k| {
            let mut digits = vec![0; radices.len()];
            mixed_radix(k, &radices, &mut digits);
            let chains: Vec<Mdp> = digits
                .iter()
                .enumerate()
                .map(|(i, &d)| inst.mdps[i].apply_commitment(&per[i][d]))
                .collect::<Result<_>>()?;
            *acc = better(*acc, solve_dp(&inst.constraint, &chains, inst.objective)?);
            Ok(())
        },
        |a, b| *a = better(*a, b),
    )
}

// ---------------------------------------------------------------------------
// Pipeline and gap report
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct PipelineResult {
    pub ex_ante: ExAnteCicsResult,
    #[serde(skip)]
    pub chains: Vec<MarkovChainTree>,
    #[serde(skip)]
    pub profiles: Vec<SurrogateProfile>,
    pub rule: FrugalRule,
    /// Exact value of the semi-online algorithm on the surrogate product.
    pub bcs_value: f64,
    pub evaluation: PolicyEvaluation,
}

/// Ex-ante commitments, committed chains, surrogates, and the exactly
/// evaluated frugal semi-online policy over them (maximisation only).
pub fn committing_pipeline(inst: &CicsInstance, exec: Exec) -> Result<PipelineResult> {
    if inst.objective != Objective::Max {
        return Err(Error::Unsupported(
            "the committing pipeline is maximisation-only".into(),
        ));
    }
    let ex_ante = ex_ante_opt_cics(&inst.constraint, &inst.mdps, Objective::Max, exec)?;
    let chains: Vec<MarkovChainTree> = (0..inst.mdps.len())
        .map(|i| ex_ante.committed_chain(i))
        .collect::<Result<_>>()?;
    let profiles: Vec<SurrogateProfile> = chains.iter().map(surrogate_values).collect::<Result<_>>()?;
    let rule = FrugalRule::for_constraint(&inst.constraint)?;
    let alg = semi_online_from_frugal(&rule);
    let (evaluation, bcs_value) = evaluate_semi_online_policy(&inst.constraint, &chains, &profiles, &alg, exec)?;
    Ok(PipelineResult {
        ex_ante,
        chains,
        profiles,
        rule,
        bcs_value,
        evaluation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    pub objective: Objective,
    pub opt: f64,
    pub committing_opt: f64,
    pub ex_ante: f64,
    /// `None` for minimisation, where the pipeline is not defined.
    pub pipeline_value: Option<f64>,
    pub com_gap: f64,
}

/// Commitment gap as a ratio `>= 1`: `opt / committing` for maximisation,
/// `committing / opt` for minimisation.
pub fn commitment_gap(objective: Objective, opt: f64, committing: f64) -> f64 {
    let (num, den) = match objective {
        Objective::Max => (opt, committing),
        Objective::Min => (committing, opt),
    };
    if num == den {
        1.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

pub fn commitment_gap_empirical(inst: &CicsInstance, exec: Exec) -> Result<GapReport> {
    let opt = optimal_cics_dp(inst)?;
    let committing_opt = optimal_committing_dp(inst, exec)?;
    let ex_ante = ex_ante_opt_cics(&inst.constraint, &inst.mdps, inst.objective, exec)?.value;
    let pipeline_value = match inst.objective {
        Objective::Max => Some(committing_pipeline(inst, exec)?.evaluation.expected_utility),
        Objective::Min => None,
    };
    Ok(GapReport {
        objective: inst.objective,
        opt,
        committing_opt,
        ex_ante,
        pipeline_value,
        com_gap: commitment_gap(inst.objective, opt, committing_opt),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amortize::surrogate_values;
    use crate::chains::RawMdp;
    use crate::selection::AlgorithmSpec;
    use approx::assert_abs_diff_eq;

    fn mdp(json: &str) -> Mdp {
        let raw: RawMdp = serde_json::from_str(json).unwrap();
        Mdp::from_raw(&raw, "").unwrap()
    }

    fn weitzman() -> Mdp {
        mdp(
            r#"{"root":"s","states":{"s":{"actions":[{"cost":0.5,"transitions":[{"to":"a","p":0.5},{"to":"b","p":0.5}]}]},
            "a":{"terminal":true,"value":2.0},"b":{"terminal":true,"value":0.0}}}"#,
        )
    }

    #[test]
    fn tb_on_weitzman() {
        let chains = vec![weitzman().unroll_chain(64).unwrap()];
        let profiles = vec![surrogate_values(&chains[0]).unwrap()];
        let c = Constraint::SingleSelection;
        let alg = semi_online_from_frugal(&FrugalRule::greedy_matroid());
        let (ev, bcs) = evaluate_semi_online_policy(&c, &chains, &profiles, &alg, Exec::Sequential).unwrap();
        assert_abs_diff_eq!(ev.expected_utility, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(bcs, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ev.accept_probs[0], 0.5, epsilon = 1e-12);
        let leaf2 = chains[0].leaves().find(|&l| chains[0].value(l) == Some(2.0)).unwrap();
        assert_abs_diff_eq!(ev.leaf_accept[0][leaf2], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn full_advance_equals_walk() {
        let chains = vec![weitzman().unroll_chain(64).unwrap()];
        let c = Constraint::SingleSelection;
        let f = || -> Box<dyn ChainPolicy + '_> { Box::new(FullAdvance::new(&chains, &c, true)) };
        let ev = evaluate_policy_exact(&c, &chains, &f, Exec::Sequential).unwrap();
        let (v, cost) = chains[0].expected_full_walk();
        assert_abs_diff_eq!(ev.expected_utility, v - cost, epsilon = 1e-12);
        let mc = evaluate_policy_monte_carlo(&c, &chains, &f, 100_000, 7, Exec::Parallel).unwrap();
        let Method::MonteCarlo { stderr, .. } = mc.method else {
            panic!()
        };
        assert!((mc.expected_utility - ev.expected_utility).abs() <= 3.0 * stderr);
        let again = evaluate_policy_monte_carlo(&c, &chains, &f, 100_000, 7, Exec::Sequential).unwrap();
        assert_eq!(mc.expected_utility, again.expected_utility);
    }

    #[test]
    fn deterministic_chains_reduce_to_frugal() {
        let chains: Vec<MarkovChainTree> = [3.0, 1.0, 2.0].iter().map(|&v| MarkovChainTree::leaf(v)).collect();
        let profiles: Vec<SurrogateProfile> = chains.iter().map(|t| surrogate_values(t).unwrap()).collect();
        let c = Constraint::UniformMatroid { k: 2 };
        let alg = semi_online_from_frugal(&FrugalRule::greedy_matroid());
        let (ev, _) = evaluate_semi_online_policy(&c, &chains, &profiles, &alg, Exec::Sequential).unwrap();
        assert_eq!(ev.expected_utility, 5.0);
        assert_eq!(ev.accept_probs, vec![1.0, 0.0, 1.0]);
    }

    pub(crate) fn min_example(n: f64) -> CicsInstance {
        let p = 1.0 / (n + 1.0);
        let q = 1.0 / (2.0 * n);
        let m1 = mdp(&format!(
            r#"{{"root":"r","states":{{"r":{{"actions":[{{"cost":0,"transitions":[{{"to":"inf","p":{p}}},{{"to":"one","p":{}}}]}}]}},
            "inf":{{"terminal":true,"value":1e6}},"one":{{"terminal":true,"value":1}}}}}}"#,
            1.0 - p
        ));
        let m2 = mdp(&format!(
            r#"{{"root":"r","states":{{"r":{{"actions":[
                {{"cost":0,"transitions":[{{"to":"one","p":1}}]}},
                {{"cost":0,"transitions":[{{"to":"big","p":{q}}},{{"to":"small","p":{}}}]}}]}},
            "one":{{"terminal":true,"value":1}},"big":{{"terminal":true,"value":{}}},"small":{{"terminal":true,"value":{}}}}}}}"#,
            1.0 - q,
            2.0 * n * n - 1.0,
            1.0 / (2.0 * n - 1.0)
        ));
        CicsInstance::new(Constraint::SingleSelection, vec![m1, m2], Objective::Min).unwrap()
    }

    #[test]
    fn min_example_oracles() {
        for n in [2.0, 3.0, 10.0] {
            let inst = min_example(n);
            assert_abs_diff_eq!(optimal_cics_dp(&inst).unwrap(), 2.0 / (n + 1.0), epsilon = 1e-9);
            assert_abs_diff_eq!(
                optimal_committing_dp(&inst, Exec::Sequential).unwrap(),
                1.0,
                epsilon = 1e-9
            );
        }
        let g = commitment_gap_empirical(&min_example(3.0), Exec::Sequential).unwrap();
        assert_abs_diff_eq!(g.com_gap, 2.0, epsilon = 1e-9);
        assert_eq!(g.pipeline_value, None);
        assert_abs_diff_eq!(g.ex_ante, 1.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn min_example_randomised_commitment() {
        let inst = min_example(3.0);
        for lambda in [0.25, 0.5, 0.75] {
            let mut per = std::collections::BTreeMap::new();
            per.insert("r".to_string(), vec![lambda, 1.0 - lambda]);
            let m2 = inst.mdps[1]
                .apply_commitment(&crate::chains::Commitment { per_state: per })
                .unwrap();
            let v = solve_dp(&inst.constraint, &[inst.mdps[0].clone(), m2], Objective::Min).unwrap();
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn min_example_induced_chains_cost() {
        let inst = min_example(3.0);
        let ex = ex_ante_opt_cics(&inst.constraint, &inst.mdps, Objective::Min, Exec::Sequential).unwrap();
        // Committed chains already carry negated values; greedy must fill exactly one slot.
        let chains: Vec<MarkovChainTree> = (0..2).map(|i| ex.committed_chain(i).unwrap()).collect();
        let profiles: Vec<SurrogateProfile> = chains.iter().map(|t| surrogate_values(t).unwrap()).collect();
        let alg = semi_online_from_frugal(&FrugalRule::greedy_fill());
        let (ev, bcs) =
            evaluate_semi_online_policy(&inst.constraint, &chains, &profiles, &alg, Exec::Sequential).unwrap();
        assert_abs_diff_eq!(-ev.expected_utility, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(-bcs, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn mc_instance_has_unit_gap() {
        let inst = CicsInstance::new(Constraint::SingleSelection, vec![weitzman()], Objective::Max).unwrap();
        let g = commitment_gap_empirical(&inst, Exec::Sequential).unwrap();
        assert_abs_diff_eq!(g.opt, 0.5, epsilon = 1e-12);
        assert_eq!(g.com_gap, 1.0);
        assert_abs_diff_eq!(g.pipeline_value.unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g.ex_ante, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn pipeline_accepts_nothing() {
        let m = mdp(r#"{"root":"t","states":{"t":{"terminal":true,"value":-1}}}"#);
        let inst = CicsInstance::new(Constraint::SingleSelection, vec![m], Objective::Max).unwrap();
        let r = committing_pipeline(&inst, Exec::Sequential).unwrap();
        assert_eq!(r.evaluation.expected_utility, 0.0);
    }

    #[test]
    fn free_order_policy_is_feasible() {
        let chains: Vec<MarkovChainTree> = vec![weitzman().unroll_chain(64).unwrap(); 2];
        let profiles: Vec<SurrogateProfile> = chains.iter().map(|t| surrogate_values(t).unwrap()).collect();
        let alg = SemiOnlineMixture {
            components: vec![(
                1.0,
                AlgorithmSpec::FreeOrder {
                    order: vec![1, 0],
                    thresholds: vec![0.5, 0.5],
                },
            )],
        };
        let (ev, bcs) =
            evaluate_semi_online_policy(&Constraint::SingleSelection, &chains, &profiles, &alg, Exec::Sequential)
                .unwrap();
        assert_abs_diff_eq!(ev.expected_utility, bcs, epsilon = 1e-12);
        assert_abs_diff_eq!(bcs, 0.75, epsilon = 1e-12);
    }
}
