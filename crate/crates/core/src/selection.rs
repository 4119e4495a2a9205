//! Bayesian combinatorial selection: frugal index rules, semi-online
//! probing engines, and exact benchmarks by outcome enumeration.

use serde::Serialize;

use crate::constraints::{Constraint, Subset};
use crate::dist::DiscreteDist;
use crate::error::{guard, Error, Result};
use crate::par::{fold_chunks, mixed_radix, Exec};

/// Largest outcome product enumerated exactly.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// A deterministic index rule `g(i, S, y)`, non-decreasing in `y`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DeterministicRule {
    /// `g = y`: plain greedy by value.
    GreedyValue,
    /// `g = y / size_i`: density order, skipping items that no longer fit.
    DensitySkip { sizes: Vec<f64> },
    /// `g = y` while nothing is selected: the best single item.
    BestSingle,
}

impl DeterministicRule {
    pub fn index(&self, s: Subset, i: usize, y: f64) -> f64 {
        match self {
            DeterministicRule::GreedyValue => y,
            DeterministicRule::DensitySkip { sizes } => y / sizes[i],
            DeterministicRule::BestSingle => {
                if s.is_empty() {
                    y
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// A randomised frugal algorithm: a mixture of deterministic index rules.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrugalRule {
    pub components: Vec<(f64, DeterministicRule)>,
    /// Claimed frugality: `E[value] >= OPT / beta` on every realisation.
    pub beta: f64,
    /// Keep selecting while an extension exists, even at non-positive index
    /// (used for exact-k minimisation on negated values).
    pub fill: bool,
}

impl FrugalRule {
    pub fn greedy_matroid() -> Self {
        FrugalRule {
            components: vec![(1.0, DeterministicRule::GreedyValue)],
            beta: 1.0,
            fill: false,
        }
    }

    pub fn greedy_k_system(k: usize) -> Self {
        FrugalRule {
            beta: k as f64,
            ..Self::greedy_matroid()
        }
    }

    pub fn knapsack_mixture(sizes: &[f64]) -> Result<Self> {
        if sizes.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("/constraint/sizes", "sizes must be positive"));
        }
        Ok(FrugalRule {
            components: vec![
                (0.5, DeterministicRule::DensitySkip { sizes: sizes.to_vec() }),
                (0.5, DeterministicRule::BestSingle),
            ],
            beta: 2.0,
            fill: false,
        })
    }

    /// Greedy that always selects a maximal feasible set.
    pub fn greedy_fill() -> Self {
        FrugalRule {
            fill: true,
            ..Self::greedy_matroid()
        }
    }

    /// The default rule for a constraint kind.
    pub fn for_constraint(c: &Constraint) -> Result<Self> {
        Ok(match c {
            Constraint::Knapsack { sizes } => Self::knapsack_mixture(sizes)?,
            Constraint::KSystem { k, .. } => Self::greedy_k_system(*k),
            Constraint::ExplicitFamily { .. } => {
                if c.is_matroid().unwrap_or(false) {
                    Self::greedy_matroid()
                } else {
                    // Any downward-closed family on n elements is an n-system.
                    Self::greedy_k_system(explicit_k(c))
                }
            }
            _ => Self::greedy_matroid(),
        })
    }

    fn check(&self, n: usize) -> Result<()> {
        let total: f64 = self.components.iter().map(|c| c.0).sum();
        if self.components.is_empty() || self.components.iter().any(|c| !(c.0 >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::BadWeights(total));
        }
        for (_, r) in &self.components {
            if let DeterministicRule::DensitySkip { sizes } = r {
                if sizes.len() != n {
                    return Err(Error::ArityMismatch {
                        expected: n,
                        found: sizes.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn explicit_k(c: &Constraint) -> usize {
    match c {
        Constraint::ExplicitFamily { maximal } => maximal.iter().map(|m| m.len()).max().unwrap_or(1).max(1),
        _ => 1,
    }
}

/// The element `rule` would add next to `s` given values `y`, if any.
fn next_pick(rule: &DeterministicRule, fill: bool, c: &Constraint, s: Subset, y: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, yi) in y.iter().enumerate() {
        let Some(yi) = *yi else { continue };
        if s.contains(i) || !c.feasible(s.with(i)) {
            continue;
        }
        let g = rule.index(s, i, yi);
        if g == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|(_, bg)| g > bg) {
            best = Some((i, g));
        }
    }
    match best {
        Some((i, g)) if fill || g > 0.0 => Some(i),
        _ => None,
    }
}

/// The frugal greedy loop on a known realisation.
pub fn run_deterministic(rule: &DeterministicRule, fill: bool, c: &Constraint, x: &[f64]) -> Subset {
    let y: Vec<Option<f64>> = x.iter().map(|&v| Some(v)).collect();
    let mut s = Subset::EMPTY;
    while let Some(i) = next_pick(rule, fill, c, s, &y) {
        s = s.with(i);
    }
    s
}

/// Component-wise selections and the expected value of a frugal rule on `x`.
pub fn run_frugal(rule: &FrugalRule, c: &Constraint, x: &[f64]) -> Result<(Vec<Subset>, f64)> {
    rule.check(x.len())?;
    let sets: Vec<Subset> = rule
        .components
        .iter()
        .map(|(_, r)| run_deterministic(r, rule.fill, c, x))
        .collect();
    let value = rule
        .components
        .iter()
        .zip(&sets)
        .map(|((w, _), s)| w * s.iter().map(|i| x[i]).sum::<f64>())
        .sum();
    Ok((sets, value))
}

// ---------------------------------------------------------------------------
// Semi-online algorithms
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Probe {
    Probe { i: usize, tau: f64 },
    Halt,
}

/// Probes `x_i >= tau`, learns only the outcome, and must accept on success.
pub trait SemiOnline {
    fn next(&mut self) -> Probe;
    fn feedback(&mut self, accepted: bool);
    fn accepted(&self) -> Subset;
}

/// Semi-online engine driven by a deterministic frugal rule: probe the
/// element the rule would take first on the current upper bounds, at its
/// upper bound; on failure condition the distribution below it.
pub struct FrugalEngine {
    rule: DeterministicRule,
    fill: bool,
    c: Constraint,
    dists: Vec<Option<DiscreteDist>>,
    s: Subset,
    pending: Option<(usize, f64)>,
}

impl FrugalEngine {
    pub fn new(rule: DeterministicRule, fill: bool, c: &Constraint, dists: &[DiscreteDist]) -> Self {
        FrugalEngine {
            rule,
            fill,
            c: c.clone(),
            dists: dists.iter().cloned().map(Some).collect(),
            s: Subset::EMPTY,
            pending: None,
        }
    }
}

impl SemiOnline for FrugalEngine {
    fn next(&mut self) -> Probe {
        let u: Vec<Option<f64>> = self.dists.iter().map(|d| d.as_ref().map(|d| d.max_support())).collect();
        match next_pick(&self.rule, self.fill, &self.c, self.s, &u) {
            Some(i) => {
                assert!(self.c.feasible(self.s.with(i)), "probe would break feasibility");
                let tau = u[i].expect("picked elements are active");
                self.pending = Some((i, tau));
                Probe::Probe { i, tau }
            }
            None => Probe::Halt,
        }
    }

    fn feedback(&mut self, accepted: bool) {
        let (i, tau) = self.pending.take().expect("feedback without a probe");
        if accepted {
            self.s = self.s.with(i);
            self.dists[i] = None;
        } else {
            self.dists[i] = self.dists[i].as_ref().and_then(|d| d.condition_below(tau));
        }
    }

    fn accepted(&self) -> Subset {
        self.s
    }
}

/// Free-order single-threshold algorithm: each element is probed at most once.
pub struct FreeOrderThreshold {
    order: Vec<usize>,
    thresholds: Vec<f64>,
    c: Constraint,
    pos: usize,
    s: Subset,
    probed: Subset,
    pending: Option<usize>,
}

impl FreeOrderThreshold {
    pub fn new(order: Vec<usize>, thresholds: Vec<f64>, c: &Constraint) -> Self {
        FreeOrderThreshold {
            order,
            thresholds,
            c: c.clone(),
            pos: 0,
            s: Subset::EMPTY,
            probed: Subset::EMPTY,
            pending: None,
        }
    }
}

impl SemiOnline for FreeOrderThreshold {
    fn next(&mut self) -> Probe {
        while self.pos < self.order.len() {
            let i = self.order[self.pos];
            self.pos += 1;
            if self.probed.contains(i) || !self.c.feasible(self.s.with(i)) {
                continue;
            }
            self.probed = self.probed.with(i);
            self.pending = Some(i);
            return Probe::Probe {
                i,
                tau: self.thresholds[i],
            };
        }
        Probe::Halt
    }

    fn feedback(&mut self, accepted: bool) {
        let i = self.pending.take().expect("feedback without a probe");
        if accepted {
            self.s = self.s.with(i);
        }
    }

    fn accepted(&self) -> Subset {
        self.s
    }
}

/// A buildable description of a deterministic semi-online algorithm.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Frugal { rule: DeterministicRule, fill: bool },
    FreeOrder { order: Vec<usize>, thresholds: Vec<f64> },
}

impl AlgorithmSpec {
    pub fn instantiate(&self, c: &Constraint, dists: &[DiscreteDist]) -> Box<dyn SemiOnline + Send> {
        match self {
            AlgorithmSpec::Frugal { rule, fill } => Box::new(FrugalEngine::new(rule.clone(), *fill, c, dists)),
            AlgorithmSpec::FreeOrder { order, thresholds } => {
                Box::new(FreeOrderThreshold::new(order.clone(), thresholds.clone(), c))
            }
        }
    }
}

/// A randomised semi-online algorithm: weights over deterministic components.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemiOnlineMixture {
    pub components: Vec<(f64, AlgorithmSpec)>,
}

/// The semi-online algorithm built from a frugal rule, component by component.
pub fn semi_online_from_frugal(rule: &FrugalRule) -> SemiOnlineMixture {
    SemiOnlineMixture {
        components: rule
            .components
            .iter()
            .map(|(w, r)| {
                (
                    *w,
                    AlgorithmSpec::Frugal {
                        rule: r.clone(),
                        fill: rule.fill,
                    },
                )
            })
            .collect(),
    }
}

pub fn free_order_threshold(order: Vec<usize>, thresholds: Vec<f64>) -> SemiOnlineMixture {
    SemiOnlineMixture {
        components: vec![(1.0, AlgorithmSpec::FreeOrder { order, thresholds })],
    }
}

/// Drives `alg` with feedback derived from the realisation `x`.
pub fn run_semi_online_on_realization(alg: &mut dyn SemiOnline, c: &Constraint, x: &[f64]) -> Result<Subset> {
    let mut steps = 0usize;
    loop {
        match alg.next() {
            Probe::Halt => return Ok(alg.accepted()),
            Probe::Probe { i, tau } => {
                if i >= x.len() {
                    return Err(Error::IndexOutOfRange { index: i, n: x.len() });
                }
                if !c.feasible(alg.accepted().with(i)) {
                    return Err(Error::InfeasiblePlay);
                }
                alg.feedback(x[i] >= tau);
            }
        }
        steps += 1;
        if steps > 1_000_000 {
            return Err(Error::Unsupported("semi-online algorithm does not halt".into()));
        }
    }
}

// ---------------------------------------------------------------------------
// Exact enumeration
// ---------------------------------------------------------------------------

/// The product of finite supports, indexable by a flat outcome number.
pub struct Outcomes<'a> {
    dists: &'a [DiscreteDist],
    radices: Vec<usize>,
    pub count: usize,
}

impl<'a> Outcomes<'a> {
    pub fn new(dists: &'a [DiscreteDist], limit: u128) -> Result<Self> {
        let radices: Vec<usize> = dists.iter().map(|d| d.len()).collect();
        let total: u128 = radices.iter().map(|&r| r as u128).product();
        guard("outcome product", total, limit)?;
        Ok(Outcomes {
            dists,
            radices,
            count: total as usize,
        })
    }

    /// Writes outcome `k` into `x` and returns its probability.
    pub fn get(&self, k: usize, digits: &mut [usize], x: &mut [f64]) -> f64 {
        mixed_radix(k, &self.radices, digits);
        let mut p = 1.0;
        for (i, &d) in digits.iter().enumerate() {
            let (v, pi) = self.dists[i].atoms()[d];
            x[i] = v;
            p *= pi;
        }
        p
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BcsEvaluation {
    pub value: f64,
    pub accept_probs: Vec<f64>,
}

/// Exact expected value of a (mixed) semi-online algorithm over the product of `dists`.
pub fn evaluate_semi_online(
    alg: &SemiOnlineMixture,
    c: &Constraint,
    dists: &[DiscreteDist],
    exec: Exec,
) -> Result<BcsEvaluation> {
    let n = dists.len();
    c.check_arity(n)?;
    let out = Outcomes::new(dists, ENUMERATION_LIMIT)?;
    let mut total = BcsEvaluation {
        value: 0.0,
        accept_probs: vec![0.0; n],
    };
    for (w, spec) in &alg.components {
        let part = fold_chunks(
            exec,
            out.count,
            || (0.0, vec![0.0; n]),
            |acc, k| {
                let mut digits = vec![0; n];
                let mut x = vec![0.0; n];
                let p = out.get(k, &mut digits, &mut x);
                let mut engine = spec.instantiate(c, dists);
                let s = run_semi_online_on_realization(engine.as_mut(), c, &x)?;
                for i in s.iter() {
                    acc.0 += p * x[i];
                    acc.1[i] += p;
                }
                Ok(())
            },
            |a, b| {
                a.0 += b.0;
                a.1.iter_mut().zip(&b.1).for_each(|(x, y)| *x += y);
            },
        )?;
        total.value += w * part.0;
        total
            .accept_probs
            .iter_mut()
            .zip(&part.1)
            .for_each(|(a, b)| *a += w * b);
    }
    Ok(total)
}

/// Every feasible subset of `[n]` (`n <= 20`).
pub fn feasible_sets(c: &Constraint, n: usize) -> Result<Vec<Subset>> {
    guard("feasible-set enumeration (elements)", n as u128, 20)?;
    Ok((0..1u64 << n).map(Subset).filter(|&s| c.feasible(s)).collect())
}

/// `max_{S in F} sum_{i in S} x_i` by enumeration over `sets`.
pub fn best_feasible(sets: &[Subset], x: &[f64]) -> (Subset, f64) {
    let mut best = (Subset::EMPTY, 0.0);
    for &s in sets {
        let v: f64 = s.iter().map(|i| x[i]).sum();
        if v > best.1 {
            best = (s, v);
        }
    }
    best
}

/// `E[max_{S in F} sum_{i in S} x_i]`.
pub fn ex_post_brute_force(c: &Constraint, dists: &[DiscreteDist], exec: Exec) -> Result<f64> {
    let n = dists.len();
    c.check_arity(n)?;
    let out = Outcomes::new(dists, ENUMERATION_LIMIT)?;
    let sets = feasible_sets(c, n)?;
    fold_chunks(
        exec,
        out.count,
        || 0.0,
        |acc, k| {
            let mut digits = vec![0; n];
            let mut x = vec![0.0; n];
            let p = out.get(k, &mut digits, &mut x);
            *acc += p * best_feasible(&sets, &x).1;
            Ok(())
        },
        |a, b| *a += b,
    )
}

/// `E[min over feasible sets of size exactly k of sum x_i]` (cost minimisation).
pub fn ex_post_min_exact_k(c: &Constraint, dists: &[DiscreteDist], k: usize, exec: Exec) -> Result<f64> {
    let n = dists.len();
    let out = Outcomes::new(dists, ENUMERATION_LIMIT)?;
    let sets: Vec<Subset> = feasible_sets(c, n)?.into_iter().filter(|s| s.len() == k).collect();
    if sets.is_empty() {
        return Err(Error::Unsupported(format!("no feasible set of size {k}")));
    }
    fold_chunks(
        exec,
        out.count,
        || 0.0,
        |acc, j| {
            let mut digits = vec![0; n];
            let mut x = vec![0.0; n];
            let p = out.get(j, &mut digits, &mut x);
            let best = sets
                .iter()
                .map(|s| s.iter().map(|i| x[i]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            *acc += p * best;
            Ok(())
        },
        |a, b| *a += b,
    )
}

/// Worst-case Bernoulli product with the same ex-ante value: `F_{D_i}(q_i)`
/// with probability `q_i`, zero otherwise.
pub fn bernoulli_reduction(dists: &[DiscreteDist], q: &[f64]) -> Result<Vec<DiscreteDist>> {
    if dists.len() != q.len() {
        return Err(Error::ArityMismatch {
            expected: dists.len(),
            found: q.len(),
        });
    }
    dists
        .iter()
        .zip(q)
        .map(|(d, &qi)| {
            if !(0.0..=1.0).contains(&qi) {
                return Err(Error::QuantileOutOfRange(qi));
            }
            if qi == 0.0 {
                return Ok(DiscreteDist::point(0.0));
            }
            DiscreteDist::bernoulli(d.top_quantile_mean(qi)?, qi)
        })
        .collect()
}
