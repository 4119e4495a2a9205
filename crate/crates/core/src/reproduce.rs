//! Built-in instances with closed-form values, and reproduction tables
//! comparing each closed form against the computed value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::amortize::{chain_from_distribution, surrogate_values, DEFAULT_EPSILON};
use crate::chains::{Mdp, RawMdp};
use crate::constraints::Constraint;
use crate::dist::DiscreteDist;
use crate::error::{Error, Result};
use crate::exante::{ex_ante_value_bcs, fill_exact, Objective};
use crate::instance::InstanceDoc;
use crate::par::Exec;
use crate::plc::PiecewiseLinear;
use crate::policies::{commitment_gap_empirical, committing_pipeline, CicsInstance};
use crate::selection::{
    evaluate_semi_online, ex_post_brute_force, ex_post_min_exact_k, semi_online_from_frugal, FrugalRule,
};

/// Stand-in for an infinite terminal cost.
pub const BIG: f64 = 1e6;

fn raw(json: &str) -> RawMdp {
    serde_json::from_str(json).expect("built-in MDP")
}

/// Two zero-cost MDPs under single selection (minimisation): a chain with
/// terminals `BIG` / 1, and a two-action MDP choosing between a sure 1 and a
/// gamble on `2N^2 - 1` / `1/(2N - 1)`.
pub fn min_example_doc(n: usize) -> Result<InstanceDoc> {
    if n < 2 {
        return Err(Error::invalid("/N", "N must be at least 2"));
    }
    let nf = n as f64;
    let p = 1.0 / (nf + 1.0);
    let q = 1.0 / (2.0 * nf);
    let m1 = raw(&format!(
        r#"{{"root":"r","states":{{"r":{{"actions":[{{"cost":0,"transitions":[{{"to":"inf","p":{p}}},{{"to":"one","p":{}}}]}}]}},
        "inf":{{"terminal":true,"value":{BIG}}},"one":{{"terminal":true,"value":1}}}}}}"#,
        1.0 - p
    ));
    let m2 = raw(&format!(
        r#"{{"root":"r","states":{{"r":{{"actions":[
            {{"cost":0,"transitions":[{{"to":"one","p":1}}]}},
            {{"cost":0,"transitions":[{{"to":"big","p":{q}}},{{"to":"small","p":{}}}]}}]}},
        "one":{{"terminal":true,"value":1}},"big":{{"terminal":true,"value":{}}},"small":{{"terminal":true,"value":{}}}}}}}"#,
        1.0 - q,
        2.0 * nf * nf - 1.0,
        1.0 / (2.0 * nf - 1.0)
    ));
    Ok(InstanceDoc {
        objective: Objective::Min,
        constraint: Constraint::SingleSelection,
        mdps: vec![m1, m2],
        dists: None,
    })
}

pub fn min_example(n: usize) -> Result<CicsInstance> {
    min_example_doc(n)?.load()?.cics()
}

/// The selection instance induced by committing the gamble: `X_1` and `X_2`.
pub fn min_example_bcs(n: usize) -> Vec<DiscreteDist> {
    let nf = n as f64;
    let p = 1.0 / (nf + 1.0);
    let q = 1.0 / (2.0 * nf);
    vec![
        DiscreteDist::normalize([(1.0, 1.0 - p), (BIG, p)]).expect("valid"),
        DiscreteDist::normalize([(1.0 / (2.0 * nf - 1.0), 1.0 - q), (2.0 * nf * nf - 1.0, q)]).expect("valid"),
    ]
}

/// `n` i.i.d. Bernoulli(1/n) values of 1 under single selection.
pub fn bernoulli_doc(n: usize) -> Result<InstanceDoc> {
    if n == 0 {
        return Err(Error::invalid("/n", "n must be positive"));
    }
    let d = DiscreteDist::bernoulli(1.0, 1.0 / n as f64)?;
    Ok(InstanceDoc {
        objective: Objective::Max,
        constraint: Constraint::SingleSelection,
        mdps: Vec::new(),
        dists: Some(vec![d; n]),
    })
}

/// One box: pay 0.5 to see 2 or 0 with equal odds.
pub fn weitzman_doc() -> InstanceDoc {
    InstanceDoc {
        objective: Objective::Max,
        constraint: Constraint::SingleSelection,
        mdps: vec![raw(
            r#"{"root":"s0","states":{"s0":{"actions":[{"cost":0.5,"transitions":[{"to":"t1","p":0.5},{"to":"t2","p":0.5}]}]},
            "t1":{"terminal":true,"value":2.0},"t2":{"terminal":true,"value":0.0}}}"#,
        )],
        dists: None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReproRow {
    pub quantity: String,
    pub expected: f64,
    pub computed: f64,
    pub error: f64,
}

fn row(quantity: &str, expected: f64, computed: f64) -> ReproRow {
    ReproRow {
        quantity: quantity.into(),
        expected,
        computed,
        error: (expected - computed).abs(),
    }
}

/// Exact ex-ante cost of a minimisation instance selecting exactly `k`.
pub fn ex_ante_min_cost(dists: &[DiscreteDist], k: usize) -> Result<f64> {
    let curves: Vec<PiecewiseLinear> = dists.iter().map(|d| d.negated().revenue_curve()).collect();
    Ok(-fill_exact(&curves, k as f64)?.value)
}

/// Expected cost of greedy semi-online selection of exactly one element.
pub fn semi_online_min_cost(c: &Constraint, dists: &[DiscreteDist], exec: Exec) -> Result<f64> {
    let neg: Vec<DiscreteDist> = dists.iter().map(|d| d.negated()).collect();
    let alg = semi_online_from_frugal(&FrugalRule::greedy_fill());
    Ok(-evaluate_semi_online(&alg, c, &neg, exec)?.value)
}

pub fn reproduce_min_example(n: usize, exec: Exec) -> Result<Vec<ReproRow>> {
    let inst = min_example(n)?;
    let gap = commitment_gap_empirical(&inst, exec)?;
    let nf = n as f64;
    let bcs = min_example_bcs(n);
    let c = Constraint::SingleSelection;
    Ok(vec![
        row("opt", 2.0 / (nf + 1.0), gap.opt),
        row("committing_opt", 1.0, gap.committing_opt),
        row("com_gap", (nf + 1.0) / 2.0, gap.com_gap),
        row("cics_ex_ante", 1.0 / nf, gap.ex_ante),
        row("bcs_ex_post", 1.0, ex_post_min_exact_k(&c, &bcs, 1, exec)?),
        row("bcs_semi_online", 1.0, semi_online_min_cost(&c, &bcs, exec)?),
        row("bcs_ex_ante", 1.0 / nf, ex_ante_min_cost(&bcs, 1)?),
    ])
}

pub fn reproduce_bernoulli(n: usize, exec: Exec) -> Result<Vec<ReproRow>> {
    let doc = bernoulli_doc(n)?;
    let dists = doc.dists.expect("bernoulli has dists");
    let c = doc.constraint;
    let expost = 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32);
    let ex_post = ex_post_brute_force(&c, &dists, exec)?;
    let ex_ante = ex_ante_value_bcs(&c, &dists)?.value;
    let alg = semi_online_from_frugal(&FrugalRule::greedy_matroid());
    Ok(vec![
        row("ex_post", expost, ex_post),
        row("ex_ante", 1.0, ex_ante),
        row("ratio", 1.0 / expost, ex_ante / ex_post),
        row(
            "semi_online",
            expost,
            evaluate_semi_online(&alg, &c, &dists, exec)?.value,
        ),
    ])
}

pub fn reproduce_weitzman(exec: Exec) -> Result<Vec<ReproRow>> {
    let inst = weitzman_doc().load()?.cics()?;
    let chain = inst.mdps[0].unroll_chain(crate::chains::DEFAULT_DEPTH_CAP)?;
    let prof = surrogate_values(&chain)?;
    let gap = commitment_gap_empirical(&inst, exec)?;
    let pipe = committing_pipeline(&inst, exec)?;
    Ok(vec![
        row("fair_index", 1.0, prof.tau[0].unwrap_or(f64::NAN)),
        row("surrogate_mean", 0.5, prof.dist.mean()),
        row("opt", 0.5, gap.opt),
        row("ex_ante", 0.5, gap.ex_ante),
        row("pipeline", 0.5, pipe.evaluation.expected_utility),
    ])
}

/// Largest value and probability errors of the chain round trip over
/// `trials` seeded distributions with `k` atoms.
pub fn md_roundtrip_errors(k: usize, trials: usize, seed: u64, eps: f64) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::invalid("/k", "k must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut ve, mut pe) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let d = crate::generate::random_dist(&mut rng, k, (-5.0, 5.0));
        let back = surrogate_values(&chain_from_distribution(&d, eps)?)?.dist;
        if back.len() != d.len() {
            return Ok((f64::INFINITY, f64::INFINITY));
        }
        for (&(v1, p1), &(v2, p2)) in d.atoms().iter().zip(back.atoms()) {
            ve = ve.max((v1 - v2).abs());
            pe = pe.max((p1 - p2).abs());
        }
    }
    Ok((ve, pe))
}

pub fn reproduce_md_roundtrip(k: usize, seed: u64) -> Result<Vec<ReproRow>> {
    let (ve, pe) = md_roundtrip_errors(k, 100, seed, DEFAULT_EPSILON)?;
    Ok(vec![row("max_value_error", 0.0, ve), row("max_prob_error", 0.0, pe)])
}

/// Runs a named reproduction; `param` is N, n or k as appropriate.
pub fn reproduce(name: &str, param: Option<usize>, seed: u64, exec: Exec) -> Result<Vec<ReproRow>> {
    match name {
        "min-example" => reproduce_min_example(param.unwrap_or(3), exec),
        "bernoulli" => reproduce_bernoulli(param.unwrap_or(3), exec),
        "weitzman" => reproduce_weitzman(exec),
        "md-roundtrip" => reproduce_md_roundtrip(param.unwrap_or(4), seed),
        other => Err(Error::invalid(
            "/name",
            format!("unknown reproduction `{other}` (expected min-example, bernoulli, weitzman, md-roundtrip)"),
        )),
    }
}

/// The Markov-chain MDPs of a list of chains, for writing instance files.
pub fn chains_doc(c: Constraint, mdps: &[Mdp]) -> InstanceDoc {
    InstanceDoc {
        objective: Objective::Max,
        constraint: c,
        mdps: mdps.iter().map(|m| m.to_raw()).collect(),
        dists: None,
    }
}
