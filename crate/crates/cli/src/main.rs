//! `cics`: command-line front end over instance JSON documents.
//!
//! Exit codes: 0 on success, 1 when a size guard is exceeded, 2 on input errors.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use cics_core::amortize::surrogate_values;
use cics_core::chains::DEFAULT_DEPTH_CAP;
use cics_core::constraints::Constraint;
use cics_core::dist::DiscreteDist;
use cics_core::error::{Error, Result};
use cics_core::exante::{ex_ante_opt_cics, ex_ante_value_bcs, Objective};
use cics_core::instance::{load_instance, parse_doc, Instance};
use cics_core::par::Exec;
use cics_core::policies::{
    commitment_gap_empirical, committing_pipeline, evaluate_policy_monte_carlo, optimal_cics_dp, optimal_committing_dp,
    ChainPolicy, Method, SemiOnlinePolicy,
};
use cics_core::reproduce::{ex_ante_min_cost, reproduce, semi_online_min_cost};
use cics_core::selection::{
    evaluate_semi_online, ex_post_brute_force, ex_post_min_exact_k, semi_online_from_frugal, FrugalRule,
};

use report::{render_csv, render_json, Report, Row};

// Exact evaluation is single-threaded; only Monte Carlo trials fan out.
const EXACT: Exec = Exec::Sequential;

#[derive(Parser, Debug)]
#[command(name = "cics", version, about = "Costly-information combinatorial selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo trials (pipeline only; exact evaluation always runs).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    trials: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Largest |expected - computed| counted as a match in reproductions.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tolerance: f64,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report wall-clock time (output is then no longer byte-identical).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check an instance and summarise its MDPs.
    Validate { path: PathBuf },
    /// Fair indices, surrogate values and surrogate distributions of Markov chains.
    Amortize { path: PathBuf },
    /// Ex-ante relaxation: value and acceptance probabilities.
    Exante {
        path: PathBuf,
        /// Include the per-history commitments.
        #[arg(long)]
        commitment: bool,
    },
    /// Selection benchmarks over the instance distributions.
    Bcs {
        #[command(subcommand)]
        which: Bcs,
    },
    /// Ex-ante commitments followed by the semi-online index policy.
    Pipeline { path: PathBuf },
    /// Exact optimal and optimal committing values by dynamic programming.
    Optimal { path: PathBuf },
    /// Optimum, committing optimum, ex-ante bound and their gap.
    Gap { path: PathBuf },
    /// Built-in instances compared with their closed forms.
    Reproduce {
        #[command(subcommand)]
        which: Repro,
    },
}

#[derive(Subcommand, Debug)]
enum Bcs {
    Expost {
        path: PathBuf,
    },
    Exante {
        path: PathBuf,
    },
    Semionline {
        path: PathBuf,
        /// Frugal rule; defaults to the one matching the constraint.
        #[arg(long, value_enum)]
        rule: Option<RuleName>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RuleName {
    Matroid,
    Ksystem,
    Knapsack,
}

#[derive(Subcommand, Debug)]
enum Repro {
    MinExample {
        #[arg(long = "N", default_value_t = 3)]
        n: usize,
    },
    Bernoulli {
        #[arg(long, default_value_t = 3)]
        n: usize,
    },
    Weitzman,
    MdRoundtrip {
        #[arg(long, default_value_t = 4)]
        k: usize,
    },
}

enum Failure {
    Core(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn read(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn instance_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

/// Number of acceptances for exact-k minimisation.
fn min_k(c: &Constraint) -> Result<usize> {
    match c {
        Constraint::SingleSelection => Ok(1),
        Constraint::UniformMatroid { k } => Ok(*k),
        _ => Err(Error::Unsupported(
            "minimisation needs a single-selection or uniform-matroid constraint".into(),
        )),
    }
}

fn cmd_validate(text: &str) -> std::result::Result<Report, Failure> {
    let doc = parse_doc(text)?;
    let report = doc.validate();
    if !report.ok {
        return Err(Error::Diagnostics(report.diagnostics).into());
    }
    let rows = vec![Row::new("valid", 1.0, "validate")];
    Ok(Report {
        json: to_json(&report),
        rows,
    })
}

fn cmd_amortize(inst: &Instance) -> Result<Report> {
    let mut mdps = Vec::new();
    let mut rows = Vec::new();
    for (i, m) in inst.mdps.iter().enumerate() {
        let t = m.unroll_chain(DEFAULT_DEPTH_CAP)?;
        let prof = surrogate_values(&t)?;
        let mut nodes = serde_json::Map::new();
        for (n, node) in t.nodes.iter().enumerate() {
            nodes.insert(
                node.path.clone(),
                json!({ "tau": prof.tau[n], "w": prof.w[n], "g": prof.g[n], "p": prof.p[n] }),
            );
            if let Some(tau) = prof.tau[n] {
                rows.push(Row::new(format!("mdp{i}/{}/tau", node.path), tau, "exact"));
            }
            if let Some(w) = prof.w[n] {
                rows.push(Row::new(format!("mdp{i}/{}/w", node.path), w, "exact"));
            }
        }
        rows.push(Row::new(format!("mdp{i}/W/mean"), prof.dist.mean(), "exact"));
        mdps.push(json!({ "mdp": i, "nodes": nodes, "W": prof.dist.atoms() }));
    }
    Ok(Report {
        json: Value::Array(mdps),
        rows,
    })
}

fn cmd_exante(inst: &Instance, commitment: bool) -> Result<Report> {
    let c = &inst.doc.constraint;
    if inst.mdps.is_empty() {
        let d = inst.dists()?;
        let sol = match inst.doc.objective {
            Objective::Max => ex_ante_value_bcs(c, &d)?,
            Objective::Min => cics_core::constraints::ExAnteSolution {
                value: ex_ante_min_cost(&d, min_k(c)?)?,
                q: Vec::new(),
            },
        };
        let rows = vec![Row::new("ex_ante", sol.value, "exact")];
        return Ok(Report {
            json: to_json(&sol),
            rows,
        });
    }
    let res = ex_ante_opt_cics(c, &inst.mdps, inst.doc.objective, EXACT)?;
    let mut body = json!({ "objective": res.objective, "value": res.value, "q": res.q });
    if commitment {
        body["commitments"] = to_json(&res.commitments);
        body["accept"] = to_json(&res.accept);
    }
    let mut rows = vec![Row::new("ex_ante", res.value, "exact")];
    rows.extend(
        res.q
            .iter()
            .enumerate()
            .map(|(i, q)| Row::new(format!("q{i}"), *q, "exact")),
    );
    Ok(Report { json: body, rows })
}

fn rule_for(name: Option<RuleName>, c: &Constraint) -> Result<FrugalRule> {
    match name {
        None => FrugalRule::for_constraint(c),
        Some(RuleName::Matroid) => Ok(FrugalRule::greedy_matroid()),
        Some(RuleName::Ksystem) => match c {
            Constraint::KSystem { k, .. } => Ok(FrugalRule::greedy_k_system(*k)),
            _ => Err(Error::invalid(
                "/constraint",
                "the ksystem rule needs a k_system constraint",
            )),
        },
        Some(RuleName::Knapsack) => match c {
            Constraint::Knapsack { sizes } => FrugalRule::knapsack_mixture(sizes),
            _ => Err(Error::invalid(
                "/constraint",
                "the knapsack rule needs a knapsack constraint",
            )),
        },
    }
}

fn cmd_bcs(inst: &Instance, which: &Bcs) -> Result<Report> {
    let c = &inst.doc.constraint;
    let d: Vec<DiscreteDist> = inst.dists()?;
    let min = inst.doc.objective == Objective::Min;
    let (name, body) = match which {
        Bcs::Expost { .. } => {
            let v = if min {
                ex_post_min_exact_k(c, &d, min_k(c)?, EXACT)?
            } else {
                ex_post_brute_force(c, &d, EXACT)?
            };
            ("ex_post", json!({ "value": v }))
        }
        Bcs::Exante { .. } => {
            if min {
                ("ex_ante", json!({ "value": ex_ante_min_cost(&d, min_k(c)?)? }))
            } else {
                ("ex_ante", to_json(&ex_ante_value_bcs(c, &d)?))
            }
        }
        Bcs::Semionline { rule, .. } => {
            if min {
                if rule.is_some() {
                    return Err(Error::Unsupported("minimisation always uses greedy fill".into()));
                }
                min_k(c)?;
                (
                    "semi_online",
                    json!({ "value": semi_online_min_cost(c, &d, EXACT)?, "rule": "greedy_fill" }),
                )
            } else {
                let rule = rule_for(*rule, c)?;
                let ev = evaluate_semi_online(&semi_online_from_frugal(&rule), c, &d, EXACT)?;
                (
                    "semi_online",
                    json!({ "value": ev.value, "accept_probs": ev.accept_probs, "rule": rule }),
                )
            }
        }
    };
    let rows = vec![Row::new(name, body["value"].as_f64().unwrap_or(f64::NAN), "exact")];
    Ok(Report { json: body, rows })
}

fn cmd_pipeline(inst: &Instance, trials: Option<u64>, seed: u64) -> Result<Report> {
    let ci = inst.cics()?;
    let res = committing_pipeline(&ci, EXACT)?;
    let mut rows = vec![
        Row::new("ex_ante", res.ex_ante.value, "exact"),
        Row::new("bcs_semi_online", res.bcs_value, "exact"),
        Row::new("pipeline", res.evaluation.expected_utility, "exact"),
    ];
    let mut body = json!({
        "ex_ante": res.ex_ante.value,
        "q": res.ex_ante.q,
        "rule": res.rule,
        "bcs_value": res.bcs_value,
        "evaluation": res.evaluation,
    });
    if let Some(trials) = trials {
        let c = &ci.constraint;
        let dists: Vec<DiscreteDist> = res.profiles.iter().map(|p| p.dist.clone()).collect();
        let alg = semi_online_from_frugal(&res.rule);
        let (mut mean, mut var) = (0.0, 0.0);
        for (w, spec) in &alg.components {
            let factory = || -> Box<dyn ChainPolicy + '_> {
                Box::new(SemiOnlinePolicy::new(
                    &res.chains,
                    &res.profiles,
                    spec.instantiate(c, &dists),
                ))
            };
            let ev = evaluate_policy_monte_carlo(c, &res.chains, &factory, trials as usize, seed, Exec::Parallel)?;
            mean += w * ev.expected_utility;
            if let Method::MonteCarlo { stderr, .. } = ev.method {
                var += w * w * stderr * stderr;
            }
        }
        let stderr = var.sqrt();
        body["monte_carlo"] = json!({ "trials": trials, "expected_utility": mean, "stderr": stderr });
        rows.push(Row::new("pipeline", mean, format!("monte_carlo(trials={trials})")));
        rows.push(Row::new(
            "pipeline_stderr",
            stderr,
            format!("monte_carlo(trials={trials})"),
        ));
    }
    Ok(Report { json: body, rows })
}

fn cmd_optimal(inst: &Instance) -> Result<Report> {
    let ci = inst.cics()?;
    let opt = optimal_cics_dp(&ci)?;
    let com = optimal_committing_dp(&ci, EXACT)?;
    Ok(Report {
        json: json!({ "objective": ci.objective, "opt": opt, "committing_opt": com }),
        rows: vec![Row::new("opt", opt, "dp"), Row::new("committing_opt", com, "dp")],
    })
}

fn cmd_gap(inst: &Instance) -> Result<Report> {
    let g = commitment_gap_empirical(&inst.cics()?, EXACT)?;
    let mut rows = vec![
        Row::new("opt", g.opt, "dp"),
        Row::new("committing_opt", g.committing_opt, "dp"),
        Row::new("ex_ante", g.ex_ante, "exact"),
        Row::new("com_gap", g.com_gap, "dp"),
    ];
    if let Some(p) = g.pipeline_value {
        rows.push(Row::new("pipeline", p, "exact"));
    }
    Ok(Report {
        json: to_json(&g),
        rows,
    })
}

fn cmd_reproduce(which: &Repro, seed: u64, tolerance: f64) -> Result<(String, Report)> {
    let (name, param) = match which {
        Repro::MinExample { n } => ("min-example", Some(*n)),
        Repro::Bernoulli { n } => ("bernoulli", Some(*n)),
        Repro::Weitzman => ("weitzman", None),
        Repro::MdRoundtrip { k } => ("md-roundtrip", Some(*k)),
    };
    let table = reproduce(name, param, seed, EXACT)?;
    let mut rows = Vec::new();
    let mut out = Vec::new();
    for r in &table {
        rows.push(Row::new(format!("{}/expected", r.quantity), r.expected, "closed_form"));
        rows.push(Row::new(format!("{}/computed", r.quantity), r.computed, "exact"));
        rows.push(Row::new(format!("{}/error", r.quantity), r.error, "abs"));
        let mut v = to_json(r);
        v["match"] = json!(r.error <= tolerance);
        out.push(v);
    }
    let label = match param {
        Some(p) => format!("{name}-{p}"),
        None => name.to_string(),
    };
    Ok((
        label,
        Report {
            json: Value::Array(out),
            rows,
        },
    ))
}

fn run(cli: &Cli) -> std::result::Result<String, Failure> {
    let start = Instant::now();
    let (instance, command, report) = match &cli.command {
        Command::Reproduce { which } => {
            let (label, r) = cmd_reproduce(which, cli.seed, cli.tolerance)?;
            (label, "reproduce", r)
        }
        Command::Validate { path } => (instance_name(path), "validate", cmd_validate(&read(path)?)?),
        cmd => {
            let (path, name) = match cmd {
                Command::Amortize { path } => (path, "amortize"),
                Command::Exante { path, .. } => (path, "exante"),
                Command::Bcs { which } => match which {
                    Bcs::Expost { path } => (path, "bcs expost"),
                    Bcs::Exante { path } => (path, "bcs exante"),
                    Bcs::Semionline { path, .. } => (path, "bcs semionline"),
                },
                Command::Pipeline { path } => (path, "pipeline"),
                Command::Optimal { path } => (path, "optimal"),
                Command::Gap { path } => (path, "gap"),
                Command::Validate { .. } | Command::Reproduce { .. } => unreachable!("handled above"),
            };
            let inst = load_instance(&read(path)?)?;
            let report = match cmd {
                Command::Amortize { .. } => cmd_amortize(&inst)?,
                Command::Exante { commitment, .. } => cmd_exante(&inst, *commitment)?,
                Command::Bcs { which } => cmd_bcs(&inst, which)?,
                Command::Pipeline { .. } => cmd_pipeline(&inst, cli.trials, cli.seed)?,
                Command::Optimal { .. } => cmd_optimal(&inst)?,
                Command::Gap { .. } => cmd_gap(&inst)?,
                Command::Validate { .. } | Command::Reproduce { .. } => unreachable!("handled above"),
            };
            (instance_name(path), name, report)
        }
    };
    let runtime = cli.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
    Ok(match cli.format {
        Format::Json => render_json(&instance, command, cli.seed, report.json, runtime),
        Format::Csv => render_csv(&instance, cli.seed, &report.rows, runtime),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            if let Some(path) = &cli.out {
                if let Err(e) = std::fs::write(path, text) {
                    eprintln!("error: {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            } else {
                print!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Core(Error::Diagnostics(diags))) => {
            for d in diags {
                let p = if d.pointer.is_empty() { "/" } else { &d.pointer };
                eprintln!("error: {p}: {}", d.message);
            }
            ExitCode::from(2)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_guard() { 1 } else { 2 })
        }
    }
}
