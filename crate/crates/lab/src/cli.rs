//! Command-line interface. Every subcommand prints a JSON report on stdout.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use confound_core::dataset;
use confound_core::divergence::{self, AscentConfig, DivergenceKind, DivergenceSpec, Distribution};
use confound_core::imitation::{self, IterativeConfig, DEFAULT_ENUMERATION_CAP};
use confound_core::mdp::{self, ContextDistribution};
use confound_core::occupancy::{empirical_occupancy, marginal_occupancy};
use confound_core::rl::TraceRow;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{AlgorithmSpec, EnvSpec, ExperimentConfig, SolverSpec};
use crate::error::{LabError, Result};
use crate::formats::{self, OracleAccess};
use crate::harness::{self, Environment, RlMode, PLAN_TOL};

#[derive(Debug, Parser)]
#[command(name = "confound-lab", version, about = "Tabular imitation and RL from confounded expert data")]
pub struct Cli {
    /// Unlock sealed-context files (same as CONFOUND_LAB_ORACLE=1).
    #[arg(long, global = true)]
    pub oracle: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EnvKind {
    Toy,
    Catastrophic,
    FourRooms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Cts,
    Naive,
    Oracle,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a built-in environment and write it as JSON.
    GenEnv {
        #[arg(long, value_enum)]
        kind: EnvKind,
        /// TOML key/values for the builder, `;`-separated,
        /// e.g. "k = 2; m = 2; d_star = [0.5, 0.5]".
        #[arg(long, default_value = "")]
        params: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample expert trajectories; contexts go to a sealed sidecar.
    GenExpert {
        #[arg(long)]
        env: PathBuf,
        /// Comma-separated context law; defaults to the env's expert law.
        #[arg(long)]
        rho_e: Option<String>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Expert policy file; defaults to the env's expert.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact optimal policy under the online context law.
    Solve {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ambiguity set of the data's occupancy.
    Imitate {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        /// Use the iterative recovery with this λ.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 20)]
        max_iters: usize,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the mean policy here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// RL with expert data: CTS, naive sampling, or oracle reweighting.
    RlCts {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Solver block as TOML (same keys as an experiment's algorithm).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "cts")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the catastrophic construction stored in an env file.
    VerifyConstruction {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Exact vs variational divergence on two tables.
    DivergenceTest {
        #[arg(long)]
        kind: DivergenceKind,
        /// Comma-separated table.
        #[arg(long)]
        p: String,
        #[arg(long)]
        q: String,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0.1)]
        step_size: f64,
    },
    /// Join experiment summaries on iteration.
    Compare {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides evaluation.workers.
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn parse_table(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| LabError::Config(format!("bad number {t:?}: {e}")))
        })
        .collect()
}

fn env_spec(kind: EnvKind, params: &str) -> Result<EnvSpec> {
    let tag = match kind {
        EnvKind::Toy => "toy",
        EnvKind::Catastrophic => "catastrophic",
        EnvKind::FourRooms => "four-rooms",
    };
    let text = format!("kind = \"{tag}\"\n{}", params.replace(';', "\n"));
    toml::from_str(&text).map_err(|e| LabError::Config(format!("--params: {e}")))
}

fn load_env(path: &Path) -> Result<Environment> {
    Environment::new(formats::read_mdp(path)?)
}

fn solver_spec(path: Option<&Path>) -> Result<SolverSpec> {
    match path {
        None => Ok(toml::from_str("").expect("empty solver block parses")),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| LabError::io(p, e))?;
            toml::from_str(&text).map_err(|e| LabError::parse(p, e))
        }
    }
}

#[derive(Serialize)]
struct ConstructionReport {
    k: usize,
    m: usize,
    /// `v_{r1}(π1), v_{r2}(π1), v_{r1}(π2), v_{r2}(π2)` under the online law.
    values: [f64; 4],
    /// The same four, expected `{1, 0, 0, 1}`.
    expected: [f64; 4],
    /// Max gap between `d*` and the action marginals of `(π1, ρ_e)` and `(π2, ρ̃_e)`.
    marginal_residuals: [f64; 2],
    /// Expert-side values `v_{r1}(π1)` under `ρ_e` and `v_{r2}(π2)` under `ρ̃_e`.
    expert_values: [f64; 2],
    ok: bool,
}

fn action_marginal(m: &confound_core::ContextualMdp, p: &confound_core::Policy, rho: &ContextDistribution) -> Result<Vec<f64>> {
    let occ = marginal_occupancy(m, p, rho)?;
    let d = m.dims();
    Ok((0..d.n_actions)
        .map(|a| (0..d.n_states).map(|s| occ.get(s, a)).sum())
        .collect())
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn verify_construction(env: &Environment) -> Result<ConstructionReport> {
    let params = env
        .file
        .construction
        .as_ref()
        .ok_or_else(|| LabError::Config("env file carries no construction".into()))?;
    let c = harness::rebuild_construction(env.mdp(), params)?;
    let m = env.mdp();
    let v = |p, r: &[f64]| mdp::evaluate_under(m, p, m.rho_online(), r);
    let values = [v(&c.pi1, &c.r1)?, v(&c.pi1, &c.r2)?, v(&c.pi2, &c.r1)?, v(&c.pi2, &c.r2)?];
    let expected = [1.0, 0.0, 0.0, 1.0];
    let marginal_residuals = [
        max_gap(&action_marginal(m, &c.pi1, &c.rho_e)?, &c.d_star),
        max_gap(&action_marginal(m, &c.pi2, &c.rho_e_tilde)?, &c.d_star),
    ];
    let expert_values = [
        mdp::evaluate_under(m, &c.pi1, &c.rho_e, &c.r1)?,
        mdp::evaluate_under(m, &c.pi2, &c.rho_e_tilde, &c.r2)?,
    ];
    let ok = values.iter().zip(&expected).all(|(a, b)| (a - b).abs() <= 1e-12)
        && marginal_residuals.iter().all(|r| *r < 1e-12);
    Ok(ConstructionReport {
        k: c.k,
        m: c.m,
        values,
        expected,
        marginal_residuals,
        expert_values,
        ok,
    })
}

fn trace_summary(rows: &[TraceRow]) -> Value {
    json!({
        "iterations": rows.len(),
        "final_value": rows.last().map(|r| r.value),
        "best_value": rows.last().map(|r| r.best_value),
    })
}

/// Runs one command and returns its JSON report.
pub fn execute(cli: Cli) -> Result<Value> {
    let oracle = OracleAccess::request(cli.oracle);
    match cli.command {
        Command::GenEnv { kind, params, out } => {
            let file = harness::build_env(&env_spec(kind, &params)?)?;
            formats::write_mdp(&out, &file)?;
            let d = file.mdp.dims();
            Ok(json!({
                "out": out,
                "n_states": d.n_states,
                "n_contexts": d.n_contexts,
                "n_actions": d.n_actions,
            }))
        }
        Command::GenExpert {
            env,
            rho_e,
            n,
            seed,
            policy,
            out,
        } => {
            let env = load_env(&env)?;
            let rho = rho_e.as_deref().map(parse_table).transpose()?;
            let law = harness::data_law(&env, rho.as_deref(), 1.0)?;
            let expert = match policy {
                Some(p) => formats::read_policy(&p)?,
                None => env.expert.clone(),
            };
            let (data, sealed) = dataset::generate_expert_data(env.mdp(), &expert, &law, n, seed)?;
            formats::write_dataset_with_oracle(&out, &data, &sealed)?;
            Ok(json!({
                "out": out,
                "oracle": formats::oracle_path(&out),
                "n": data.len(),
                "horizon": data.horizon(),
            }))
        }
        Command::Solve { env, out } => {
            let env = load_env(&env)?;
            let (policy, value) = mdp::solve_optimal(env.mdp(), PLAN_TOL)?;
            if let Some(out) = &out {
                formats::write_policy(out, &policy)?;
            }
            Ok(json!({ "optimal_value": value }))
        }
        Command::Imitate {
            env,
            data,
            delta,
            lambda,
            max_iters,
            cap,
            seed,
            out,
        } => {
            let env = load_env(&env)?;
            let m = env.mdp();
            let ds = formats::read_dataset(&data, m)?;
            let w = vec![1.0 / ds.len() as f64; ds.len()];
            let target = empirical_occupancy(&ds, &w, ds.gamma())?;
            let (set, productive) = match lambda {
                Some(lambda) => {
                    let r = imitation::iterative_ambiguity(
                        m,
                        &target,
                        &IterativeConfig {
                            lambda,
                            delta,
                            max_iters,
                            seed,
                            cap,
                        },
                    )?;
                    (r.set, Some(r.productive))
                }
                None => (imitation::enumerate_ambiguity_set(m, &target, delta, cap)?, None),
            };
            if set.is_empty() {
                return Ok(json!({ "set_size": 0, "productive": productive }));
            }
            let report = imitation::mean_policy_report(m, &set, 1e-9)?;
            if let Some(out) = &out {
                formats::write_policy(out, &imitation::mean_policy(m, &set)?)?;
            }
            Ok(json!({
                "set_size": set.len(),
                "productive": productive,
                "member_values": set.values(m)?,
                "mean_value": report.mean_value,
                "optimal_value": report.optimal_value,
                "alpha_star": report.alpha_star,
                "bound": report.bound,
            }))
        }
        Command::RlCts {
            env,
            data,
            config,
            mode,
            seed,
            out,
        } => {
            let env = load_env(&env)?;
            let m = env.mdp();
            let ds = formats::read_dataset(&data, m)?;
            let spec = solver_spec(config.as_deref())?;
            let cfg = spec.to_config(seed)?;
            let mode = match mode {
                ModeArg::Cts => RlMode::Cts,
                ModeArg::Naive => RlMode::Naive,
                ModeArg::Oracle => RlMode::Oracle,
            };
            let (kind, occ) = match mode {
                RlMode::Cts => (AlgorithmSpec::P2Ogd(spec), None),
                RlMode::Naive => (AlgorithmSpec::P1b(spec), None),
                RlMode::Oracle => {
                    let sealed = formats::read_sealed(&data, oracle)?;
                    let access = oracle.expect("read_sealed checked access");
                    let occ = harness::oracle_occupancy(m, &ds, &sealed, &access)?;
                    (AlgorithmSpec::P2Ogd(spec), Some(occ))
                }
            };
            let result = harness::run_solver(&kind, m, &ds, occ.as_ref(), &cfg)?;
            formats::write_text(&out, &formats::trace_csv(&result.trace.rows))?;
            Ok(trace_summary(&result.trace.rows))
        }
        Command::VerifyConstruction { env, report } => {
            let env = load_env(&env)?;
            let r = verify_construction(&env)?;
            if let Some(path) = &report {
                formats::write_json(path, &r)?;
            }
            Ok(serde_json::to_value(&r).expect("report serializes"))
        }
        Command::DivergenceTest {
            kind,
            p,
            q,
            steps,
            step_size,
        } => {
            let (p, q) = (parse_table(&p)?, parse_table(&q)?);
            let spec = DivergenceSpec::new(kind);
            let exact = divergence::exact_divergence(spec, &p, &q)?;
            let est = divergence::variational_estimate(
                spec,
                Distribution::Exact(&p),
                Distribution::Exact(&q),
                p.len(),
                AscentConfig { steps, step_size },
            )?;
            Ok(json!({
                "kind": kind.name(),
                "exact": exact,
                "variational": est.value,
                "gap": exact - est.value,
            }))
        }
        Command::Compare { summaries, out } => {
            let loaded = summaries
                .iter()
                .map(|p| formats::read_json::<harness::Summary>(p))
                .collect::<Result<Vec<_>>>()?;
            let csv = harness::compare_runs(&loaded)?;
            formats::write_text(&out, &csv)?;
            Ok(json!({ "out": out, "rows": csv.lines().count() - 1 }))
        }
        Command::Run { config, workers } => {
            let cfg = ExperimentConfig::load(&config)?;
            let s = harness::run_experiment(&cfg, workers, oracle)?;
            Ok(json!({
                "name": s.name,
                "summary": cfg.evaluation.out_dir.join("summary.json"),
                "mean_final_value": s.mean_final_value,
                "optimal_value": s.optimal_value,
            }))
        }
    }
}
