//! Config-driven runs: environment materialization, per-seed pipelines,
//! summaries and run comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use confound_core::dataset::{self, oracle_weights, SealedContexts, TrajectoryDataset, TrajectoryWeights};
use confound_core::envs::{self, build_catastrophic, build_four_rooms};
use confound_core::imitation::{self, IterativeConfig};
use confound_core::mdp::{self, ContextDistribution, ContextualMdp, Policy};
use confound_core::occupancy::{empirical_occupancy, marginal_occupancy};
use confound_core::rl::{self, ExpertSource, SolverConfig, SolverOutput};
use confound_core::rng::derive_seed;
use confound_core::OccupancyMeasure;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AlgorithmSpec, EnvSpec, ExpertMode, ExperimentConfig, ImitateSpec, SolverSpec, TargetSource};
use crate::error::{LabError, Result};
use crate::formats::{self, ConstructionParams, EnvFile, OracleAccess};

/// Planning tolerance used throughout the harness.
pub const PLAN_TOL: f64 = 1e-10;

/// An environment plus the expert whose data the runs imitate.
#[derive(Debug, Clone)]
pub struct Environment {
    pub file: EnvFile,
    pub expert: Policy,
}

impl Environment {
    /// The expert is `π₁` for catastrophic constructions and an optimal
    /// policy otherwise.
    pub fn new(file: EnvFile) -> Result<Self> {
        let expert = match &file.construction {
            Some(c) => rebuild_construction(&file.mdp, c)?.pi1,
            None => mdp::solve_optimal(&file.mdp, PLAN_TOL)?.0,
        };
        Ok(Environment { file, expert })
    }

    pub fn from_spec(spec: &EnvSpec) -> Result<Self> {
        Self::new(build_env(spec)?)
    }

    pub fn mdp(&self) -> &ContextualMdp {
        &self.file.mdp
    }

    /// Default expert context law: the file's, else the online one.
    pub fn expert_law(&self) -> &ContextDistribution {
        self.file.rho_expert.as_ref().unwrap_or(self.file.mdp.rho_online())
    }
}

pub fn build_env(spec: &EnvSpec) -> Result<EnvFile> {
    Ok(match spec {
        EnvSpec::Toy { gamma, rho } => EnvFile::plain(envs::build_toy(*gamma, *rho)?),
        EnvSpec::Catastrophic {
            k,
            m,
            d_star,
            rho_online,
            gamma,
        } => {
            let rho = rho_online.clone().map(ContextDistribution::new).transpose()?;
            let (mdp, c) = build_catastrophic(*k, *m, d_star, rho, *gamma)?;
            EnvFile {
                mdp,
                rho_expert: Some(c.rho_e),
                construction: Some(ConstructionParams {
                    k: *k,
                    m: *m,
                    d_star: d_star.clone(),
                }),
            }
        }
        EnvSpec::FourRooms(fr) => {
            let built = build_four_rooms(&fr.to_config())?;
            EnvFile {
                mdp: built.mdp,
                rho_expert: Some(built.rho_expert),
                construction: None,
            }
        }
        EnvSpec::File { path } => formats::read_mdp(path)?,
    })
}

/// Rebuilds a construction against a loaded MDP and checks they agree.
pub fn rebuild_construction(mdp: &ContextualMdp, c: &ConstructionParams) -> Result<envs::CatastrophicConstruction> {
    let (built, construction) = build_catastrophic(c.k, c.m, &c.d_star, Some(mdp.rho_online().clone()), mdp.gamma())?;
    if built.reward() != mdp.reward() || built.dims() != mdp.dims() {
        return Err(LabError::Config(
            "construction parameters do not match the stored MDP".into(),
        ));
    }
    Ok(construction)
}

/// Context law of the expert data: `(1−β) ρ_o + β ρ_e`.
pub fn data_law(env: &Environment, rho_e: Option<&[f64]>, beta: f64) -> Result<ContextDistribution> {
    let base = match rho_e {
        Some(w) => ContextDistribution::new(w.to_vec())?,
        None => env.expert_law().clone(),
    };
    Ok(env.mdp().rho_online().mix(&base, beta)?)
}

/// Oracle-reweighted empirical occupancy: trajectories weighted by
/// `ρ_o(x)/ρ̂(x)`, with `ρ̂` the observed context frequencies.
pub fn oracle_occupancy(
    mdp: &ContextualMdp,
    data: &TrajectoryDataset,
    sealed: &SealedContexts,
    _access: &OracleAccess,
) -> Result<OccupancyMeasure> {
    let n_x = mdp.dims().n_contexts;
    let mut freq = vec![0.0; n_x];
    for &x in sealed.reveal() {
        if x >= n_x {
            return Err(LabError::Config(format!("sealed context {x} out of range")));
        }
        freq[x] += 1.0;
    }
    let observed = ContextDistribution::normalized(freq)?;
    let w = oracle_weights(sealed, mdp.rho_online(), &observed)?;
    Ok(empirical_occupancy(data, w.as_slice(), data.gamma())?)
}

/// Which expert side a solver run sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlMode {
    /// `p2-ogd` on the raw data (corrective trajectory sampling).
    Cts,
    /// `p1b` on the raw data.
    Naive,
    /// `p2-ogd` on the oracle-reweighted occupancy.
    Oracle,
}

pub fn run_solver(
    kind: &AlgorithmSpec,
    mdp: &ContextualMdp,
    data: &TrajectoryDataset,
    oracle_occ: Option<&OccupancyMeasure>,
    cfg: &SolverConfig,
) -> Result<SolverOutput> {
    let source = match oracle_occ {
        Some(o) => ExpertSource::Occupancy(o),
        None => ExpertSource::Data(data),
    };
    Ok(match kind {
        AlgorithmSpec::P1b(_) => rl::solve_p1b(mdp, source, cfg)?,
        AlgorithmSpec::P2Ftl(_) => rl::solve_p2_ftl(mdp, source, cfg)?,
        AlgorithmSpec::P2Ogd(_) => rl::solve_p2_ogd(mdp, source, cfg)?,
        AlgorithmSpec::Imitate(_) => {
            return Err(LabError::Config("imitate is not a solver".into()));
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iter: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub data_seed: u64,
    pub final_value: f64,
    #[serde(default)]
    pub best_value: Option<f64>,
    /// Ambiguity-set size (imitation runs).
    #[serde(default)]
    pub set_size: Option<usize>,
    #[serde(default)]
    pub member_values: Vec<f64>,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub algorithm: String,
    pub n_trajectories: usize,
    /// `v*` under the online context law.
    pub optimal_value: f64,
    /// The expert's value under the online law.
    pub expert_value: f64,
    /// Value of plain `ALG-RL` on the environment reward (no bonus, no data).
    pub rl_without_data: f64,
    pub mean_final_value: f64,
    pub runs: Vec<SeedRun>,
}

/// Output of one repetition before it is written.
struct SeedOutput {
    run: SeedRun,
    trace_csv: Option<String>,
}

fn imitate_once(
    env: &Environment,
    spec: &ImitateSpec,
    data: &TrajectoryDataset,
    law: &ContextDistribution,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    let mdp = env.mdp();
    let target = match spec.target {
        TargetSource::Data => {
            let w = TrajectoryWeights::uniform(data.len());
            empirical_occupancy(data, w.as_slice(), data.gamma())?
        }
        TargetSource::Exact => marginal_occupancy(mdp, &env.expert, law)?,
    };
    let set = match spec.lambda {
        Some(lambda) => {
            imitation::iterative_ambiguity(
                mdp,
                &target,
                &IterativeConfig {
                    lambda,
                    delta: spec.delta,
                    max_iters: spec.max_iters,
                    seed,
                    cap: spec.cap,
                },
            )?
            .set
        }
        None => imitation::enumerate_ambiguity_set(mdp, &target, spec.delta, spec.cap)?,
    };
    if set.is_empty() {
        return Ok((Vec::new(), f64::NAN));
    }
    let values = set.values(mdp)?;
    let mean = imitation::mean_policy(mdp, &set)?;
    Ok((values, mdp::evaluate_policy(mdp, &mean)?))
}

fn run_seed(
    cfg: &ExperimentConfig,
    env: &Environment,
    law: &ContextDistribution,
    seed: u64,
    oracle: Option<&OracleAccess>,
) -> Result<SeedOutput> {
    let data_seed = derive_seed(cfg.data.seed, &[seed]);
    let (data, sealed) = dataset::generate_expert_data(env.mdp(), &env.expert, law, cfg.data.n, data_seed)?;
    match &cfg.algorithm {
        AlgorithmSpec::Imitate(spec) => {
            let (values, mean_value) = imitate_once(env, spec, &data, law, seed)?;
            if values.is_empty() {
                return Err(LabError::Core(confound_core::Error::Empty { what: "ambiguity set" }));
            }
            Ok(SeedOutput {
                run: SeedRun {
                    seed,
                    data_seed,
                    final_value: mean_value,
                    best_value: None,
                    set_size: Some(values.len()),
                    member_values: values,
                    trace: Vec::new(),
                },
                trace_csv: None,
            })
        }
        kind @ (AlgorithmSpec::P1b(spec) | AlgorithmSpec::P2Ftl(spec) | AlgorithmSpec::P2Ogd(spec)) => {
            let solver = spec.to_config(seed)?;
            let occ = match spec.mode {
                ExpertMode::Data => None,
                ExpertMode::Oracle => {
                    let access = oracle.ok_or_else(|| LabError::OracleLocked(cfg.evaluation.out_dir.clone()))?;
                    Some(oracle_occupancy(env.mdp(), &data, &sealed, access)?)
                }
            };
            let out = run_solver(kind, env.mdp(), &data, occ.as_ref(), &solver)?;
            let rows = &out.trace.rows;
            Ok(SeedOutput {
                run: SeedRun {
                    seed,
                    data_seed,
                    final_value: out.trace.final_value().unwrap_or(f64::NAN),
                    best_value: out.trace.best_value(),
                    set_size: None,
                    member_values: Vec::new(),
                    trace: rows
                        .iter()
                        .map(|r| TracePoint {
                            iter: r.iter,
                            value: r.value,
                        })
                        .collect(),
                },
                trace_csv: Some(formats::trace_csv(rows)),
            })
        }
    }
}

fn solver_spec(a: &AlgorithmSpec) -> Option<&SolverSpec> {
    match a {
        AlgorithmSpec::P1b(s) | AlgorithmSpec::P2Ftl(s) | AlgorithmSpec::P2Ogd(s) => Some(s),
        AlgorithmSpec::Imitate(_) => None,
    }
}

/// Runs every seed on a pool of `workers` threads (config value, else the
/// override, else one per seed) and writes `trace-seed<k>.csv` files and
/// `summary.json` under `out_dir`. Results never depend on the worker count.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>, oracle: Option<OracleAccess>) -> Result<Summary> {
    cfg.validate()?;
    if let Some(s) = solver_spec(&cfg.algorithm) {
        if s.mode == ExpertMode::Oracle && oracle.is_none() {
            return Err(LabError::OracleLocked(cfg.evaluation.out_dir.clone()));
        }
    }
    let env = Environment::from_spec(&cfg.env)?;
    let law = data_law(&env, cfg.data.rho_e.as_deref(), cfg.data.shift_beta)?;
    let threads = workers
        .or(cfg.evaluation.workers)
        .unwrap_or(cfg.evaluation.seeds.len())
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
    let outputs: Vec<Result<SeedOutput>> = pool.install(|| {
        cfg.evaluation
            .seeds
            .par_iter()
            .map(|&seed| run_seed(cfg, &env, &law, seed, oracle.as_ref()))
            .collect()
    });
    let outputs = outputs.into_iter().collect::<Result<Vec<_>>>()?;

    let mdp = env.mdp();
    let (_, optimal_value) = mdp::solve_optimal(mdp, PLAN_TOL)?;
    let zero = vec![0.0; mdp.dims().sa_len()];
    let plain = rl::alg_rl(mdp, &zero, 0.0, PLAN_TOL, None)?;
    let out_dir = &cfg.evaluation.out_dir;
    let mut runs = Vec::with_capacity(outputs.len());
    for o in outputs {
        if let Some(csv) = &o.trace_csv {
            formats::write_text(&trace_path(out_dir, o.run.seed), csv)?;
        }
        runs.push(o.run);
    }
    let summary = Summary {
        name: cfg.name.clone(),
        algorithm: cfg.algorithm.name().to_string(),
        n_trajectories: cfg.data.n,
        optimal_value,
        expert_value: mdp::evaluate_policy(mdp, &env.expert)?,
        rl_without_data: mdp::evaluate_policy(mdp, &plain.policy)?,
        mean_final_value: runs.iter().map(|r| r.final_value).sum::<f64>() / runs.len() as f64,
        runs,
    };
    formats::write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn trace_path(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("trace-seed{seed}.csv"))
}

/// Per-summary mean value at each of its own iterations.
fn mean_curve(s: &Summary) -> BTreeMap<usize, f64> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in &s.runs {
        for p in &r.trace {
            let e = acc.entry(p.iter).or_default();
            e.0 += p.value;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (v, n))| (k, v / n as f64)).collect()
}

/// Last value at or before `iter`, and whether it had to be carried.
fn carried(points: &[TracePoint], iter: usize) -> Option<(f64, bool)> {
    let idx = points.partition_point(|p| p.iter <= iter);
    (idx > 0).then(|| (points[idx - 1].value, points[idx - 1].iter != iter))
}

/// Joins summaries on the union of their iteration grids. For each summary
/// the mean over its seeds; for each summary after the first, the mean paired
/// delta against the first over the seeds both share. Missing iterations
/// carry the last value and are listed in the `provenance` column.
pub fn compare_runs(summaries: &[Summary]) -> Result<String> {
    if summaries.is_empty() {
        return Err(LabError::Config("compare needs at least one summary".into()));
    }
    let mut grid = BTreeSet::new();
    for s in summaries {
        grid.extend(mean_curve(s).into_keys());
    }
    let label = |i: usize, s: &Summary| format!("{}#{i}", s.name);
    let mut out = String::from("iter");
    for (i, s) in summaries.iter().enumerate() {
        write!(out, ",{}", label(i, s)).unwrap();
    }
    for (i, s) in summaries.iter().enumerate().skip(1) {
        write!(out, ",delta_{}", label(i, s)).unwrap();
    }
    out.push_str(",provenance\n");

    let first = &summaries[0];
    for &iter in &grid {
        let mut flagged = Vec::new();
        let mut row = iter.to_string();
        for (i, s) in summaries.iter().enumerate() {
            let mut total = 0.0;
            let mut n = 0usize;
            let mut any_carried = false;
            for r in &s.runs {
                if let Some((v, c)) = carried(&r.trace, iter) {
                    total += v;
                    n += 1;
                    any_carried |= c;
                }
            }
            if any_carried {
                flagged.push(label(i, s));
            }
            if n == 0 {
                row.push(',');
            } else {
                write!(row, ",{}", formats::sci(total / n as f64)).unwrap();
            }
        }
        for s in summaries.iter().skip(1) {
            let mut total = 0.0;
            let mut n = 0usize;
            for r in &s.runs {
                let Some(base) = first.runs.iter().find(|b| b.seed == r.seed) else {
                    continue;
                };
                if let (Some((v, _)), Some((b, _))) = (carried(&r.trace, iter), carried(&base.trace, iter)) {
                    total += v - b;
                    n += 1;
                }
            }
            if n == 0 {
                row.push(',');
            } else {
                write!(row, ",{}", formats::sci(total / n as f64)).unwrap();
            }
        }
        let prov = if flagged.is_empty() {
            "exact".to_string()
        } else {
            format!("carried:{}", flagged.join(";"))
        };
        writeln!(row, ",{prov}").unwrap();
        out.push_str(&row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(name: &str, runs: &[(u64, &[(usize, f64)])]) -> Summary {
        Summary {
            name: name.into(),
            algorithm: "p2-ogd".into(),
            n_trajectories: 1,
            optimal_value: 1.0,
            expert_value: 1.0,
            rl_without_data: 1.0,
            mean_final_value: 0.0,
            runs: runs
                .iter()
                .map(|(seed, pts)| SeedRun {
                    seed: *seed,
                    data_seed: 0,
                    final_value: pts.last().unwrap().1,
                    best_value: None,
                    set_size: None,
                    member_values: Vec::new(),
                    trace: pts.iter().map(|&(iter, value)| TracePoint { iter, value }).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn single_summary_is_an_identity_table() {
        let s = summary("a", &[(0, &[(1, 0.5), (2, 0.75)])]);
        let csv = compare_runs(&[s]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iter,a#0,provenance");
        assert_eq!(lines[1], format!("1,{},exact", formats::sci(0.5)));
        assert_eq!(lines[2], format!("2,{},exact", formats::sci(0.75)));
    }

    #[test]
    fn mismatched_grids_carry_and_flag() {
        let a = summary("a", &[(0, &[(1, 0.5), (3, 0.5)])]);
        let b = summary("b", &[(0, &[(1, 0.25), (2, 1.0), (3, 1.0)])]);
        let csv = compare_runs(&[a, b]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("2,"));
        assert!(lines[2].ends_with("carried:a#0"));
        let delta: f64 = lines[2].split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(delta, 0.5);
        assert!(lines[3].ends_with(",exact"));
    }
}
