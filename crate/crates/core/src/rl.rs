//! RL with confounded expert data as side information: exact tabular
//! `ALG-RL` on a bonus-augmented reward, the no-correction baseline, the
//! follow-the-leader cost player and the online-gradient loop with
//! corrective trajectory sampling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{self, CumulativeSampler, TrajectoryClasses, TrajectoryDataset};
use crate::divergence::{self, DivergenceKind, DivergenceSpec};
use crate::math::{abs, sqrt};
use crate::mdp::{self, ContextDistribution, ContextualMdp, Plan, Policy};
use crate::occupancy::{self, OccupancyMeasure};
use crate::rng::{self, domain, StreamRng};
use crate::{Error, Result};

/// Importance ratios where the corrected expert occupancy is below this
/// threshold are capped at [`RATIO_CAP`].
pub const RATIO_FLOOR: f64 = 1e-8;
pub const RATIO_CAP: f64 = 1e8;
/// Resolution of the context-simplex grid in oracle mode.
pub const ORACLE_GRID: usize = 50;
const ORACLE_GRID_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMode {
    Fixed(f64),
    /// `λ = r̄ / (r̄ + ḡ)` each round, used as `(1−λ) r − λ g`.
    Adaptive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda: LambdaMode,
    pub alpha: f64,
    pub batch: usize,
    pub epochs: usize,
    pub candidates: usize,
    pub outer_iters: usize,
    pub divergence: DivergenceKind,
    /// Preconditioned step of the bonus-table updates.
    pub g_step: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: LambdaMode::Fixed(1.0),
            alpha: 0.9,
            batch: 256,
            epochs: 20,
            candidates: 100,
            outer_iters: 100,
            divergence: DivergenceKind::ChiSquared,
            g_step: 0.5,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &'static str, detail: alloc::string::String| Err(Error::InvalidParameter { what, detail });
        if let LambdaMode::Fixed(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return bad("lambda", format!("{l} must be finite and nonnegative"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha", format!("{} not in (0, 1]", self.alpha));
        }
        for (what, v) in [
            ("batch", self.batch),
            ("epochs", self.epochs),
            ("candidates", self.candidates),
            ("outer_iters", self.outer_iters),
        ] {
            if v == 0 {
                return bad(what, "must be at least 1".into());
            }
        }
        if !(self.g_step > 0.0 && self.g_step.is_finite()) {
            return bad("g_step", format!("{} must be positive", self.g_step));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// `v(π^k)` under the online context distribution.
    pub value: f64,
    /// Divergence between `d_{ρ_o}^{π^{k−1}}` and the expert side used this round.
    pub divergence: f64,
    pub lambda: f64,
    pub best_value: f64,
    /// Largest `|bonus|` entry handed to `ALG-RL`.
    pub bonus_norm: f64,
    pub rl_residual: f64,
    /// Winning CTS candidate (`candidates` means the uniform weighting).
    pub selected: Option<usize>,
    /// Corrected context distribution (oracle mode).
    pub rho_s: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
}

impl SolverTrace {
    pub fn final_value(&self) -> Option<f64> {
        self.rows.last().map(|r| r.value)
    }

    pub fn best_value(&self) -> Option<f64> {
        self.rows.last().map(|r| r.best_value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput {
    /// Last iterate.
    pub policy: Policy,
    /// Iterate with the highest true value (first on ties).
    pub best_policy: Policy,
    pub trace: SolverTrace,
}

/// Exact best response to `r(s,a,x) − λ g(s,a)`; `bonus` is an `[s][a]` table.
pub fn alg_rl(mdp: &ContextualMdp, bonus: &[f64], lambda: f64, tol: f64, warm: Option<&[f64]>) -> Result<Plan> {
    let reward = augmented_reward(mdp, bonus, 1.0, lambda)?;
    mdp::solve_with_reward_from(mdp, &reward, tol, warm)
}

/// `w_r · r(s,a,x) − λ g(s,a)`.
fn augmented_reward(mdp: &ContextualMdp, bonus: &[f64], w_r: f64, lambda: f64) -> Result<Vec<f64>> {
    let dims = mdp.dims();
    if bonus.len() != dims.sa_len() {
        return Err(Error::Dimension {
            what: "bonus table",
            expected: dims.sa_len(),
            found: bonus.len(),
        });
    }
    if bonus.iter().any(|b| !b.is_finite()) {
        return Err(Error::NotANumber { what: "bonus" });
    }
    let mut out = vec![0.0; dims.sax_len()];
    for x in 0..dims.n_contexts {
        for s in 0..dims.n_states {
            for a in 0..dims.n_actions {
                let i = dims.sax(s, a, x);
                out[i] = w_r * mdp.r(s, a, x) - lambda * bonus[dims.sa(s, a)];
            }
        }
    }
    Ok(out)
}

/// Where the expert data comes from.
#[derive(Debug, Clone, Copy)]
pub enum ExpertSource<'a> {
    /// Confounded trajectories, corrected by reweighting.
    Data(&'a TrajectoryDataset),
    /// An already-marginalized expert occupancy, used as is.
    Occupancy(&'a OccupancyMeasure),
    /// The expert policy itself: exact per-context tables and a direct
    /// search over context distributions. For validation only.
    Oracle(&'a Policy),
}

/// `v(π) − λ D_f(d_{ρ_o}^π || d_{ρ_s}^{π_e})`.
pub fn p2_objective(
    mdp: &ContextualMdp,
    policy: &Policy,
    expert: &Policy,
    rho_s: &ContextDistribution,
    spec: DivergenceSpec,
    lambda: f64,
) -> Result<f64> {
    let v = mdp::evaluate_policy(mdp, policy)?;
    let d = occupancy::marginal_occupancy(mdp, policy, mdp.rho_online())?;
    let e = occupancy::marginal_occupancy(mdp, expert, rho_s)?;
    let div = divergence::exact_divergence(spec, &d, &e)?;
    Ok(v - lambda * div)
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let t: f64 = v.iter().sum();
    if t > 0.0 {
        v.iter().map(|x| x / t).collect()
    } else {
        v.to_vec()
    }
}

/// Points of `Δ_X` on the grid of resolution `1/n`, lexicographic.
fn simplex_grid(dim: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    // C(n + dim − 1, dim − 1) points.
    let mut count: f64 = 1.0;
    for i in 1..dim {
        count = count * (n + i) as f64 / i as f64;
    }
    if count > ORACLE_GRID_CAP as f64 {
        return Err(Error::EnumerationTooLarge {
            required: count,
            cap: ORACLE_GRID_CAP,
        });
    }
    let mut out = Vec::new();
    let mut cur = vec![0usize; dim];
    fn rec(i: usize, left: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.iter().map(|&c| c as f64 / n as f64).collect());
            return;
        }
        for c in 0..=left {
            cur[i] = c;
            rec(i + 1, left - c, n, cur, out);
        }
    }
    rec(0, n, n, &mut cur, &mut out);
    Ok(out)
}

struct OracleTables {
    /// `[x][s][a]` tables of the expert.
    tables: Vec<f64>,
    grid: Vec<Vec<f64>>,
}

impl OracleTables {
    fn new(mdp: &ContextualMdp, expert: &Policy) -> Result<Self> {
        let d = occupancy::marginal_occupancy(mdp, expert, mdp.rho_online())?;
        let tables = d.per_context().expect("marginal keeps per-context tables").tables.clone();
        let grid = simplex_grid(mdp.dims().n_contexts, ORACLE_GRID)?;
        Ok(OracleTables { tables, grid })
    }

    /// Grid point minimizing `D_f(target || d_ρ)`; ties keep the first.
    fn best(&self, spec: DivergenceSpec, target: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let sa = target.len();
        let mut best: Option<(usize, Vec<f64>, dataset::CandidateScore)> = None;
        for (i, rho) in self.grid.iter().enumerate() {
            let d: Vec<f64> = (0..sa)
                .map(|z| rho.iter().enumerate().map(|(x, w)| w * self.tables[x * sa + z]).sum())
                .collect();
            let score = dataset::CandidateScore::evaluate(spec, target, &d)?;
            if best.as_ref().map_or(true, |b| score.cmp(&b.2) == core::cmp::Ordering::Less) {
                best = Some((i, d, score));
            }
        }
        let (i, d, score) = best.ok_or(Error::Empty { what: "context grid" })?;
        Ok((self.grid[i].clone(), d, score.divergence))
    }
}

fn check_source(mdp: &ContextualMdp, source: &ExpertSource<'_>) -> Result<()> {
    let dims = mdp.dims();
    let (ns, na) = match source {
        ExpertSource::Data(d) => (d.n_states(), d.n_actions()),
        ExpertSource::Occupancy(o) => (o.n_states(), o.n_actions()),
        ExpertSource::Oracle(p) => {
            let pd = p.dims();
            if pd != dims {
                return Err(Error::Dimension {
                    what: "expert policy",
                    expected: dims.sax_len(),
                    found: pd.sax_len(),
                });
            }
            (pd.n_states, pd.n_actions)
        }
    };
    if ns != dims.n_states || na != dims.n_actions {
        return Err(Error::Dimension {
            what: "expert data",
            expected: dims.sa_len(),
            found: ns * na,
        });
    }
    if let ExpertSource::Data(d) = source {
        if abs(d.gamma() - mdp.gamma()) > 1e-12 {
            return Err(Error::InvalidParameter {
                what: "dataset gamma",
                detail: format!("{} differs from the MDP's {}", d.gamma(), mdp.gamma()),
            });
        }
    }
    Ok(())
}

/// Bookkeeping shared by the solvers.
struct Loop<'a> {
    mdp: &'a ContextualMdp,
    policy: Policy,
    best: Option<(Policy, f64)>,
    values: Option<Vec<f64>>,
    trace: SolverTrace,
}

impl<'a> Loop<'a> {
    fn new(mdp: &'a ContextualMdp) -> Result<Self> {
        Ok(Loop {
            mdp,
            best: None,
            policy: Policy::uniform(mdp.dims()),
            values: None,
            trace: SolverTrace::default(),
        })
    }

    fn occupancy(&self) -> Result<OccupancyMeasure> {
        occupancy::marginal_occupancy(self.mdp, &self.policy, self.mdp.rho_online())
    }

    #[allow(clippy::too_many_arguments)]
    fn respond(
        &mut self,
        k: usize,
        reward: Vec<f64>,
        divergence: f64,
        lambda: f64,
        bonus_norm: f64,
        selected: Option<usize>,
        rho_s: Option<Vec<f64>>,
    ) -> Result<()> {
        // Accuracy schedule ε_k = 1/√k.
        let tol = 1.0 / sqrt(k as f64);
        let plan = mdp::solve_with_reward_from(self.mdp, &reward, tol, self.values.as_deref())?;
        let value = mdp::evaluate_policy(self.mdp, &plan.policy)?;
        if self.best.as_ref().map_or(true, |b| value > b.1) {
            self.best = Some((plan.policy.clone(), value));
        }
        let best_value = self.best.as_ref().map_or(value, |b| b.1);
        self.trace.rows.push(TraceRow {
            iter: k,
            value,
            divergence,
            lambda,
            best_value,
            bonus_norm,
            rl_residual: plan.residual,
            selected,
            rho_s,
        });
        self.policy = plan.policy;
        self.values = Some(plan.values);
        Ok(())
    }

    fn finish(self) -> SolverOutput {
        let best_policy = self.best.map_or_else(|| self.policy.clone(), |b| b.0);
        SolverOutput {
            policy: self.policy,
            best_policy,
            trace: self.trace,
        }
    }
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| abs(*x)).fold(0.0, f64::max)
}

/// Follow-the-leader cost player: each round picks the corrected expert
/// occupancy closest in KL to the current policy's, then averages the
/// importance ratios `d^{π^{k−1}} / d_{ρ_s}` into the bonus.
pub fn solve_p2_ftl(mdp: &ContextualMdp, source: ExpertSource<'_>, cfg: &SolverConfig) -> Result<SolverOutput> {
    cfg.validate()?;
    check_source(mdp, &source)?;
    let lambda = match cfg.lambda {
        LambdaMode::Fixed(l) => l,
        LambdaMode::Adaptive => {
            return Err(Error::InvalidParameter {
                what: "lambda",
                detail: "the follow-the-leader solver takes a fixed λ".into(),
            })
        }
    };
    let kl = DivergenceSpec::new(DivergenceKind::Kl);
    let classes = match source {
        ExpertSource::Data(d) => Some(TrajectoryClasses::new(d)?),
        _ => None,
    };
    let oracle = match source {
        ExpertSource::Oracle(p) => Some(OracleTables::new(mdp, p)?),
        _ => None,
    };
    let sa = mdp.dims().sa_len();
    let mut g = vec![0.0; sa];
    let mut lp = Loop::new(mdp)?;
    for k in 1..=cfg.outer_iters {
        let d_pi = lp.occupancy()?;
        let target = d_pi.mass();
        let (d_s, div, selected, rho_s) = match (&source, &classes, &oracle) {
            (ExpertSource::Data(_), Some(c), _) => {
                let res = dataset::cts_search_classes(c, target, kl, cfg.candidates, cfg.seed, k as u64)?;
                (res.occupancy, res.divergence, Some(res.index), None)
            }
            (ExpertSource::Oracle(_), _, Some(o)) => {
                let (rho, d, div) = o.best(kl, target)?;
                (d, div, None, Some(rho))
            }
            (ExpertSource::Occupancy(o), _, _) => {
                let div = divergence::exact_divergence(kl, target, o.mass())?;
                (o.mass().to_vec(), div, None, None)
            }
            _ => unreachable!("sources are matched to their tables above"),
        };
        let kf = k as f64;
        for z in 0..sa {
            let ratio = if target[z] == 0.0 {
                0.0
            } else if d_s[z] < RATIO_FLOOR {
                (target[z] / d_s[z]).min(RATIO_CAP)
            } else {
                target[z] / d_s[z]
            };
            g[z] = ((kf - 1.0) * g[z] + ratio) / kf;
        }
        let reward = augmented_reward(mdp, &g, 1.0, lambda)?;
        lp.respond(k, reward, div, lambda, sup_abs(&g), selected, rho_s)?;
    }
    Ok(lp.finish())
}

/// Expert-side sampler for one candidate weighting.
enum ExpertSide<'a> {
    /// Class by mass, then a truncated-geometric step along its trajectory.
    /// Same law as drawing trajectories by the expanded weights.
    Classes {
        dataset: &'a TrajectoryDataset,
        classes: &'a TrajectoryClasses,
        sampler: CumulativeSampler,
    },
    Table(CumulativeSampler),
}

impl ExpertSide<'_> {
    fn draw(&self, n: usize, na: usize, gamma: f64, r: &mut StreamRng) -> Result<Vec<usize>> {
        match self {
            ExpertSide::Classes {
                dataset,
                classes,
                sampler,
            } => Ok((0..n)
                .map(|_| {
                    let c = sampler.draw(r);
                    let t = &dataset.trajectories()[classes.members()[c][0]];
                    let step = dataset::truncated_geometric(r, gamma, dataset.horizon());
                    t.states[step] * na + t.actions[step]
                })
                .collect()),
            ExpertSide::Table(sampler) => Ok((0..n).map(|_| sampler.draw(r)).collect()),
        }
    }
}

/// One local discriminator fit: `epochs` preconditioned steps on batches of
/// the α-regularized loss, starting from `g`.
#[allow(clippy::too_many_arguments)]
fn fit_local(
    spec: DivergenceSpec,
    mut g: Vec<f64>,
    expert: &ExpertSide<'_>,
    policy_sampler: &CumulativeSampler,
    cfg: &SolverConfig,
    na: usize,
    gamma: f64,
    k: usize,
    m: usize,
) -> Result<Vec<f64>> {
    for e in 0..cfg.epochs {
        let mut rp = rng::stream(cfg.seed, &[domain::BATCH, k as u64, e as u64, 0]);
        let mut re = rng::stream(cfg.seed, &[domain::BATCH, k as u64, e as u64, 1 + m as u64]);
        let pb: Vec<usize> = (0..cfg.batch).map(|_| policy_sampler.draw(&mut rp)).collect();
        let eb = expert.draw(cfg.batch, na, gamma, &mut re)?;
        let (_, grad) = divergence::alpha_regularized_loss(spec, &g, &eb, &pb, cfg.alpha)?;
        let n = g.len();
        let (mut he, mut hp) = (vec![0.0; n], vec![0.0; n]);
        for &z in &eb {
            he[z] += 1.0 / cfg.batch as f64;
        }
        for &z in &pb {
            hp[z] += 1.0 / cfg.batch as f64;
        }
        for z in 0..n {
            if grad[z] == 0.0 {
                continue;
            }
            let q = (1.0 - cfg.alpha) * he[z] + cfg.alpha * hp[z];
            let h = match spec.kind {
                DivergenceKind::TotalVariation => abs(grad[z]),
                _ => {
                    let c = abs(q * spec.phi_q_curv(g[z]) - hp[z] * spec.phi_p_curv(g[z]));
                    if c > 0.0 {
                        c
                    } else {
                        q + hp[z]
                    }
                }
            };
            g[z] = spec.project(g[z] - cfg.g_step * grad[z] / h);
        }
    }
    Ok(g)
}

/// Online-gradient loop: per round, `candidates` trajectory weightings (plus
/// the uniform one) each fit a local bonus table from the global one; the
/// winner has the largest exact α-loss, i.e. the expert side closest to the
/// current policy; then `ALG-RL` runs on the penalized reward.
pub fn solve_p2_ogd(mdp: &ContextualMdp, source: ExpertSource<'_>, cfg: &SolverConfig) -> Result<SolverOutput> {
    ogd_loop(mdp, source, cfg, false)
}

/// The no-correction baseline: the same loop with only the uniform weighting.
pub fn solve_p1b(mdp: &ContextualMdp, source: ExpertSource<'_>, cfg: &SolverConfig) -> Result<SolverOutput> {
    ogd_loop(mdp, source, cfg, true)
}

fn ogd_loop(mdp: &ContextualMdp, source: ExpertSource<'_>, cfg: &SolverConfig, uniform_only: bool) -> Result<SolverOutput> {
    cfg.validate()?;
    check_source(mdp, &source)?;
    let spec = DivergenceSpec::new(cfg.divergence);
    let dims = mdp.dims();
    let (sa, na) = (dims.sa_len(), dims.n_actions);
    let gamma = mdp.gamma();

    let classes = match source {
        ExpertSource::Data(d) => Some(TrajectoryClasses::new(d)?),
        _ => None,
    };
    let fixed_table = match source {
        ExpertSource::Occupancy(o) => Some(normalized(o.mass())),
        ExpertSource::Oracle(p) => Some(normalized(occupancy::marginal_occupancy(mdp, p, mdp.rho_online())?.mass())),
        ExpertSource::Data(_) => None,
    };

    let mut g = vec![spec.initial_dual(); sa];
    let mut lp = Loop::new(mdp)?;
    for k in 1..=cfg.outer_iters {
        let d_pi = normalized(lp.occupancy()?.mass());
        let policy_sampler = CumulativeSampler::new(&d_pi)?;
        // Candidate expert sides: (index, sampler, exact occupancy).
        let mut sides: Vec<(usize, ExpertSide<'_>, Vec<f64>)> = Vec::new();
        match (&source, &classes) {
            (ExpertSource::Data(d), Some(c)) => {
                let n = if uniform_only { 0 } else { cfg.candidates };
                for m in (0..n).chain(core::iter::once(cfg.candidates)) {
                    let mass = if m == cfg.candidates {
                        c.uniform_mass()
                    } else {
                        c.candidate(cfg.seed, k as u64, m as u64)
                    };
                    let occ = normalized(&c.occupancy(&mass));
                    sides.push((
                        m,
                        ExpertSide::Classes {
                            dataset: d,
                            classes: c,
                            sampler: CumulativeSampler::new(&mass)?,
                        },
                        occ,
                    ));
                }
            }
            _ => {
                let t = fixed_table.clone().expect("non-data sources carry a table");
                sides.push((cfg.candidates, ExpertSide::Table(CumulativeSampler::new(&t)?), t));
            }
        }
        let mut best: Option<(f64, usize, Vec<f64>, f64)> = None;
        for (m, side, occ) in &sides {
            let local = fit_local(spec, g.clone(), side, &policy_sampler, cfg, na, gamma, k, *m)?;
            let (loss, _) = divergence::alpha_regularized_expected(spec, &local, occ, &d_pi, cfg.alpha)?;
            if best.as_ref().map_or(true, |b| loss > b.0) {
                let div = divergence::exact_divergence(spec, &d_pi, occ)?;
                best = Some((loss, *m, local, div));
            }
        }
        let (_, selected, local, div) = best.ok_or(Error::Empty { what: "candidates" })?;
        g = local;
        let penalty: Vec<f64> = g.iter().map(|&v| spec.phi_p(v)).collect();
        let (w_r, lambda) = match cfg.lambda {
            LambdaMode::Fixed(l) => (1.0, l),
            LambdaMode::Adaptive => {
                // Averages under the current policy's occupancy.
                let r_mean = mdp::evaluate_policy(mdp, &lp.policy)?;
                let g_mean: f64 = d_pi.iter().zip(&penalty).map(|(d, p)| d * abs(*p)).sum();
                let l = if r_mean + g_mean > 0.0 { r_mean / (r_mean + g_mean) } else { 0.0 };
                (1.0 - l, l)
            }
        };
        let reward = augmented_reward(mdp, &penalty, w_r, lambda)?;
        lp.respond(k, reward, div, lambda, sup_abs(&penalty), Some(selected), None)?;
    }
    Ok(lp.finish())
}

/// `C = max_{k ≤ k0} √k · gap_k`; returns `C` and whether
/// `gap_k ≤ C/√k + 1e-9` for every later `k`.
pub fn envelope_check(gaps: &[f64], k0: usize) -> (f64, bool) {
    let c = gaps
        .iter()
        .take(k0)
        .enumerate()
        .map(|(i, g)| sqrt((i + 1) as f64) * g.max(0.0))
        .fold(0.0, f64::max);
    let ok = gaps
        .iter()
        .enumerate()
        .skip(k0.saturating_sub(1))
        .all(|(i, g)| *g <= c / sqrt((i + 1) as f64) + 1e-9);
    (c, ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;
    use crate::mdp::Dims;

    #[test]
    fn zero_bonus_or_lambda_is_plain_rl() {
        for seed in 0..5 {
            let mdp = envs::random_mdp(Dims::new(4, 2, 3), 0.8, seed).unwrap();
            let (pi, _) = mdp::solve_optimal(&mdp, 1e-10).unwrap();
            let zero = vec![0.0; 12];
            assert_eq!(alg_rl(&mdp, &zero, 5.0, 1e-10, None).unwrap().policy, pi);
            let junk: Vec<f64> = (0..12).map(|i| i as f64).collect();
            assert_eq!(alg_rl(&mdp, &junk, 0.0, 1e-10, None).unwrap().policy, pi);
        }
    }

    #[test]
    fn alg_rl_matches_brute_force_on_augmented_reward() {
        let mdp = envs::build_toy(0.9, 0.5).unwrap();
        let bonus = [0.0, 3.0, -1.0, 2.0, 0.5, 0.0];
        let plan = alg_rl(&mdp, &bonus, 4.0, 1e-12, None).unwrap();
        let aug = augmented_reward(&mdp, &bonus, 1.0, 4.0).unwrap();
        let (_, best) = mdp::brute_force_extreme(&mdp, &aug, true, 1000).unwrap();
        let v = mdp::evaluate_under(&mdp, &plan.policy, mdp.rho_online(), &aug).unwrap();
        assert!((v - best).abs() < 1e-10);
    }

    #[test]
    fn simplex_grid_counts() {
        assert_eq!(simplex_grid(2, 50).unwrap().len(), 51);
        assert_eq!(simplex_grid(3, 4).unwrap().len(), 15);
        assert!(simplex_grid(8, 50).is_err());
    }

    #[test]
    fn p2_objective_at_expert_and_online_law_is_optimal_value() {
        let mdp = envs::build_toy(0.9, 0.3).unwrap();
        let (pi, v) = mdp::solve_optimal(&mdp, 1e-12).unwrap();
        for kind in DivergenceKind::ALL {
            let obj = p2_objective(&mdp, &pi, &pi, mdp.rho_online(), kind.into(), 2.0).unwrap();
            assert!((obj - v).abs() < 1e-9);
        }
    }

    #[test]
    fn first_ftl_bonus_is_the_importance_ratio() {
        let mdp = envs::build_toy(0.9, 0.5).unwrap();
        let expert = envs::toy_expert(mdp.dims());
        let cfg = SolverConfig {
            outer_iters: 1,
            lambda: LambdaMode::Fixed(0.0),
            ..SolverConfig::default()
        };
        let out = solve_p2_ftl(&mdp, ExpertSource::Oracle(&expert), &cfg).unwrap();
        let row = &out.trace.rows[0];
        // Uniform π⁰ against the best grid mix: capped ratios where the expert never goes.
        assert_eq!(row.bonus_norm, RATIO_CAP);
        assert_eq!(row.rho_s.as_deref(), Some(&[0.5, 0.5][..]));
    }

    #[test]
    fn envelope_fit() {
        let gaps: Vec<f64> = (1..=50).map(|k| 1.0 / sqrt(k as f64)).collect();
        assert!(envelope_check(&gaps, 10).1);
        let mut bad = gaps.clone();
        bad[30] = 0.9;
        assert!(!envelope_check(&bad, 10).1);
    }
}
