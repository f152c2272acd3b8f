//! Ambiguity sets of deterministic policies that reproduce an expert's
//! context-marginal occupancy, the mean policy over such a set, the iterative
//! set-recovery algorithm, and checkers for the guarantees that hold on them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::Trajectory;
use crate::math::{abs, ln, exp};
use crate::mdp::{self, ContextDistribution, ContextualMdp, DeterministicTables, Policy};
use crate::occupancy::{self, OccupancyMeasure};
use crate::rng::{self, domain};
use crate::{Error, Result};

/// Slack added to every sup-norm membership test.
pub const MATCH_TOL: f64 = 1e-9;
/// Default budget of search nodes for enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySet {
    /// Canonical deterministic members, in search order.
    pub members: Vec<Policy>,
    pub reference_occupancy: OccupancyMeasure,
    pub delta: f64,
}

impl AmbiguitySet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, mdp: &ContextualMdp, policy: &Policy) -> Result<bool> {
        let c = canonicalize(mdp, policy)?;
        Ok(self.members.iter().any(|m| *m == c))
    }

    /// Values of the members under the online context distribution.
    pub fn values(&self, mdp: &ContextualMdp) -> Result<Vec<f64>> {
        self.members.iter().map(|p| mdp::evaluate_policy(mdp, p)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityParams {
    pub gamma_odds: f64,
    /// `ε(x)`, one entry per context.
    pub reward_context_eps: Vec<f64>,
}

impl SensitivityParams {
    pub fn new(gamma_odds: f64, reward_context_eps: Vec<f64>) -> Result<Self> {
        if !(gamma_odds >= 1.0) {
            return Err(Error::InvalidParameter {
                what: "gamma_odds",
                detail: format!("{gamma_odds} must be at least 1"),
            });
        }
        if reward_context_eps.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::InvalidParameter {
                what: "reward_context_eps",
                detail: "entries must be nonnegative".into(),
            });
        }
        Ok(SensitivityParams {
            gamma_odds,
            reward_context_eps,
        })
    }

    /// `ε(x) = max_{s,a} |r(s,a,x) − r₀(s,a)|` with the per-entry midpoint
    /// `r₀ = (max_x r + min_x r)/2`, which minimizes the largest deviation.
    pub fn from_mdp(mdp: &ContextualMdp, gamma_odds: f64) -> Result<Self> {
        SensitivityParams::new(gamma_odds, reward_context_eps(mdp))
    }
}

pub fn reward_context_eps(mdp: &ContextualMdp) -> Vec<f64> {
    let d = mdp.dims();
    let mut eps = vec![0.0; d.n_contexts];
    for s in 0..d.n_states {
        for a in 0..d.n_actions {
            let vals = (0..d.n_contexts).map(|x| mdp.r(s, a, x));
            let hi = vals.clone().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.fold(f64::INFINITY, f64::min);
            let mid = (hi + lo) / 2.0;
            for (x, e) in eps.iter_mut().enumerate() {
                *e = f64::max(*e, abs(mdp.r(s, a, x) - mid));
            }
        }
    }
    eps
}

/// States reachable in context `x` under the actions in `actions`
/// (`None` marks an unassigned state, which is reached but not expanded),
/// with a lower bound on each state's discounted mass.
fn reach(mdp: &ContextualMdp, x: usize, actions: &[Option<usize>]) -> (Vec<bool>, Vec<f64>) {
    let ns = mdp.dims().n_states;
    let g = mdp.gamma();
    let mut reached = vec![false; ns];
    let mut lb = vec![0.0; ns];
    let mut queue = Vec::new();
    for (s, &v) in mdp.initial(x).iter().enumerate() {
        if v > 0.0 {
            reached[s] = true;
            lb[s] = (1.0 - g) * v;
            queue.push(s);
        }
    }
    let mut head = 0;
    while head < queue.len() {
        let s = queue[head];
        head += 1;
        let Some(a) = actions[s] else { continue };
        for (s2, &p) in mdp.next_states(s, a, x).iter().enumerate() {
            if p > 0.0 {
                lb[s2] = f64::max(lb[s2], g * p * lb[s]);
                if !reached[s2] {
                    reached[s2] = true;
                    queue.push(s2);
                }
            }
        }
    }
    (reached, lb)
}

/// Replaces the action at every state a deterministic policy never visits
/// (and everywhere in contexts of zero online weight) by action 0.
pub fn canonicalize(mdp: &ContextualMdp, policy: &Policy) -> Result<Policy> {
    let dims = mdp.dims();
    let actions = policy.actions().ok_or(Error::InvalidParameter {
        what: "policy",
        detail: "ambiguity sets hold deterministic policies only".into(),
    })?;
    let ns = dims.n_states;
    let mut out = vec![0usize; actions.len()];
    for x in 0..dims.n_contexts {
        if mdp.rho_online().weights()[x] == 0.0 {
            continue;
        }
        let row: Vec<Option<usize>> = actions[x * ns..(x + 1) * ns].iter().map(|&a| Some(a)).collect();
        let (reached, _) = reach(mdp, x, &row);
        for s in 0..ns {
            if reached[s] {
                out[x * ns + s] = actions[x * ns + s];
            }
        }
    }
    Policy::deterministic(dims, &out)
}

struct Budget {
    nodes: usize,
    cap: usize,
}

impl Budget {
    fn tick(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.cap {
            return Err(Error::EnumerationTooLarge {
                required: self.nodes as f64,
                cap: self.cap,
            });
        }
        Ok(())
    }
}

/// A per-context option: actions on `[s]` and its weighted table `ρ(x)·d(s,a|x)`.
struct Candidate {
    actions: Vec<usize>,
    table: Vec<f64>,
}

fn context_candidates(
    mdp: &ContextualMdp,
    x: usize,
    target: &[f64],
    upper_slack: f64,
    budget: &mut Budget,
) -> Result<Vec<Candidate>> {
    let dims = mdp.dims();
    let (ns, na) = (dims.n_states, dims.n_actions);
    let w = mdp.rho_online().weights()[x];
    if w == 0.0 {
        return Ok(vec![Candidate {
            actions: vec![0; ns],
            table: vec![0.0; ns * na],
        }]);
    }
    let mut out = Vec::new();
    let mut assigned = vec![None; ns];
    search_context(mdp, x, w, target, upper_slack, &mut assigned, &mut out, budget)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn search_context(
    mdp: &ContextualMdp,
    x: usize,
    w: f64,
    target: &[f64],
    upper_slack: f64,
    assigned: &mut Vec<Option<usize>>,
    out: &mut Vec<Candidate>,
    budget: &mut Budget,
) -> Result<()> {
    budget.tick()?;
    let dims = mdp.dims();
    let (ns, na) = (dims.n_states, dims.n_actions);
    let (reached, lb) = reach(mdp, x, assigned);
    let Some(s) = (0..ns).find(|&s| reached[s] && assigned[s].is_none()) else {
        let actions: Vec<usize> = assigned.iter().map(|a| a.unwrap_or(0)).collect();
        let mut table = vec![0usize; dims.n_states * dims.n_contexts];
        table[x * ns..(x + 1) * ns].copy_from_slice(&actions);
        let policy = Policy::deterministic(dims, &table)?;
        let mu = occupancy::state_distribution(mdp, &policy, x)?;
        let mut weighted = vec![0.0; ns * na];
        for s in 0..ns {
            if reached[s] {
                weighted[s * na + actions[s]] = w * mu[s];
            }
        }
        if weighted.iter().zip(target).all(|(d, t)| *d <= t + upper_slack) {
            out.push(Candidate {
                actions,
                table: weighted,
            });
        }
        return Ok(());
    };
    for a in 0..na {
        if w * lb[s] > target[s * na + a] + upper_slack {
            continue;
        }
        assigned[s] = Some(a);
        search_context(mdp, x, w, target, upper_slack, assigned, out, budget)?;
        assigned[s] = None;
    }
    Ok(())
}

/// Every canonical deterministic policy whose online marginal occupancy is
/// within `delta` of `target` in sup norm.
///
/// Each context contributes a nonnegative table, so contexts are searched
/// separately (only over states they reach) and then combined with
/// partial-sum bounds. `cap` limits the total number of search nodes.
pub fn enumerate_ambiguity_set(
    mdp: &ContextualMdp,
    target: &OccupancyMeasure,
    delta: f64,
    cap: usize,
) -> Result<AmbiguitySet> {
    let dims = mdp.dims();
    check_target(mdp, target)?;
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter {
            what: "delta",
            detail: format!("{delta} must be nonnegative"),
        });
    }
    let slack = delta + MATCH_TOL;
    let t = target.mass();
    let mut budget = Budget { nodes: 0, cap };
    let per_context: Vec<Vec<Candidate>> = (0..dims.n_contexts)
        .map(|x| context_candidates(mdp, x, t, slack, &mut budget))
        .collect::<Result<_>>()?;

    // suffix[x] bounds what contexts x.. can still add, coordinate-wise.
    let sa = dims.sa_len();
    let mut suffix = vec![vec![0.0; sa]; dims.n_contexts + 1];
    for x in (0..dims.n_contexts).rev() {
        for i in 0..sa {
            let best = per_context[x].iter().map(|c| c.table[i]).fold(0.0, f64::max);
            suffix[x][i] = suffix[x + 1][i] + best;
        }
    }
    let mut members = Vec::new();
    let mut choice = vec![0usize; dims.n_contexts];
    let partial = vec![0.0; sa];
    combine(&per_context, &suffix, t, slack, 0, &partial, &mut choice, &mut members, &mut budget)?;

    let ns = dims.n_states;
    let members = members
        .into_iter()
        .map(|ch: Vec<usize>| {
            let mut table = vec![0usize; ns * dims.n_contexts];
            for (x, &c) in ch.iter().enumerate() {
                table[x * ns..(x + 1) * ns].copy_from_slice(&per_context[x][c].actions);
            }
            Policy::deterministic(dims, &table)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AmbiguitySet {
        members,
        reference_occupancy: target.clone(),
        delta,
    })
}

#[allow(clippy::too_many_arguments)]
fn combine(
    per_context: &[Vec<Candidate>],
    suffix: &[Vec<f64>],
    target: &[f64],
    slack: f64,
    x: usize,
    partial: &[f64],
    choice: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
    budget: &mut Budget,
) -> Result<()> {
    budget.tick()?;
    if x == per_context.len() {
        if partial.iter().zip(target).all(|(d, t)| abs(d - t) <= slack) {
            out.push(choice.clone());
        }
        return Ok(());
    }
    for (c, cand) in per_context[x].iter().enumerate() {
        let next: Vec<f64> = partial.iter().zip(&cand.table).map(|(p, d)| p + d).collect();
        let too_high = next.iter().zip(target).any(|(d, t)| *d > t + slack);
        let too_low = next
            .iter()
            .zip(&suffix[x + 1])
            .zip(target)
            .any(|((d, rest), t)| d + rest < t - slack);
        if too_high || too_low {
            continue;
        }
        choice[x] = c;
        combine(per_context, suffix, target, slack, x + 1, &next, choice, out, budget)?;
    }
    Ok(())
}

fn check_target(mdp: &ContextualMdp, target: &OccupancyMeasure) -> Result<()> {
    let dims = mdp.dims();
    if target.n_states() != dims.n_states || target.n_actions() != dims.n_actions {
        return Err(Error::Dimension {
            what: "target occupancy",
            expected: dims.sa_len(),
            found: target.n_states() * target.n_actions(),
        });
    }
    Ok(())
}

/// Canonical deterministic policies, deduplicated, in odometer order.
pub fn canonical_policies(mdp: &ContextualMdp, cap: usize) -> Result<Vec<Policy>> {
    let dims = mdp.dims();
    let mut out: Vec<Policy> = Vec::new();
    for table in DeterministicTables::new(dims, cap)? {
        let p = canonicalize(mdp, &Policy::deterministic(dims, &table)?)?;
        if p.actions().as_deref() == Some(&table[..]) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Exhaustive reference: test every deterministic policy's marginal.
pub fn enumerate_ambiguity_set_naive(
    mdp: &ContextualMdp,
    target: &OccupancyMeasure,
    delta: f64,
    cap: usize,
) -> Result<AmbiguitySet> {
    check_target(mdp, target)?;
    let mut members = Vec::new();
    for p in canonical_policies(mdp, cap)? {
        let d = occupancy::marginal_occupancy(mdp, &p, mdp.rho_online())?;
        if d.sup_distance(target) <= delta + MATCH_TOL {
            members.push(p);
        }
    }
    Ok(AmbiguitySet {
        members,
        reference_occupancy: target.clone(),
        delta,
    })
}

/// `π̄(a|s,x) = Σ_i d^{π_i}(s,a,x) / Σ_i Σ_a' d^{π_i}(s,a',x)` with the
/// joint `d(s,a,x) = ρ_o(x) d(s,a|x)`. Rows without mass are uniform.
pub fn mean_policy(mdp: &ContextualMdp, set: &AmbiguitySet) -> Result<Policy> {
    if set.is_empty() {
        return Err(Error::Empty { what: "ambiguity set" });
    }
    let dims = mdp.dims();
    let (ns, na) = (dims.n_states, dims.n_actions);
    let mut probs = vec![0.0; dims.sax_len()];
    for x in 0..dims.n_contexts {
        let w = mdp.rho_online().weights()[x];
        let mut acc = vec![0.0; ns * na];
        if w > 0.0 {
            for m in &set.members {
                for (a, d) in acc.iter_mut().zip(occupancy::context_table(mdp, m, x)?) {
                    *a += w * d;
                }
            }
        }
        for s in 0..ns {
            let row = &acc[s * na..(s + 1) * na];
            let total: f64 = row.iter().sum();
            for a in 0..na {
                probs[dims.sax(s, a, x)] = if total > 0.0 {
                    row[a] / total
                } else {
                    1.0 / na as f64
                };
            }
        }
    }
    Policy::from_probs(dims, probs)
}

/// Value of drawing one member uniformly at the start of each episode.
pub fn episodic_mixture_value(mdp: &ContextualMdp, set: &AmbiguitySet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Empty { what: "ambiguity set" });
    }
    let vals = set.values(mdp)?;
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Pieces of the mean-policy guarantee `v(π̄) ≥ α* v* + (1−α*) min_i v(π_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanPolicyReport {
    pub mean_value: f64,
    pub mixture_value: f64,
    pub optimal_value: f64,
    pub min_member_value: f64,
    /// Fraction of members that are optimal (within `tol`).
    pub alpha_star: f64,
    pub bound: f64,
}

pub fn mean_policy_report(mdp: &ContextualMdp, set: &AmbiguitySet, tol: f64) -> Result<MeanPolicyReport> {
    let mean = mean_policy(mdp, set)?;
    let vals = set.values(mdp)?;
    let (_, v_star) = mdp::solve_optimal(mdp, tol.min(1e-10))?;
    let n_opt = vals.iter().filter(|v| **v >= v_star - tol).count();
    let alpha_star = n_opt as f64 / vals.len() as f64;
    let min_member_value = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(MeanPolicyReport {
        mean_value: mdp::evaluate_policy(mdp, &mean)?,
        mixture_value: vals.iter().sum::<f64>() / vals.len() as f64,
        optimal_value: v_star,
        min_member_value,
        alpha_star,
        bound: alpha_star * v_star + (1.0 - alpha_star) * min_member_value,
    })
}

/// Indicator reward `r₀(s,a,x) = 1{a = π₀(s,x)}` under which the
/// deterministic `π₀` is the unique optimal policy up to canonical form.
pub fn indicator_reward(policy: &Policy) -> Result<Vec<f64>> {
    let dims = policy.dims();
    let actions = policy.actions().ok_or(Error::InvalidParameter {
        what: "policy",
        detail: "indicator reward needs a deterministic policy".into(),
    })?;
    let ns = dims.n_states;
    let mut r = vec![0.0; dims.sax_len()];
    for x in 0..dims.n_contexts {
        for s in 0..ns {
            r[dims.sax(s, actions[x * ns + s], x)] = 1.0;
        }
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterativeConfig {
    pub lambda: f64,
    pub delta: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterativeResult {
    pub set: AmbiguitySet,
    pub mean: Policy,
    /// Iterations that added a new member.
    pub productive: usize,
    /// False when `max_iters` ran out before a repeat.
    pub converged: bool,
    /// Candidate index picked at each iteration.
    pub picks: Vec<usize>,
}

struct Candidates {
    policies: Vec<Policy>,
    /// Online marginal `d_{ρ_o}^π(s,a)`.
    marginals: Vec<Vec<f64>>,
    /// Joint `ρ_o(x) d^π(s,a|x)`, context-major.
    joints: Vec<Vec<f64>>,
}

fn candidate_tables(mdp: &ContextualMdp, cap: usize) -> Result<Candidates> {
    let policies = canonical_policies(mdp, cap)?;
    let mut marginals = Vec::with_capacity(policies.len());
    let mut joints = Vec::with_capacity(policies.len());
    for p in &policies {
        let d = occupancy::marginal_occupancy(mdp, p, mdp.rho_online())?;
        let per = d.per_context().expect("marginal keeps per-context tables");
        let sa = mdp.dims().sa_len();
        let joint: Vec<f64> = per
            .tables
            .iter()
            .enumerate()
            .map(|(i, v)| per.weights[i / sa] * v)
            .collect();
        marginals.push(d.mass().to_vec());
        joints.push(joint);
    }
    Ok(Candidates {
        policies,
        marginals,
        joints,
    })
}

/// Largest `λ` for which the δ = 0 recovery provably returns the exact set:
/// the smallest marginal TV from an outside policy to the target, divided by
/// the largest joint TV between an outside policy and a set member.
/// Infinite when every policy is in the set.
pub fn lambda_star(mdp: &ContextualMdp, target: &OccupancyMeasure, cap: usize) -> Result<f64> {
    check_target(mdp, target)?;
    let c = candidate_tables(mdp, cap)?;
    lambda_star_from(&c, target.mass())
}

fn lambda_star_from(c: &Candidates, target: &[f64]) -> Result<f64> {
    let inside: Vec<bool> = c
        .marginals
        .iter()
        .map(|m| crate::math::max_abs_diff(m, target) <= MATCH_TOL)
        .collect();
    let mut min_off = f64::INFINITY;
    let mut max_cross: f64 = 0.0;
    for (i, m) in c.marginals.iter().enumerate() {
        if inside[i] {
            continue;
        }
        min_off = min_off.min(occupancy::tv(m, target));
        for (j, _) in inside.iter().enumerate().filter(|(_, &v)| v) {
            max_cross = max_cross.max(occupancy::tv(&c.joints[i], &c.joints[j]));
        }
    }
    if min_off.is_infinite() || max_cross == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(min_off / max_cross)
}

/// Recovers the ambiguity set one member at a time: each round picks
/// `argmin_π TV(d_{ρ_o}^π, target + u) − λ min_i TV(d^π, d^{π_i})`
/// over canonical deterministic policies (joint occupancies in the second
/// term, `u ~ U[0,δ]` redrawn per round) and stops at the first repeat.
pub fn iterative_ambiguity(
    mdp: &ContextualMdp,
    target: &OccupancyMeasure,
    cfg: &IterativeConfig,
) -> Result<IterativeResult> {
    check_target(mdp, target)?;
    if !(cfg.lambda >= 0.0) || !(cfg.delta >= 0.0) || cfg.max_iters == 0 {
        return Err(Error::InvalidParameter {
            what: "iterative config",
            detail: format!(
                "need λ ≥ 0, δ ≥ 0, max_iters ≥ 1; got {}, {}, {}",
                cfg.lambda, cfg.delta, cfg.max_iters
            ),
        });
    }
    let c = candidate_tables(mdp, cfg.cap)?;
    let t = target.mass();
    let mut found: Vec<usize> = Vec::new();
    let mut picks = Vec::new();
    let mut converged = false;
    for n in 0..cfg.max_iters {
        let mut r = rng::stream(cfg.seed, &[domain::AMBIGUITY_NOISE, n as u64]);
        let shifted: Vec<f64> = t.iter().map(|v| v + cfg.delta * rng::unit(&mut r)).collect();
        let mut best = (f64::INFINITY, 0usize);
        for (i, m) in c.marginals.iter().enumerate() {
            let repel = found
                .iter()
                .map(|&j| occupancy::tv(&c.joints[i], &c.joints[j]))
                .fold(f64::INFINITY, f64::min);
            let repel = if repel.is_finite() { repel } else { 0.0 };
            let obj = occupancy::tv(m, &shifted) - cfg.lambda * repel;
            // Strict improvement beyond round-off keeps the lowest index on ties.
            if obj < best.0 - 1e-12 {
                best = (obj, i);
            }
        }
        picks.push(best.1);
        if found.contains(&best.1) {
            converged = true;
            break;
        }
        found.push(best.1);
    }
    let set = AmbiguitySet {
        members: found.iter().map(|&i| c.policies[i].clone()).collect(),
        reference_occupancy: target.clone(),
        delta: cfg.delta,
    };
    let mean = mean_policy(mdp, &set)?;
    Ok(IterativeResult {
        productive: set.len(),
        set,
        mean,
        converged,
        picks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextFreeReport {
    pub optimal_value: f64,
    pub member_values: Vec<f64>,
    pub max_gap: f64,
    pub holds: bool,
}

/// With a context-free reward every member must be optimal.
pub fn check_context_free_reward(mdp: &ContextualMdp, set: &AmbiguitySet, tol: f64) -> Result<ContextFreeReport> {
    if !mdp.reward_is_context_free() {
        return Err(Error::Precondition {
            what: "context-free reward",
            detail: "r(s,a,x) differs across contexts".into(),
        });
    }
    let (_, v_star) = mdp::solve_optimal(mdp, 1e-12)?;
    let member_values = set.values(mdp)?;
    let max_gap = member_values.iter().map(|v| v_star - v).fold(0.0, f64::max);
    Ok(ContextFreeReport {
        optimal_value: v_star,
        holds: max_gap <= tol,
        member_values,
        max_gap,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardBoundReport {
    /// `ε_oe = E_{ρ_o} ε + E_{ρ_e} ε`.
    pub eps_oe: f64,
    /// Expert value on the data distribution, `v_{ρ_e}(π*)`.
    pub expert_value_data: f64,
    /// Expert value online, `v_{ρ_o}(π*)`.
    pub expert_value_online: f64,
    pub member_values: Vec<f64>,
    /// `min_i v(π_i) − (v_{ρ_e}(π*) − ε_oe)`.
    pub slack: f64,
    /// Same with the expert evaluated online.
    pub slack_online: f64,
}

/// `v(π₀) ≥ v(π*) − ε_oe` for every member. The expert's value enters on the
/// data distribution `ρ_e`, which is the side the set was matched against;
/// the online variant is reported alongside.
pub fn context_dependent_reward_bound(
    mdp: &ContextualMdp,
    set: &AmbiguitySet,
    expert: &Policy,
    rho_e: &ContextDistribution,
    eps: &SensitivityParams,
) -> Result<RewardBoundReport> {
    let nx = mdp.dims().n_contexts;
    if eps.reward_context_eps.len() != nx {
        return Err(Error::Dimension {
            what: "reward_context_eps",
            expected: nx,
            found: eps.reward_context_eps.len(),
        });
    }
    let expect = |rho: &ContextDistribution| -> f64 {
        rho.weights().iter().zip(&eps.reward_context_eps).map(|(w, e)| w * e).sum()
    };
    let eps_oe = expect(mdp.rho_online()) + expect(rho_e);
    let expert_value_data = mdp::evaluate_under(mdp, expert, rho_e, mdp.reward())?;
    let expert_value_online = mdp::evaluate_policy(mdp, expert)?;
    let member_values = set.values(mdp)?;
    let worst = member_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let (slack, slack_online) = if member_values.is_empty() {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (
            worst - (expert_value_data - eps_oe),
            worst - (expert_value_online - eps_oe),
        )
    };
    Ok(RewardBoundReport {
        eps_oe,
        expert_value_data,
        expert_value_online,
        member_values,
        slack,
        slack_online,
    })
}

/// Posterior over contexts of a context-free trajectory,
/// `P(x|τ) ∝ ρ(x) ν(s₀|x) Π_t π(a_t|s_t,x) P(s_{t+1}|s_t,a_t,x)`,
/// including the final recorded action.
pub fn context_posterior(
    mdp: &ContextualMdp,
    policy: &Policy,
    rho: &ContextDistribution,
    trajectory: &Trajectory,
) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    mdp.check_dist(rho)?;
    let (st, ac) = (&trajectory.states, &trajectory.actions);
    let dims = mdp.dims();
    if st.is_empty() || st.len() != ac.len() {
        return Err(Error::InvalidParameter {
            what: "trajectory",
            detail: format!("{} states and {} actions", st.len(), ac.len()),
        });
    }
    if st.iter().any(|&s| s >= dims.n_states) || ac.iter().any(|&a| a >= dims.n_actions) {
        return Err(Error::InvalidParameter {
            what: "trajectory",
            detail: "state or action index out of range".into(),
        });
    }
    // Work in logs: long trajectories underflow otherwise.
    let mut logs = vec![f64::NEG_INFINITY; dims.n_contexts];
    for (x, lx) in logs.iter_mut().enumerate() {
        let mut l = ln(rho.weights()[x]) + ln(mdp.initial(x)[st[0]]);
        for t in 0..st.len() {
            l += ln(policy.prob(st[t], ac[t], x));
            if t + 1 < st.len() {
                l += ln(mdp.p(x, st[t], ac[t], st[t + 1]));
            }
            if l == f64::NEG_INFINITY {
                break;
            }
        }
        *lx = l;
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::ZeroLikelihood);
    }
    let un: Vec<f64> = logs.iter().map(|l| exp(l - top)).collect();
    let z: f64 = un.iter().sum();
    Ok(un.into_iter().map(|v| v / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{self, TOY_A, TOY_TO_B, TOY_TO_C};
    use crate::mdp::Dims;
    use crate::occupancy::marginal_occupancy;

    fn toy_set(gamma: f64) -> (ContextualMdp, AmbiguitySet) {
        let mdp = envs::build_toy(gamma, 0.5).unwrap();
        let expert = envs::toy_expert(mdp.dims());
        let target = marginal_occupancy(&mdp, &expert, mdp.rho_online()).unwrap();
        let set = enumerate_ambiguity_set(&mdp, &target, 0.0, DEFAULT_ENUMERATION_CAP).unwrap();
        (mdp, set)
    }

    #[test]
    fn toy_set_is_expert_and_flipped() {
        let (mdp, set) = toy_set(0.9);
        assert_eq!(set.len(), 2);
        assert!(set.contains(&mdp, &envs::toy_expert(mdp.dims())).unwrap());
        assert!(set.contains(&mdp, &envs::toy_flipped(mdp.dims())).unwrap());
    }

    #[test]
    fn toy_mean_policy_is_uniform_at_start() {
        let (mdp, set) = toy_set(0.9);
        let mean = mean_policy(&mdp, &set).unwrap();
        for x in 0..2 {
            assert_eq!(mean.row(TOY_A, x), &[0.5, 0.5]);
        }
        let rep = mean_policy_report(&mdp, &set, 1e-9).unwrap();
        assert!((rep.mean_value - 0.45).abs() < 1e-12);
        assert!((rep.mean_value - rep.bound).abs() < 1e-9);
    }

    #[test]
    fn single_context_set_is_the_expert_alone() {
        for seed in 0..10 {
            let mdp = envs::random_mdp(Dims::new(4, 1, 2), 0.8, seed).unwrap();
            let (pi, _) = mdp::solve_optimal(&mdp, 1e-12).unwrap();
            let target = marginal_occupancy(&mdp, &pi, mdp.rho_online()).unwrap();
            let set = enumerate_ambiguity_set(&mdp, &target, 0.0, DEFAULT_ENUMERATION_CAP).unwrap();
            assert_eq!(set.members, vec![canonicalize(&mdp, &pi).unwrap()]);
        }
    }

    #[test]
    fn pruned_search_matches_naive_enumeration() {
        for seed in 0..25 {
            let dims = Dims::new(3, 2, 2);
            let mdp = envs::random_mdp(dims, 0.7, seed).unwrap();
            let pi = envs::random_deterministic_policy(dims, seed);
            let target = marginal_occupancy(&mdp, &pi, mdp.rho_online()).unwrap();
            for delta in [0.0, 0.02, 0.1] {
                let a = enumerate_ambiguity_set(&mdp, &target, delta, DEFAULT_ENUMERATION_CAP).unwrap();
                let b = enumerate_ambiguity_set_naive(&mdp, &target, delta, DEFAULT_ENUMERATION_CAP).unwrap();
                let mut a = a.members;
                let mut b = b.members;
                a.sort_by(|p, q| p.actions().cmp(&q.actions()));
                b.sort_by(|p, q| p.actions().cmp(&q.actions()));
                assert_eq!(a, b, "seed {seed}, delta {delta}");
            }
        }
    }

    #[test]
    fn enumeration_respects_node_cap() {
        let (mdp, set) = toy_set(0.9);
        let r = enumerate_ambiguity_set(&mdp, &set.reference_occupancy, 0.0, 3);
        assert!(matches!(r, Err(Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn indicator_reward_singles_out_member() {
        let (mdp, set) = toy_set(0.9);
        let flipped = canonicalize(&mdp, &envs::toy_flipped(mdp.dims())).unwrap();
        let r0 = indicator_reward(&flipped).unwrap();
        let v0 = mdp::evaluate_under(&mdp, &flipped, mdp.rho_online(), &r0).unwrap();
        assert!((v0 - 1.0).abs() < 1e-12);
        let expert = &set.members.iter().find(|m| **m != flipped).unwrap();
        let v = mdp::evaluate_under(&mdp, expert, mdp.rho_online(), &r0).unwrap();
        assert!(v <= 0.9 + 1e-12 && v < 1.0);
        let best_other = canonical_policies(&mdp, 1000)
            .unwrap()
            .into_iter()
            .filter(|p| *p != flipped)
            .map(|p| mdp::evaluate_under(&mdp, &p, mdp.rho_online(), &r0).unwrap())
            .fold(0.0, f64::max);
        assert!(best_other < 1.0 - 1e-9);
    }

    #[test]
    fn iterative_recovers_toy_set() {
        let (mdp, set) = toy_set(0.9);
        let ls = lambda_star(&mdp, &set.reference_occupancy, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(ls > 0.0);
        let cfg = IterativeConfig {
            lambda: ls / 2.0,
            delta: 0.0,
            max_iters: 10,
            seed: 1,
            cap: DEFAULT_ENUMERATION_CAP,
        };
        let res = iterative_ambiguity(&mdp, &set.reference_occupancy, &cfg).unwrap();
        assert!(res.converged);
        assert_eq!(res.productive, 2);
        let mut a = res.set.members.clone();
        let mut b = set.members.clone();
        a.sort_by(|p, q| p.actions().cmp(&q.actions()));
        b.sort_by(|p, q| p.actions().cmp(&q.actions()));
        assert_eq!(a, b);
    }

    #[test]
    fn posterior_on_toy_is_decisive() {
        let mdp = envs::build_toy(0.9, 0.5).unwrap();
        let pi = envs::toy_expert(mdp.dims());
        let tau = Trajectory {
            states: vec![TOY_A, envs::TOY_B, envs::TOY_B],
            actions: vec![TOY_TO_B, TOY_TO_B, TOY_TO_B],
        };
        let post = context_posterior(&mdp, &pi, mdp.rho_online(), &tau).unwrap();
        assert_eq!(post, vec![1.0, 0.0]);
        let bad = Trajectory {
            states: vec![TOY_A, envs::TOY_B],
            actions: vec![TOY_TO_C, TOY_TO_B],
        };
        assert!(matches!(
            context_posterior(&mdp, &pi, mdp.rho_online(), &bad),
            Err(Error::ZeroLikelihood)
        ));
    }

    #[test]
    fn toy_reward_eps_is_one_half() {
        let mdp = envs::build_toy(0.9, 0.5).unwrap();
        assert_eq!(reward_context_eps(&mdp), vec![0.5, 0.5]);
        assert!(matches!(
            check_context_free_reward(&mdp, &toy_set(0.9).1, 1e-9),
            Err(Error::Precondition { .. })
        ));
    }

    #[test]
    fn toy_reward_bound_holds() {
        let (mdp, set) = toy_set(0.9);
        let expert = envs::toy_expert(mdp.dims());
        let eps = SensitivityParams::from_mdp(&mdp, 1.0).unwrap();
        let rep = context_dependent_reward_bound(&mdp, &set, &expert, mdp.rho_online(), &eps).unwrap();
        assert!((rep.eps_oe - 1.0).abs() < 1e-12);
        assert!(rep.slack >= -1e-9);
        let _ = TOY_TO_C;
    }

    /// Start state 0, detour state 1, goal 2. The direct move is blocked in
    /// context 2. Under a shifted online law a member can match the data
    /// marginal by detouring in a heavy context, so it loses value even
    /// though the reward is context-free.
    #[test]
    fn context_free_reward_with_shift_admits_suboptimal_members() {
        let dims = Dims::new(3, 3, 2);
        let mdp = ContextualMdp::from_fn(
            dims,
            |x, s, a, s2| {
                let to = match (s, a) {
                    (0, 0) if x == 2 => 0,
                    (0, 0) => 2,
                    (0, _) => 1,
                    _ => 2,
                };
                if to == s2 { 1.0 } else { 0.0 }
            },
            |_, s, _| if s == 2 { 1.0 } else { 0.0 },
            ContextDistribution::new(vec![0.4, 0.4, 0.2]).unwrap(),
            |_, s| if s == 0 { 1.0 } else { 0.0 },
            0.9,
        )
        .unwrap();
        assert!(mdp.reward_is_context_free());
        let rho_e = ContextDistribution::new(vec![0.2, 0.2, 0.6]).unwrap();
        let (expert, v_star) = mdp::solve_optimal(&mdp, 1e-12).unwrap();
        let target = marginal_occupancy(&mdp, &expert, &rho_e).unwrap();
        let set = enumerate_ambiguity_set(&mdp, &target, 0.0, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(set.len(), 2);
        assert!(!set.contains(&mdp, &expert).unwrap());
        for v in set.values(&mdp).unwrap() {
            assert!((v - 0.846).abs() < 1e-12 && v < v_star - 0.03);
        }
    }
}
