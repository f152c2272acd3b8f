//! Contextual MDPs, policies, exact per-context planning and simulation.
//!
//! Tables are stored context-major: transitions as `[x][s][a][s']`, rewards
//! and policies as `[x][s][a]`, initial distributions as `[x][s]`. The
//! `*_spec_order` accessors convert to the external row-major layouts
//! `P[s',s,a,x]`, `r[s,a,x]`, `ν[s,x]` and `π[a,s,x]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math::{abs, ceil, ln};
use crate::occupancy;
use crate::rng::{self, categorical, StreamRng};
use crate::{Error, Result};

/// Maximum number of dense `(s, a, x)` entries.
pub const SIZE_CAP: usize = 1_000_000;
/// Row-sum tolerance for every probability table.
pub const SUM_TOL: f64 = 1e-12;
/// Relative tolerance under which two action values count as tied.
pub const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_states: usize,
    pub n_contexts: usize,
    pub n_actions: usize,
}

impl Dims {
    pub fn new(n_states: usize, n_contexts: usize, n_actions: usize) -> Self {
        Dims {
            n_states,
            n_contexts,
            n_actions,
        }
    }

    /// Index into a context-major `[x][s][a]` table.
    #[inline]
    pub fn sax(&self, s: usize, a: usize, x: usize) -> usize {
        (x * self.n_states + s) * self.n_actions + a
    }

    /// Index into an `[s][a]` table.
    #[inline]
    pub fn sa(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn sa_len(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn sax_len(&self) -> usize {
        self.n_states * self.n_actions * self.n_contexts
    }

    fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_contexts == 0 || self.n_actions == 0 {
            return Err(Error::InvalidParameter {
                what: "dimensions",
                detail: format!("all counts must be positive, got {self:?}"),
            });
        }
        let entries = self
            .n_states
            .checked_mul(self.n_actions)
            .and_then(|v| v.checked_mul(self.n_contexts))
            .unwrap_or(usize::MAX);
        if entries > SIZE_CAP {
            return Err(Error::TooLarge {
                entries,
                cap: SIZE_CAP,
            });
        }
        Ok(())
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

fn check_simplex(what: &'static str, row: &[f64]) -> Result<()> {
    if row.iter().any(|v| v.is_nan()) {
        return Err(Error::NotANumber { what });
    }
    if let Some(v) = row.iter().find(|&&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidDistribution {
            what,
            detail: format!("entry {v} is negative or infinite"),
        });
    }
    let total: f64 = row.iter().sum();
    if abs(total - 1.0) > SUM_TOL {
        return Err(Error::InvalidDistribution {
            what,
            detail: format!("sums to {total:.17}"),
        });
    }
    Ok(())
}

/// A distribution over contexts (ρ_o, ρ_e, ρ_s, or a mixture of them).
#[derive(Debug, Clone, PartialEq)]
pub struct ContextDistribution {
    weights: Vec<f64>,
}

impl ContextDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty {
                what: "context distribution",
            });
        }
        check_simplex("context distribution", &weights)?;
        Ok(ContextDistribution { weights })
    }

    /// Normalizes nonnegative weights first; for grids and mixtures whose
    /// float sums drift a few ulps.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidDistribution {
                what: "context distribution",
                detail: format!("cannot normalize weights with total {total}"),
            });
        }
        for w in &mut weights {
            *w /= total;
        }
        Self::new(weights)
    }

    pub fn uniform(n: usize) -> Self {
        ContextDistribution {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, x: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[x] = 1.0;
        ContextDistribution { weights }
    }

    /// `(1 − β)·self + β·other`.
    pub fn mix(&self, other: &ContextDistribution, beta: f64) -> Result<Self> {
        check_len("mixture component", self.len(), other.len())?;
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidParameter {
                what: "beta",
                detail: format!("{beta} not in [0, 1]"),
            });
        }
        Self::normalized(
            self.weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| (1.0 - beta) * a + beta * b)
                .collect(),
        )
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        categorical(rng, &self.weights)
    }
}

/// A context-dependent Markov policy `π(a | s, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    dims: Dims,
    probs: Vec<f64>,
    deterministic: bool,
}

impl Policy {
    /// From a context-major `[x][s][a]` table.
    pub fn from_probs(dims: Dims, probs: Vec<f64>) -> Result<Self> {
        dims.validate()?;
        check_len("policy table", dims.sax_len(), probs.len())?;
        for row in probs.chunks(dims.n_actions) {
            check_simplex("policy row", row)?;
        }
        let deterministic = probs
            .chunks(dims.n_actions)
            .all(|row| row.iter().all(|&p| p == 0.0 || p == 1.0));
        Ok(Policy {
            dims,
            probs,
            deterministic,
        })
    }

    /// From the external `π[a,s,x]` row-major layout.
    pub fn from_spec_order(dims: Dims, table: &[f64]) -> Result<Self> {
        check_len("policy table", dims.sax_len(), table.len())?;
        let Dims {
            n_states: ns,
            n_contexts: nx,
            n_actions: na,
        } = dims;
        let mut probs = vec![0.0; dims.sax_len()];
        for a in 0..na {
            for s in 0..ns {
                for x in 0..nx {
                    probs[dims.sax(s, a, x)] = table[(a * ns + s) * nx + x];
                }
            }
        }
        Self::from_probs(dims, probs)
    }

    /// From an `[x][s]` table of chosen actions.
    pub fn deterministic(dims: Dims, actions: &[usize]) -> Result<Self> {
        dims.validate()?;
        check_len(
            "deterministic action table",
            dims.n_states * dims.n_contexts,
            actions.len(),
        )?;
        let mut probs = vec![0.0; dims.sax_len()];
        for (row, &a) in actions.iter().enumerate() {
            if a >= dims.n_actions {
                return Err(Error::InvalidParameter {
                    what: "action",
                    detail: format!("action {a} out of range for {} actions", dims.n_actions),
                });
            }
            probs[row * dims.n_actions + a] = 1.0;
        }
        Ok(Policy {
            dims,
            probs,
            deterministic: true,
        })
    }

    pub fn uniform(dims: Dims) -> Self {
        Policy {
            dims,
            probs: vec![1.0 / dims.n_actions as f64; dims.sax_len()],
            deterministic: dims.n_actions == 1,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, x: usize) -> f64 {
        self.probs[self.dims.sax(s, a, x)]
    }

    pub fn row(&self, s: usize, x: usize) -> &[f64] {
        let start = self.dims.sax(s, 0, x);
        &self.probs[start..start + self.dims.n_actions]
    }

    /// Context-major `[x][s][a]` table.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// The chosen action when the row is one-hot.
    pub fn action(&self, s: usize, x: usize) -> Option<usize> {
        let row = self.row(s, x);
        row.iter().position(|&p| p == 1.0)
    }

    /// `[x][s]` action table of a deterministic policy.
    pub fn actions(&self) -> Option<Vec<usize>> {
        if !self.deterministic {
            return None;
        }
        (0..self.dims.n_contexts)
            .flat_map(|x| (0..self.dims.n_states).map(move |s| (s, x)))
            .map(|(s, x)| self.action(s, x))
            .collect()
    }

    pub fn to_spec_order(&self) -> Vec<f64> {
        let Dims {
            n_states: ns,
            n_contexts: nx,
            n_actions: na,
        } = self.dims;
        let mut out = vec![0.0; self.dims.sax_len()];
        for a in 0..na {
            for s in 0..ns {
                for x in 0..nx {
                    out[(a * ns + s) * nx + x] = self.prob(s, a, x);
                }
            }
        }
        out
    }

    pub fn sample_action(&self, s: usize, x: usize, rng: &mut impl Rng) -> usize {
        categorical(rng, self.row(s, x))
    }
}

/// The contextual MDP tuple `(S, X, A, P, r, ρ_o, ν, γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualMdp {
    dims: Dims,
    transition: Vec<f64>,
    reward: Vec<f64>,
    rho_online: ContextDistribution,
    initial: Vec<f64>,
    gamma: f64,
}

impl ContextualMdp {
    /// Builds an MDP from tables in the external row-major layouts
    /// `P[s',s,a,x]`, `r[s,a,x]` and `ν[s,x]`.
    pub fn from_spec_order(
        dims: Dims,
        transition: &[f64],
        reward: &[f64],
        rho_online: ContextDistribution,
        initial: &[f64],
        gamma: f64,
    ) -> Result<Self> {
        dims.validate()?;
        let Dims {
            n_states: ns,
            n_contexts: nx,
            n_actions: na,
        } = dims;
        check_len("transition table", ns * ns * na * nx, transition.len())?;
        check_len("reward table", ns * na * nx, reward.len())?;
        check_len("initial-state table", ns * nx, initial.len())?;
        Self::from_fn(
            dims,
            |x, s, a, s2| transition[((s2 * ns + s) * na + a) * nx + x],
            |x, s, a| reward[(s * na + a) * nx + x],
            rho_online,
            |x, s| initial[s * nx + x],
            gamma,
        )
    }

    /// Builds an MDP from element closures `P(x, s, a, s')`, `r(x, s, a)`, `ν(x, s)`.
    pub fn from_fn(
        dims: Dims,
        transition: impl Fn(usize, usize, usize, usize) -> f64,
        reward: impl Fn(usize, usize, usize) -> f64,
        rho_online: ContextDistribution,
        initial: impl Fn(usize, usize) -> f64,
        gamma: f64,
    ) -> Result<Self> {
        dims.validate()?;
        let Dims {
            n_states: ns,
            n_contexts: nx,
            n_actions: na,
        } = dims;
        let mut p = Vec::with_capacity(ns * ns * na * nx);
        let mut r = Vec::with_capacity(ns * na * nx);
        let mut nu = Vec::with_capacity(ns * nx);
        for x in 0..nx {
            for s in 0..ns {
                nu.push(initial(x, s));
                for a in 0..na {
                    r.push(reward(x, s, a));
                    for s2 in 0..ns {
                        p.push(transition(x, s, a, s2));
                    }
                }
            }
        }
        let mdp = ContextualMdp {
            dims,
            transition: p,
            reward: r,
            rho_online,
            initial: nu,
            gamma,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    fn validate(&self) -> Result<()> {
        let ns = self.dims.n_states;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter {
                what: "gamma",
                detail: format!("{} not in (0, 1)", self.gamma),
            });
        }
        check_len("rho_online", self.dims.n_contexts, self.rho_online.len())?;
        for row in self.transition.chunks(ns) {
            check_simplex("transition row", row)?;
        }
        for row in self.initial.chunks(ns) {
            check_simplex("initial-state distribution", row)?;
        }
        if self.reward.iter().any(|r| r.is_nan()) {
            return Err(Error::NotANumber { what: "reward" });
        }
        if let Some(r) = self.reward.iter().find(|&&r| !(0.0..=1.0).contains(&r)) {
            return Err(Error::InvalidParameter {
                what: "reward",
                detail: format!("{r} outside [0, 1]"),
            });
        }
        Ok(())
    }

    /// Same dynamics with a different reward table (context-major `[x][s][a]`).
    pub fn with_reward(&self, reward: Vec<f64>) -> Result<Self> {
        check_len("reward table", self.dims.sax_len(), reward.len())?;
        let mdp = ContextualMdp {
            reward,
            ..self.clone()
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Same dynamics and reward with a different online context distribution.
    pub fn with_rho_online(&self, rho: ContextDistribution) -> Result<Self> {
        let mdp = ContextualMdp {
            rho_online: rho,
            ..self.clone()
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rho_online(&self) -> &ContextDistribution {
        &self.rho_online
    }

    #[inline]
    pub fn p(&self, x: usize, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[self.dims.sax(s, a, x) * self.dims.n_states + s2]
    }

    /// Next-state distribution for `(s, a, x)`.
    pub fn next_states(&self, s: usize, a: usize, x: usize) -> &[f64] {
        let ns = self.dims.n_states;
        let start = self.dims.sax(s, a, x) * ns;
        &self.transition[start..start + ns]
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize, x: usize) -> f64 {
        self.reward[self.dims.sax(s, a, x)]
    }

    /// Context-major `[x][s][a]` reward table.
    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    pub fn initial(&self, x: usize) -> &[f64] {
        let ns = self.dims.n_states;
        &self.initial[x * ns..(x + 1) * ns]
    }

    pub fn transition_spec_order(&self) -> Vec<f64> {
        let Dims {
            n_states: ns,
            n_contexts: nx,
            n_actions: na,
        } = self.dims;
        let mut out = vec![0.0; ns * ns * na * nx];
        for x in 0..nx {
            for s in 0..ns {
                for a in 0..na {
                    for s2 in 0..ns {
                        out[((s2 * ns + s) * na + a) * nx + x] = self.p(x, s, a, s2);
                    }
                }
            }
        }
        out
    }

    pub fn reward_spec_order(&self) -> Vec<f64> {
        let Dims {
            n_states: ns,
            n_contexts: nx,
            n_actions: na,
        } = self.dims;
        let mut out = vec![0.0; ns * na * nx];
        for x in 0..nx {
            for s in 0..ns {
                for a in 0..na {
                    out[(s * na + a) * nx + x] = self.r(s, a, x);
                }
            }
        }
        out
    }

    pub fn initial_spec_order(&self) -> Vec<f64> {
        let Dims {
            n_states: ns,
            n_contexts: nx,
            ..
        } = self.dims;
        let mut out = vec![0.0; ns * nx];
        for x in 0..nx {
            for s in 0..ns {
                out[s * nx + x] = self.initial(x)[s];
            }
        }
        out
    }

    /// Whether `r(s,a,x) = r(s,a,x')` for all contexts.
    pub fn reward_is_context_free(&self) -> bool {
        let Dims {
            n_states: ns,
            n_contexts: nx,
            n_actions: na,
        } = self.dims;
        (0..ns).all(|s| (0..na).all(|a| (1..nx).all(|x| self.r(s, a, x) == self.r(s, a, 0))))
    }

    pub(crate) fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.dims() != self.dims {
            return Err(Error::Dimension {
                what: "policy",
                expected: self.dims.sax_len(),
                found: policy.dims().sax_len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_dist(&self, dist: &ContextDistribution) -> Result<()> {
        check_len("context distribution", self.dims.n_contexts, dist.len())
    }
}

/// Result of per-context value iteration.
#[derive(Debug, Clone)]
pub struct Plan {
    /// Greedy deterministic policy.
    pub policy: Policy,
    /// Normalized state values, `[x][s]`.
    pub values: Vec<f64>,
    /// Final Bellman residual (sup over contexts and states).
    pub residual: f64,
    pub iterations: usize,
}

/// Iteration cap for value iteration from a zero start with rewards bounded by `scale`.
pub fn iteration_cap(gamma: f64, tol: f64, scale: f64) -> usize {
    let scale = scale.max(1.0);
    // Logs taken separately so tiny tolerances do not underflow.
    let n = ceil((ln(tol) + ln(1.0 - gamma) - ln(scale)) / ln(gamma));
    (n.max(0.0).min(1e12) as usize) + 1
}

fn q_value(mdp: &ContextualMdp, reward: &[f64], values_x: &[f64], s: usize, a: usize, x: usize) -> f64 {
    let g = mdp.gamma;
    let next: f64 = mdp
        .next_states(s, a, x)
        .iter()
        .zip(values_x)
        .map(|(p, v)| p * v)
        .sum();
    (1.0 - g) * reward[mdp.dims.sax(s, a, x)] + g * next
}

/// Lowest-index action within the tie tolerance of the best Q-value.
fn greedy_row(q: &[f64]) -> usize {
    let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let slack = TIE_TOL * best.abs().max(1.0);
    q.iter().position(|&v| v >= best - slack).unwrap_or(0)
}

/// Per-context value iteration on an arbitrary bounded reward table
/// (context-major), stopped once the Bellman residual drops below `tol`.
///
/// `warm` seeds the `[x][s]` values.
pub fn value_iteration(
    mdp: &ContextualMdp,
    reward: &[f64],
    tol: f64,
    warm: Option<&[f64]>,
) -> Result<Plan> {
    value_iteration_capped(mdp, reward, tol, warm, None)
}

pub(crate) fn value_iteration_capped(
    mdp: &ContextualMdp,
    reward: &[f64],
    tol: f64,
    warm: Option<&[f64]>,
    cap: Option<usize>,
) -> Result<Plan> {
    let dims = mdp.dims;
    check_len("reward table", dims.sax_len(), reward.len())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            what: "tol",
            detail: format!("{tol} must be positive"),
        });
    }
    if reward.iter().any(|r| !r.is_finite()) {
        return Err(Error::NotANumber { what: "reward" });
    }
    let ns = dims.n_states;
    let na = dims.n_actions;
    let mut values = match warm {
        Some(w) => {
            check_len("warm-start values", ns * dims.n_contexts, w.len())?;
            w.to_vec()
        }
        None => vec![0.0; ns * dims.n_contexts],
    };
    // A warm start adds at most 2·max|V₀| to the initial residual.
    let scale = reward.iter().map(|r| abs(*r)).fold(0.0, f64::max)
        + 2.0 * values.iter().map(|v| abs(*v)).fold(0.0, f64::max);
    let cap = cap.unwrap_or_else(|| iteration_cap(mdp.gamma, tol, scale));
    let mut next = vec![0.0; ns];
    let mut q = vec![0.0; na];
    let mut iterations = 0;

    while iterations <= cap {
        let mut residual: f64 = 0.0;
        for x in 0..dims.n_contexts {
            let vx = &values[x * ns..(x + 1) * ns];
            for s in 0..ns {
                for (a, qa) in q.iter_mut().enumerate() {
                    *qa = q_value(mdp, reward, vx, s, a, x);
                }
                let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                residual = f64::max(residual, abs(best - vx[s]));
                next[s] = best;
            }
            values[x * ns..(x + 1) * ns].copy_from_slice(&next);
        }
        // `residual` is measured on the values before this sweep; after the
        // sweep the residual is at most γ times smaller.
        if residual * mdp.gamma < tol {
            break;
        }
        iterations += 1;
    }
    let mut actions = vec![0usize; ns * dims.n_contexts];
    let mut final_residual: f64 = 0.0;
    for x in 0..dims.n_contexts {
        let vx = &values[x * ns..(x + 1) * ns];
        for s in 0..ns {
            for (a, qa) in q.iter_mut().enumerate() {
                *qa = q_value(mdp, reward, vx, s, a, x);
            }
            let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            final_residual = final_residual.max(abs(best - vx[s]));
            actions[x * ns + s] = greedy_row(&q);
        }
    }
    if !(final_residual < tol) {
        return Err(Error::NonConvergence {
            iterations,
            residual: final_residual,
        });
    }
    Ok(Plan {
        policy: Policy::deterministic(dims, &actions)?,
        values,
        residual: final_residual,
        iterations,
    })
}

/// Policy-iteration polish: repeat exact evaluation and lowest-index greedy
/// improvement until the policy is stable. Starting from a near-optimal policy
/// this ends on the canonical (lowest-index) optimal policy.
fn polish(mdp: &ContextualMdp, reward: &[f64], start: Policy) -> Result<Policy> {
    let dims = mdp.dims;
    let ns = dims.n_states;
    let mut policy = start;
    let mut q = vec![0.0; dims.n_actions];
    for _ in 0..(10 + dims.sax_len()) {
        let mut actions = vec![0usize; ns * dims.n_contexts];
        for x in 0..dims.n_contexts {
            let vx = occupancy::state_values(mdp, &policy, reward, x)?;
            for s in 0..ns {
                for (a, qa) in q.iter_mut().enumerate() {
                    *qa = q_value(mdp, reward, &vx, s, a, x);
                }
                actions[x * ns + s] = greedy_row(&q);
            }
        }
        let improved = Policy::deterministic(dims, &actions)?;
        if improved == policy {
            return Ok(policy);
        }
        policy = improved;
    }
    Ok(policy)
}

/// Optimal deterministic policy for an arbitrary bounded reward table.
pub fn solve_with_reward(mdp: &ContextualMdp, reward: &[f64], tol: f64) -> Result<Plan> {
    solve_with_reward_from(mdp, reward, tol, None)
}

/// [`solve_with_reward`] with value iteration seeded by `warm`.
pub fn solve_with_reward_from(
    mdp: &ContextualMdp,
    reward: &[f64],
    tol: f64,
    warm: Option<&[f64]>,
) -> Result<Plan> {
    let plan = value_iteration(mdp, reward, tol, warm)?;
    let policy = polish(mdp, reward, plan.policy)?;
    Ok(Plan { policy, ..plan })
}

/// Optimal policy in every context and its value `v*`.
pub fn solve_optimal(mdp: &ContextualMdp, tol: f64) -> Result<(Policy, f64)> {
    let plan = solve_with_reward(mdp, &mdp.reward, tol)?;
    let value = evaluate_policy(mdp, &plan.policy)?;
    Ok((plan.policy, value))
}

/// A catastrophic policy (value minimizer) and its value.
pub fn worst_policy(mdp: &ContextualMdp, tol: f64) -> Result<(Policy, f64)> {
    let negated: Vec<f64> = mdp.reward.iter().map(|r| -r).collect();
    let plan = solve_with_reward(mdp, &negated, tol)?;
    let value = evaluate_policy(mdp, &plan.policy)?;
    Ok((plan.policy, value))
}

/// `v(π) = Σ_x ρ_o(x) Σ_{s,a} d^π(s,a|x) r(s,a,x)`.
pub fn evaluate_policy(mdp: &ContextualMdp, policy: &Policy) -> Result<f64> {
    evaluate_under(mdp, policy, &mdp.rho_online, &mdp.reward)
}

/// Value of `policy` under an explicit context distribution and reward table.
pub fn evaluate_under(
    mdp: &ContextualMdp,
    policy: &Policy,
    dist: &ContextDistribution,
    reward: &[f64],
) -> Result<f64> {
    let per = context_values(mdp, policy, reward)?;
    mdp.check_dist(dist)?;
    Ok(crate::math::sum(
        dist.weights().iter().zip(&per).map(|(w, v)| w * v),
    ))
}

/// Per-context values `v(π | x)` under a reward table.
pub fn context_values(mdp: &ContextualMdp, policy: &Policy, reward: &[f64]) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    check_len("reward table", mdp.dims.sax_len(), reward.len())?;
    let dims = mdp.dims;
    (0..dims.n_contexts)
        .map(|x| {
            let d = occupancy::context_table(mdp, policy, x)?;
            Ok(crate::math::sum((0..dims.n_states).flat_map(|s| {
                let d = &d;
                (0..dims.n_actions).map(move |a| d[dims.sa(s, a)] * reward[dims.sax(s, a, x)])
            })))
        })
        .collect()
}

/// One simulated episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub context: usize,
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

/// Simulates `horizon` steps: the context is drawn from `dist`, then
/// `s₀ ~ ν(·|x)`, `a_t ~ π(·|s_t,x)`, `s_{t+1} ~ P(·|s_t,a_t,x)`.
pub fn simulate_episode(
    mdp: &ContextualMdp,
    policy: &Policy,
    dist: &ContextDistribution,
    horizon: usize,
    seed: u64,
) -> Result<Episode> {
    let mut rng = rng::stream(seed, &[rng::domain::EPISODE]);
    simulate_with(mdp, policy, dist, horizon, &mut rng)
}

pub fn simulate_with(
    mdp: &ContextualMdp,
    policy: &Policy,
    dist: &ContextDistribution,
    horizon: usize,
    rng: &mut StreamRng,
) -> Result<Episode> {
    mdp.check_policy(policy)?;
    mdp.check_dist(dist)?;
    if horizon == 0 {
        return Err(Error::InvalidParameter {
            what: "horizon",
            detail: "must be at least 1".into(),
        });
    }
    let x = dist.sample(rng);
    let mut s = categorical(rng, mdp.initial(x));
    let mut ep = Episode {
        context: x,
        states: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
    };
    for t in 0..horizon {
        let a = policy.sample_action(s, x, rng);
        ep.states.push(s);
        ep.actions.push(a);
        ep.rewards.push(mdp.r(s, a, x));
        if t + 1 < horizon {
            s = categorical(rng, mdp.next_states(s, a, x));
        }
    }
    Ok(ep)
}

/// Number of deterministic policies, as a float to survive overflow.
pub fn deterministic_count(dims: Dims) -> f64 {
    crate::math::powi(
        dims.n_actions as f64,
        (dims.n_states * dims.n_contexts) as i32,
    )
}

/// Iterates every deterministic policy as an `[x][s]` action table
/// (odometer order, first entry fastest).
pub struct DeterministicTables {
    n_actions: usize,
    current: Option<Vec<usize>>,
}

impl DeterministicTables {
    pub fn new(dims: Dims, cap: usize) -> Result<Self> {
        let required = deterministic_count(dims);
        if required > cap as f64 {
            return Err(Error::EnumerationTooLarge { required, cap });
        }
        Ok(DeterministicTables {
            n_actions: dims.n_actions,
            current: Some(vec![0; dims.n_states * dims.n_contexts]),
        })
    }
}

impl Iterator for DeterministicTables {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let cur = self.current.as_mut()?;
        let mut i = 0;
        loop {
            if i == cur.len() {
                self.current = None;
                break;
            }
            cur[i] += 1;
            if cur[i] < self.n_actions {
                break;
            }
            cur[i] = 0;
            i += 1;
        }
        Some(out)
    }
}

/// Exhaustive search for the best (or worst) deterministic policy under a
/// reward table. Ties keep the first policy in enumeration order.
pub fn brute_force_extreme(
    mdp: &ContextualMdp,
    reward: &[f64],
    maximize: bool,
    cap: usize,
) -> Result<(Policy, f64)> {
    let mut best: Option<(Policy, f64)> = None;
    for table in DeterministicTables::new(mdp.dims, cap)? {
        let policy = Policy::deterministic(mdp.dims, &table)?;
        let v = evaluate_under(mdp, &policy, &mdp.rho_online, reward)?;
        let better = match &best {
            None => true,
            Some((_, bv)) => {
                if maximize {
                    v > *bv + 1e-12
                } else {
                    v < *bv - 1e-12
                }
            }
        };
        if better {
            best = Some((policy, v));
        }
    }
    best.ok_or(Error::Empty {
        what: "policy enumeration",
    })
}
