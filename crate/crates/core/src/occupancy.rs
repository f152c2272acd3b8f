//! Discounted state-action occupancy measures.
//!
//! `d^π(s,a|x) = (1−γ) Σ_t γ^t P^π(s_t = s, a_t = a | x)` is obtained from the
//! state flow equation `μ = (1−γ)ν_x + γ P_πᵀ μ` by a direct solve.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::TrajectoryDataset;
use crate::linalg;
use crate::math::{abs, sum};
use crate::mdp::{ContextDistribution, ContextualMdp, Policy};
use crate::{Error, Result};

/// Residual bound for every occupancy linear system.
pub const SOLVE_RESIDUAL: f64 = 1e-10;

/// Per-context tables `d(s,a|x)` and the weights that produced the marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct PerContext {
    pub weights: Vec<f64>,
    /// `[x][s][a]` conditional occupancies.
    pub tables: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    n_states: usize,
    n_actions: usize,
    mass: Vec<f64>,
    per_context: Option<PerContext>,
}

impl OccupancyMeasure {
    /// Wraps an `[s][a]` table. Entries must be finite and nonnegative; the
    /// total is not forced to 1 because truncated empirical measures fall
    /// short by up to `γ^{H+1}`.
    pub fn from_mass(n_states: usize, n_actions: usize, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != n_states * n_actions {
            return Err(Error::Dimension {
                what: "occupancy table",
                expected: n_states * n_actions,
                found: mass.len(),
            });
        }
        if mass.iter().any(|m| m.is_nan()) {
            return Err(Error::NotANumber {
                what: "occupancy table",
            });
        }
        if mass.iter().any(|&m| m < 0.0 || !m.is_finite()) {
            return Err(Error::InvalidDistribution {
                what: "occupancy table",
                detail: "entries must be finite and nonnegative".into(),
            });
        }
        Ok(OccupancyMeasure {
            n_states,
            n_actions,
            mass,
            per_context: None,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `[s][a]` table.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.mass[s * self.n_actions + a]
    }

    pub fn total(&self) -> f64 {
        sum(self.mass.iter().copied())
    }

    pub fn per_context(&self) -> Option<&PerContext> {
        self.per_context.as_ref()
    }

    /// State marginal `Σ_a d(s,a)`.
    pub fn state_mass(&self) -> Vec<f64> {
        self.mass
            .chunks(self.n_actions)
            .map(|row| row.iter().sum())
            .collect()
    }

    /// Half L1 distance to another measure on the same table.
    pub fn tv(&self, other: &OccupancyMeasure) -> f64 {
        tv(&self.mass, &other.mass)
    }

    /// `max_{s,a} |d − d'|`.
    pub fn sup_distance(&self, other: &OccupancyMeasure) -> f64 {
        crate::math::max_abs_diff(&self.mass, &other.mass)
    }
}

impl AsRef<[f64]> for OccupancyMeasure {
    fn as_ref(&self) -> &[f64] {
        &self.mass
    }
}

pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * sum(p.iter().zip(q).map(|(a, b)| abs(a - b)))
}

/// Discounted state distribution `μ(s|x)` of a policy.
pub fn state_distribution(mdp: &ContextualMdp, policy: &Policy, x: usize) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    let dims = mdp.dims();
    if x >= dims.n_contexts {
        return Err(Error::InvalidParameter {
            what: "context",
            detail: alloc::format!("index {x} out of range for {} contexts", dims.n_contexts),
        });
    }
    let ns = dims.n_states;
    let g = mdp.gamma();
    // Row s' of (I − γ P_πᵀ): δ_{s's} − γ Σ_a π(a|s,x) P(s'|s,a,x).
    let mut m = vec![0.0; ns * ns];
    for s in 0..ns {
        m[s * ns + s] += 1.0;
        for (a, &pa) in policy.row(s, x).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (s2, &p) in mdp.next_states(s, a, x).iter().enumerate() {
                if p != 0.0 {
                    m[s2 * ns + s] -= g * pa * p;
                }
            }
        }
    }
    let rhs: Vec<f64> = mdp.initial(x).iter().map(|v| (1.0 - g) * v).collect();
    let mut mu = linalg::solve(&m, &rhs, SOLVE_RESIDUAL)?;
    // Exact zeros stay zero; clip round-off negatives.
    for v in &mut mu {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(mu)
}

/// `[s][a]` table of `d^π(s,a|x)`.
pub fn context_table(mdp: &ContextualMdp, policy: &Policy, x: usize) -> Result<Vec<f64>> {
    let mu = state_distribution(mdp, policy, x)?;
    let na = mdp.dims().n_actions;
    let mut d = vec![0.0; mu.len() * na];
    for (s, &m) in mu.iter().enumerate() {
        for (a, &p) in policy.row(s, x).iter().enumerate() {
            d[s * na + a] = m * p;
        }
    }
    Ok(d)
}

/// Normalized state values `V(s|x) = (1−γ) E Σ γ^t r` under an arbitrary
/// reward table (context-major).
pub fn state_values(
    mdp: &ContextualMdp,
    policy: &Policy,
    reward: &[f64],
    x: usize,
) -> Result<Vec<f64>> {
    let dims = mdp.dims();
    let ns = dims.n_states;
    let g = mdp.gamma();
    let mut m = vec![0.0; ns * ns];
    let mut rhs = vec![0.0; ns];
    for s in 0..ns {
        m[s * ns + s] += 1.0;
        for (a, &pa) in policy.row(s, x).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            rhs[s] += (1.0 - g) * pa * reward[dims.sax(s, a, x)];
            for (s2, &p) in mdp.next_states(s, a, x).iter().enumerate() {
                m[s * ns + s2] -= g * pa * p;
            }
        }
    }
    let scale = rhs.iter().map(|v| abs(*v)).fold(1.0, f64::max);
    linalg::solve(&m, &rhs, SOLVE_RESIDUAL * scale)
}

/// Exact per-context occupancy `d^π(·,·|x)`.
pub fn exact_occupancy(mdp: &ContextualMdp, policy: &Policy, x: usize) -> Result<OccupancyMeasure> {
    let d = context_table(mdp, policy, x)?;
    let dims = mdp.dims();
    OccupancyMeasure::from_mass(dims.n_states, dims.n_actions, d)
}

/// `d_ρ^π(s,a) = Σ_x ρ(x) d^π(s,a|x)`, keeping the per-context tables.
pub fn marginal_occupancy(
    mdp: &ContextualMdp,
    policy: &Policy,
    dist: &ContextDistribution,
) -> Result<OccupancyMeasure> {
    mdp.check_dist(dist)?;
    let dims = mdp.dims();
    let sa = dims.sa_len();
    let mut tables = Vec::with_capacity(dims.sax_len());
    for x in 0..dims.n_contexts {
        tables.extend(context_table(mdp, policy, x)?);
    }
    let mass = (0..sa)
        .map(|i| {
            sum(dist
                .weights()
                .iter()
                .enumerate()
                .map(|(x, w)| w * tables[x * sa + i]))
        })
        .collect();
    let mut occ = OccupancyMeasure::from_mass(dims.n_states, dims.n_actions, mass)?;
    occ.per_context = Some(PerContext {
        weights: dist.weights().to_vec(),
        tables,
    });
    Ok(occ)
}

/// Marginal built from already-computed per-context tables.
pub fn mix_tables(
    n_states: usize,
    n_actions: usize,
    tables: &[f64],
    weights: &[f64],
) -> Result<OccupancyMeasure> {
    let sa = n_states * n_actions;
    if tables.len() != sa * weights.len() {
        return Err(Error::Dimension {
            what: "per-context tables",
            expected: sa * weights.len(),
            found: tables.len(),
        });
    }
    let mass = (0..sa)
        .map(|i| sum(weights.iter().enumerate().map(|(x, w)| w * tables[x * sa + i])))
        .collect();
    let mut occ = OccupancyMeasure::from_mass(n_states, n_actions, mass)?;
    occ.per_context = Some(PerContext {
        weights: weights.to_vec(),
        tables: tables.to_vec(),
    });
    Ok(occ)
}

/// Weighted average of per-trajectory discounted indicator profiles
/// `(1−γ) Σ_{t≤H} γ^t 1{(s_t,a_t) = (s,a)}`. No tail renormalization.
pub fn empirical_occupancy(
    dataset: &TrajectoryDataset,
    weights: &[f64],
    gamma: f64,
) -> Result<OccupancyMeasure> {
    if dataset.is_empty() {
        return Err(Error::Empty { what: "dataset" });
    }
    if weights.len() != dataset.len() {
        return Err(Error::Dimension {
            what: "trajectory weights",
            expected: dataset.len(),
            found: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) || abs(total - 1.0) > 1e-9 {
        return Err(Error::InvalidDistribution {
            what: "trajectory weights",
            detail: alloc::format!("must be a probability vector (sum {total})"),
        });
    }
    let na = dataset.n_actions();
    let mut mass = vec![0.0; dataset.n_states() * na];
    for (traj, &w) in dataset.trajectories().iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let mut disc = 1.0 - gamma;
        for (&s, &a) in traj.states.iter().zip(&traj.actions) {
            mass[s * na + a] += w * disc;
            disc *= gamma;
        }
    }
    OccupancyMeasure::from_mass(dataset.n_states(), na, mass)
}
