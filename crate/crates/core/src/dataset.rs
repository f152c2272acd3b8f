//! Confounded expert data and corrective trajectory sampling (CTS).
//!
//! Expert trajectories are stored without their contexts. The contexts that
//! generated them are returned separately as [`SealedContexts`], which solver
//! code never receives.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::divergence::{exact_divergence, DivergenceSpec};
use crate::math::{abs, floor, ln, powi};
use crate::mdp::{simulate_with, ContextDistribution, ContextualMdp, Policy};
use crate::occupancy::OccupancyMeasure;
use crate::rng::{self, domain, StreamRng};
use crate::{Error, Result};

/// Truncation target: `γ^{H+1} < TAIL_MASS`.
pub const TAIL_MASS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SourceMeta {
    pub seed: u64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    gamma: f64,
    trajectories: Vec<Trajectory>,
    pub meta: SourceMeta,
}

impl TrajectoryDataset {
    /// Every trajectory must carry `horizon + 1` states and actions.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        gamma: f64,
        trajectories: Vec<Trajectory>,
        meta: SourceMeta,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter {
                what: "gamma",
                detail: format!("{gamma} not in (0, 1)"),
            });
        }
        for (i, t) in trajectories.iter().enumerate() {
            if t.states.len() != horizon + 1 || t.actions.len() != horizon + 1 {
                return Err(Error::Dimension {
                    what: "trajectory length",
                    expected: horizon + 1,
                    found: t.states.len().min(t.actions.len()),
                });
            }
            if t.states.iter().any(|&s| s >= n_states) || t.actions.iter().any(|&a| a >= n_actions) {
                return Err(Error::InvalidParameter {
                    what: "trajectory",
                    detail: format!("trajectory {i} has an out-of-range state or action"),
                });
            }
        }
        Ok(TrajectoryDataset {
            n_states,
            n_actions,
            horizon,
            gamma,
            trajectories,
            meta,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Ground-truth contexts of a generated dataset, for oracle checks only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedContexts {
    contexts: Vec<usize>,
}

impl SealedContexts {
    pub fn new(contexts: Vec<usize>) -> Self {
        SealedContexts { contexts }
    }

    pub fn reveal(&self) -> &[usize] {
        &self.contexts
    }
}

/// A probability vector over dataset trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWeights {
    weights: Vec<f64>,
}

impl TrajectoryWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty {
                what: "trajectory weights",
            });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) || abs(total - 1.0) > 1e-12 {
            return Err(Error::InvalidDistribution {
                what: "trajectory weights",
                detail: format!("not on the simplex (sum {total:.17})"),
            });
        }
        Ok(TrajectoryWeights { weights })
    }

    pub fn uniform(n: usize) -> Self {
        TrajectoryWeights {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

/// Smallest `H` with `γ^{H+1} < 1e-6`.
pub fn horizon_for(gamma: f64) -> usize {
    let mut h = floor(ln(TAIL_MASS) / ln(gamma)) as usize;
    while powi(gamma, (h + 1) as i32) >= TAIL_MASS {
        h += 1;
    }
    while h > 0 && powi(gamma, h as i32) < TAIL_MASS {
        h -= 1;
    }
    h
}

/// Samples `n` expert trajectories of length `H + 1` with contexts drawn from
/// `rho_e`; the contexts come back sealed.
pub fn generate_expert_data(
    mdp: &ContextualMdp,
    expert: &Policy,
    rho_e: &ContextDistribution,
    n: usize,
    seed: u64,
) -> Result<(TrajectoryDataset, SealedContexts)> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            what: "n",
            detail: "need at least one trajectory".into(),
        });
    }
    let h = horizon_for(mdp.gamma());
    let mut trajectories = Vec::with_capacity(n);
    let mut contexts = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rng::stream(seed, &[domain::EXPERT_DATA, i as u64]);
        let ep = simulate_with(mdp, expert, rho_e, h + 1, &mut r)?;
        contexts.push(ep.context);
        trajectories.push(Trajectory {
            states: ep.states,
            actions: ep.actions,
        });
    }
    let dims = mdp.dims();
    let ds = TrajectoryDataset::new(
        dims.n_states,
        dims.n_actions,
        h,
        mdp.gamma(),
        trajectories,
        SourceMeta {
            seed,
            description: format!("{n} expert trajectories, horizon {h}"),
        },
    )?;
    Ok((ds, SealedContexts::new(contexts)))
}

/// Oracle trajectory weights `w_i ∝ ρ_s(x_i) / ρ_e(x_i)`.
pub fn oracle_weights(
    sealed: &SealedContexts,
    rho_s: &ContextDistribution,
    rho_e: &ContextDistribution,
) -> Result<TrajectoryWeights> {
    let raw: Vec<f64> = sealed
        .reveal()
        .iter()
        .map(|&x| {
            let e = rho_e.weights()[x];
            if e > 0.0 {
                rho_s.weights()[x] / e
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Precondition {
            what: "support",
            detail: "rho_s puts no mass on any observed context".into(),
        });
    }
    TrajectoryWeights::new(raw.into_iter().map(|w| w / total).collect())
}

/// Trajectories grouped by identical state/action sequences, with each
/// class's discounted indicator profile stored sparsely.
#[derive(Debug, Clone)]
pub struct TrajectoryClasses {
    members: Vec<Vec<usize>>,
    profiles: Vec<Vec<(usize, f64)>>,
    n_trajectories: usize,
    table_len: usize,
}

impl TrajectoryClasses {
    pub fn new(dataset: &TrajectoryDataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Empty { what: "dataset" });
        }
        let mut index: BTreeMap<&Trajectory, usize> = BTreeMap::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (i, t) in dataset.trajectories().iter().enumerate() {
            let next = members.len();
            let c = *index.entry(t).or_insert(next);
            if c == next {
                members.push(Vec::new());
            }
            members[c].push(i);
        }
        let na = dataset.n_actions();
        let g = dataset.gamma();
        let profiles = members
            .iter()
            .map(|m| {
                let t = &dataset.trajectories()[m[0]];
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                let mut disc = 1.0 - g;
                for (&s, &a) in t.states.iter().zip(&t.actions) {
                    *acc.entry(s * na + a).or_insert(0.0) += disc;
                    disc *= g;
                }
                acc.into_iter().collect()
            })
            .collect();
        Ok(TrajectoryClasses {
            members,
            profiles,
            n_trajectories: dataset.len(),
            table_len: dataset.n_states() * na,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    /// Empirical occupancy for class masses `w_c`.
    pub fn occupancy(&self, class_mass: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.table_len];
        for (profile, &w) in self.profiles.iter().zip(class_mass) {
            if w == 0.0 {
                continue;
            }
            for &(z, m) in profile {
                d[z] += w * m;
            }
        }
        d
    }

    /// Splits class masses uniformly among class members.
    pub fn expand(&self, class_mass: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.n_trajectories];
        for (m, &c) in self.members.iter().zip(class_mass) {
            let share = c / m.len() as f64;
            for &i in m {
                w[i] = share;
            }
        }
        w
    }

    /// Class masses of the uniform trajectory weighting.
    pub fn uniform_mass(&self) -> Vec<f64> {
        let n = self.n_trajectories as f64;
        self.members.iter().map(|m| m.len() as f64 / n).collect()
    }

    /// Candidate `m` of a CTS search: a flat Dirichlet draw over classes.
    pub fn candidate(&self, seed: u64, iter: u64, m: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, &[domain::CTS_CANDIDATE, iter, m]);
        rng::uniform_simplex(&mut r, self.len())
    }
}

/// Score used to rank CTS candidates: finite divergences beat infinite
/// ones; among infinite ones, less target mass left uncovered wins, then the
/// divergence restricted to the covered entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub divergence: f64,
    pub uncovered: f64,
    pub covered_divergence: f64,
}

impl CandidateScore {
    pub fn evaluate(spec: DivergenceSpec, target: &[f64], emp: &[f64]) -> Result<Self> {
        let divergence = exact_divergence(spec, target, emp)?;
        let uncovered = crate::math::sum(
            target
                .iter()
                .zip(emp)
                .filter(|(_, &e)| e == 0.0)
                .map(|(&t, _)| t),
        );
        let covered_divergence = if divergence.is_finite() {
            divergence
        } else {
            let restricted: Vec<f64> = target
                .iter()
                .zip(emp)
                .map(|(&t, &e)| if e == 0.0 { 0.0 } else { t })
                .collect();
            exact_divergence(spec, &restricted, emp)?
        };
        Ok(CandidateScore {
            divergence,
            uncovered,
            covered_divergence,
        })
    }

    pub fn cmp(&self, other: &CandidateScore) -> Ordering {
        let key = |c: &CandidateScore| {
            if c.divergence.is_finite() {
                (0u8, c.divergence, 0.0)
            } else {
                (1u8, c.uncovered, c.covered_divergence)
            }
        };
        let (a, b) = (key(self), key(other));
        a.0.cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtsResult {
    pub weights: TrajectoryWeights,
    pub divergence: f64,
    pub uncovered: f64,
    /// Winning candidate; `num_candidates` denotes the appended uniform one.
    pub index: usize,
    /// Reweighted occupancy of the winner.
    pub occupancy: Vec<f64>,
}

/// Draws `M` candidate weightings plus the uniform weighting and returns the
/// one whose empirical occupancy is closest to `target` in `D_f(target || ·)`.
/// Ties keep the earliest candidate.
pub fn cts_search(
    dataset: &TrajectoryDataset,
    target: &OccupancyMeasure,
    spec: DivergenceSpec,
    num_candidates: usize,
    seed: u64,
) -> Result<CtsResult> {
    let classes = TrajectoryClasses::new(dataset)?;
    cts_search_classes(&classes, target.mass(), spec, num_candidates, seed, 0)
}

/// [`cts_search`] on precomputed classes; `iter` keys the candidate streams.
pub fn cts_search_classes(
    classes: &TrajectoryClasses,
    target: &[f64],
    spec: DivergenceSpec,
    num_candidates: usize,
    seed: u64,
    iter: u64,
) -> Result<CtsResult> {
    if num_candidates == 0 {
        return Err(Error::InvalidParameter {
            what: "num_candidates",
            detail: "must be at least 1".into(),
        });
    }
    if target.len() != classes.table_len {
        return Err(Error::Dimension {
            what: "CTS target",
            expected: classes.table_len,
            found: target.len(),
        });
    }
    let mut best: Option<(usize, Vec<f64>, Vec<f64>, CandidateScore)> = None;
    for m in 0..=num_candidates {
        let mass = if m == num_candidates {
            classes.uniform_mass()
        } else {
            classes.candidate(seed, iter, m as u64)
        };
        let emp = classes.occupancy(&mass);
        let score = CandidateScore::evaluate(spec, target, &emp)?;
        let better = match &best {
            None => true,
            Some((_, _, _, b)) => score.cmp(b) == Ordering::Less,
        };
        if better {
            best = Some((m, mass, emp, score));
        }
    }
    let (index, mass, occupancy, score) = best.ok_or(Error::Empty {
        what: "CTS candidates",
    })?;
    let mut w = classes.expand(&mass);
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    Ok(CtsResult {
        weights: TrajectoryWeights::new(w)?,
        divergence: score.divergence,
        uncovered: score.uncovered,
        index,
        occupancy,
    })
}

/// Inverse-CDF draw of `t ∈ {0..=H}` with `P(t) ∝ γ^t`.
pub fn truncated_geometric(r: &mut StreamRng, gamma: f64, horizon: usize) -> usize {
    let u = rng::unit(r);
    let tail = powi(gamma, (horizon + 1) as i32);
    let t = floor(ln(1.0 - u * (1.0 - tail)) / ln(gamma));
    if t.is_finite() && t >= 0.0 {
        (t as usize).min(horizon)
    } else {
        0
    }
}

/// Cumulative-sum sampler with binary search.
#[derive(Debug, Clone)]
pub struct CumulativeSampler {
    cumulative: Vec<f64>,
}

impl CumulativeSampler {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = weights
            .iter()
            .map(|&w| {
                acc += w.max(0.0);
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(Error::InvalidDistribution {
                what: "sampling weights",
                detail: "total mass is zero".into(),
            });
        }
        Ok(CumulativeSampler { cumulative })
    }

    pub fn draw(&self, r: &mut StreamRng) -> usize {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let u = rng::unit(r) * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        if i < self.cumulative.len() {
            return i;
        }
        // Rounding pushed u onto the total: take the last positive-width entry.
        self.cumulative
            .iter()
            .rposition(|&c| c < total)
            .map_or(0, |j| j + 1)
    }
}

/// Draws `B` state-action pairs from the weighted discounted occupancy of the
/// dataset: trajectory by weight, then a truncated-geometric time step.
pub fn sample_batch(
    dataset: &TrajectoryDataset,
    weights: &TrajectoryWeights,
    batch: usize,
    gamma: f64,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    let mut r = rng::stream(seed, &[domain::BATCH]);
    sample_batch_with(dataset, weights, batch, gamma, &mut r)
}

pub fn sample_batch_with(
    dataset: &TrajectoryDataset,
    weights: &TrajectoryWeights,
    batch: usize,
    gamma: f64,
    r: &mut StreamRng,
) -> Result<Vec<(usize, usize)>> {
    if batch == 0 {
        return Err(Error::InvalidParameter {
            what: "batch",
            detail: "must be at least 1".into(),
        });
    }
    if weights.as_slice().len() != dataset.len() {
        return Err(Error::Dimension {
            what: "trajectory weights",
            expected: dataset.len(),
            found: weights.as_slice().len(),
        });
    }
    let sampler = CumulativeSampler::new(weights.as_slice())?;
    let h = dataset.horizon();
    Ok((0..batch)
        .map(|_| {
            let t = &dataset.trajectories()[sampler.draw(r)];
            let step = truncated_geometric(r, gamma, h);
            (t.states[step], t.actions[step])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;
    use crate::occupancy::{empirical_occupancy, marginal_occupancy};

    #[test]
    fn horizon_meets_tail_bound() {
        for g in [0.5, 0.9, 0.95, 0.99] {
            let h = horizon_for(g);
            assert!(powi(g, (h + 1) as i32) < TAIL_MASS);
            assert!(powi(g, h as i32) >= TAIL_MASS);
        }
    }

    #[test]
    fn point_mass_context_only_visits_b() {
        let mdp = envs::build_toy(0.9, 0.5).unwrap();
        let pi = envs::toy_expert(mdp.dims());
        let (ds, sealed) =
            generate_expert_data(&mdp, &pi, &ContextDistribution::point_mass(2, 0), 50, 1).unwrap();
        assert!(sealed.reveal().iter().all(|&x| x == 0));
        for t in ds.trajectories() {
            assert!(t.states.contains(&envs::TOY_B));
            assert!(!t.states.contains(&envs::TOY_C));
        }
    }

    #[test]
    fn single_trajectory_dataset() {
        let mdp = envs::build_toy(0.9, 0.5).unwrap();
        let pi = envs::toy_expert(mdp.dims());
        let (ds, _) = generate_expert_data(&mdp, &pi, mdp.rho_online(), 1, 2).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.trajectories()[0].states.len(), ds.horizon() + 1);
    }

    #[test]
    fn uniform_candidate_bounds_the_search() {
        let mdp = envs::build_toy(0.9, 0.5).unwrap();
        let pi = envs::toy_expert(mdp.dims());
        let (ds, _) = generate_expert_data(&mdp, &pi, mdp.rho_online(), 100, 3).unwrap();
        let uniform = TrajectoryWeights::uniform(ds.len());
        let target = empirical_occupancy(&ds, uniform.as_slice(), 0.9).unwrap();
        let spec = DivergenceSpec::new(crate::divergence::DivergenceKind::ChiSquared);
        let res = cts_search(&ds, &target, spec, 20, 4).unwrap();
        assert!(res.divergence <= 1e-15);
        let single = cts_search(&ds, &target, spec, 1, 4).unwrap();
        assert!(single.index <= 1);
    }

    #[test]
    fn oracle_weights_recover_online_occupancy() {
        let mdp = envs::build_toy(0.9, 1.0).unwrap();
        let pi = envs::toy_expert(mdp.dims());
        let rho_e = ContextDistribution::uniform(2);
        let (ds, sealed) = generate_expert_data(&mdp, &pi, &rho_e, 500, 5).unwrap();
        let w = oracle_weights(&sealed, mdp.rho_online(), &rho_e).unwrap();
        let emp = empirical_occupancy(&ds, w.as_slice(), 0.9).unwrap();
        let exact = marginal_occupancy(&mdp, &pi, mdp.rho_online()).unwrap();
        assert!(emp.tv(&exact) < 1e-5);
    }

    #[test]
    fn batch_histogram_matches_empirical_occupancy() {
        let mdp = envs::build_toy(0.9, 0.5).unwrap();
        let pi = crate::mdp::Policy::uniform(mdp.dims());
        let (ds, _) = generate_expert_data(&mdp, &pi, mdp.rho_online(), 200, 6).unwrap();
        let w = TrajectoryWeights::uniform(ds.len());
        let emp = empirical_occupancy(&ds, w.as_slice(), 0.9).unwrap();
        let batch = sample_batch(&ds, &w, 100_000, 0.9, 7).unwrap();
        let mut hist = vec![0.0; emp.mass().len()];
        for (s, a) in batch {
            hist[s * 2 + a] += 1e-5;
        }
        assert!(crate::occupancy::tv(&hist, emp.mass()) < 0.02);
    }

    #[test]
    fn tiny_gamma_batches_sit_at_time_zero() {
        let mdp = envs::build_toy(1e-6, 0.5).unwrap();
        let pi = envs::toy_expert(mdp.dims());
        let (ds, _) = generate_expert_data(&mdp, &pi, mdp.rho_online(), 3, 8).unwrap();
        let w = TrajectoryWeights::new(vec![1.0, 0.0, 0.0]).unwrap();
        let batch = sample_batch(&ds, &w, 1000, 1e-6, 9).unwrap();
        let first = (ds.trajectories()[0].states[0], ds.trajectories()[0].actions[0]);
        assert!(batch.iter().filter(|&&p| p == first).count() >= 999);
    }
}
