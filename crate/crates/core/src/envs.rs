//! Built-in environments: the three-state toy, the catastrophic-imitation
//! bandit family, a four-rooms gridworld with context-dependent walls, and
//! random instances for property tests.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::mdp::{ContextDistribution, ContextualMdp, Dims, Policy};
use crate::rng::{self, domain};
use crate::{Error, Result};

pub const TOY_A: usize = 0;
pub const TOY_B: usize = 1;
pub const TOY_C: usize = 2;
/// Action leading from A to B.
pub const TOY_TO_B: usize = 0;
/// Action leading from A to C.
pub const TOY_TO_C: usize = 1;

/// Three states A, B, C; two actions; two contexts. From A the action picks
/// the sink B or C; B and C are absorbing. `r(B,·,x₁) = r(C,·,x₂) = 1`.
pub fn build_toy(gamma: f64, rho: f64) -> Result<ContextualMdp> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter {
            what: "rho",
            detail: format!("{rho} not in [0, 1]"),
        });
    }
    ContextualMdp::from_fn(
        Dims::new(3, 2, 2),
        |_, s, a, s2| {
            let to = match s {
                TOY_A if a == TOY_TO_B => TOY_B,
                TOY_A => TOY_C,
                other => other,
            };
            if s2 == to {
                1.0
            } else {
                0.0
            }
        },
        |x, s, _| {
            if (s == TOY_B && x == 0) || (s == TOY_C && x == 1) {
                1.0
            } else {
                0.0
            }
        },
        ContextDistribution::new(vec![rho, 1.0 - rho])?,
        |_, s| if s == TOY_A { 1.0 } else { 0.0 },
        gamma,
    )
}

fn toy_policy(dims: Dims, in_x1: usize, in_x2: usize) -> Policy {
    // [x][s]: A, B, C per context; sinks keep "their" action.
    let table = [in_x1, TOY_TO_B, TOY_TO_C, in_x2, TOY_TO_B, TOY_TO_C];
    Policy::deterministic(dims, &table).expect("toy policy table is well formed")
}

/// The expert: go to the rewarding sink in each context.
pub fn toy_expert(dims: Dims) -> Policy {
    toy_policy(dims, TOY_TO_B, TOY_TO_C)
}

/// The catastrophic policy: go to the other sink in each context.
pub fn toy_flipped(dims: Dims) -> Policy {
    toy_policy(dims, TOY_TO_C, TOY_TO_B)
}

/// Random instance: Dirichlet transition rows, initial rows and ρ_o, uniform rewards.
pub fn random_mdp(dims: Dims, gamma: f64, seed: u64) -> Result<ContextualMdp> {
    let mut r = rng::stream(seed, &[domain::INSTANCE, 0]);
    let ns = dims.n_states;
    let rows: Vec<Vec<f64>> = (0..dims.sax_len())
        .map(|_| rng::uniform_simplex(&mut r, ns))
        .collect();
    let rewards: Vec<f64> = (0..dims.sax_len()).map(|_| rng::unit(&mut r)).collect();
    let initial: Vec<Vec<f64>> = (0..dims.n_contexts)
        .map(|_| rng::uniform_simplex(&mut r, ns))
        .collect();
    let rho = ContextDistribution::normalized(rng::uniform_simplex(&mut r, dims.n_contexts))?;
    ContextualMdp::from_fn(
        dims,
        |x, s, a, s2| rows[dims.sax(s, a, x)][s2],
        |x, s, a| rewards[dims.sax(s, a, x)],
        rho,
        |x, s| initial[x][s],
        gamma,
    )
}

/// Random stochastic policy with Dirichlet rows.
pub fn random_policy(dims: Dims, seed: u64) -> Policy {
    let mut r = rng::stream(seed, &[domain::INSTANCE, 1]);
    let probs: Vec<f64> = (0..dims.n_states * dims.n_contexts)
        .flat_map(|_| rng::uniform_simplex(&mut r, dims.n_actions))
        .collect();
    Policy::from_probs(dims, probs).expect("Dirichlet rows are on the simplex")
}

pub fn random_deterministic_policy(dims: Dims, seed: u64) -> Policy {
    let mut r = rng::stream(seed, &[domain::INSTANCE, 2]);
    let actions: Vec<usize> = (0..dims.n_states * dims.n_contexts)
        .map(|_| (rng::unit(&mut r) * dims.n_actions as f64) as usize % dims.n_actions)
        .collect();
    Policy::deterministic(dims, &actions).expect("actions are in range")
}

/// `ρ_e` within odds ratio `Γ` of `ρ_o` on every context:
/// `Γ⁻¹ ≤ ρ_o(1−ρ_e) / (ρ_e(1−ρ_o)) ≤ Γ`.
pub fn odds_ratio_shift(rho_o: &ContextDistribution, gamma_odds: f64, seed: u64) -> Result<ContextDistribution> {
    if !(gamma_odds >= 1.0) {
        return Err(Error::InvalidParameter {
            what: "gamma_odds",
            detail: format!("{gamma_odds} must be at least 1"),
        });
    }
    let mut r = rng::stream(seed, &[domain::INSTANCE, 3]);
    let ln_g = crate::math::ln(gamma_odds);
    let proposal = ContextDistribution::normalized(
        rho_o
            .weights()
            .iter()
            .map(|&w| w * crate::math::exp(ln_g * (rng::unit(&mut r) - 0.5)))
            .collect(),
    )?;
    // Shrink toward ρ_o until the odds condition holds everywhere.
    let mut beta = 1.0;
    for _ in 0..60 {
        let cand = rho_o.mix(&proposal, beta)?;
        if max_odds_ratio(rho_o, &cand) <= gamma_odds {
            return Ok(cand);
        }
        beta *= 0.5;
    }
    Ok(rho_o.clone())
}

/// Largest odds ratio (or its inverse) over `supp(ρ_e)`.
pub fn max_odds_ratio(rho_o: &ContextDistribution, rho_e: &ContextDistribution) -> f64 {
    rho_o
        .weights()
        .iter()
        .zip(rho_e.weights())
        .filter(|(_, &e)| e > 0.0)
        .map(|(&o, &e)| {
            if o >= 1.0 && e >= 1.0 {
                return 1.0;
            }
            let ratio = o * (1.0 - e) / (e * (1.0 - o));
            if ratio >= 1.0 {
                ratio
            } else {
                1.0 / ratio
            }
        })
        .fold(1.0, f64::max)
}

/// The catastrophic-imitation pair on a single-state bandit.
#[derive(Debug, Clone, PartialEq)]
pub struct CatastrophicConstruction {
    pub k: usize,
    pub m: usize,
    pub pi1: Policy,
    pub pi2: Policy,
    pub rho_e: ContextDistribution,
    pub rho_e_tilde: ContextDistribution,
    /// Context-major `[x][s][a]` reward tables.
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub d_star: Vec<f64>,
}

/// Single-state bandit with `k` actions and `m ≥ k` contexts. On the first
/// `k` contexts `π₁(x_i) = a_i` and `π₂(x_i) = a_{i+1 mod k}`; elsewhere both
/// are uniform. `ρ_e(x_i) = d*(a_i)` and `ρ̃_e(x_i) = d*(a_{i+1 mod k})`, so
/// both pairs produce the action marginal `d*`. The MDP carries reward `r₁`
/// and online distribution `rho_online` (uniform over the first `k` contexts
/// when `None`).
pub fn build_catastrophic(
    k: usize,
    m: usize,
    d_star: &[f64],
    rho_online: Option<ContextDistribution>,
    gamma: f64,
) -> Result<(ContextualMdp, CatastrophicConstruction)> {
    if k == 0 || m < k {
        return Err(Error::Precondition {
            what: "|X| ≥ |A|",
            detail: format!("need at least as many contexts as actions, got m = {m}, k = {k}"),
        });
    }
    if d_star.len() != k {
        return Err(Error::Dimension {
            what: "d_star",
            expected: k,
            found: d_star.len(),
        });
    }
    ContextDistribution::new(d_star.to_vec())?;
    let dims = Dims::new(1, m, k);
    let next = |i: usize| (i + 1) % k;
    let mut p1 = vec![1.0 / k as f64; dims.sax_len()];
    let mut p2 = p1.clone();
    let mut r1 = vec![0.0; dims.sax_len()];
    let mut r2 = vec![0.0; dims.sax_len()];
    for i in 0..k {
        for a in 0..k {
            p1[dims.sax(0, a, i)] = if a == i { 1.0 } else { 0.0 };
            p2[dims.sax(0, a, i)] = if a == next(i) { 1.0 } else { 0.0 };
        }
        r1[dims.sax(0, i, i)] = 1.0;
        r2[dims.sax(0, next(i), i)] = 1.0;
    }
    let mut rho_e = vec![0.0; m];
    let mut rho_e_tilde = vec![0.0; m];
    for i in 0..k {
        rho_e[i] = d_star[i];
        rho_e_tilde[i] = d_star[next(i)];
    }
    let rho_online = match rho_online {
        Some(r) => r,
        None => {
            let mut w = vec![0.0; m];
            w[..k].iter_mut().for_each(|v| *v = 1.0 / k as f64);
            ContextDistribution::normalized(w)?
        }
    };
    let mdp = ContextualMdp::from_fn(
        dims,
        |_, _, _, _| 1.0,
        |x, s, a| r1[dims.sax(s, a, x)],
        rho_online,
        |_, _| 1.0,
        gamma,
    )?;
    let construction = CatastrophicConstruction {
        k,
        m,
        pi1: Policy::from_probs(dims, p1)?,
        pi2: Policy::from_probs(dims, p2)?,
        rho_e: ContextDistribution::normalized(rho_e)?,
        rho_e_tilde: ContextDistribution::normalized(rho_e_tilde)?,
        r1,
        r2,
        d_star: d_star.to_vec(),
    };
    Ok((mdp, construction))
}

/// Prepends a context-independent start state (reward 0, any action moves to
/// the bandit state) and lifts a bandit policy to the two-state chain.
pub fn with_start_state(mdp: &ContextualMdp) -> Result<ContextualMdp> {
    let d = mdp.dims();
    if d.n_states != 1 {
        return Err(Error::InvalidParameter {
            what: "mdp",
            detail: "start-state wrapper expects a single-state bandit".into(),
        });
    }
    ContextualMdp::from_fn(
        Dims::new(2, d.n_contexts, d.n_actions),
        |_, _, _, s2| if s2 == 1 { 1.0 } else { 0.0 },
        |x, s, a| if s == 1 { mdp.r(0, a, x) } else { 0.0 },
        mdp.rho_online().clone(),
        |_, s| if s == 0 { 1.0 } else { 0.0 },
        mdp.gamma(),
    )
}

pub fn lift_bandit_policy(policy: &Policy) -> Result<Policy> {
    let d = policy.dims();
    let dims = Dims::new(2, d.n_contexts, d.n_actions);
    let mut probs = vec![0.0; dims.sax_len()];
    for x in 0..d.n_contexts {
        for s in 0..2 {
            for a in 0..d.n_actions {
                probs[dims.sax(s, a, x)] = policy.prob(0, a, x);
            }
        }
    }
    Policy::from_probs(dims, probs)
}

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

/// Doorway offsets on the four wall segments of the cross at the grid
/// midline: `[upper vertical, lower vertical, left horizontal, right horizontal]`,
/// each in `0..grid/2`.
pub type Layout = [usize; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct FourRoomsConfig {
    pub grid: usize,
    pub gamma: f64,
    pub start: (usize, usize),
    pub layouts: Vec<Layout>,
    pub layout_probs: Vec<f64>,
    /// Expert-side wall distribution mixed in with weight `shift_beta`.
    pub shifted_layout_probs: Vec<f64>,
    pub goals: Vec<(usize, usize)>,
    pub goal_probs: Vec<f64>,
    pub mines: Vec<(usize, usize)>,
    pub mine_probs: Vec<f64>,
    pub shift_beta: f64,
    pub max_contexts: usize,
}

impl Default for FourRoomsConfig {
    /// 7×7, goal in the bottom-right room and a mine in front of the lower
    /// doorway, which closes the route through the bottom-left room. The three
    /// layouts move the doorway between the two left rooms only.
    fn default() -> Self {
        FourRoomsConfig {
            grid: 7,
            gamma: 0.95,
            start: (0, 0),
            layouts: vec![[1, 1, 0, 1], [1, 1, 1, 1], [1, 1, 2, 1]],
            layout_probs: vec![0.5, 0.3, 0.2],
            shifted_layout_probs: vec![0.2, 0.3, 0.5],
            goals: vec![(6, 6)],
            goal_probs: vec![1.0],
            mines: vec![(5, 2)],
            mine_probs: vec![1.0],
            shift_beta: 1.0,
            max_contexts: 64,
        }
    }
}

/// A context of the gridworld.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoomContext {
    pub layout: usize,
    pub goal: (usize, usize),
    pub mine: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourRooms {
    pub mdp: ContextualMdp,
    pub rho_expert: ContextDistribution,
    pub contexts: Vec<RoomContext>,
    pub grid: usize,
}

impl FourRooms {
    /// State index of cell `(row, col)`; the terminal state is `grid²`.
    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.grid + col
    }

    pub fn terminal(&self) -> usize {
        self.grid * self.grid
    }
}

/// Whether `(row, col)` is a wall cell under `layout`.
pub fn is_wall(grid: usize, layout: &Layout, row: usize, col: usize) -> bool {
    let c = grid / 2;
    if row == c && col == c {
        return true;
    }
    if col == c {
        return if row < c { row != layout[0] } else { row != c + 1 + layout[1] };
    }
    if row == c {
        return if col < c { col != layout[2] } else { col != c + 1 + layout[3] };
    }
    false
}

fn product(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len() * c.len());
    for &x in a {
        for &y in b {
            for &z in c {
                out.push(x * y * z);
            }
        }
    }
    out
}

/// Gridworld with terminal goal (+1) and mine (−1): from either cell every
/// action moves to the absorbing terminal state. Rewards are rescaled by
/// `r' = (r + 1)/2`, applied to every transition including the terminal loop.
pub fn build_four_rooms(cfg: &FourRoomsConfig) -> Result<FourRooms> {
    let g = cfg.grid;
    if g < 5 {
        return Err(Error::InvalidParameter {
            what: "grid",
            detail: format!("{g} is below the minimum of 5"),
        });
    }
    let half = g / 2;
    let n_segment = [half, g - half - 1, half, g - half - 1];
    for l in &cfg.layouts {
        if l.iter().zip(n_segment).any(|(&d, n)| d >= n) {
            return Err(Error::InvalidParameter {
                what: "layout",
                detail: format!("doorway offsets {l:?} exceed segment lengths {n_segment:?}"),
            });
        }
    }
    let check = |what: &'static str, v: &[f64], n: usize| -> Result<()> {
        if v.len() != n {
            return Err(Error::Dimension {
                what,
                expected: n,
                found: v.len(),
            });
        }
        ContextDistribution::new(v.to_vec()).map(|_| ())
    };
    check("layout_probs", &cfg.layout_probs, cfg.layouts.len())?;
    check("shifted_layout_probs", &cfg.shifted_layout_probs, cfg.layouts.len())?;
    check("goal_probs", &cfg.goal_probs, cfg.goals.len())?;
    check("mine_probs", &cfg.mine_probs, cfg.mines.len())?;
    if !(0.0..=1.0).contains(&cfg.shift_beta) {
        return Err(Error::InvalidParameter {
            what: "shift_beta",
            detail: format!("{} not in [0, 1]", cfg.shift_beta),
        });
    }
    let n_contexts = cfg.layouts.len() * cfg.goals.len() * cfg.mines.len();
    if n_contexts > cfg.max_contexts {
        return Err(Error::TooLarge {
            entries: n_contexts,
            cap: cfg.max_contexts,
        });
    }
    let mut contexts = Vec::with_capacity(n_contexts);
    for layout in 0..cfg.layouts.len() {
        for &goal in &cfg.goals {
            for &mine in &cfg.mines {
                let l = &cfg.layouts[layout];
                for (what, (r, c)) in [("goal", goal), ("mine", mine), ("start", cfg.start)] {
                    if r >= g || c >= g || is_wall(g, l, r, c) {
                        return Err(Error::InvalidParameter {
                            what,
                            detail: format!("cell ({r}, {c}) is outside the grid or inside a wall"),
                        });
                    }
                }
                if goal == mine || goal == cfg.start || mine == cfg.start {
                    return Err(Error::InvalidParameter {
                        what: "goal/mine",
                        detail: "start, goal and mine cells must be distinct".into(),
                    });
                }
                contexts.push(RoomContext { layout, goal, mine });
            }
        }
    }
    let walls_e: Vec<f64> = cfg
        .layout_probs
        .iter()
        .zip(&cfg.shifted_layout_probs)
        .map(|(a, b)| (1.0 - cfg.shift_beta) * a + cfg.shift_beta * b)
        .collect();
    let rho_o = ContextDistribution::normalized(product(&cfg.layout_probs, &cfg.goal_probs, &cfg.mine_probs))?;
    let rho_e = ContextDistribution::normalized(product(&walls_e, &cfg.goal_probs, &cfg.mine_probs))?;

    let ns = g * g + 1;
    let terminal = g * g;
    let step = |ctx: &RoomContext, s: usize, a: usize| -> usize {
        if s == terminal {
            return terminal;
        }
        let (r, c) = (s / g, s % g);
        if (r, c) == ctx.goal || (r, c) == ctx.mine {
            return terminal;
        }
        let (nr, nc) = match a {
            UP if r > 0 => (r - 1, c),
            DOWN if r + 1 < g => (r + 1, c),
            LEFT if c > 0 => (r, c - 1),
            RIGHT if c + 1 < g => (r, c + 1),
            _ => (r, c),
        };
        if is_wall(g, &cfg.layouts[ctx.layout], nr, nc) {
            s
        } else {
            nr * g + nc
        }
    };
    let raw_reward = |ctx: &RoomContext, s: usize| -> f64 {
        if s == terminal {
            0.0
        } else if (s / g, s % g) == ctx.goal {
            1.0
        } else if (s / g, s % g) == ctx.mine {
            -1.0
        } else {
            0.0
        }
    };
    let start = cfg.start.0 * g + cfg.start.1;
    let mdp = ContextualMdp::from_fn(
        Dims::new(ns, n_contexts, 4),
        |x, s, a, s2| if step(&contexts[x], s, a) == s2 { 1.0 } else { 0.0 },
        |x, s, _| (raw_reward(&contexts[x], s) + 1.0) / 2.0,
        rho_o,
        |_, s| if s == start { 1.0 } else { 0.0 },
        cfg.gamma,
    )?;
    Ok(FourRooms {
        mdp,
        rho_expert: rho_e,
        contexts,
        grid: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{evaluate_under, solve_optimal};
    use crate::occupancy::marginal_occupancy;

    #[test]
    fn toy_value_is_gamma_for_any_rho() {
        for rho in [0.0, 0.3, 1.0] {
            let mdp = build_toy(0.8, rho).unwrap();
            let (_, v) = solve_optimal(&mdp, 1e-12).unwrap();
            assert!((v - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn catastrophic_marginals_and_values() {
        let d_star = [0.5, 0.5];
        let (mdp, c) = build_catastrophic(2, 2, &d_star, None, 0.9).unwrap();
        assert_eq!(c.rho_e.weights(), &[0.5, 0.5]);
        assert_eq!(c.rho_e_tilde.weights(), &[0.5, 0.5]);
        let d1 = marginal_occupancy(&mdp, &c.pi1, &c.rho_e).unwrap();
        let d2 = marginal_occupancy(&mdp, &c.pi2, &c.rho_e_tilde).unwrap();
        assert_eq!(d1.mass(), &d_star);
        assert_eq!(d2.mass(), &d_star);
        let rho = mdp.rho_online();
        assert_eq!(evaluate_under(&mdp, &c.pi1, rho, &c.r1).unwrap(), 1.0);
        assert_eq!(evaluate_under(&mdp, &c.pi1, rho, &c.r2).unwrap(), 0.0);
        assert_eq!(evaluate_under(&mdp, &c.pi2, rho, &c.r1).unwrap(), 0.0);
        assert_eq!(evaluate_under(&mdp, &c.pi2, rho, &c.r2).unwrap(), 1.0);
    }

    #[test]
    fn catastrophic_needs_enough_contexts() {
        assert!(matches!(
            build_catastrophic(3, 2, &[0.2, 0.3, 0.5], None, 0.9),
            Err(Error::Precondition { .. })
        ));
        let (_, c) = build_catastrophic(1, 1, &[1.0], None, 0.9).unwrap();
        assert_eq!(c.pi1, c.pi2);
    }

    #[test]
    fn start_state_wrapper_preserves_bandit_values_up_to_delay() {
        let (mdp, c) = build_catastrophic(2, 3, &[0.7, 0.3], None, 0.9).unwrap();
        let wrapped = with_start_state(&mdp).unwrap();
        let lifted = lift_bandit_policy(&c.pi1).unwrap();
        let v = crate::mdp::evaluate_policy(&wrapped, &lifted).unwrap();
        assert!((v - 0.9).abs() < 1e-12);
    }

    #[test]
    fn no_shift_means_identical_context_laws() {
        let cfg = FourRoomsConfig {
            shift_beta: 0.0,
            ..FourRoomsConfig::default()
        };
        let env = build_four_rooms(&cfg).unwrap();
        assert_eq!(&env.rho_expert, env.mdp.rho_online());
    }

    #[test]
    fn four_rooms_desk_instance_is_solvable() {
        let cfg = FourRoomsConfig {
            layouts: vec![[0, 0, 0, 0], [2, 2, 2, 2], [1, 0, 2, 1], [0, 2, 1, 0]],
            layout_probs: vec![0.25; 4],
            shifted_layout_probs: vec![0.4, 0.3, 0.2, 0.1],
            goals: vec![(6, 6), (0, 6)],
            goal_probs: vec![0.5, 0.5],
            mines: vec![(6, 0), (2, 2)],
            mine_probs: vec![0.5, 0.5],
            ..FourRoomsConfig::default()
        };
        let env = build_four_rooms(&cfg).unwrap();
        assert_eq!(env.mdp.dims().n_contexts, 16);
        let (_, v) = solve_optimal(&env.mdp, 1e-10).unwrap();
        assert!(v > 0.5, "v* = {v}");
    }

    #[test]
    fn odds_shift_respects_gamma() {
        for seed in 0..20 {
            let rho_o = ContextDistribution::normalized(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
            for gamma_odds in [1.1, 1.5, 2.0] {
                let rho_e = odds_ratio_shift(&rho_o, gamma_odds, seed).unwrap();
                assert!(max_odds_ratio(&rho_o, &rho_e) <= gamma_odds);
            }
        }
    }
}
