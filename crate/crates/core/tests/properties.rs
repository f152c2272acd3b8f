use confound_core::dataset::generate_expert_data;
use confound_core::divergence::{
    exact_divergence, variational_estimate, AscentConfig, DivergenceKind, DivergenceSpec, Distribution,
};
use confound_core::envs::{self, build_catastrophic};
use confound_core::imitation::{
    self, canonical_policies, enumerate_ambiguity_set, SensitivityParams, DEFAULT_ENUMERATION_CAP,
};
use confound_core::mdp::{self, context_values, evaluate_policy, evaluate_under, solve_optimal};
use confound_core::occupancy::{empirical_occupancy, marginal_occupancy};
use confound_core::rng::{self, uniform_simplex};
use confound_core::rl::{self, ExpertSource, LambdaMode, SolverConfig};
use confound_core::{ContextDistribution, ContextualMdp, Dims, Policy};
use proptest::prelude::*;

const KINDS: [DivergenceKind; 4] = [
    DivergenceKind::Kl,
    DivergenceKind::ChiSquared,
    DivergenceKind::TotalVariation,
    DivergenceKind::RatioGail,
];

fn small_dims() -> impl Strategy<Value = Dims> {
    (1usize..=3, 1usize..=3, 1usize..=3).prop_map(|(s, x, a)| Dims::new(s, x, a))
}

fn simplex(seed: u64, n: usize) -> Vec<f64> {
    uniform_simplex(&mut rng::stream(seed, &[99]), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimal_policy_dominates_random_policies(dims in small_dims(), seed in 0u64..1000) {
        let m = envs::random_mdp(dims, 0.8, seed).unwrap();
        let (_, v) = solve_optimal(&m, 1e-10).unwrap();
        for k in 0..100 {
            let p = envs::random_policy(dims, seed * 1000 + k);
            prop_assert!(evaluate_policy(&m, &p).unwrap() <= v + 1e-9);
        }
    }

    #[test]
    fn value_decomposes_over_contexts(dims in small_dims(), seed in 0u64..1000) {
        let m = envs::random_mdp(dims, 0.9, seed).unwrap();
        let p = envs::random_policy(dims, seed);
        let per = context_values(&m, &p, m.reward()).unwrap();
        let mixed: f64 = m.rho_online().weights().iter().zip(&per).map(|(w, v)| w * v).sum();
        prop_assert!((evaluate_policy(&m, &p).unwrap() - mixed).abs() < 1e-12);
    }

    #[test]
    fn marginal_occupancy_is_linear_in_the_context_law(dims in small_dims(), seed in 0u64..1000, t in 0.0f64..1.0) {
        let m = envs::random_mdp(dims, 0.9, seed).unwrap();
        let p = envs::random_policy(dims, seed);
        let r1 = ContextDistribution::normalized(simplex(seed, dims.n_contexts)).unwrap();
        let r2 = ContextDistribution::normalized(simplex(seed + 1, dims.n_contexts)).unwrap();
        let mix = r1.mix(&r2, 1.0 - t).unwrap();
        let d1 = marginal_occupancy(&m, &p, &r1).unwrap();
        let d2 = marginal_occupancy(&m, &p, &r2).unwrap();
        let dm = marginal_occupancy(&m, &p, &mix).unwrap();
        for i in 0..dm.mass().len() {
            let lin = t * d1.mass()[i] + (1.0 - t) * d2.mass()[i];
            prop_assert!((dm.mass()[i] - lin).abs() < 1e-12);
        }
        prop_assert!((dm.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empirical_occupancy_mass_is_within_the_tail_bound(seed in 0u64..1000, gamma in 0.5f64..0.99) {
        let dims = Dims::new(3, 2, 2);
        let m = envs::random_mdp(dims, gamma, seed).unwrap();
        let p = envs::random_policy(dims, seed);
        let (ds, _) = generate_expert_data(&m, &p, m.rho_online(), 20, seed).unwrap();
        let w = vec![1.0 / ds.len() as f64; ds.len()];
        let occ = empirical_occupancy(&ds, &w, gamma).unwrap();
        prop_assert!((occ.total() - 1.0).abs() < 2e-6);
    }

    #[test]
    fn divergences_are_nonnegative(seed in 0u64..100_000, n in 2usize..12) {
        let p = simplex(seed, n);
        let q = simplex(seed + 7, n);
        for kind in KINDS {
            prop_assert!(exact_divergence(DivergenceSpec::new(kind), &p, &q).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn variational_estimates_respect_weak_duality(seed in 0u64..100_000) {
        let p = simplex(seed, 6);
        let q = simplex(seed + 3, 6);
        let cfg = AscentConfig { steps: 300, step_size: 0.1 };
        for kind in KINDS {
            let spec = DivergenceSpec::new(kind);
            let exact = exact_divergence(spec, &p, &q).unwrap();
            let est = variational_estimate(spec, Distribution::Exact(&p), Distribution::Exact(&q), 6, cfg).unwrap();
            for h in &est.history {
                prop_assert!(*h <= exact + 1e-9, "{kind}: {h} > {exact}");
            }
        }
    }
}

/// Odds-ratio shifted data law; the sup gap of the expert occupancy stays
/// below `Γ − 1` and the expert sits in the matching `(Γ−1)`-set.
#[test]
fn bounded_sensitivity_gap() {
    let dims = Dims::new(3, 3, 2);
    for gamma_odds in [1.1, 1.5, 2.0] {
        for seed in 0..50u64 {
            let m = envs::random_mdp(dims, 0.9, seed).unwrap();
            let rho_e = envs::odds_ratio_shift(m.rho_online(), gamma_odds, seed).unwrap();
            assert!(envs::max_odds_ratio(m.rho_online(), &rho_e) <= gamma_odds + 1e-12);
            let (pi, _) = solve_optimal(&m, 1e-10).unwrap();
            let d_o = marginal_occupancy(&m, &pi, m.rho_online()).unwrap();
            let d_e = marginal_occupancy(&m, &pi, &rho_e).unwrap();
            assert!(d_o.sup_distance(&d_e) <= gamma_odds - 1.0 + 1e-12);
            let set = enumerate_ambiguity_set(&m, &d_e, gamma_odds - 1.0, DEFAULT_ENUMERATION_CAP).unwrap();
            assert!(set.contains(&m, &pi).unwrap());
        }
    }
}

/// Context-free dynamics, context-dependent reward, and a data law that
/// swaps the weights of contexts 0 and 1. The context-permuted expert then
/// matches the data exactly.
fn swapped_instance(seed: u64, gamma_odds: f64) -> (ContextualMdp, ContextDistribution) {
    let base = envs::random_mdp(Dims::new(3, 3, 2), 0.9, seed).unwrap();
    let dims = base.dims();
    let mut w = base.rho_online().weights().to_vec();
    // Pull the two swapped weights together until the odds bound holds.
    let mut t = 1.0;
    let (w0, w1) = (w[0], w[1]);
    loop {
        let mid = (w0 + w1) / 2.0;
        w[0] = mid + t * (w0 - mid);
        w[1] = mid + t * (w1 - mid);
        let o = ContextDistribution::normalized(w.clone()).unwrap();
        let mut ew = w.clone();
        ew.swap(0, 1);
        let e = ContextDistribution::normalized(ew).unwrap();
        if envs::max_odds_ratio(&o, &e) <= gamma_odds {
            let m = ContextualMdp::from_fn(
                dims,
                |_, s, a, s2| base.p(0, s, a, s2),
                |x, s, a| base.r(s, a, x),
                o,
                |_, s| base.initial(0)[s],
                0.9,
            )
            .unwrap();
            return (m, e);
        }
        t *= 0.5;
    }
}

#[test]
fn context_dependent_reward_bound_on_exact_sets() {
    let mut nonempty = 0;
    for gamma_odds in [1.1, 1.5, 2.0] {
        for seed in 0..50u64 {
            let (m, rho_e) = swapped_instance(seed, gamma_odds);
            let (pi, _) = solve_optimal(&m.with_rho_online(rho_e.clone()).unwrap(), 1e-10).unwrap();
            let d_e = marginal_occupancy(&m, &pi, &rho_e).unwrap();
            let set = enumerate_ambiguity_set(&m, &d_e, 0.0, DEFAULT_ENUMERATION_CAP).unwrap();
            nonempty += usize::from(!set.is_empty());
            let eps = SensitivityParams::from_mdp(&m, gamma_odds).unwrap();
            let rep = imitation::context_dependent_reward_bound(&m, &set, &pi, &rho_e, &eps).unwrap();
            assert!(rep.slack >= -1e-9, "seed {seed}, Γ {gamma_odds}: slack {}", rep.slack);
        }
    }
    assert_eq!(nonempty, 150);
}

/// Rebuilding the set around any member's marginal gives the same set.
#[test]
fn ambiguity_sets_are_closed() {
    let dims = Dims::new(3, 2, 2);
    for seed in 0..30u64 {
        let m = envs::random_mdp(dims, 0.9, seed).unwrap();
        let pi = envs::random_deterministic_policy(dims, seed);
        let target = marginal_occupancy(&m, &pi, m.rho_online()).unwrap();
        let set = enumerate_ambiguity_set(&m, &target, 0.0, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(set.contains(&m, &pi).unwrap());
        for member in &set.members {
            let t2 = marginal_occupancy(&m, member, m.rho_online()).unwrap();
            let again = enumerate_ambiguity_set(&m, &t2, 0.0, DEFAULT_ENUMERATION_CAP).unwrap();
            assert_eq!(again.members, set.members, "seed {seed}");
        }
    }
}

/// Two contexts with mirrored dynamics give sets with several members.
fn mirrored_instance(seed: u64) -> ContextualMdp {
    let base = envs::random_mdp(Dims::new(3, 1, 2), 0.9, seed).unwrap();
    let dims = Dims::new(3, 2, 2);
    let flip = |x: usize, a: usize| if x == 1 { 1 - a } else { a };
    ContextualMdp::from_fn(
        dims,
        |x, s, a, s2| base.p(0, s, flip(x, a), s2),
        |x, s, a| base.r(s, flip(x, a), 0),
        ContextDistribution::uniform(2),
        |_, s| base.initial(0)[s],
        0.9,
    )
    .unwrap()
}

#[test]
fn mean_policy_bound_on_random_instances() {
    for seed in 0..50u64 {
        let m = mirrored_instance(seed);
        let (pi, _) = solve_optimal(&m, 1e-10).unwrap();
        let target = marginal_occupancy(&m, &pi, m.rho_online()).unwrap();
        let set = enumerate_ambiguity_set(&m, &target, 0.0, DEFAULT_ENUMERATION_CAP).unwrap();
        let rep = imitation::mean_policy_report(&m, &set, 1e-9).unwrap();
        assert!(rep.mixture_value >= rep.bound - 1e-9, "seed {seed}");
        assert!((rep.mean_value - rep.mixture_value).abs() < 1e-9, "seed {seed}");
    }
}

#[test]
fn catastrophic_construction_identities() {
    for (k, m) in [(2usize, 2usize), (3, 5), (4, 4)] {
        for seed in 0..20u64 {
            let d_star = simplex(seed, k);
            let (mdp, c) = build_catastrophic(k, m, &d_star, None, 0.9).unwrap();
            let d1 = marginal_occupancy(&mdp, &c.pi1, &c.rho_e).unwrap();
            let d2 = marginal_occupancy(&mdp, &c.pi2, &c.rho_e_tilde).unwrap();
            for a in 0..k {
                assert!((d1.mass()[a] - d_star[a]).abs() < 1e-12);
                assert!((d2.mass()[a] - d_star[a]).abs() < 1e-12);
            }
            let rho = mdp.rho_online();
            let v = |p: &Policy, r: &[f64]| evaluate_under(&mdp, p, rho, r).unwrap();
            assert_eq!(
                [v(&c.pi1, &c.r1), v(&c.pi1, &c.r2), v(&c.pi2, &c.r1), v(&c.pi2, &c.r2)],
                [1.0, 0.0, 0.0, 1.0]
            );
        }
    }
}

/// Value of the best deterministic TV-matcher of `π₁`'s data law as the online
/// law moves from `ρ_e` to `ρ̃_e`.
#[test]
fn imitation_value_decreases_with_shift() {
    for (k, m) in [(2usize, 2usize), (2, 4)] {
        for seed in 0..20u64 {
            let d_star = simplex(seed, k);
            let (base, c) = build_catastrophic(k, m, &d_star, None, 0.9).unwrap();
            let target = marginal_occupancy(&base, &c.pi1, &c.rho_e).unwrap();
            let mut last = f64::INFINITY;
            for beta in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let rho = c.rho_e.mix(&c.rho_e_tilde, beta).unwrap();
                let mdp = base.with_rho_online(rho).unwrap();
                let mut best: Option<(f64, Policy)> = None;
                for p in canonical_policies(&mdp, DEFAULT_ENUMERATION_CAP).unwrap() {
                    let d = marginal_occupancy(&mdp, &p, mdp.rho_online()).unwrap();
                    let tv = d.tv(&target);
                    if best.as_ref().map_or(true, |(b, _)| tv < b - 1e-12) {
                        best = Some((tv, p));
                    }
                }
                let v = evaluate_policy(&mdp, &best.unwrap().1).unwrap();
                assert!(v <= last + 1e-12, "k {k} seed {seed} β {beta}: {v} > {last}");
                last = v;
            }
        }
    }
}

/// Per-round planning residual and the monotone best-so-far column.
#[test]
fn solver_trace_invariants() {
    let (mdp, c) = build_catastrophic(2, 2, &[0.8, 0.2], None, 0.9).unwrap();
    let (ds, _) = generate_expert_data(&mdp, &c.pi1, &c.rho_e, 300, 4).unwrap();
    let cfg = SolverConfig {
        lambda: LambdaMode::Fixed(1.0),
        candidates: 10,
        epochs: 3,
        batch: 64,
        outer_iters: 30,
        ..SolverConfig::default()
    };
    for out in [
        rl::solve_p2_ogd(&mdp, ExpertSource::Data(&ds), &cfg).unwrap(),
        rl::solve_p1b(&mdp, ExpertSource::Data(&ds), &cfg).unwrap(),
        rl::solve_p2_ftl(&mdp, ExpertSource::Data(&ds), &cfg).unwrap(),
    ] {
        let rows = &out.trace.rows;
        assert_eq!(rows.len(), 30);
        for w in rows.windows(2) {
            assert!(w[1].best_value >= w[0].best_value);
        }
        for r in rows {
            assert!(r.rl_residual <= 1.0 / (r.iter as f64).sqrt() + 1e-15);
            assert!(r.best_value >= r.value);
        }
    }
}

#[test]
fn optimal_policy_is_jensen_stable_under_support() {
    // Per-context optimality: the optimum under ρ_e stays optimal under any
    // ρ_o whose support is inside supp(ρ_e).
    for seed in 0..20u64 {
        let dims = Dims::new(2, 3, 2);
        let m = envs::random_mdp(dims, 0.8, seed).unwrap();
        let rho_e = ContextDistribution::normalized(simplex(seed, 3)).unwrap();
        let (pe, _) = solve_optimal(&m.with_rho_online(rho_e).unwrap(), 1e-10).unwrap();
        for sub in 0..3 {
            let mut w = simplex(seed + 11, 3);
            w[sub] = 0.0;
            let mo = m.with_rho_online(ContextDistribution::normalized(w).unwrap()).unwrap();
            let (_, best) = mdp::brute_force_extreme(&mo, mo.reward(), true, 1 << 20).unwrap();
            assert!((evaluate_policy(&mo, &pe).unwrap() - best).abs() < 1e-9);
        }
    }
}
