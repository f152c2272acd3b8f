//! f-divergences on finite distributions: exact values, conjugates and
//! variational estimators with a tabular dual variable.
//!
//! `D_f(p || q) = E_q f(p/q) = sup_g E_p[g] − E_q[f*(g)]`.
//!
//! Every kind has a separable "bonus parametrization" in which the
//! variational objective reads `Σ_z p_z φ_p(g_z) − q_z φ_q(g_z)`:
//!
//! | kind | `g` domain | `φ_p(g)` | `φ_q(g)` |
//! |------|-----------|----------|----------|
//! | KL   | ℝ | `g` | `e^{g−1}` |
//! | χ²   | `[−2, ∞)` | `g` | `g + g²/4` |
//! | TV   | `[−½, ½]` | `g` | `g` |
//! | GAIL | `[ε, 1−ε]` | `ln(1−D)` | `−ln D − ln 4` |
//!
//! For the GAIL kind the dual variable is the discriminator `D`; the standard
//! conjugate variable is `T = ln(1−D) < 0` with `f*(T) = −ln(1−e^T) − ln 4`.
//! The KL estimator uses the Donsker–Varadhan form `E_p g − ln E_q e^g`, whose
//! supremum is the same forward KL.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::math::{abs, exp, ln, sum};
use crate::{Error, Result};

/// Clip margin for the GAIL discriminator.
pub const GAIL_EPS: f64 = 1e-6;
/// Box for unbounded dual variables, keeping exponentials finite.
pub const UNBOUNDED_CLIP: f64 = 700.0;
/// Upper end of the χ² dual box. The objective is quadratic there, so only
/// `g²` has to stay finite.
pub const CHI2_CLIP: f64 = 1e12;
const LN4: f64 = core::f64::consts::LN_2 * 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DivergenceKind {
    Kl,
    ChiSquared,
    TotalVariation,
    RatioGail,
}

impl DivergenceKind {
    pub const ALL: [DivergenceKind; 4] = [
        DivergenceKind::Kl,
        DivergenceKind::ChiSquared,
        DivergenceKind::TotalVariation,
        DivergenceKind::RatioGail,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DivergenceKind::Kl => "kl",
            DivergenceKind::ChiSquared => "chi2",
            DivergenceKind::TotalVariation => "tv",
            DivergenceKind::RatioGail => "gail",
        }
    }
}

impl FromStr for DivergenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(DivergenceKind::Kl),
            "chi2" => Ok(DivergenceKind::ChiSquared),
            "tv" => Ok(DivergenceKind::TotalVariation),
            "gail" => Ok(DivergenceKind::RatioGail),
            other => Err(Error::InvalidParameter {
                what: "divergence",
                detail: format!("unknown kind {other:?} (expected kl, chi2, tv or gail)"),
            }),
        }
    }
}

impl core::fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DivergenceSpec {
    pub kind: DivergenceKind,
}

impl DivergenceSpec {
    pub fn new(kind: DivergenceKind) -> Self {
        DivergenceSpec { kind }
    }

    /// Convex conjugate `f*(w)` in the standard (Fenchel) variable; `+∞`
    /// outside the effective domain.
    pub fn conjugate(&self, w: f64) -> f64 {
        match self.kind {
            DivergenceKind::Kl => exp(w - 1.0),
            DivergenceKind::ChiSquared => w + w * w / 4.0,
            DivergenceKind::TotalVariation => {
                if abs(w) <= 0.5 {
                    w
                } else {
                    f64::INFINITY
                }
            }
            DivergenceKind::RatioGail => {
                if w < 0.0 {
                    -ln(1.0 - exp(w)) - LN4
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Closed interval of admissible bonus values.
    pub fn dual_domain(&self) -> (f64, f64) {
        match self.kind {
            DivergenceKind::Kl => (-UNBOUNDED_CLIP, UNBOUNDED_CLIP),
            // f*(w) = w + w²/4 holds for w ≥ −2 only; the optimum 2(p/q − 1)
            // never lies below.
            DivergenceKind::ChiSquared => (-2.0, CHI2_CLIP),
            DivergenceKind::TotalVariation => (-0.5, 0.5),
            DivergenceKind::RatioGail => (GAIL_EPS, 1.0 - GAIL_EPS),
        }
    }

    pub fn project(&self, g: f64) -> f64 {
        let (lo, hi) = self.dual_domain();
        g.clamp(lo, hi)
    }

    /// Neutral starting point (objective 0 on `p = q`).
    pub fn initial_dual(&self) -> f64 {
        match self.kind {
            DivergenceKind::Kl => 1.0,
            DivergenceKind::RatioGail => 0.5,
            _ => 0.0,
        }
    }

    /// `φ_p(g)`: the policy-side term; also the penalty that enters the RL reward.
    pub fn phi_p(&self, g: f64) -> f64 {
        match self.kind {
            DivergenceKind::RatioGail => ln(1.0 - g),
            _ => g,
        }
    }

    pub fn phi_p_grad(&self, g: f64) -> f64 {
        match self.kind {
            DivergenceKind::RatioGail => -1.0 / (1.0 - g),
            _ => 1.0,
        }
    }

    pub fn phi_p_curv(&self, g: f64) -> f64 {
        match self.kind {
            DivergenceKind::RatioGail => -1.0 / ((1.0 - g) * (1.0 - g)),
            _ => 0.0,
        }
    }

    /// `φ_q(g)`: the expert-side term.
    pub fn phi_q(&self, g: f64) -> f64 {
        match self.kind {
            DivergenceKind::RatioGail => -ln(g) - LN4,
            _ => self.conjugate(g),
        }
    }

    pub fn phi_q_grad(&self, g: f64) -> f64 {
        match self.kind {
            DivergenceKind::Kl => exp(g - 1.0),
            DivergenceKind::ChiSquared => 1.0 + g / 2.0,
            DivergenceKind::TotalVariation => 1.0,
            DivergenceKind::RatioGail => -1.0 / g,
        }
    }

    pub fn phi_q_curv(&self, g: f64) -> f64 {
        match self.kind {
            DivergenceKind::Kl => exp(g - 1.0),
            DivergenceKind::ChiSquared => 0.5,
            DivergenceKind::TotalVariation => 0.0,
            DivergenceKind::RatioGail => 1.0 / (g * g),
        }
    }

    /// Separable objective `Σ p φ_p(g) − q φ_q(g)`.
    pub fn separable_objective(&self, p: &[f64], q: &[f64], g: &[f64]) -> f64 {
        sum(p
            .iter()
            .zip(q)
            .zip(g)
            .map(|((&pz, &qz), &gz)| term(pz, self.phi_p(gz)) - term(qz, self.phi_q(gz))))
    }
}

impl From<DivergenceKind> for DivergenceSpec {
    fn from(kind: DivergenceKind) -> Self {
        DivergenceSpec::new(kind)
    }
}

/// `w·v` with the convention `0·(±∞) = 0`.
#[inline]
fn term(w: f64, v: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * v
    }
}

#[inline]
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * ln(y)
    }
}

fn check_pair(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Dimension {
            what: "divergence arguments",
            expected: p.len(),
            found: q.len(),
        });
    }
    if p.iter().chain(q).any(|v| v.is_nan()) {
        return Err(Error::NotANumber {
            what: "divergence arguments",
        });
    }
    Ok(())
}

/// Exact `D_f(p || q)`. KL and χ² return `+∞` when `p` puts mass outside the
/// support of `q`.
pub fn exact_divergence(
    spec: DivergenceSpec,
    p: impl AsRef<[f64]>,
    q: impl AsRef<[f64]>,
) -> Result<f64> {
    let (p, q) = (p.as_ref(), q.as_ref());
    check_pair(p, q)?;
    let value = match spec.kind {
        DivergenceKind::Kl => {
            if p.iter().zip(q).any(|(&a, &b)| a > 0.0 && b == 0.0) {
                f64::INFINITY
            } else {
                sum(p.iter().zip(q).map(|(&a, &b)| xlogy(a, a / b)))
            }
        }
        DivergenceKind::ChiSquared => {
            if p.iter().zip(q).any(|(&a, &b)| a > 0.0 && b == 0.0) {
                f64::INFINITY
            } else {
                sum(p
                    .iter()
                    .zip(q)
                    .filter(|(_, &b)| b > 0.0)
                    .map(|(&a, &b)| (a - b) * (a - b) / b))
            }
        }
        DivergenceKind::TotalVariation => crate::occupancy::tv(p, q),
        DivergenceKind::RatioGail => sum(p.iter().zip(q).map(|(&a, &b)| {
            let m = a + b;
            if m == 0.0 {
                0.0
            } else {
                xlogy(a, 2.0 * a / m) + xlogy(b, 2.0 * b / m)
            }
        })),
    };
    Ok(value)
}

/// Input to the variational estimator: an exact table or raw atom samples.
#[derive(Debug, Clone, Copy)]
pub enum Distribution<'a> {
    Exact(&'a [f64]),
    Samples(&'a [usize]),
}

impl Distribution<'_> {
    fn to_table(self, n_atoms: usize) -> Result<Vec<f64>> {
        match self {
            Distribution::Exact(t) => {
                if t.len() != n_atoms {
                    return Err(Error::Dimension {
                        what: "distribution table",
                        expected: n_atoms,
                        found: t.len(),
                    });
                }
                Ok(t.to_vec())
            }
            Distribution::Samples(xs) => {
                if xs.is_empty() {
                    return Err(Error::Empty { what: "samples" });
                }
                let mut h = vec![0.0; n_atoms];
                for &z in xs {
                    if z >= n_atoms {
                        return Err(Error::InvalidParameter {
                            what: "sample",
                            detail: format!("atom {z} out of range for {n_atoms} atoms"),
                        });
                    }
                    h[z] += 1.0;
                }
                let n = xs.len() as f64;
                Ok(h.into_iter().map(|c| c / n).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentConfig {
    pub steps: usize,
    pub step_size: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            steps: 2000,
            step_size: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalEstimate {
    /// Objective at the final iterate.
    pub value: f64,
    /// Maximizing dual table (the discriminator for the GAIL kind).
    pub g: Vec<f64>,
    /// Objective after each step; `history[0]` is the starting point.
    pub history: Vec<f64>,
}

/// Donsker–Varadhan objective `E_p g − ln E_q e^g`.
fn dv_objective(p: &[f64], q: &[f64], g: &[f64]) -> f64 {
    let m = q
        .iter()
        .zip(g)
        .filter(|(&b, _)| b > 0.0)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let z = sum(q.iter().zip(g).filter(|(&b, _)| b > 0.0).map(|(&b, &v)| b * exp(v - m)));
    sum(p.iter().zip(g).map(|(&a, &v)| term(a, v))) - (m + ln(z))
}

fn normalize(v: &mut [f64]) {
    let t: f64 = v.iter().sum();
    if t > 0.0 {
        for x in v.iter_mut() {
            *x /= t;
        }
    }
}

/// Preconditioned projected gradient ascent on the variational objective.
///
/// Each atom moves by `η · ∂J/∂g_z / h_z`, where `h_z` is the atom's curvature
/// (`p_z + q_z` when flat; `|∂J/∂g_z|` for the linear TV objective, i.e. a
/// sign step), followed by projection onto the dual domain.
pub fn variational_estimate(
    spec: DivergenceSpec,
    p: Distribution<'_>,
    q: Distribution<'_>,
    n_atoms: usize,
    cfg: AscentConfig,
) -> Result<VariationalEstimate> {
    if cfg.steps == 0 {
        return Err(Error::InvalidParameter {
            what: "steps",
            detail: "must be at least 1".into(),
        });
    }
    let mut p = p.to_table(n_atoms)?;
    let mut q = q.to_table(n_atoms)?;
    check_pair(&p, &q)?;
    let eta = cfg.step_size;
    let mut history = Vec::with_capacity(cfg.steps + 1);

    if spec.kind == DivergenceKind::Kl {
        normalize(&mut p);
        normalize(&mut q);
        let mut g = vec![0.0; n_atoms];
        history.push(dv_objective(&p, &q, &g));
        let mut w = vec![0.0; n_atoms];
        for step in 1..=cfg.steps {
            let m = q
                .iter()
                .zip(&g)
                .filter(|(&b, _)| b > 0.0)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            for ((wz, &qz), &gz) in w.iter_mut().zip(&q).zip(&g) {
                *wz = if qz > 0.0 { qz * exp(gz - m) } else { 0.0 };
            }
            normalize(&mut w);
            for z in 0..n_atoms {
                let grad = p[z] - w[z];
                let h = if w[z].max(p[z]) > 0.0 { w[z].max(p[z]) } else { continue };
                g[z] = spec.project(g[z] + eta * grad / h);
            }
            let obj = dv_objective(&p, &q, &g);
            if !obj.is_finite() {
                return Err(Error::AscentDiverged {
                    step,
                    objective: obj,
                });
            }
            history.push(obj);
        }
        let value = *history.last().unwrap_or(&0.0);
        return Ok(VariationalEstimate { value, g, history });
    }

    let mut g = vec![spec.initial_dual(); n_atoms];
    history.push(spec.separable_objective(&p, &q, &g));
    for step in 1..=cfg.steps {
        for z in 0..n_atoms {
            let (pz, qz, gz) = (p[z], q[z], g[z]);
            if pz == 0.0 && qz == 0.0 {
                continue;
            }
            let grad = pz * spec.phi_p_grad(gz) - qz * spec.phi_q_grad(gz);
            let h = match spec.kind {
                DivergenceKind::TotalVariation => abs(grad),
                _ => {
                    let c = abs(pz * spec.phi_p_curv(gz) - qz * spec.phi_q_curv(gz));
                    if c > 0.0 {
                        c
                    } else {
                        pz + qz
                    }
                }
            };
            if h > 0.0 {
                g[z] = spec.project(gz + eta * grad / h);
            }
        }
        let obj = spec.separable_objective(&p, &q, &g);
        if !obj.is_finite() {
            return Err(Error::AscentDiverged {
                step,
                objective: obj,
            });
        }
        history.push(obj);
    }
    let value = *history.last().unwrap_or(&0.0);
    Ok(VariationalEstimate { value, g, history })
}

/// Batch loss and per-entry gradient of the α-regularized objective
///
/// `L = (1/B_e) Σ_e (1−α) φ_q(g(z_e)) + (1/B_π) Σ_π [α φ_q(g(z_π)) − φ_p(g(z_π))]`.
///
/// Batches are lists of table indices (`s·|A| + a`). Its minimum over `g`
/// equals `−D_f(d_π || (1−α) d_e + α d_π)`.
pub fn alpha_regularized_loss(
    spec: DivergenceSpec,
    g: &[f64],
    expert_batch: &[usize],
    policy_batch: &[usize],
    alpha: f64,
) -> Result<(f64, Vec<f64>)> {
    if expert_batch.is_empty() && alpha < 1.0 {
        return Err(Error::Empty {
            what: "expert batch",
        });
    }
    if policy_batch.is_empty() {
        return Err(Error::Empty {
            what: "policy batch",
        });
    }
    let n = g.len();
    let mut pe = vec![0.0; n];
    let mut pp = vec![0.0; n];
    for (batch, hist) in [(expert_batch, &mut pe), (policy_batch, &mut pp)] {
        for &z in batch {
            if z >= n {
                return Err(Error::InvalidParameter {
                    what: "batch entry",
                    detail: format!("index {z} out of range for {n} entries"),
                });
            }
            hist[z] += 1.0;
        }
        let b = batch.len().max(1) as f64;
        for h in hist.iter_mut() {
            *h /= b;
        }
    }
    alpha_regularized_expected(spec, g, &pe, &pp, alpha)
}

/// The α-regularized objective in expectation under explicit tables.
pub fn alpha_regularized_expected(
    spec: DivergenceSpec,
    g: &[f64],
    expert: &[f64],
    policy: &[f64],
    alpha: f64,
) -> Result<(f64, Vec<f64>)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter {
            what: "alpha",
            detail: format!("{alpha} not in (0, 1]"),
        });
    }
    if g.len() != expert.len() || g.len() != policy.len() {
        return Err(Error::Dimension {
            what: "bonus table",
            expected: expert.len(),
            found: g.len(),
        });
    }
    let mut loss = Vec::with_capacity(g.len());
    let mut grad = Vec::with_capacity(g.len());
    for ((&gz, &ez), &pz) in g.iter().zip(expert).zip(policy) {
        let qmix = (1.0 - alpha) * ez + alpha * pz;
        loss.push(term(qmix, spec.phi_q(gz)) - term(pz, spec.phi_p(gz)));
        grad.push(term(qmix, spec.phi_q_grad(gz)) - term(pz, spec.phi_p_grad(gz)));
    }
    Ok((sum(loss), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn random_pair(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut r = rng::stream(seed, &[99]);
        (rng::uniform_simplex(&mut r, n), rng::uniform_simplex(&mut r, n))
    }

    #[test]
    fn identical_distributions_have_zero_divergence() {
        let p = [0.2, 0.3, 0.5];
        for kind in DivergenceKind::ALL {
            let d = exact_divergence(kind.into(), p, p).unwrap();
            assert!(d.abs() < 1e-15, "{kind}: {d}");
        }
    }

    #[test]
    fn closed_form_values() {
        let tv = exact_divergence(DivergenceKind::TotalVariation.into(), [0.5, 0.5], [1.0, 0.0]);
        assert_eq!(tv.unwrap(), 0.5);
        let chi = exact_divergence(DivergenceKind::ChiSquared.into(), [0.4, 0.6], [0.5, 0.5]);
        assert!((chi.unwrap() - 0.04).abs() < 1e-15);
        let kl = exact_divergence(DivergenceKind::Kl.into(), [0.5, 0.5], [1.0, 0.0]);
        assert_eq!(kl.unwrap(), f64::INFINITY);
    }

    #[test]
    fn parse_names() {
        for kind in DivergenceKind::ALL {
            assert_eq!(kind.name().parse::<DivergenceKind>().unwrap(), kind);
        }
        assert!("hellinger".parse::<DivergenceKind>().is_err());
    }

    #[test]
    fn conjugates_are_midpoint_convex() {
        for kind in DivergenceKind::ALL {
            let spec = DivergenceSpec::new(kind);
            let (lo, hi) = match kind {
                DivergenceKind::TotalVariation => (-0.5, 0.5),
                DivergenceKind::RatioGail => (-12.0, -1e-3),
                _ => (-5.0, 5.0),
            };
            for i in 0..50 {
                for j in 0..50 {
                    let a = lo + (hi - lo) * i as f64 / 49.0;
                    let b = lo + (hi - lo) * j as f64 / 49.0;
                    let mid = spec.conjugate((a + b) / 2.0);
                    let avg = (spec.conjugate(a) + spec.conjugate(b)) / 2.0;
                    assert!(mid <= avg + 1e-12, "{kind} at {a}, {b}");
                }
            }
        }
    }

    #[test]
    fn tv_estimate_reaches_box_corners() {
        let est = variational_estimate(
            DivergenceKind::TotalVariation.into(),
            Distribution::Exact(&[0.5, 0.5]),
            Distribution::Exact(&[1.0, 0.0]),
            2,
            AscentConfig::default(),
        )
        .unwrap();
        assert!((est.value - 0.5).abs() < 1e-3);
        assert_eq!(est.g, vec![-0.5, 0.5]);
    }

    #[test]
    fn estimates_match_exact_values() {
        for seed in 0..5 {
            let (p, q) = random_pair(seed, 10);
            for kind in [DivergenceKind::Kl, DivergenceKind::ChiSquared, DivergenceKind::TotalVariation, DivergenceKind::RatioGail] {
                let spec = DivergenceSpec::new(kind);
                let exact = exact_divergence(spec, &p, &q).unwrap();
                let est = variational_estimate(spec, Distribution::Exact(&p), Distribution::Exact(&q), 10, AscentConfig::default()).unwrap();
                assert!((est.value - exact).abs() < 1e-3, "{kind} seed {seed}: {} vs {exact}", est.value);
                assert!(est.history.iter().all(|&v| v <= exact + 1e-9));
            }
        }
    }

    #[test]
    fn gail_discriminator_matches_scalar_optimum() {
        let (p, q) = random_pair(7, 10);
        let est = variational_estimate(DivergenceKind::RatioGail.into(), Distribution::Exact(&p), Distribution::Exact(&q), 10, AscentConfig::default()).unwrap();
        for z in 0..10 {
            // Golden-section search on the per-atom objective as an independent oracle.
            let f = |d: f64| q[z] * ln(d) + p[z] * ln(1.0 - d);
            let (mut a, mut b) = (1e-9, 1.0 - 1e-9);
            let r = (5.0f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let c = b - r * (b - a);
                let d = a + r * (b - a);
                if f(c) > f(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            let oracle = (a + b) / 2.0;
            assert!((est.g[z] - oracle).abs() < 1e-3);
            assert!((est.g[z] - q[z] / (p[z] + q[z])).abs() < 1e-3);
        }
    }

    #[test]
    fn alpha_one_ignores_expert_batch() {
        let spec = DivergenceSpec::new(DivergenceKind::ChiSquared);
        let g = [0.3, -0.2, 1.1];
        let (l1, _) = alpha_regularized_loss(spec, &g, &[0, 0, 1], &[2, 1], 1.0).unwrap();
        let (l2, _) = alpha_regularized_loss(spec, &g, &[2], &[2, 1], 1.0).unwrap();
        assert_eq!(l1, l2);
        let want = ((spec.conjugate(1.1) - 1.1) + (spec.conjugate(-0.2) + 0.2)) / 2.0;
        assert!((l1 - want).abs() < 1e-15);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        for kind in DivergenceKind::ALL {
            let spec = DivergenceSpec::new(kind);
            let mut r = rng::stream(3, &[kind as u64]);
            let (lo, hi) = match kind {
                DivergenceKind::TotalVariation => (-0.4, 0.4),
                DivergenceKind::RatioGail => (0.1, 0.9),
                _ => (-1.0, 1.0),
            };
            let g: Vec<f64> = (0..6).map(|_| lo + (hi - lo) * rng::unit(&mut r)).collect();
            let eb = [0, 1, 1, 3, 5];
            let pb = [2, 3, 4, 4, 0, 1];
            let (_, grad) = alpha_regularized_loss(spec, &g, &eb, &pb, 0.9).unwrap();
            for z in 0..6 {
                let h = 1e-6;
                let mut gp = g.clone();
                gp[z] += h;
                let mut gm = g.clone();
                gm[z] -= h;
                let fd = (alpha_regularized_loss(spec, &gp, &eb, &pb, 0.9).unwrap().0
                    - alpha_regularized_loss(spec, &gm, &eb, &pb, 0.9).unwrap().0)
                    / (2.0 * h);
                assert!((fd - grad[z]).abs() < 1e-6, "{kind} atom {z}: {fd} vs {}", grad[z]);
            }
        }
    }

    #[test]
    fn empty_batches_are_errors() {
        let spec = DivergenceSpec::new(DivergenceKind::Kl);
        assert!(alpha_regularized_loss(spec, &[0.0], &[], &[0], 0.5).is_err());
        assert!(alpha_regularized_loss(spec, &[0.0], &[0], &[], 0.5).is_err());
    }
}
