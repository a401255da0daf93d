//! Ratio surrogates and trust-region objectives.
//!
//! Ratios are exponentiated differences of old and new CFM losses,
//! formed either per action (difference averaged over Monte Carlo
//! samples before exponentiation, so clipping hits all samples of an
//! action together) or per sample (one independently clipped ratio per
//! (τ, ε) pair). Three trust regions are available: hard PPO clipping,
//! the SPO quadratic penalty, and the asymmetric combination that uses
//! PPO for non-negative advantages and SPO for negative ones.

use alloc::vec::Vec;

use crate::cfm::ClampConfig;
use crate::error::Result;
use crate::math;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrustRegion {
    Ppo,
    Spo,
    Aspo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioGranularity {
    PerAction,
    PerSample,
}

/// Objective selection plus the shared clipping/clamping constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub granularity: RatioGranularity,
    pub trust_region: TrustRegion,
    pub clip_eps: f64,
    pub value_loss_coef: f64,
    pub normalize_advantages: bool,
    pub clamp: ClampConfig,
}

impl ObjectiveConfig {
    /// Per-sample ratios with the asymmetric trust region.
    pub fn fpopp() -> Self {
        ObjectiveConfig {
            granularity: RatioGranularity::PerSample,
            trust_region: TrustRegion::Aspo,
            clip_eps: 0.05,
            value_loss_coef: 0.5,
            normalize_advantages: true,
            clamp: ClampConfig::default(),
        }
    }

    /// The original formulation: one PPO-clipped ratio per action.
    pub fn fpo_vanilla() -> Self {
        ObjectiveConfig {
            granularity: RatioGranularity::PerAction,
            trust_region: TrustRegion::Ppo,
            ..Self::fpopp()
        }
    }

    /// Fine-tuning default: per-sample ratios, plain PPO clipping.
    pub fn finetune() -> Self {
        ObjectiveConfig { trust_region: TrustRegion::Ppo, ..Self::fpopp() }
    }
}

// ---- scalar surrogates ----------------------------------------------------

/// Clipped PPO surrogate `min(ρÂ, clip(ρ, 1±ε)Â)`.
pub fn psi_ppo(rho: f64, adv: f64, clip_eps: f64) -> f64 {
    let clipped = rho.max(1.0 - clip_eps).min(1.0 + clip_eps);
    (rho * adv).min(clipped * adv)
}

/// SPO quadratic-penalty surrogate `ρÂ − |Â|/(2ε)·(ρ−1)²`.
pub fn psi_spo(rho: f64, adv: f64, clip_eps: f64) -> f64 {
    rho * adv - adv.abs() / (2.0 * clip_eps) * (rho - 1.0) * (rho - 1.0)
}

/// Asymmetric surrogate: PPO for `Â ≥ 0`, SPO for `Â < 0`.
pub fn psi_aspo(rho: f64, adv: f64, clip_eps: f64) -> f64 {
    if adv >= 0.0 {
        psi_ppo(rho, adv, clip_eps)
    } else {
        psi_spo(rho, adv, clip_eps)
    }
}

// ---- eager ratios ----------------------------------------------------------

fn clamp_diff(d: f64, clamp: &ClampConfig) -> f64 {
    d.max(-clamp.diff_max).min(clamp.diff_max)
}

/// Single per-action ratio: exp of the sample-mean of clamped
/// differences. Clipping later applies to all samples of the action at
/// once.
pub fn fpo_ratio_per_action(l_old: &[f64], l_new: &[f64], clamp: &ClampConfig) -> f64 {
    assert_eq!(l_old.len(), l_new.len(), "loss list length mismatch");
    assert!(!l_old.is_empty(), "need at least one sample");
    let mean = l_old
        .iter()
        .zip(l_new)
        .map(|(&o, &n)| clamp_diff(o - n, clamp))
        .sum::<f64>()
        / l_old.len() as f64;
    math::exp(mean)
}

/// Independent per-sample ratio `exp(clamp(ℓ_old − ℓ_θ))`.
pub fn fpo_ratio_per_sample(l_old: f64, l_new: f64, clamp: &ClampConfig) -> f64 {
    math::exp(clamp_diff(l_old - l_new, clamp))
}

/// Normalize advantages to zero mean, unit standard deviation.
pub fn normalize_advantages(advs: &mut [f64]) {
    if advs.is_empty() {
        return;
    }
    let n = advs.len() as f64;
    let mean = advs.iter().sum::<f64>() / n;
    let var = advs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = math::sqrt(var);
    for a in advs.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}

// ---- taped losses -----------------------------------------------------------

/// Ratio summary for metrics.
#[derive(Debug, Clone, Copy, Default)]
pub struct RatioStats {
    pub mean: f64,
    pub max: f64,
    pub clip_fraction: f64,
    /// Largest |ρ − 1| over the minibatch; exactly 0 on-policy.
    pub max_dev: f64,
}

fn ratio_stats(rhos: &[f64], clip_eps: f64) -> RatioStats {
    let n = rhos.len() as f64;
    let mean = rhos.iter().sum::<f64>() / n;
    let max = rhos.iter().fold(f64::MIN, |m, &r| m.max(r));
    let max_dev = rhos.iter().fold(0.0f64, |m, &r| m.max((r - 1.0).abs()));
    let clipped =
        rhos.iter().filter(|&&r| r < 1.0 - clip_eps || r > 1.0 + clip_eps).count() as f64;
    RatioStats { mean, max, clip_fraction: clipped / n, max_dev }
}

/// ψ for a vector of ratios against per-entry advantages, on the tape.
fn psi_tape(
    tape: &mut Tape,
    rho: Var,
    adv: &[f64],
    trust_region: TrustRegion,
    clip_eps: f64,
) -> Result<Var> {
    let adv_c = tape.constant(Tensor::from_vec(adv.to_vec()));
    let ppo = |tape: &mut Tape| -> Result<Var> {
        let unclipped = tape.mul(rho, adv_c)?;
        let rho_clip = tape.clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps)?;
        let clipped = tape.mul(rho_clip, adv_c)?;
        tape.min(unclipped, clipped)
    };
    let spo = |tape: &mut Tape| -> Result<Var> {
        let linear = tape.mul(rho, adv_c)?;
        let rm1 = tape.add_scalar(rho, -1.0)?;
        let sq = tape.square(rm1)?;
        let coef: Vec<f64> = adv.iter().map(|a| a.abs() / (2.0 * clip_eps)).collect();
        let coef_c = tape.constant(Tensor::from_vec(coef));
        let pen = tape.mul(sq, coef_c)?;
        tape.sub(linear, pen)
    };
    match trust_region {
        TrustRegion::Ppo => ppo(tape),
        TrustRegion::Spo => spo(tape),
        TrustRegion::Aspo => {
            let p = ppo(tape)?;
            let s = spo(tape)?;
            tape.select_by_sign(adv_c, p, s)
        }
    }
}

/// Assembled flow actor loss (to minimize) for a minibatch of `b`
/// actions with `n_mc` cached samples each.
///
/// `l_theta` holds live per-sample losses `(b·n_mc,)` on the tape;
/// `l_old` the cached values under θ_old; `adv` one advantage per
/// action, shared across its samples. Per-sample granularity sums
/// ψ over all ratios; per-action granularity is scaled by `n_mc` so
/// both produce identical gradients on-policy.
pub fn fpo_actor_loss_tape(
    tape: &mut Tape,
    l_theta: Var,
    l_old: &[f64],
    adv: &[f64],
    n_mc: usize,
    cfg: &ObjectiveConfig,
) -> Result<(Var, RatioStats)> {
    let b = adv.len();
    assert_eq!(l_old.len(), b * n_mc, "cached losses must be b·n_mc");
    assert_eq!(tape.value(l_theta).numel(), b * n_mc, "live losses must be b·n_mc");
    assert!(cfg.clip_eps > 0.0, "clip_eps must be positive");

    let l_old_c = tape.constant(Tensor::from_vec(l_old.to_vec()));
    let diff = tape.sub(l_old_c, l_theta)?;
    let diff = if cfg.clamp.straight_through {
        tape.clamp_straight_through(diff, -cfg.clamp.diff_max, cfg.clamp.diff_max)?
    } else {
        tape.clamp(diff, -cfg.clamp.diff_max, cfg.clamp.diff_max)?
    };

    let (psi, stats, scale) = match cfg.granularity {
        RatioGranularity::PerSample => {
            let rho = tape.exp(diff)?;
            let adv_rep: Vec<f64> =
                adv.iter().flat_map(|&a| core::iter::repeat(a).take(n_mc)).collect();
            let stats = ratio_stats(tape.value(rho).data(), cfg.clip_eps);
            let psi = psi_tape(tape, rho, &adv_rep, cfg.trust_region, cfg.clip_eps)?;
            (psi, stats, -1.0 / b as f64)
        }
        RatioGranularity::PerAction => {
            let grouped = tape.reshape(diff, alloc::vec![b, n_mc])?;
            let mean_diff = tape.mean_last(grouped)?;
            let rho = tape.exp(mean_diff)?;
            let stats = ratio_stats(tape.value(rho).data(), cfg.clip_eps);
            let psi = psi_tape(tape, rho, adv, cfg.trust_region, cfg.clip_eps)?;
            (psi, stats, -(n_mc as f64) / b as f64)
        }
    };
    let total = tape.sum_all(psi)?;
    let loss = tape.scale(total, scale)?;
    Ok((loss, stats))
}

/// Gaussian PPO actor loss: `−mean ψ_PPO(exp(ll_new − ll_old), Â)`.
pub fn gaussian_ppo_loss_tape(
    tape: &mut Tape,
    loglik_new: Var,
    loglik_old: &[f64],
    adv: &[f64],
    cfg: &ObjectiveConfig,
) -> Result<(Var, RatioStats)> {
    let b = adv.len();
    assert_eq!(loglik_old.len(), b, "loglik/advantage length mismatch");
    let old_c = tape.constant(Tensor::from_vec(loglik_old.to_vec()));
    let diff = tape.sub(loglik_new, old_c)?;
    let rho = tape.exp(diff)?;
    let stats = ratio_stats(tape.value(rho).data(), cfg.clip_eps);
    let psi = psi_tape(tape, rho, adv, TrustRegion::Ppo, cfg.clip_eps)?;
    let m = tape.mean_all(psi)?;
    let loss = tape.scale(m, -1.0)?;
    Ok((loss, stats))
}

/// Critic regression loss: mean squared error against returns.
pub fn value_loss_tape(tape: &mut Tape, values: Var, returns: &[f64]) -> Result<Var> {
    assert_eq!(tape.value(values).numel(), returns.len(), "values/returns length mismatch");
    let r = tape.constant(Tensor::from_vec(returns.to_vec()));
    let d = tape.sub(values, r)?;
    let sq = tape.square(d)?;
    tape.mean_all(sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const EPS: f64 = 0.05;

    #[test]
    fn psi_hand_values() {
        // PPO
        assert!((psi_ppo(1.0, 2.0, EPS) - 2.0).abs() < 1e-12);
        assert!((psi_ppo(1.2, 1.0, EPS) - 1.05).abs() < 1e-12);
        assert!((psi_ppo(0.8, -1.0, EPS) - (-0.95)).abs() < 1e-12);
        // SPO
        assert!((psi_spo(1.0, 3.7, EPS) - 3.7).abs() < 1e-12);
        assert!((psi_spo(1.05, -1.0, EPS) - (-1.075)).abs() < 1e-12);
        assert!((psi_spo(0.9, -2.0, EPS) - (-2.0)).abs() < 1e-12);
        // ASPO piecewise
        assert_eq!(psi_aspo(1.7, 0.0, EPS), 0.0);
        assert_eq!(psi_aspo(0.4, 0.0, EPS), 0.0);
        assert!((psi_aspo(1.2, 1.0, EPS) - 1.05).abs() < 1e-12);
        assert!((psi_aspo(1.05, -1.0, EPS) - (-1.075)).abs() < 1e-12);
    }

    #[test]
    fn aspo_equals_branches_pointwise() {
        let mut rng = crate::rngstream::rng_from_seed(3);
        use rand::Rng;
        for _ in 0..10_000 {
            let rho = 0.2 + 1.6 * rng.random::<f64>();
            let adv = 4.0 * rng.random::<f64>() - 2.0;
            let want = if adv >= 0.0 { psi_ppo(rho, adv, EPS) } else { psi_spo(rho, adv, EPS) };
            assert_eq!(psi_aspo(rho, adv, EPS), want);
        }
    }

    #[test]
    fn ratio_hand_values() {
        let cfg = ClampConfig::default();
        // Identical losses → 1 exactly.
        assert_eq!(fpo_ratio_per_action(&[0.5, 1.5], &[0.5, 1.5], &cfg), 1.0);
        assert_eq!(fpo_ratio_per_sample(0.7, 0.7, &cfg), 1.0);
        // diffs {0.2, 0.0} → exp(0.1).
        let r = fpo_ratio_per_action(&[1.2, 1.0], &[1.0, 1.0], &cfg);
        assert!((r - 1.1051709180756477).abs() < 1e-12);
        // per-sample diff 0.2 → exp(0.2).
        let r = fpo_ratio_per_sample(1.0, 0.8, &cfg);
        assert!((r - 1.2214027581601699).abs() < 1e-12);
        // Diffs of 10 clamp to 5 before exponentiation.
        let r = fpo_ratio_per_action(&[10.0, 10.0], &[0.0, 0.0], &cfg);
        assert!((r - math::exp(5.0)).abs() < 1e-12);
        let r = fpo_ratio_per_sample(0.0, 10.0, &cfg);
        assert!((r - math::exp(-5.0)).abs() < 1e-12);
    }

    #[test]
    fn spo_gradient_via_autodiff() {
        // dψ/dρ = Â − |Â|/ε·(ρ−1): zero at ρ = 1 − ε for Â < 0,
        // positive below, negative above.
        let adv = -1.3;
        let grad_at = |rho: f64| {
            let mut tape = Tape::new();
            let r = tape.param(&Tensor::scalar(rho));
            let psi = psi_tape(&mut tape, r, &[adv], TrustRegion::Spo, EPS).unwrap();
            tape.backward(psi);
            tape.grad(r).unwrap().item()
        };
        assert!(grad_at(1.0 - EPS).abs() < 1e-12);
        assert!(grad_at(1.0 - EPS - 0.01) > 0.0);
        assert!(grad_at(1.0 - EPS + 0.01) < 0.0);
        // Analytic derivative everywhere.
        for rho in [0.8, 0.95, 1.0, 1.1] {
            let want = adv - adv.abs() / EPS * (rho - 1.0);
            assert!((grad_at(rho) - want).abs() < 1e-12, "rho={rho}");
        }
    }

    #[test]
    fn ppo_clip_zeroes_gradient_on_binding_branch() {
        let grad_at = |rho: f64, adv: f64| {
            let mut tape = Tape::new();
            let r = tape.param(&Tensor::scalar(rho));
            let psi = psi_tape(&mut tape, r, &[adv], TrustRegion::Ppo, EPS).unwrap();
            tape.backward(psi);
            tape.grad(r).map(|g| g.item()).unwrap_or(0.0)
        };
        // Positive advantage, ratio above the band: clipped branch wins.
        assert_eq!(grad_at(1.2, 1.0), 0.0);
        // Negative advantage, ratio below the band.
        assert_eq!(grad_at(0.8, -1.0), 0.0);
        // Inside the band the gradient is Â.
        assert!((grad_at(1.0, 0.7) - 0.7).abs() < 1e-12);
        // Outside the band on the non-binding side the min picks the
        // unclipped branch: gradient is Â.
        assert!((grad_at(1.2, -1.0) - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn actor_loss_hand_value() {
        // Single action, N_mc = 1, ρ = 1.05, Â = −1, ASPO → +1.075.
        let mut tape = Tape::new();
        // ℓ_old − ℓ_θ = ln(1.05)
        let l_theta = tape.param(&Tensor::from_vec(vec![0.0]));
        let l_old = [math::ln(1.05)];
        let cfg = ObjectiveConfig::fpopp();
        let (loss, stats) = fpo_actor_loss_tape(&mut tape, l_theta, &l_old, &[-1.0], 1, &cfg)
            .unwrap();
        assert!((tape.value(loss).item() - 1.075).abs() < 1e-12);
        assert!((stats.mean - 1.05).abs() < 1e-12);
        assert!(stats.clip_fraction == 0.0);
    }

    #[test]
    fn zero_advantages_give_zero_loss_and_gradient() {
        let mut tape = Tape::new();
        let l_theta = tape.param(&Tensor::from_vec(vec![0.3, 0.6, 0.4, 0.5]));
        let l_old = [0.1, 0.2, 0.3, 0.4];
        let cfg = ObjectiveConfig::fpopp();
        let (loss, _) = fpo_actor_loss_tape(&mut tape, l_theta, &l_old, &[0.0, 0.0], 2, &cfg)
            .unwrap();
        assert_eq!(tape.value(loss).item(), 0.0);
        tape.backward(loss);
        for g in tape.grad(l_theta).unwrap().data() {
            assert_eq!(*g, 0.0);
        }
    }

    #[test]
    fn on_policy_ratios_are_exactly_one() {
        let l: Vec<f64> = vec![0.37, 1.2, 0.05, 2.4];
        let mut tape = Tape::new();
        let l_theta = tape.param(&Tensor::from_vec(l.clone()));
        let cfg = ObjectiveConfig::fpopp();
        let (_, stats) = fpo_actor_loss_tape(&mut tape, l_theta, &l, &[0.5, -0.5], 2, &cfg)
            .unwrap();
        assert!((stats.mean - 1.0).abs() < 1e-12);
        assert!((stats.max - 1.0).abs() < 1e-12);
        assert_eq!(stats.clip_fraction, 0.0);
    }

    #[test]
    fn per_sample_and_per_action_agree_on_policy() {
        // Equal losses and equal gradients at θ = θ_old.
        let l: Vec<f64> = vec![0.9, 0.1, 0.7, 0.3, 0.2, 0.8];
        let adv = [1.4, -0.6];
        for tr in [TrustRegion::Ppo, TrustRegion::Spo, TrustRegion::Aspo] {
            let run = |granularity| {
                let mut tape = Tape::new();
                let l_theta = tape.param(&Tensor::from_vec(l.clone()));
                let cfg = ObjectiveConfig {
                    granularity,
                    trust_region: tr,
                    ..ObjectiveConfig::fpopp()
                };
                let (loss, _) =
                    fpo_actor_loss_tape(&mut tape, l_theta, &l, &adv, 3, &cfg).unwrap();
                tape.backward(loss);
                (tape.value(loss).item(), tape.grad(l_theta).unwrap().clone())
            };
            let (loss_s, grad_s) = run(RatioGranularity::PerSample);
            let (loss_a, grad_a) = run(RatioGranularity::PerAction);
            assert!((loss_s - loss_a).abs() < 1e-12, "{tr:?}");
            for (gs, ga) in grad_s.data().iter().zip(grad_a.data()) {
                assert!((gs - ga).abs() < 1e-12, "{tr:?}: {gs} vs {ga}");
            }
        }
    }

    #[test]
    fn objective_pushes_cfm_loss_in_advantage_direction() {
        // Maximizing ψ decreases ℓ_θ for Â > 0 (loss gradient positive)
        // and increases it for Â < 0 near ρ = 1 (loss gradient negative).
        let grad_for_adv = |adv: f64| {
            let mut tape = Tape::new();
            let l_theta = tape.param(&Tensor::from_vec(vec![0.5]));
            let (loss, _) = fpo_actor_loss_tape(
                &mut tape,
                l_theta,
                &[0.5],
                &[adv],
                1,
                &ObjectiveConfig::fpopp(),
            )
            .unwrap();
            tape.backward(loss);
            tape.grad(l_theta).unwrap().item()
        };
        assert!(grad_for_adv(1.0) > 0.0);
        assert!(grad_for_adv(-1.0) < 0.0);
    }

    #[test]
    fn gaussian_loss_cases() {
        let cfg = ObjectiveConfig { clip_eps: 0.2, ..ObjectiveConfig::fpopp() };
        // On-policy → −mean(Â).
        let mut tape = Tape::new();
        let ll = tape.param(&Tensor::from_vec(vec![-1.0, -2.0]));
        let (loss, _) =
            gaussian_ppo_loss_tape(&mut tape, ll, &[-1.0, -2.0], &[0.5, 1.5], &cfg).unwrap();
        assert!((tape.value(loss).item() + 1.0).abs() < 1e-12);

        // loglik diff 0.1, Â = 1, ε = 0.2 → −exp(0.1), unclipped.
        let mut tape = Tape::new();
        let ll = tape.param(&Tensor::from_vec(vec![0.1]));
        let (loss, _) = gaussian_ppo_loss_tape(&mut tape, ll, &[0.0], &[1.0], &cfg).unwrap();
        assert!((tape.value(loss).item() + 1.1051709180756477).abs() < 1e-12);

        // Â = 0 → 0.
        let mut tape = Tape::new();
        let ll = tape.param(&Tensor::from_vec(vec![0.3]));
        let (loss, _) = gaussian_ppo_loss_tape(&mut tape, ll, &[0.0], &[0.0], &cfg).unwrap();
        assert_eq!(tape.value(loss).item(), 0.0);
    }

    #[test]
    fn value_loss_cases() {
        let mut tape = Tape::new();
        let v = tape.param(&Tensor::from_vec(vec![1.0, 2.0]));
        let l = value_loss_tape(&mut tape, v, &[1.0, 2.0]).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);

        let mut tape = Tape::new();
        let v = tape.param(&Tensor::from_vec(vec![0.0]));
        let l = value_loss_tape(&mut tape, v, &[2.0]).unwrap();
        assert_eq!(tape.value(l).item(), 4.0);

        // Homogeneity: scaling returns by c scales the loss by c².
        let mut tape = Tape::new();
        let v = tape.param(&Tensor::from_vec(vec![0.0, 0.0]));
        let l = value_loss_tape(&mut tape, v, &[3.0, -3.0]).unwrap();
        assert_eq!(tape.value(l).item(), 9.0);
    }

    #[test]
    fn advantage_normalization() {
        let mut a = vec![1.0, 2.0, 3.0, 4.0];
        normalize_advantages(&mut a);
        let mean: f64 = a.iter().sum::<f64>() / 4.0;
        let var: f64 = a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn clamped_and_unbounded_pipelines_agree_within_bounds() {
        let l_old = [0.4, 0.9, 1.3];
        let l_new = [0.5, 0.7, 1.2];
        let bounded = ClampConfig::default();
        let unbounded = ClampConfig::unbounded();
        for i in 0..3 {
            let a = fpo_ratio_per_sample(l_old[i], l_new[i], &bounded);
            let b = fpo_ratio_per_sample(l_old[i], l_new[i], &unbounded);
            assert_eq!(a, b);
        }
        assert_eq!(
            fpo_ratio_per_action(&l_old, &l_new, &bounded),
            fpo_ratio_per_action(&l_old, &l_new, &unbounded)
        );
    }
}
