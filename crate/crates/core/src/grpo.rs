//! Group-relative policy optimization.
//!
//! Rewards are normalized within each rollout group to zero-mean,
//! unit-std advantages (population std; a degenerate group yields zero
//! advantages). Per-position probability ratios against the sampling
//! snapshot span both the semantic and the scene segment of a rollout.
//! The objective is the token-averaged clipped surrogate minus `beta`
//! times the position-averaged exact KL to a frozen reference policy;
//! its gradient is assembled with the clipped-branch subgradient
//! convention (a position contributes zero where the min selects the
//! clipped branch and clipping is active; ties go to the unclipped
//! branch).

use alloc::vec;
use alloc::vec::Vec;

use crate::env::{PromptSpec, RewardBreakdown};
use crate::error::CoreError;
use crate::policy::{
    hidden_from_state, range_log_softmax, GradAccum, Phase, PolicyParams, Rollout, Walker,
};
use crate::Token;

fn exp(x: f64) -> f64 {
    libm::exp(x)
}

/// Optimization constants. The adaptive-moment decay rates and stabilizer
/// are fixed fields so every run log records them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrpoConfig {
    /// Rollouts per group (the trainer's schedule may override per epoch).
    pub group_size: usize,
    /// Clip half-width for the probability ratio.
    pub clip_epsilon: f64,
    /// Weight of the KL term against the reference policy.
    pub kl_beta: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 4,
            clip_epsilon: 0.2,
            kl_beta: 0.01,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.group_size < 2 {
            return Err(CoreError::InvalidConfig("group_size must be >= 2".into()));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(CoreError::InvalidConfig(
                "clip_epsilon must lie in (0, 1)".into(),
            ));
        }
        if self.kl_beta < 0.0 {
            return Err(CoreError::InvalidConfig("kl_beta must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(CoreError::InvalidConfig("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// One prompt's rollout group with rewards and normalized advantages.
#[derive(Debug, Clone)]
pub struct GroupBatch {
    pub prompt: PromptSpec,
    pub rollouts: Vec<Rollout>,
    pub rewards: Vec<RewardBreakdown>,
    pub advantages: Vec<f64>,
}

impl GroupBatch {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.rollouts.len() < 2 {
            return Err(CoreError::GroupTooSmall {
                got: self.rollouts.len(),
            });
        }
        if self.rewards.len() != self.rollouts.len() || self.advantages.len() != self.rollouts.len()
        {
            return Err(CoreError::LengthMismatch {
                what: "group rewards/advantages",
                expected: self.rollouts.len(),
                got: self.rewards.len().min(self.advantages.len()),
            });
        }
        let enc = &self.rollouts[0].prompt_tokens;
        for r in &self.rollouts {
            if &r.prompt_tokens != enc {
                return Err(CoreError::DimensionMismatch {
                    what: "group rollouts condition on different prompts",
                });
            }
            if r.logprob_old.len() != r.total_len() {
                return Err(CoreError::LengthMismatch {
                    what: "rollout logprob_old",
                    expected: r.total_len(),
                    got: r.logprob_old.len(),
                });
            }
        }
        Ok(())
    }
}

/// Zero-mean, unit-std normalization of group totals (population std).
/// A group with std below 1e-12 carries no preference signal and maps to
/// all-zero advantages.
pub fn compute_advantages(totals: &[f64]) -> Result<Vec<f64>, CoreError> {
    let n = totals.len();
    if n < 2 {
        return Err(CoreError::GroupTooSmall { got: n });
    }
    let mean = totals.iter().sum::<f64>() / n as f64;
    let var = totals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
    let std = libm::sqrt(var);
    if std < 1e-12 {
        return Ok(vec![0.0; n]);
    }
    Ok(totals.iter().map(|r| (r - mean) / std).collect())
}

/// Per-position probability ratios `exp(new - old)`.
pub fn compute_ratios(logprob_new: &[f64], logprob_old: &[f64]) -> Result<Vec<f64>, CoreError> {
    if logprob_new.len() != logprob_old.len() {
        return Err(CoreError::LengthMismatch {
            what: "ratio operands",
            expected: logprob_new.len(),
            got: logprob_old.len(),
        });
    }
    if logprob_new.iter().chain(logprob_old).any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite {
            what: "log-probabilities",
        });
    }
    Ok(logprob_new
        .iter()
        .zip(logprob_old)
        .map(|(n, o)| exp(n - o))
        .collect())
}

/// `min(r*A, clip(r, 1-eps, 1+eps)*A)`.
pub fn clipped_term(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    debug_assert!(ratio > 0.0);
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Subgradient of [`clipped_term`] with respect to `log pi_new(token)`:
/// `r*A` on the unclipped branch (ties included), zero where the clipped
/// branch is selected and clipping is active.
fn clipped_term_weight(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    let surr1 = ratio * advantage;
    let surr2 = clipped * advantage;
    if surr1 <= surr2 {
        surr1
    } else {
        0.0
    }
}

/// Result of one objective evaluation.
#[derive(Debug, Clone)]
pub struct ObjectiveOutput {
    /// Token-averaged clipped surrogate minus `beta` times the mean KL.
    pub objective: f64,
    /// Ascent direction in the flat parameter layout.
    pub gradient: Vec<f64>,
    /// Position-averaged exact KL against the reference policy.
    pub mean_kl: f64,
    /// Per rollout, the reference log-prob of each taken token (a free
    /// byproduct of the KL pass; the trainer stores it on the rollout).
    pub logprob_ref: Vec<Vec<f64>>,
}

/// The clipped-surrogate objective with KL regularization, and its
/// gradient with respect to `params` (an ascent direction).
///
/// objective = (1/T) * sum_i sum_j min(r_ij A_i, clip(r_ij) A_i)
///           - beta * (1/T) * sum_i sum_j KL_j(params || ref),
/// where T is the total token count of the group. New-policy
/// log-probabilities are recomputed from `params`, teacher-forced on the
/// recorded rollouts; ratios divide by the stored `logprob_old`.
pub fn grpo_objective(
    batch: &GroupBatch,
    params: &PolicyParams,
    ref_params: &PolicyParams,
    config: &GrpoConfig,
) -> Result<ObjectiveOutput, CoreError> {
    batch.validate()?;
    if params.vocab != ref_params.vocab {
        return Err(CoreError::DimensionMismatch {
            what: "policy and reference vocabularies differ",
        });
    }
    let total_tokens: usize = batch.rollouts.iter().map(|r| r.total_len()).sum();
    let inv_total = 1.0 / total_tokens as f64;
    let beta = config.kl_beta;
    let eps = config.clip_epsilon;

    let mut grad = vec![0.0; params.values.len()];
    let mut surrogate_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut logprob_ref_out = Vec::with_capacity(batch.rollouts.len());

    for (rollout, &advantage) in batch.rollouts.iter().zip(&batch.advantages) {
        let mut taken_ref = Vec::with_capacity(rollout.total_len());
        let mut accum = GradAccum::new();
        let mut walker = Walker::new(params, &rollout.prompt_tokens);
        let mut walker_ref = Walker::new(ref_params, &rollout.prompt_tokens);
        let mut pos = 0usize;
        for (tokens, phase) in [
            (&rollout.semantic, Phase::Semantic),
            (&rollout.scene, Phase::Scene),
        ] {
            for &t in tokens.iter() {
                let state = walker.state(phase);
                let hidden = hidden_from_state(params, &state);
                let (base, logp_new) = range_log_softmax(params, &hidden, phase);
                let taken = t as usize - base;

                let ratio = exp(logp_new[taken] - rollout.logprob_old[pos]);
                surrogate_sum += clipped_term(ratio, advantage, eps);
                let w = clipped_term_weight(ratio, advantage, eps) * inv_total;

                let state_ref = walker_ref.state(phase);
                let hidden_ref = hidden_from_state(ref_params, &state_ref);
                let (_, logp_ref) = range_log_softmax(ref_params, &hidden_ref, phase);
                taken_ref.push(logp_ref[taken]);
                let mut kl = 0.0;
                for (&la, &lb) in logp_new.iter().zip(&logp_ref) {
                    kl += exp(la) * (la - lb);
                }
                kl_sum += kl;

                // Combined logit gradient: surrogate weight minus the KL term.
                let mut dz = Vec::with_capacity(logp_new.len());
                for (k, (&la, &lb)) in logp_new.iter().zip(&logp_ref).enumerate() {
                    let p = exp(la);
                    let mut d = -w * p - beta * inv_total * p * ((la - lb) - kl);
                    if k == taken {
                        d += w;
                    }
                    dz.push(d);
                }
                accum.position(params, &state, &hidden, base, &dz, &mut grad);

                walker.advance(t);
                walker_ref.advance(t);
                pos += 1;
            }
        }
        let generated: Vec<Token> = rollout
            .semantic
            .iter()
            .chain(rollout.scene.iter())
            .copied()
            .collect();
        accum.finish(&rollout.prompt_tokens, &generated, &mut grad);
        logprob_ref_out.push(taken_ref);
    }

    Ok(ObjectiveOutput {
        objective: inv_total * surrogate_sum - beta * inv_total * kl_sum,
        gradient: grad,
        mean_kl: inv_total * kl_sum,
        logprob_ref: logprob_ref_out,
    })
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn fresh(param_count: usize) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }
}

/// One ascent step: bias-corrected adaptive moments, deterministic in its
/// inputs. Returns the updated parameters and optimizer state.
pub fn update_step(
    params: &PolicyParams,
    gradient: &[f64],
    state: &AdamState,
    config: &GrpoConfig,
) -> Result<(PolicyParams, AdamState), CoreError> {
    if gradient.len() != params.values.len() || state.m.len() != params.values.len() {
        return Err(CoreError::LengthMismatch {
            what: "gradient/optimizer shape",
            expected: params.values.len(),
            got: gradient.len(),
        });
    }
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(CoreError::NonFinite { what: "gradient" });
    }
    let (b1, b2, eps) = (config.adam_beta1, config.adam_beta2, config.adam_eps);
    let t = state.step + 1;
    let corr1 = 1.0 - libm::pow(b1, t as f64);
    let corr2 = 1.0 - libm::pow(b2, t as f64);
    let mut new = params.clone();
    let mut m = state.m.clone();
    let mut v = state.v.clone();
    for i in 0..gradient.len() {
        let g = gradient[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / corr1;
        let v_hat = v[i] / corr2;
        new.values[i] += config.learning_rate * m_hat / (libm::sqrt(v_hat) + eps);
    }
    Ok((new, AdamState { m, v, step: t }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{self, Category, Vocabulary};
    use crate::policy::{init_params, logprob_sequence, sample_rollout};
    use crate::rng;
    use std::vec;

    fn tiny_vocab() -> crate::policy::VocabSpec {
        crate::policy::VocabSpec {
            prompt: 4,
            semantic: 6,
            scene: 5,
        }
    }

    fn sample_batch(seed: u64) -> (GroupBatch, PolicyParams) {
        let vocab = Vocabulary::standard();
        let params = init_params(vocab.spec(), seed).unwrap();
        let spec = env::generate_prompt(Category::Colors, &mut rng::stream(seed), 0);
        let prompt = env::encode_prompt(&spec, &vocab);
        let rollouts: Vec<Rollout> = (0..3)
            .map(|i| {
                let mut r = sample_rollout(&params, &prompt, rng::split(seed, i));
                r.logprob_old = r.logprob_new.clone();
                r
            })
            .collect();
        let rewards: Vec<_> = rollouts
            .iter()
            .map(|r| {
                let scene = env::decode_scene(&r.scene, &vocab).unwrap();
                env::reward_ensemble(&scene, &spec)
            })
            .collect();
        let totals: Vec<f64> = rewards.iter().map(|b| b.total).collect();
        let advantages = compute_advantages(&totals).unwrap();
        (
            GroupBatch {
                prompt: spec,
                rollouts,
                rewards,
                advantages,
            },
            params,
        )
    }

    #[test]
    fn advantage_examples() {
        assert_eq!(
            compute_advantages(&[2.0, 2.0, 2.0, 2.0]).unwrap(),
            vec![0.0; 4]
        );
        let a = compute_advantages(&[1.0, 3.0]).unwrap();
        assert!((a[0] + 1.0).abs() < 1e-15);
        assert!((a[1] - 1.0).abs() < 1e-15);
        assert!(matches!(
            compute_advantages(&[1.0]),
            Err(CoreError::GroupTooSmall { got: 1 })
        ));
    }

    #[test]
    fn advantages_normalize_to_zero_mean_unit_std() {
        let mut stream = rng::stream(5);
        use rand::Rng;
        for _ in 0..500 {
            let n = stream.gen_range(2..9usize);
            let totals: Vec<f64> = (0..n).map(|_| stream.gen::<f64>() * 3.0).collect();
            let adv = compute_advantages(&totals).unwrap();
            let mean = adv.iter().sum::<f64>() / n as f64;
            let std =
                libm::sqrt(adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64);
            if adv.iter().any(|&a| a != 0.0) {
                assert!(mean.abs() < 1e-9);
                assert!((std - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn advantages_are_scale_and_shift_invariant() {
        let totals = [1.9, 2.05, 1.4, 2.11];
        let base = compute_advantages(&totals).unwrap();
        let transformed: Vec<f64> = totals.iter().map(|r| 3.5 * r + 0.75).collect();
        let scaled = compute_advantages(&transformed).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn ratio_examples() {
        let new = [-0.5, -0.25];
        let same = compute_ratios(&new, &new).unwrap();
        assert!(same.iter().all(|&r| r == 1.0));
        let old = [-0.5 - libm::log(2.0), -0.25];
        let r = compute_ratios(&new, &old).unwrap();
        assert!((r[0] - 2.0).abs() < 1e-12);
        assert!((r[1] - 1.0).abs() < 1e-15);
        assert!(matches!(
            compute_ratios(&[f64::NAN], &[0.0]),
            Err(CoreError::NonFinite { .. })
        ));
    }

    #[test]
    fn clipped_term_examples() {
        assert!((clipped_term(1.5, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((clipped_term(1.5, -1.0, 0.2) + 1.5).abs() < 1e-15);
        for a in [-2.0, -0.3, 0.0, 0.4, 3.0] {
            assert_eq!(clipped_term(1.0, a, 0.2), a);
        }
    }

    #[test]
    fn objective_vanishes_with_zero_advantages() {
        let (mut batch, params) = sample_batch(3);
        batch.advantages = vec![0.0; batch.rollouts.len()];
        let cfg = GrpoConfig {
            kl_beta: 0.0,
            ..GrpoConfig::default()
        };
        let out = grpo_objective(&batch, &params, &params, &cfg).unwrap();
        assert_eq!(out.objective, 0.0);
        assert!(out.gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn objective_at_snapshot_is_advantage_weighted_token_average() {
        let (batch, params) = sample_batch(7);
        let cfg = GrpoConfig {
            kl_beta: 0.0,
            ..GrpoConfig::default()
        };
        let out = grpo_objective(&batch, &params, &params, &cfg).unwrap();
        let total: usize = batch.rollouts.iter().map(|r| r.total_len()).sum();
        let want: f64 = batch
            .rollouts
            .iter()
            .zip(&batch.advantages)
            .map(|(r, a)| r.total_len() as f64 * a)
            .sum::<f64>()
            / total as f64;
        assert!((out.objective - want).abs() < 1e-12);
    }

    #[test]
    fn objective_gradient_matches_literal_assembly() {
        // The fused pass must equal grad_logprob_sum with the clipped-term
        // weights minus beta times the KL gradient.
        let (batch, sampler) = sample_batch(11);
        let params = init_params(sampler.vocab, 999).unwrap();
        let ref_params = init_params(sampler.vocab, 1000).unwrap();
        let cfg = GrpoConfig::default();
        let fused = grpo_objective(&batch, &params, &ref_params, &cfg).unwrap().gradient;

        let total: usize = batch.rollouts.iter().map(|r| r.total_len()).sum();
        let inv_total = 1.0 / total as f64;
        let mut assembled = vec![0.0; params.values.len()];
        for (r, &a) in batch.rollouts.iter().zip(&batch.advantages) {
            let logp_new =
                logprob_sequence(&params, &r.prompt_tokens, &r.semantic, &r.scene).unwrap();
            let weights: Vec<f64> = logp_new
                .iter()
                .zip(&r.logprob_old)
                .map(|(n, o)| {
                    clipped_term_weight(exp(n - o), a, cfg.clip_epsilon) * inv_total
                })
                .collect();
            let (g, _) = crate::policy::grad_logprob_sum(
                &params,
                &r.prompt_tokens,
                &r.semantic,
                &r.scene,
                &weights,
            )
            .unwrap();
            for (acc, x) in assembled.iter_mut().zip(&g) {
                *acc += x;
            }
            let (_, kg, _) = crate::policy::kl_exact_with_grad(
                &params,
                &ref_params,
                &r.prompt_tokens,
                &r.semantic,
                &r.scene,
            )
            .unwrap();
            for (acc, x) in assembled.iter_mut().zip(&kg) {
                *acc -= cfg.kl_beta * inv_total * x;
            }
        }
        for (f, a) in fused.iter().zip(&assembled) {
            assert!(
                (f - a).abs() <= 1e-12 * a.abs().max(1.0),
                "fused {f} vs assembled {a}"
            );
        }
    }

    #[test]
    fn update_step_identity_and_determinism() {
        let params = init_params(tiny_vocab(), 4).unwrap();
        let state = AdamState::fresh(params.values.len());
        let cfg = GrpoConfig::default();
        let zeros = vec![0.0; params.values.len()];
        let (p1, s1) = update_step(&params, &zeros, &state, &cfg).unwrap();
        assert_eq!(p1.values, params.values);
        assert_eq!(s1.step, 1);

        let mut grad = zeros.clone();
        grad[10] = 0.25;
        let a = update_step(&params, &grad, &state, &cfg).unwrap();
        let b = update_step(&params, &grad, &state, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);

        assert!(matches!(
            update_step(&params, &vec![f64::NAN; params.values.len()], &state, &cfg),
            Err(CoreError::NonFinite { .. })
        ));
    }

    #[test]
    fn update_step_decays_moments_under_zero_gradient() {
        let params = init_params(tiny_vocab(), 4).unwrap();
        let mut state = AdamState::fresh(params.values.len());
        state.m[0] = 1.0;
        state.v[0] = 1.0;
        let cfg = GrpoConfig::default();
        let zeros = vec![0.0; params.values.len()];
        let (_, next) = update_step(&params, &zeros, &state, &cfg).unwrap();
        assert!((next.m[0] - 0.9).abs() < 1e-15);
        assert!((next.v[0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn single_step_on_scalar_quadratic_moves_toward_optimum() {
        // Ascent on f(x) = -(x - 3)^2 starting at x = 0: df/dx = 6.
        let params = PolicyParams::zeros(tiny_vocab());
        let state = AdamState::fresh(params.values.len());
        let cfg = GrpoConfig::default();
        let mut grad = vec![0.0; params.values.len()];
        grad[0] = 6.0;
        let (next, _) = update_step(&params, &grad, &state, &cfg).unwrap();
        let expected = cfg.learning_rate * 6.0 / (6.0 + cfg.adam_eps);
        assert!((next.values[0] - expected).abs() < 1e-15);
        assert!((next.values[0] - 3.0).abs() < 3.0);
        assert!(next.values[0] > 0.0);
    }

    #[test]
    fn reward_transform_leaves_update_direction_unchanged() {
        let (mut batch, params) = sample_batch(17);
        let ref_params = init_params(params.vocab, 555).unwrap();
        let cfg = GrpoConfig::default();
        let g_base = grpo_objective(&batch, &params, &ref_params, &cfg).unwrap().gradient;

        let totals: Vec<f64> = batch.rewards.iter().map(|b| 2.5 * b.total + 7.0).collect();
        batch.advantages = compute_advantages(&totals).unwrap();
        let g_shifted = grpo_objective(&batch, &params, &ref_params, &cfg).unwrap().gradient;
        for (a, b) in g_base.iter().zip(&g_shifted) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}
