//! CoT-shortening strategies and reward composition.
//!
//! Four ways to discourage long semantic plans:
//!
//! | strategy | mechanism |
//! |----------|-----------|
//! | `cap`    | truncate the plan after N tokens (structural, no reward term) |
//! | `target` | hinge penalty `-alpha * max(0, L - L_T)` |
//! | `hard`   | `-alpha * L` iff every ensemble score clears its threshold |
//! | `soft`   | `-alpha * (model_sum - 1) * L` (difficulty-scaled) |
//!
//! `none` leaves rewards untouched. Penalties attach to the reward before
//! group normalization, never to the advantage directly.

use alloc::vec::Vec;

use crate::env::RewardBreakdown;
use crate::error::CoreError;
use crate::policy::Rollout;
use crate::Token;

/// Strategy selector, named as accepted by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    None,
    Cap,
    Target,
    Hard,
    Soft,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::None,
        Strategy::Cap,
        Strategy::Target,
        Strategy::Hard,
        Strategy::Soft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Cap => "cap",
            Strategy::Target => "target",
            Strategy::Hard => "hard",
            Strategy::Soft => "soft",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, CoreError> {
        Strategy::ALL
            .iter()
            .copied()
            .find(|s| s.name() == name)
            .ok_or(CoreError::UnknownName {
                what: "strategy",
                name: name.into(),
            })
    }
}

/// Per-model thresholds for the hard gate, each inside its reward range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardThresholds {
    pub detection: f64,
    pub alignment: f64,
    pub preference: f64,
}

impl Default for HardThresholds {
    fn default() -> Self {
        // Midpoints of the ensemble ranges.
        HardThresholds {
            detection: 0.8,
            alignment: 0.5,
            preference: 0.29,
        }
    }
}

/// Strategy plus coefficients. `alpha` defaults follow the reference
/// settings: 5e-4 for soft and target, 1e-3 for hard; the target and cap
/// lengths default to 35 tokens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub strategy: Strategy,
    pub alpha: f64,
    pub target_length: u32,
    pub cap_length: u32,
    pub hard_thresholds: HardThresholds,
}

impl PenaltyConfig {
    pub fn default_alpha(strategy: Strategy) -> f64 {
        match strategy {
            Strategy::Hard => 1e-3,
            _ => 5e-4,
        }
    }

    /// Reference configuration for a strategy.
    pub fn for_strategy(strategy: Strategy) -> Self {
        PenaltyConfig {
            strategy,
            alpha: Self::default_alpha(strategy),
            target_length: 35,
            cap_length: 35,
            hard_thresholds: HardThresholds::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.alpha < 0.0 {
            return Err(CoreError::InvalidConfig("penalty.alpha must be >= 0".into()));
        }
        if self.strategy == Strategy::Cap && self.cap_length < 1 {
            return Err(CoreError::InvalidConfig("cap_length must be >= 1".into()));
        }
        if self.strategy == Strategy::Hard {
            let t = self.hard_thresholds;
            let ok = (0.6..=1.0).contains(&t.detection)
                && (0.2..=0.8).contains(&t.alignment)
                && (0.26..=0.32).contains(&t.preference);
            if !ok {
                return Err(CoreError::InvalidConfig(
                    "hard thresholds must lie inside their reward ranges".into(),
                ));
            }
        }
        Ok(())
    }

    /// Cap applied while sampling, when the strategy is `cap`.
    pub fn sampling_cap(&self) -> Option<usize> {
        (self.strategy == Strategy::Cap).then_some(self.cap_length as usize)
    }
}

/// Semantic tokens excluding the end-of-CoT marker. The marker is only
/// ever terminal in a sampled rollout; a sequence truncated at the
/// length limit carries no marker and counts in full.
pub fn cot_length(rollout: &Rollout) -> u32 {
    let eoc = rollout.vocab.end_of_cot();
    let n = rollout.semantic.len() as u32;
    if rollout.semantic.last() == Some(&eoc) {
        n - 1
    } else {
        n
    }
}

/// Keeps the first `n` tokens, appending the end marker if the cut
/// removed it, so the scene phase always sees a well-formed boundary.
pub fn apply_cap(semantic: &[Token], n: usize, eoc: Token) -> Vec<Token> {
    if semantic.len() <= n {
        return semantic.to_vec();
    }
    let mut out = semantic[..n].to_vec();
    if out.last() != Some(&eoc) {
        out.push(eoc);
    }
    out
}

/// Hinge penalty: `-alpha * max(0, L - L_T)`.
pub fn penalty_target(length: u32, target_length: u32, alpha: f64) -> f64 {
    -alpha * (length.saturating_sub(target_length)) as f64
}

/// Binary difficulty gate: `-alpha * L` iff every score strictly exceeds
/// its threshold, else zero.
pub fn penalty_hard(
    breakdown: &RewardBreakdown,
    thresholds: &HardThresholds,
    length: u32,
    alpha: f64,
) -> f64 {
    let easy = breakdown.detection > thresholds.detection
        && breakdown.alignment > thresholds.alignment
        && breakdown.preference > thresholds.preference;
    if easy {
        -alpha * length as f64
    } else {
        0.0
    }
}

/// Difficulty-scaled penalty: `-alpha * (model_sum - 1) * L`. The offset
/// keeps the factor positive across the ensemble range, so easier prompts
/// (higher scores) penalize length harder.
pub fn penalty_soft(model_sum: f64, length: u32, alpha: f64) -> f64 {
    assert!(
        model_sum >= 1.0,
        "model_sum {model_sum} below the ensemble range; reward breach upstream"
    );
    -alpha * (model_sum - 1.0) * length as f64
}

/// Dispatches to the configured strategy and fills `length_penalty` and
/// `total`. `cap` is structural (it acts on tokens while sampling), so
/// like `none` it contributes no reward term.
pub fn total_reward(
    breakdown: &RewardBreakdown,
    rollout: &Rollout,
    config: &PenaltyConfig,
) -> RewardBreakdown {
    let length = cot_length(rollout);
    let penalty = match config.strategy {
        Strategy::None | Strategy::Cap => 0.0,
        Strategy::Target => penalty_target(length, config.target_length, config.alpha),
        Strategy::Hard => penalty_hard(breakdown, &config.hard_thresholds, length, config.alpha),
        Strategy::Soft => penalty_soft(breakdown.model_sum, length, config.alpha),
    };
    RewardBreakdown {
        length_penalty: penalty,
        total: breakdown.model_sum + penalty,
        ..*breakdown
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Vocabulary;
    use crate::policy::{init_params, sample_rollout, Rollout, S_MAX};
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::Rng;

    fn breakdown(detection: f64, alignment: f64, preference: f64) -> RewardBreakdown {
        let model_sum = detection + alignment + preference;
        RewardBreakdown {
            detection,
            alignment,
            preference,
            model_sum,
            length_penalty: 0.0,
            total: model_sum,
        }
    }

    fn rollout_with_semantic(semantic: Vec<Token>) -> Rollout {
        Rollout {
            vocab: Vocabulary::standard().spec(),
            prompt_tokens: vec![0],
            semantic,
            scene: Vec::new(),
            logprob_new: Vec::new(),
            logprob_old: Vec::new(),
            logprob_ref: Vec::new(),
            seed: 0,
        }
    }

    #[test]
    fn cot_length_rules() {
        let v = Vocabulary::standard().spec();
        let eoc = v.end_of_cot();
        let word = v.prompt as Token;
        assert_eq!(cot_length(&rollout_with_semantic(vec![eoc])), 0);
        assert_eq!(
            cot_length(&rollout_with_semantic(vec![word; 5].into_iter().chain([eoc]).collect())),
            5
        );
        // Truncated at the limit: no marker emitted.
        assert_eq!(
            cot_length(&rollout_with_semantic(vec![word; S_MAX])),
            S_MAX as u32
        );
    }

    #[test]
    fn apply_cap_rules() {
        let v = Vocabulary::standard().spec();
        let eoc = v.end_of_cot();
        let word = v.prompt as Token;

        let short: Vec<Token> = vec![word; 20];
        assert_eq!(apply_cap(&short, 35, eoc), short);

        let long: Vec<Token> = vec![word; 50];
        let capped = apply_cap(&long, 35, eoc);
        assert_eq!(capped.len(), 36);
        assert_eq!(&capped[..35], &long[..35]);
        assert_eq!(*capped.last().unwrap(), eoc);

        let exact: Vec<Token> = vec![word; 35];
        assert_eq!(apply_cap(&exact, 35, eoc), exact);
    }

    #[test]
    fn target_penalty_examples() {
        assert_eq!(penalty_target(30, 35, 5e-4), 0.0);
        let p = penalty_target(50, 35, 5e-4);
        assert_eq!(p, -(5e-4 * 15.0));
        assert!((p + 0.0075).abs() < 1e-15);
        assert_eq!(penalty_target(120, 35, 0.0), 0.0);
    }

    #[test]
    fn hard_penalty_examples() {
        let t = HardThresholds::default();
        let easy = breakdown(0.95, 0.75, 0.31);
        let p = penalty_hard(&easy, &t, 40, 1e-3);
        assert_eq!(p, -(1e-3 * 40.0));
        assert!((p + 0.04).abs() < 1e-15);

        // At-threshold scores do not pass the strict gate.
        let edge = breakdown(0.8, 0.75, 0.31);
        assert_eq!(penalty_hard(&edge, &t, 40, 1e-3), 0.0);
        let below = breakdown(0.95, 0.4, 0.31);
        assert_eq!(penalty_hard(&below, &t, 40, 1e-3), 0.0);
        assert_eq!(penalty_hard(&easy, &t, 0, 1e-3), 0.0);
    }

    #[test]
    fn soft_penalty_examples() {
        let low = penalty_soft(1.06, 40, 5e-4);
        assert_eq!(low, -(5e-4 * (1.06 - 1.0) * 40.0));
        assert!((low + 0.0012).abs() < 1e-15);

        let high = penalty_soft(2.12, 40, 5e-4);
        assert_eq!(high, -(5e-4 * (2.12 - 1.0) * 40.0));
        assert!((high + 0.0224).abs() < 1e-15);

        assert_eq!(penalty_soft(1.8, 0, 5e-4), 0.0);
    }

    #[test]
    #[should_panic(expected = "below the ensemble range")]
    fn soft_penalty_rejects_out_of_range_sum() {
        penalty_soft(0.9, 10, 5e-4);
    }

    #[test]
    fn total_reward_dispatch() {
        let v = Vocabulary::standard().spec();
        let eoc = v.end_of_cot();
        let word = v.prompt as Token;
        let rollout =
            rollout_with_semantic(vec![word; 40].into_iter().chain([eoc]).collect());
        let b = breakdown(0.9, 0.62, 0.3);

        let none = total_reward(&b, &rollout, &PenaltyConfig::for_strategy(Strategy::None));
        assert_eq!(none.length_penalty, 0.0);
        assert_eq!(none.total, b.model_sum);

        let cap = total_reward(&b, &rollout, &PenaltyConfig::for_strategy(Strategy::Cap));
        assert_eq!(cap.length_penalty, 0.0);
        assert_eq!(cap.total, b.model_sum);

        let soft = total_reward(&b, &rollout, &PenaltyConfig::for_strategy(Strategy::Soft));
        let want = penalty_soft(b.model_sum, 40, 5e-4);
        assert_eq!(soft.length_penalty, want);
        assert_eq!(soft.total, b.model_sum + want);
        assert_eq!(soft.model_sum, b.model_sum);
    }

    #[test]
    fn penalties_are_monotone_in_length() {
        let mut stream = crate::rng::stream(31);
        let t = HardThresholds::default();
        for _ in 0..2000 {
            let b = breakdown(
                0.6 + 0.4 * stream.gen::<f64>(),
                0.2 + 0.6 * stream.gen::<f64>(),
                0.26 + 0.06 * stream.gen::<f64>(),
            );
            let alpha = stream.gen::<f64>() * 1e-2;
            let l1 = stream.gen_range(0..200u32);
            let l2 = l1 + stream.gen_range(1..50u32);
            assert!(penalty_target(l2, 35, alpha) <= penalty_target(l1, 35, alpha));
            assert!(penalty_hard(&b, &t, l2, alpha) <= penalty_hard(&b, &t, l1, alpha));
            assert!(penalty_soft(b.model_sum, l2, alpha) <= penalty_soft(b.model_sum, l1, alpha));
        }
    }

    #[test]
    fn soft_penalty_grows_with_difficulty_signal() {
        let mut stream = crate::rng::stream(32);
        for _ in 0..2000 {
            let l = stream.gen_range(1..150u32);
            let alpha = 5e-4;
            let a = 1.06 + stream.gen::<f64>();
            let b = a + 1e-3 + stream.gen::<f64>() * (2.12 - a - 1e-3).max(0.0);
            // Higher ensemble sum (easier prompt) => strictly larger magnitude.
            assert!(penalty_soft(b, l, alpha) < penalty_soft(a, l, alpha));
        }
    }

    #[test]
    fn hard_and_soft_agree_at_the_extremes() {
        let t = HardThresholds::default();
        let best = breakdown(1.0, 0.8, 0.32);
        for l in [1u32, 10, 64] {
            assert!(penalty_hard(&best, &t, l, 1e-3) < 0.0);
            assert!(penalty_soft(best.model_sum, l, 5e-4) < 0.0);
        }
        assert_eq!(penalty_hard(&best, &t, 0, 1e-3), 0.0);
        assert_eq!(penalty_soft(best.model_sum, 0, 5e-4), 0.0);
    }

    #[test]
    fn hard_and_soft_initial_magnitudes_are_within_a_factor_of_four() {
        // Reference coefficients: hard at f=1 vs soft at a mid-range sum.
        let l = 60u32;
        let hard = penalty_hard(&breakdown(0.95, 0.75, 0.31), &HardThresholds::default(), l, 1e-3);
        let soft = penalty_soft(1.5, l, 5e-4);
        let ratio = hard / soft;
        assert!(ratio <= 4.0 + 1e-12 && ratio >= 1.0 / 4.0 - 1e-12, "ratio {ratio}");
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(Strategy::from_name(s.name()).unwrap(), s);
        }
        assert!(Strategy::from_name("bogus").is_err());
    }

    #[test]
    fn capped_sampling_matches_apply_cap_on_the_free_rollout() {
        let vocab = Vocabulary::standard();
        let v = vocab.spec();
        let params = init_params(v, 23).unwrap();
        let prompt = [0 as Token, 7, 26, 27, 35];
        for seed in 0..10 {
            let free = sample_rollout(&params, &prompt, seed);
            let capped = crate::policy::sample_rollout_opts(
                &params,
                &prompt,
                seed,
                crate::policy::SampleOpts {
                    cap: Some(3),
                    force_no_cot: false,
                },
            );
            assert_eq!(capped.semantic, apply_cap(&free.semantic, 3, v.end_of_cot()));
        }
    }
}
