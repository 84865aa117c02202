//! Outcome rewards: binary format and accuracy components and their
//! weighted sum.

use serde::{Deserialize, Serialize};

use crate::types::ParsedResponse;

/// Weights for the two reward components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_format: f64,
    pub w_acc: f64,
    /// When set, the accuracy component is only paid on well-formed
    /// responses. Off by default: the total is a plain sum with no gating;
    /// the flag exists for ablation.
    #[serde(default)]
    pub require_format_for_acc: bool,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { w_format: 1.0, w_acc: 1.0, require_format_for_acc: false }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), String> {
        if self.w_format < 0.0 || self.w_acc < 0.0 {
            return Err("reward weights must be nonnegative".into());
        }
        if self.w_format + self.w_acc <= 0.0 {
            return Err("at least one reward weight must be positive".into());
        }
        Ok(())
    }

    /// Upper bound of [`total_reward`] under these weights.
    pub fn max_total(&self) -> f64 {
        self.w_format + self.w_acc
    }
}

/// 1 iff the response is exactly one think block then one answer block.
pub fn format_reward(parsed: &ParsedResponse) -> f64 {
    if parsed.well_formed_format {
        1.0
    } else {
        0.0
    }
}

/// 1 iff an answer letter was extracted and equals the ground truth.
pub fn accuracy_reward(parsed: &ParsedResponse, gt: char) -> f64 {
    if parsed.answer == Some(gt) {
        1.0
    } else {
        0.0
    }
}

/// `w_format * format + w_acc * accuracy`.
pub fn total_reward(parsed: &ParsedResponse, gt: char, weights: &RewardWeights) -> f64 {
    let fmt = format_reward(parsed);
    let mut acc = accuracy_reward(parsed, gt);
    if weights.require_format_for_acc && fmt == 0.0 {
        acc = 0.0;
    }
    weights.w_format * fmt + weights.w_acc * acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_response;
    use proptest::prelude::*;

    #[test]
    fn format_reward_cases() {
        assert_eq!(format_reward(&parse_response("<think>t</think><answer>A</answer>")), 1.0);
        assert_eq!(format_reward(&parse_response("<answer>A</answer>")), 0.0);
        assert_eq!(
            format_reward(&parse_response("<think>a</think><think>b</think><answer>A</answer>")),
            0.0
        );
    }

    #[test]
    fn accuracy_reward_cases() {
        let hit = parse_response("<think>t</think><answer>B</answer>");
        assert_eq!(accuracy_reward(&hit, 'B'), 1.0);
        assert_eq!(accuracy_reward(&hit, 'C'), 0.0);
        let absent = parse_response("no tags here");
        assert_eq!(accuracy_reward(&absent, 'B'), 0.0);
    }

    #[test]
    fn total_reward_cases() {
        let w = RewardWeights::default();
        assert_eq!(total_reward(&parse_response("<think>t</think><answer>B</answer>"), 'B', &w), 2.0);
        assert_eq!(total_reward(&parse_response("<think>t</think><answer>C</answer>"), 'B', &w), 1.0);
        assert_eq!(total_reward(&parse_response("garbage"), 'B', &w), 0.0);
    }

    #[test]
    fn malformed_but_correct_still_earns_accuracy() {
        // Answer block present, think block missing: format 0, accuracy 1.
        let p = parse_response("<answer>B</answer>");
        let w = RewardWeights::default();
        assert_eq!(total_reward(&p, 'B', &w), 1.0);
        let gated = RewardWeights { require_format_for_acc: true, ..Default::default() };
        assert_eq!(total_reward(&p, 'B', &gated), 0.0);
    }

    #[test]
    fn weight_validation() {
        assert!(RewardWeights::default().validate().is_ok());
        let zero = RewardWeights { w_format: 0.0, w_acc: 0.0, require_format_for_acc: false };
        assert!(zero.validate().is_err());
        let neg = RewardWeights { w_format: -1.0, w_acc: 2.0, require_format_for_acc: false };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn whitespace_noise_in_answer_block_does_not_change_accuracy() {
        let clean = parse_response("<think>t</think><answer>B</answer>");
        let noisy = parse_response("<think>t</think><answer> ( b ) </answer>");
        assert_eq!(accuracy_reward(&clean, 'B'), accuracy_reward(&noisy, 'B'));
    }

    proptest! {
        #[test]
        fn total_reward_is_bounded_and_monotone(
            wf in 0.0f64..4.0,
            wa in 0.0f64..4.0,
            correct in proptest::bool::ANY,
            well_formed in proptest::bool::ANY,
        ) {
            prop_assume!(wf + wa > 0.0);
            let raw = match (well_formed, correct) {
                (true, true) => "<think>t</think><answer>A</answer>".to_string(),
                (true, false) => "<think>t</think><answer>B</answer>".to_string(),
                (false, true) => "<answer>A</answer>".to_string(),
                (false, false) => "nothing".to_string(),
            };
            let parsed = parse_response(&raw);
            let w = RewardWeights { w_format: wf, w_acc: wa, require_format_for_acc: false };
            let total = total_reward(&parsed, 'A', &w);
            prop_assert!((0.0..=w.max_total()).contains(&total));
            // Adding a component never lowers the total.
            let bumped = RewardWeights { w_format: wf + 1.0, ..w };
            prop_assert!(total_reward(&parsed, 'A', &bumped) >= total);
        }
    }
}
