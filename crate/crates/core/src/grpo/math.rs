//! The GRPO objective and its pieces, with analytic per-token gradients.

use crate::num::Real;

use super::{GrpoConfig, GrpoError, RolloutGroup};

/// Normalizes a group of rewards to zero mean and unit population standard
/// deviation.
///
/// Groups whose reward spread is below `std_floor` are degenerate — every
/// candidate looks the same to the optimizer — and map to all zeros instead
/// of dividing by (near) zero.
pub fn group_advantages<T: Real>(rewards: &[T], std_floor: T) -> Result<Vec<T>, GrpoError> {
    let g = rewards.len();
    if g < 2 {
        return Err(GrpoError::GroupTooSmall { got: g });
    }
    let n = T::from_usize(g).expect("group size fits scalar");
    let mean = rewards.iter().copied().sum::<T>() / n;
    let var = rewards.iter().map(|r| (*r - mean) * (*r - mean)).sum::<T>() / n;
    let std = var.sqrt();
    if std < std_floor {
        return Ok(vec![T::zero(); g]);
    }
    Ok(rewards.iter().map(|r| (*r - mean) / std).collect())
}

/// Unbiased nonnegative per-token KL estimate (the `k3` form):
/// `r - log r - 1` with `r = exp(logp_ref - logp_new)`.
///
/// Computed as `exp_m1(d) - d` so values near zero do not cancel; clamped at
/// zero against last-ulp rounding. Zero exactly iff the two log-probs agree.
pub fn kl_per_token<T: Real>(logp_new: T, logp_ref: T) -> T {
    let d = logp_ref - logp_new;
    (d.exp_m1() - d).max(T::zero())
}

/// Per-member diagnostics from one objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GrpoDiagnostics<T> {
    /// Mean importance ratio over all tokens.
    pub mean_ratio: T,
    /// Fraction of tokens whose ratio lies outside the clip band.
    pub clip_fraction: T,
    /// Mean per-token KL estimate.
    pub mean_kl: T,
    /// Per-member mean ratio, for logging.
    pub member_mean_ratio: Vec<T>,
}

/// Evaluates the group objective:
///
/// `(1/G) * sum_i (1/|o_i|) * sum_t [ min(rho*S_i, clip(rho)*S_i) - beta*k3 ]`
///
/// with per-token ratios `rho = exp(logp_new - logp_old)`. The sequence-level
/// ratio is decomposed per token with length-normalized averaging; summing
/// log-ratios and exponentiating once would overflow for realistic lengths.
pub fn grpo_objective<T: Real>(
    group: &RolloutGroup<T>,
    config: &GrpoConfig,
) -> Result<(T, GrpoDiagnostics<T>), GrpoError> {
    let terms = per_token_terms(group, config)?;
    let g = T::from_usize(group.len()).expect("group size fits scalar");

    let mut objective = T::zero();
    let mut ratio_sum = T::zero();
    let mut kl_sum = T::zero();
    let mut clipped = 0usize;
    let mut tokens = 0usize;
    let mut member_mean_ratio = Vec::with_capacity(group.len());

    let eps = T::from_config(config.clip_epsilon);
    let lo = T::one() - eps;
    let hi = T::one() + eps;

    for member_terms in &terms {
        let len = T::from_usize(member_terms.len()).expect("length fits scalar");
        let mut member_obj = T::zero();
        let mut member_ratio = T::zero();
        for t in member_terms {
            member_obj = member_obj + t.surrogate - T::from_config(config.kl_beta) * t.kl;
            member_ratio = member_ratio + t.ratio;
            ratio_sum = ratio_sum + t.ratio;
            kl_sum = kl_sum + t.kl;
            if t.ratio < lo || t.ratio > hi {
                clipped += 1;
            }
            tokens += 1;
        }
        objective = objective + member_obj / len;
        member_mean_ratio.push(member_ratio / len);
    }
    objective = objective / g;

    let n_tokens = T::from_usize(tokens).expect("token count fits scalar");
    let diagnostics = GrpoDiagnostics {
        mean_ratio: ratio_sum / n_tokens,
        clip_fraction: T::from_usize(clipped).expect("count fits scalar") / n_tokens,
        mean_kl: kl_sum / n_tokens,
        member_mean_ratio,
    };
    Ok((objective, diagnostics))
}

/// Gradient of the objective with respect to each token's `logp_new`, split
/// into the surrogate and KL parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenGrad<T> {
    /// d(surrogate term)/d(logp_new), including the 1/(G*|o_i|) weights.
    /// Exactly zero when the clip saturates the min.
    pub surrogate: T,
    /// d(-beta * k3)/d(logp_new), including the same weights.
    pub kl: T,
}

impl<T: Real> TokenGrad<T> {
    pub fn total(&self) -> T {
        self.surrogate + self.kl
    }
}

/// Per-member, per-token gradient of [`grpo_objective`] with respect to
/// `logp_new`. The objective depends on the parameters only through these
/// log-probabilities, so chaining with the policy's log-prob gradients gives
/// the full parameter gradient.
pub fn objective_logp_grads<T: Real>(
    group: &RolloutGroup<T>,
    config: &GrpoConfig,
) -> Result<Vec<Vec<TokenGrad<T>>>, GrpoError> {
    let terms = per_token_terms(group, config)?;
    let g = T::from_usize(group.len()).expect("group size fits scalar");
    let beta = T::from_config(config.kl_beta);

    let grads = terms
        .iter()
        .map(|member_terms| {
            let weight = (g * T::from_usize(member_terms.len()).expect("len fits scalar")).recip();
            member_terms
                .iter()
                .map(|t| {
                    // d(rho)/d(logp_new) = rho, so the unclipped branch
                    // contributes rho * S; a saturated clip contributes 0.
                    let surrogate =
                        if t.unclipped_branch { t.ratio * t.advantage * weight } else { T::zero() };
                    // d(k3)/d(logp_new) = 1 - r; the objective carries -beta*k3.
                    let kl = -beta * (T::one() - t.ref_ratio) * weight;
                    TokenGrad { surrogate, kl }
                })
                .collect()
        })
        .collect();
    Ok(grads)
}

struct TokenTerm<T> {
    ratio: T,
    ref_ratio: T,
    advantage: T,
    surrogate: T,
    kl: T,
    unclipped_branch: bool,
}

fn per_token_terms<T: Real>(
    group: &RolloutGroup<T>,
    config: &GrpoConfig,
) -> Result<Vec<Vec<TokenTerm<T>>>, GrpoError> {
    group.check()?;
    let eps = T::from_config(config.clip_epsilon);
    let lo = T::one() - eps;
    let hi = T::one() + eps;

    let mut out = Vec::with_capacity(group.len());
    for (member, advantage) in group.members.iter().zip(&group.advantages) {
        let seq = &member.seq;
        let mut terms = Vec::with_capacity(seq.len());
        for t in 0..seq.len() {
            let ratio = (seq.logp_new[t] - seq.logp_old[t]).exp();
            let ref_ratio = (seq.logp_ref[t] - seq.logp_new[t]).exp();
            let surr1 = ratio * *advantage;
            let surr2 = ratio.max(lo).min(hi) * *advantage;
            terms.push(TokenTerm {
                ratio,
                ref_ratio,
                advantage: *advantage,
                surrogate: surr1.min(surr2),
                kl: kl_per_token(seq.logp_new[t], seq.logp_ref[t]),
                unclipped_branch: surr1 <= surr2,
            });
        }
        out.push(terms);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grpo::{GroupMember, TokenSequence};
    use crate::parse::parse_response;
    use crate::types::SamplingParams;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn member(logp_new: Vec<f64>, logp_old: Vec<f64>, logp_ref: Vec<f64>) -> GroupMember<f64> {
        let tokens = (0..logp_new.len() as u32).collect();
        GroupMember {
            text: String::new(),
            params: SamplingParams::default(),
            parsed: parse_response(""),
            seq: TokenSequence { tokens, logp_new, logp_old, logp_ref },
        }
    }

    fn group_with(members: Vec<GroupMember<f64>>, advantages: Vec<f64>) -> RolloutGroup<f64> {
        RolloutGroup { question_id: "q".into(), members, rewards: advantages.clone(), advantages }
    }

    #[test]
    fn advantages_identical_rewards_are_zero() {
        let adv = group_advantages(&[1.0, 1.0, 1.0, 1.0], 1e-8).unwrap();
        assert_eq!(adv, vec![0.0; 4]);
    }

    #[test]
    fn advantages_hand_computed_case() {
        // mean 0.5, population variance 0.75.
        let adv = group_advantages(&[2.0, 0.0, 0.0, 0.0], 1e-8).unwrap();
        let expect = [1.732_050_8, -0.577_350_3, -0.577_350_3, -0.577_350_3];
        for (a, e) in adv.iter().zip(expect) {
            assert!((a - e).abs() < 1e-6, "got {a}, want {e}");
        }
    }

    #[test]
    fn advantages_reject_tiny_groups() {
        assert!(matches!(group_advantages(&[1.0], 1e-8), Err(GrpoError::GroupTooSmall { got: 1 })));
        assert!(matches!(group_advantages::<f64>(&[], 1e-8), Err(GrpoError::GroupTooSmall { got: 0 })));
    }

    #[test]
    fn advantages_work_in_f32() {
        let adv = group_advantages(&[2.0f32, 0.0, 0.0, 0.0], 1e-6).unwrap();
        assert!((adv[0] - 1.732_050_8).abs() < 1e-5);
    }

    #[test]
    fn kl_matches_derived_points() {
        assert_eq!(kl_per_token(0.5, 0.5), 0.0);
        let e = std::f64::consts::E;
        assert!((kl_per_token(-2.0, -1.0) - (e - 2.0)).abs() < 1e-12);
        assert!((kl_per_token(-1.0, -2.0) - (1.0 / e)).abs() < 1e-12);
    }

    #[test]
    fn objective_is_zero_when_all_policies_agree() {
        let logps = vec![-0.7, -1.1, -0.3];
        let members: Vec<_> =
            (0..4).map(|_| member(logps.clone(), logps.clone(), logps.clone())).collect();
        let advantages = group_advantages(&[2.0, 0.0, 0.0, 0.0], 1e-8).unwrap();
        let group = group_with(members, advantages);
        let (obj, diag) = grpo_objective(&group, &GrpoConfig::default()).unwrap();
        assert!(obj.abs() < 1e-12, "objective {obj}");
        assert_eq!(diag.mean_kl, 0.0);
        assert!((diag.mean_ratio - 1.0).abs() < 1e-12);
        assert_eq!(diag.clip_fraction, 0.0);
    }

    #[test]
    fn clipped_positive_advantage_single_member() {
        // All ratios at 1 + 2*eps with S = +1 and beta = 0: every token is
        // clipped at (1 + eps) * 1.
        let config = GrpoConfig { kl_beta: 0.0, ..GrpoConfig::default() };
        let eps = config.clip_epsilon;
        let shift = (1.0 + 2.0 * eps).ln();
        let logp_old = vec![-1.0, -2.0, -0.5];
        let logp_new: Vec<_> = logp_old.iter().map(|l| l + shift).collect();
        let group = group_with(vec![member(logp_new, logp_old.clone(), logp_old)], vec![1.0]);
        let (obj, diag) = grpo_objective(&group, &config).unwrap();
        assert!((obj - (1.0 + eps)).abs() < 1e-12, "objective {obj}");
        assert_eq!(diag.clip_fraction, 1.0);
    }

    #[test]
    fn gradient_is_zero_only_through_saturated_clip() {
        let config = GrpoConfig { kl_beta: 0.0, ..GrpoConfig::default() };
        let eps = config.clip_epsilon;
        // Member 0: S > 0 with rho = 1 + 2eps (clipped); member 1: S < 0 with
        // rho = 1 - 0.9*eps-ish inside the band (flows).
        let up = (1.0 + 2.0 * eps).ln();
        let m0 = member(vec![-1.0 + up, -1.5 + up], vec![-1.0, -1.5], vec![-1.0, -1.5]);
        let m1 = member(vec![-1.05, -1.55], vec![-1.0, -1.5], vec![-1.0, -1.5]);
        let group = group_with(vec![m0, m1], vec![1.0, -1.0]);
        let grads = objective_logp_grads(&group, &config).unwrap();
        assert_eq!(grads[0][0].surrogate, 0.0);
        assert_eq!(grads[0][1].surrogate, 0.0);
        assert!(grads[1][0].surrogate != 0.0);
    }

    #[test]
    fn unclipped_gradient_matches_closed_form() {
        // Inside the band with beta = 0 the per-token gradient is
        // rho * S / (G * |o|); dividing by rho gives d obj/d rho = S/(G*|o|).
        let config = GrpoConfig { kl_beta: 0.0, ..GrpoConfig::default() };
        let m0 = member(vec![-1.0, -1.5, -0.4], vec![-1.1, -1.4, -0.4], vec![-1.0, -1.5, -0.4]);
        let m1 = member(vec![-0.9, -1.2], vec![-0.9, -1.2], vec![-0.9, -1.2]);
        let group = group_with(vec![m0, m1], vec![1.0, -1.0]);
        let grads = objective_logp_grads(&group, &config).unwrap();
        let rho00 = (-1.0f64 + 1.1).exp();
        assert!((grads[0][0].surrogate - rho00 * 1.0 / (2.0 * 3.0)).abs() < 1e-15);
        assert!((grads[1][0].surrogate - 1.0 * -1.0 / (2.0 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn logp_grads_match_finite_differences_elementwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let config = GrpoConfig { kl_beta: 0.07, ..GrpoConfig::default() };
        for _ in 0..50 {
            let g = rng.gen_range(2..5);
            let len = rng.gen_range(1..5);
            let members: Vec<_> = (0..g)
                .map(|_| {
                    let logp_new: Vec<f64> = (0..len).map(|_| -rng.gen_range(0.05..3.0)).collect();
                    let logp_old: Vec<f64> =
                        logp_new.iter().map(|l| l + rng.gen_range(-0.4..0.4)).collect();
                    let logp_ref: Vec<f64> =
                        logp_new.iter().map(|l| l + rng.gen_range(-0.4..0.4)).collect();
                    member(logp_new, logp_old, logp_ref)
                })
                .collect();
            let rewards: Vec<f64> = (0..g).map(|_| rng.gen_range(0.0..2.0)).collect();
            let advantages = group_advantages(&rewards, 1e-8).unwrap();
            let group = group_with(members, advantages);
            let grads = objective_logp_grads(&group, &config).unwrap();
            let h = 1e-6;
            for i in 0..g {
                for t in 0..len {
                    let ratio: f64 =
                        (group.members[i].seq.logp_new[t] - group.members[i].seq.logp_old[t]).exp();
                    // Skip tokens within finite-difference reach of the kink.
                    if (ratio - (1.0 - config.clip_epsilon)).abs() < 1e-3
                        || (ratio - (1.0 + config.clip_epsilon)).abs() < 1e-3
                    {
                        continue;
                    }
                    let mut plus = group.clone();
                    plus.members[i].seq.logp_new[t] += h;
                    let mut minus = group.clone();
                    minus.members[i].seq.logp_new[t] -= h;
                    let (op, _) = grpo_objective(&plus, &config).unwrap();
                    let (om, _) = grpo_objective(&minus, &config).unwrap();
                    let fd = (op - om) / (2.0 * h);
                    let an = grads[i][t].total();
                    assert!(
                        (fd - an).abs() <= 1e-6 * an.abs().max(1.0),
                        "member {i} token {t}: fd {fd} vs analytic {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let mut m = member(vec![-1.0, -1.5], vec![-1.0, -1.5], vec![-1.0, -1.5]);
        m.seq.logp_ref.pop();
        let group = group_with(vec![m], vec![1.0]);
        assert!(matches!(
            grpo_objective(&group, &GrpoConfig::default()),
            Err(GrpoError::LengthMismatch { member: 0, .. })
        ));
    }

    #[test]
    fn empty_member_is_an_error() {
        let group = group_with(vec![member(vec![], vec![], vec![])], vec![1.0]);
        assert!(matches!(
            grpo_objective(&group, &GrpoConfig::default()),
            Err(GrpoError::EmptyMember { member: 0 })
        ));
    }

    proptest! {
        #[test]
        fn advantages_are_normalized(rewards in proptest::collection::vec(0.0f64..4.0, 2..16)) {
            let adv = group_advantages(&rewards, 1e-8).unwrap();
            let n = adv.len() as f64;
            let mean = adv.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-12);
            let degenerate = adv.iter().all(|a| *a == 0.0);
            if !degenerate {
                let std = (adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
                prop_assert!((std - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn kl_is_nonnegative_and_zero_only_at_equality(
            a in -20.0f64..0.0,
            b in -20.0f64..0.0,
        ) {
            let kl = kl_per_token(a, b);
            prop_assert!(kl >= 0.0);
            if (a - b).abs() > 1e-6 {
                prop_assert!(kl > 0.0);
            }
            prop_assert_eq!(kl_per_token(a, a), 0.0);
        }
    }
}
