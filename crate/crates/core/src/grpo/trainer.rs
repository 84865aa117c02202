//! The training loop: group rollouts, reward scoring, one Adam ascent step
//! per batch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::parse::parse_response;
use crate::rewards::{accuracy_reward, format_reward, total_reward, RewardWeights};
use crate::seed::{derive_seed, group_member_seed};
use crate::tts::SamplingSchedule;
use crate::types::{McqaSample, SamplingParams};

use super::math::{grpo_objective, objective_logp_grads};
use super::{GroupMember, GrpoConfig, PolicyError, RolloutGroup, TokenSequence, TrainablePolicy};

/// Metrics for one optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub groups: usize,
    /// Groups with at least two distinct reward values; only these produce
    /// gradient.
    pub informative_groups: usize,
    pub degenerate_groups: usize,
    /// Groups dropped because a generation or context build failed.
    pub failed_groups: usize,
    pub mean_reward: f64,
    pub mean_accuracy_reward: f64,
    pub mean_format_reward: f64,
    pub objective: f64,
    pub grad_norm: f64,
    pub mean_kl: f64,
    pub clip_fraction: f64,
}

/// Per-step metric series plus the final parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub config: GrpoConfig,
    pub steps: Vec<StepMetrics>,
    pub final_parameters: Vec<f64>,
}

/// Adam moments; ascent direction since GRPO maximizes the objective.
#[derive(Debug, Clone)]
struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(dim: usize) -> Self {
        Self { m: vec![T::zero(); dim], v: vec![T::zero(); dim], t: 0 }
    }

    fn ascend(&mut self, params: &mut [T], grad: &[T], lr: T) {
        self.t += 1;
        let b1 = T::from_config(Self::BETA1);
        let b2 = T::from_config(Self::BETA2);
        let eps = T::from_config(Self::EPS);
        let corr1 = T::one() - b1.powi(self.t);
        let corr2 = T::one() - b2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(&mut self.v)) {
            *m = b1 * *m + (T::one() - b1) * *g;
            *v = b2 * *v + (T::one() - b2) * *g * *g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p = *p + lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// GRPO trainer over any [`TrainablePolicy`].
///
/// The reference policy is frozen at construction for the whole run; the
/// sampling policy is refreshed every step with exactly one gradient update
/// per batch, so updates are fully on-policy (ratios are 1 at update time;
/// clipping is retained for configuration generality).
pub struct GrpoTrainer<T: Real, P: TrainablePolicy<T>> {
    config: GrpoConfig,
    weights: RewardWeights,
    /// Rollout diversity: member i of each group samples with schedule(i).
    rollout_schedule: SamplingSchedule,
    max_tokens: usize,
    stop_sentinel: String,
    ref_policy: P,
    adam: Adam<T>,
    global_step: usize,
}

impl<T: Real, P: TrainablePolicy<T>> GrpoTrainer<T, P> {
    pub fn new(policy: &P, config: GrpoConfig, weights: RewardWeights) -> Self {
        let dim = policy.parameters().len();
        Self {
            config,
            weights,
            rollout_schedule: SamplingSchedule::default(),
            max_tokens: SamplingParams::default().max_tokens,
            stop_sentinel: SamplingParams::default().stop_sentinel,
            ref_policy: policy.snapshot(),
            adam: Adam::new(dim),
            global_step: 0,
        }
    }

    pub fn config(&self) -> &GrpoConfig {
        &self.config
    }

    pub fn reference_policy(&self) -> &P {
        &self.ref_policy
    }

    fn member_params(&self, i: usize) -> SamplingParams {
        let (temperature, top_p) = self.rollout_schedule.at(i);
        SamplingParams {
            temperature,
            top_p,
            max_tokens: self.max_tokens,
            stop_sentinel: self.stop_sentinel.clone(),
        }
    }

    /// One optimizer step over a batch of samples.
    ///
    /// Per sample: snapshot the sampling policy, draw G generations with
    /// varied sampling settings, score them, normalize advantages, and — for
    /// groups with reward spread — accumulate the objective gradient. One
    /// Adam ascent is applied for the whole batch.
    pub fn train_step<F>(
        &mut self,
        policy: &mut P,
        batch: &[McqaSample],
        ctx_builder: &F,
        seed: u64,
    ) -> StepMetrics
    where
        F: Fn(&McqaSample) -> Result<P::Context, PolicyError>,
    {
        let old_policy = policy.snapshot();
        let std_floor = T::from_config(self.config.std_floor);
        let mut grad = vec![T::zero(); policy.parameters().len()];

        let mut informative = 0usize;
        let mut degenerate = 0usize;
        let mut failed = 0usize;
        let mut reward_sum = 0.0;
        let mut acc_sum = 0.0;
        let mut fmt_sum = 0.0;
        let mut scored_members = 0usize;
        let mut objective_sum = T::zero();
        let mut kl_sum = T::zero();
        let mut clip_sum = T::zero();

        for sample in batch {
            let ctx = match ctx_builder(sample) {
                Ok(ctx) => ctx,
                Err(e) => {
                    log::warn!("skipping group `{}`: {e}", sample.id);
                    failed += 1;
                    continue;
                }
            };

            let mut members = Vec::with_capacity(self.config.group_size);
            let mut rewards = Vec::with_capacity(self.config.group_size);
            let mut group_failed = false;
            for i in 0..self.config.group_size {
                let params = self.member_params(i);
                let member_seed = group_member_seed(seed, &sample.id, i);
                let generation = match old_policy.sample(&ctx, &params, member_seed) {
                    Ok(g) => g,
                    Err(e) => {
                        log::warn!("generation failed for `{}` member {i}: {e}", sample.id);
                        group_failed = true;
                        break;
                    }
                };
                let parsed = parse_response(&generation.text);
                rewards.push(total_reward(&parsed, sample.gt_answer, &self.weights));
                let logp_ref = match self.ref_policy.logprobs(&ctx, &generation.tokens, &params) {
                    Ok(l) => l,
                    Err(e) => {
                        log::warn!("reference scoring failed for `{}`: {e}", sample.id);
                        group_failed = true;
                        break;
                    }
                };
                // One update per batch keeps sampling fully on-policy, so
                // the recorded log-probs are also the current policy's.
                let seq = TokenSequence {
                    tokens: generation.tokens,
                    logp_new: generation.logps.clone(),
                    logp_old: generation.logps,
                    logp_ref,
                };
                members.push(GroupMember { text: generation.text, params, parsed, seq });
            }
            if group_failed {
                failed += 1;
                continue;
            }

            for (member, reward) in members.iter().zip(&rewards) {
                reward_sum += reward;
                acc_sum += accuracy_reward(&member.parsed, sample.gt_answer);
                fmt_sum += format_reward(&member.parsed);
                scored_members += 1;
            }

            let reward_t: Vec<T> = rewards.iter().map(|r| T::from_config(*r)).collect();
            let group = match RolloutGroup::from_rewards(sample.id.clone(), members, reward_t, std_floor) {
                Ok(g) => g,
                Err(e) => {
                    log::warn!("group construction failed for `{}`: {e}", sample.id);
                    failed += 1;
                    continue;
                }
            };
            if group.is_degenerate() {
                degenerate += 1;
                continue;
            }

            let (objective, diag) = match grpo_objective(&group, &self.config) {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("objective failed for `{}`: {e}", sample.id);
                    failed += 1;
                    continue;
                }
            };
            let grads = match objective_logp_grads(&group, &self.config) {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("gradient failed for `{}`: {e}", sample.id);
                    failed += 1;
                    continue;
                }
            };
            for (member, token_grads) in group.members.iter().zip(&grads) {
                let coeffs: Vec<T> = token_grads.iter().map(|g| g.total()).collect();
                if let Err(e) = policy.accumulate_logprob_grad(
                    &ctx,
                    &member.seq.tokens,
                    &member.params,
                    &coeffs,
                    &mut grad,
                ) {
                    log::warn!("parameter gradient failed for `{}`: {e}", sample.id);
                }
            }
            informative += 1;
            objective_sum = objective_sum + objective;
            kl_sum = kl_sum + diag.mean_kl;
            clip_sum = clip_sum + diag.clip_fraction;
        }

        // The batch objective averages over the groups that produced
        // gradient; scale before the ascent so step size does not depend on
        // how many groups happened to be degenerate.
        let mut grad_norm = T::zero();
        if informative > 0 {
            let scale = T::from_usize(informative).expect("count fits scalar").recip();
            for g in &mut grad {
                *g = *g * scale;
                grad_norm = grad_norm + *g * *g;
            }
            grad_norm = grad_norm.sqrt();
            let mut params = policy.parameters().to_vec();
            self.adam.ascend(&mut params, &grad, T::from_config(self.config.learning_rate));
            policy.set_parameters(&params);
        }

        self.global_step += 1;
        let denom = |n: usize| if n == 0 { 1.0 } else { n as f64 };
        StepMetrics {
            step: self.global_step,
            groups: batch.len(),
            informative_groups: informative,
            degenerate_groups: degenerate,
            failed_groups: failed,
            mean_reward: reward_sum / denom(scored_members),
            mean_accuracy_reward: acc_sum / denom(scored_members),
            mean_format_reward: fmt_sum / denom(scored_members),
            objective: objective_sum.to_f64().unwrap_or(f64::NAN) / denom(informative),
            grad_norm: grad_norm.to_f64().unwrap_or(f64::NAN),
            mean_kl: kl_sum.to_f64().unwrap_or(f64::NAN) / denom(informative),
            clip_fraction: clip_sum.to_f64().unwrap_or(f64::NAN) / denom(informative),
        }
    }

    /// Runs `epochs` passes of shuffled batches over the dataset.
    pub fn train<F>(
        &mut self,
        policy: &mut P,
        dataset: &[McqaSample],
        ctx_builder: &F,
        seed: u64,
    ) -> TrainingReport
    where
        F: Fn(&McqaSample) -> Result<P::Context, PolicyError>,
    {
        let mut steps = Vec::new();
        let mut step_index = 0u64;
        for epoch in 0..self.config.epochs {
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                &[b"epoch", &(epoch as u64).to_le_bytes()],
            ));
            order.shuffle(&mut rng);
            for chunk in order.chunks(self.config.batch_size) {
                let batch: Vec<McqaSample> = chunk.iter().map(|&i| dataset[i].clone()).collect();
                let step_seed = derive_seed(seed, &[b"step", &step_index.to_le_bytes()]);
                steps.push(self.train_step(policy, &batch, ctx_builder, step_seed));
                step_index += 1;
            }
        }
        TrainingReport {
            config: self.config.clone(),
            steps,
            final_parameters: policy
                .parameters()
                .iter()
                .map(|p| p.to_f64().expect("finite parameter"))
                .collect(),
        }
    }
}
