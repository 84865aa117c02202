//! Group-relative policy optimization: advantage normalization, the clipped
//! per-token surrogate with a KL penalty, and the training loop.

mod math;
mod trainer;

pub use math::{grpo_objective, group_advantages, kl_per_token, objective_logp_grads, GrpoDiagnostics, TokenGrad};
pub use trainer::{GrpoTrainer, StepMetrics, TrainingReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;
use crate::types::{ParsedResponse, SamplingParams};

#[derive(Debug, Error)]
pub enum GrpoError {
    #[error("group must have at least 2 members, got {got}")]
    GroupTooSmall { got: usize },
    #[error("member {member}: {detail}")]
    LengthMismatch { member: usize, detail: String },
    #[error("member {member} has an empty token sequence")]
    EmptyMember { member: usize },
    #[error("group has {members} members but {values} {what}")]
    CountMismatch { members: usize, values: usize, what: &'static str },
}

/// Policy-side failure during sampling or scoring.
#[derive(Debug, Error)]
#[error("{message}")]
pub struct PolicyError {
    pub message: String,
}

impl PolicyError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { message: message.into() }
    }
}

/// One sampled sequence with its log-probabilities under the three policies
/// the objective compares: current, sampling-time, and frozen reference.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence<T> {
    pub tokens: Vec<u32>,
    pub logp_new: Vec<T>,
    pub logp_old: Vec<T>,
    pub logp_ref: Vec<T>,
}

impl<T: Real> TokenSequence<T> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn check(&self, member: usize) -> Result<(), GrpoError> {
        if self.tokens.is_empty() {
            return Err(GrpoError::EmptyMember { member });
        }
        for (name, list) in
            [("logp_new", &self.logp_new), ("logp_old", &self.logp_old), ("logp_ref", &self.logp_ref)]
        {
            if list.len() != self.tokens.len() {
                return Err(GrpoError::LengthMismatch {
                    member,
                    detail: format!("{name} has {} entries for {} tokens", list.len(), self.tokens.len()),
                });
            }
        }
        Ok(())
    }
}

/// One generated candidate: raw text, its sampling parameters, the parsed
/// answer, and the token-level log-probability record.
#[derive(Debug, Clone)]
pub struct GroupMember<T> {
    pub text: String,
    pub params: SamplingParams,
    pub parsed: ParsedResponse,
    pub seq: TokenSequence<T>,
}

/// The G candidates for one question plus their rewards and normalized
/// advantages.
///
/// Invariant: `members`, `rewards` and `advantages` have equal length G ≥ 2
/// and `advantages == group_advantages(rewards)`. [`RolloutGroup::from_rewards`]
/// upholds it; the fields stay public for tests that construct boundary
/// cases directly.
#[derive(Debug, Clone)]
pub struct RolloutGroup<T> {
    pub question_id: String,
    pub members: Vec<GroupMember<T>>,
    pub rewards: Vec<T>,
    pub advantages: Vec<T>,
}

impl<T: Real> RolloutGroup<T> {
    pub fn from_rewards(
        question_id: impl Into<String>,
        members: Vec<GroupMember<T>>,
        rewards: Vec<T>,
        std_floor: T,
    ) -> Result<Self, GrpoError> {
        if members.len() != rewards.len() {
            return Err(GrpoError::CountMismatch {
                members: members.len(),
                values: rewards.len(),
                what: "rewards",
            });
        }
        let advantages = group_advantages(&rewards, std_floor)?;
        Ok(Self { question_id: question_id.into(), members, rewards, advantages })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// True when every reward is identical (below the std floor): such a
    /// group carries no learning signal and is skipped by the trainer.
    pub fn is_degenerate(&self) -> bool {
        self.advantages.iter().all(|a| *a == T::zero())
    }

    fn check(&self) -> Result<(), GrpoError> {
        for (i, m) in self.members.iter().enumerate() {
            m.seq.check(i)?;
        }
        if self.advantages.len() != self.members.len() {
            return Err(GrpoError::CountMismatch {
                members: self.members.len(),
                values: self.advantages.len(),
                what: "advantages",
            });
        }
        Ok(())
    }
}

/// Configuration for the GRPO optimizer.
///
/// `learning_rate` defaults to the toy-policy scale; 1e-6 is the documented
/// value for full-size transformer fine-tuning configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_epsilon: f64,
    pub kl_beta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub std_floor: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            clip_epsilon: 0.2,
            kl_beta: 0.04,
            learning_rate: 1e-2,
            batch_size: 16,
            epochs: 1,
            std_floor: 1e-8,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        let mut problems = Vec::new();
        if self.group_size < 2 {
            problems.push(format!("group_size must be >= 2, got {}", self.group_size));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            problems.push(format!("clip_epsilon must be in (0, 1), got {}", self.clip_epsilon));
        }
        if self.kl_beta < 0.0 {
            problems.push(format!("kl_beta must be nonnegative, got {}", self.kl_beta));
        }
        if !(self.learning_rate > 0.0) {
            problems.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".into());
        }
        if self.epochs == 0 {
            problems.push("epochs must be positive".into());
        }
        if !(self.std_floor > 0.0) {
            problems.push(format!("std_floor must be positive, got {}", self.std_floor));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join("; "))
        }
    }
}

/// A sequence sampled from a policy: rendered text, token ids, and the
/// log-probability of each token under the distribution it was scored with.
#[derive(Debug, Clone)]
pub struct Generation<T> {
    pub text: String,
    pub tokens: Vec<u32>,
    pub logps: Vec<T>,
}

/// Anything that can sample candidate responses and re-score token
/// sequences.
///
/// Contract: `logprobs(ctx, g.tokens, params)` under the policy that
/// produced `g` reproduces `g.logps` exactly.
pub trait Policy<T: Real> {
    /// Whatever the policy conditions on (for the toy policy, the evidence
    /// feature vector).
    type Context;

    fn sample(&self, ctx: &Self::Context, params: &SamplingParams, seed: u64) -> Result<Generation<T>, PolicyError>;

    fn logprobs(&self, ctx: &Self::Context, tokens: &[u32], params: &SamplingParams) -> Result<Vec<T>, PolicyError>;
}

/// A policy with a flat real parameter vector and closed-form
/// log-probability gradients.
pub trait TrainablePolicy<T: Real>: Policy<T> + Clone {
    fn parameters(&self) -> &[T];

    fn set_parameters(&mut self, params: &[T]);

    /// Adds `sum_t coeffs[t] * d logp(tokens[t]) / d theta` into `grad`.
    fn accumulate_logprob_grad(
        &self,
        ctx: &Self::Context,
        tokens: &[u32],
        params: &SamplingParams,
        coeffs: &[T],
        grad: &mut [T],
    ) -> Result<(), PolicyError>;

    /// Frozen copy usable as the sampling or reference policy.
    fn snapshot(&self) -> Self {
        self.clone()
    }
}
