//! A tiny trainable autoregressive policy over evidence features.
//!
//! The policy maps a per-option evidence-count feature vector to option
//! logits through a linear-softmax head. A second head emits a fixed-length
//! think-phase token sequence from a small vocabulary, so sequences have
//! more than one token and the per-token machinery (ratios, KL, length
//! normalization) is genuinely exercised during training.
//!
//! Sampling applies temperature and nucleus truncation exactly as a real
//! decoder would: logits are divided by the temperature, then renormalized
//! over the smallest prefix with cumulative mass >= top_p. Scoring (the
//! recorded and re-computed log-probabilities) uses the tempered softmax
//! over the full support, mirroring how RLHF stacks score sampled tokens;
//! truncation only shapes the draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::grpo::{Generation, GrpoConfig, Policy, PolicyError, TrainablePolicy};
use crate::num::Real;
use crate::parse::render_response;
use crate::tts::{Inference, InferenceError};
use crate::types::{McqaSample, SamplingParams, VideoRef};

use super::SyntheticVideo;

/// Token ids at or above this are answer letters; below are think tokens.
pub const ANSWER_TOKEN_BASE: u32 = 1000;

const THINK_WORDS: [&str; 16] = [
    "scan", "frames", "evidence", "count", "signal", "recall", "motif", "trace", "weigh", "match",
    "spread", "cluster", "window", "sparse", "dense", "vote",
];

/// Evidence-count feature vector: per-option counts over the observed
/// frames, normalized by the number of frames observed, plus a trailing
/// bias of 1. The argmax-optimal decision is therefore invariant to the
/// frame budget, which is what lets one policy serve every budget.
pub fn evidence_features<T: Real>(video: &SyntheticVideo, frame_indices: &[usize], n_options: usize) -> Vec<T> {
    let counts = video.evidence_counts(frame_indices, n_options);
    let observed = frame_indices.len();
    let mut features = Vec::with_capacity(n_options + 1);
    if observed == 0 {
        features.resize(n_options, T::zero());
    } else {
        let denom = T::from_usize(observed).expect("frame count fits scalar");
        features.extend(counts.iter().map(|&c| T::from_usize(c).expect("count fits scalar") / denom));
    }
    features.push(T::one());
    features
}

/// Linear-softmax policy: an answer head over the option letters and a
/// think head over a small summary vocabulary, both reading the same
/// feature vector. Parameters are one flat vector, answer rows first.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy<T> {
    n_options: usize,
    think_vocab: usize,
    think_len: usize,
    params: Vec<T>,
}

impl<T: Real> ToyPolicy<T> {
    pub const DEFAULT_THINK_VOCAB: usize = 16;
    pub const DEFAULT_THINK_LEN: usize = 8;

    /// All-zero parameters: uniform over options and think tokens.
    pub fn zeros(n_options: usize) -> Self {
        Self::with_dims(n_options, Self::DEFAULT_THINK_VOCAB, Self::DEFAULT_THINK_LEN)
    }

    pub fn with_dims(n_options: usize, think_vocab: usize, think_len: usize) -> Self {
        assert!((2..=26).contains(&n_options), "n_options must be in 2..=26");
        assert!(think_vocab >= 1 && think_vocab <= THINK_WORDS.len());
        let d = n_options + 1;
        Self { n_options, think_vocab, think_len, params: vec![T::zero(); (n_options + think_vocab) * d] }
    }

    /// Small random initialization, deterministic per seed.
    pub fn random(n_options: usize, scale: f64, seed: u64) -> Self {
        let mut policy = Self::zeros(n_options);
        let normal = Normal::new(0.0, scale).expect("finite scale");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut policy.params {
            *p = T::from_config(normal.sample(&mut rng));
        }
        policy
    }

    pub fn n_options(&self) -> usize {
        self.n_options
    }

    pub fn think_len(&self) -> usize {
        self.think_len
    }

    pub fn feature_dim(&self) -> usize {
        self.n_options + 1
    }

    fn answer_row(&self, row: usize) -> &[T] {
        let d = self.feature_dim();
        &self.params[row * d..(row + 1) * d]
    }

    fn think_row(&self, row: usize) -> &[T] {
        let d = self.feature_dim();
        let base = self.n_options * d;
        &self.params[base + row * d..base + (row + 1) * d]
    }

    fn answer_logits(&self, features: &[T]) -> Vec<T> {
        (0..self.n_options).map(|a| dot(self.answer_row(a), features)).collect()
    }

    fn think_logits(&self, features: &[T]) -> Vec<T> {
        (0..self.think_vocab).map(|v| dot(self.think_row(v), features)).collect()
    }

    fn check_features(&self, features: &[T]) -> Result<(), PolicyError> {
        if features.len() != self.feature_dim() {
            return Err(PolicyError::new(format!(
                "expected {} features, got {}",
                self.feature_dim(),
                features.len()
            )));
        }
        Ok(())
    }

    /// Head and within-head index for a token id.
    fn token_head(&self, token: u32) -> Result<(Head, usize), PolicyError> {
        if token >= ANSWER_TOKEN_BASE {
            let idx = (token - ANSWER_TOKEN_BASE) as usize;
            if idx < self.n_options {
                return Ok((Head::Answer, idx));
            }
        } else if (token as usize) < self.think_vocab {
            return Ok((Head::Think, token as usize));
        }
        Err(PolicyError::new(format!("token id {token} outside both heads")))
    }

    fn head_logits(&self, head: Head, features: &[T]) -> Vec<T> {
        match head {
            Head::Answer => self.answer_logits(features),
            Head::Think => self.think_logits(features),
        }
    }

    /// Sampling distribution for one head under the given parameters.
    pub fn head_probs(&self, head_is_answer: bool, features: &[T], params: &SamplingParams) -> Vec<T> {
        let head = if head_is_answer { Head::Answer } else { Head::Think };
        let logps = log_softmax_tempered(&self.head_logits(head, features), params.temperature);
        let probs: Vec<T> = logps.iter().map(|l| l.exp()).collect();
        top_p_renormalize(&probs, params.top_p)
    }
}

#[derive(Clone, Copy)]
enum Head {
    Answer,
    Think,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// Numerically stable tempered log-softmax over the full support.
fn log_softmax_tempered<T: Real>(logits: &[T], temperature: f64) -> Vec<T> {
    let tau = T::from_config(temperature);
    let scaled: Vec<T> = logits.iter().map(|l| *l / tau).collect();
    let max = scaled.iter().copied().fold(T::neg_infinity(), T::max);
    let log_z = scaled.iter().map(|z| (*z - max).exp()).sum::<T>().ln() + max;
    scaled.iter().map(|z| *z - log_z).collect()
}

/// Zeroes everything outside the smallest prefix (by descending
/// probability, index ascending on ties) with cumulative mass >= top_p and
/// renormalizes.
fn top_p_renormalize<T: Real>(probs: &[T], top_p: f64) -> Vec<T> {
    let p = T::from_config(top_p);
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut kept = Vec::new();
    let mut mass = T::zero();
    for idx in order {
        kept.push(idx);
        mass = mass + probs[idx];
        if mass >= p {
            break;
        }
    }
    let mut out = vec![T::zero(); probs.len()];
    for idx in kept {
        out[idx] = probs[idx] / mass;
    }
    out
}

fn draw<T: Real>(probs: &[T], rng: &mut ChaCha8Rng) -> usize {
    let u = T::from_config(rng.gen::<f64>());
    let mut cum = T::zero();
    let mut last_nonzero = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > T::zero() {
            last_nonzero = i;
            cum = cum + *p;
            if u < cum {
                return i;
            }
        }
    }
    last_nonzero
}

impl<T: Real> Policy<T> for ToyPolicy<T> {
    type Context = Vec<T>;

    fn sample(&self, ctx: &Self::Context, params: &SamplingParams, seed: u64) -> Result<Generation<T>, PolicyError> {
        self.check_features(ctx)?;
        params.validate().map_err(PolicyError::new)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tokens = Vec::new();
        let mut logps = Vec::new();
        let mut words = Vec::new();

        let think_logps = log_softmax_tempered(&self.think_logits(ctx), params.temperature);
        let think_probs = top_p_renormalize(&think_logps.iter().map(|l| l.exp()).collect::<Vec<_>>(), params.top_p);
        let budget = params.max_tokens;
        let think_emit = self.think_len.min(budget.saturating_sub(1));
        for _ in 0..think_emit {
            let idx = draw(&think_probs, &mut rng);
            tokens.push(idx as u32);
            logps.push(think_logps[idx]);
            words.push(THINK_WORDS[idx]);
        }

        let text = if tokens.len() < budget {
            let answer_logps = log_softmax_tempered(&self.answer_logits(ctx), params.temperature);
            let answer_probs =
                top_p_renormalize(&answer_logps.iter().map(|l| l.exp()).collect::<Vec<_>>(), params.top_p);
            let idx = draw(&answer_probs, &mut rng);
            tokens.push(ANSWER_TOKEN_BASE + idx as u32);
            logps.push(answer_logps[idx]);
            let letter = (b'A' + idx as u8) as char;
            render_response(&words.join(" "), letter)
        } else {
            // Token cap hit before the answer: emit the truncated prefix.
            format!("<think>{}", words.join(" "))
        };

        Ok(Generation { text, tokens, logps })
    }

    fn logprobs(&self, ctx: &Self::Context, tokens: &[u32], params: &SamplingParams) -> Result<Vec<T>, PolicyError> {
        self.check_features(ctx)?;
        let mut out = Vec::with_capacity(tokens.len());
        for &token in tokens {
            let (head, idx) = self.token_head(token)?;
            let logps = log_softmax_tempered(&self.head_logits(head, ctx), params.temperature);
            out.push(logps[idx]);
        }
        Ok(out)
    }
}

impl<T: Real> TrainablePolicy<T> for ToyPolicy<T> {
    fn parameters(&self) -> &[T] {
        &self.params
    }

    fn set_parameters(&mut self, params: &[T]) {
        assert_eq!(params.len(), self.params.len(), "parameter count mismatch");
        self.params.copy_from_slice(params);
    }

    fn accumulate_logprob_grad(
        &self,
        ctx: &Self::Context,
        tokens: &[u32],
        params: &SamplingParams,
        coeffs: &[T],
        grad: &mut [T],
    ) -> Result<(), PolicyError> {
        self.check_features(ctx)?;
        if coeffs.len() != tokens.len() {
            return Err(PolicyError::new("one coefficient per token required"));
        }
        if grad.len() != self.params.len() {
            return Err(PolicyError::new("gradient buffer size mismatch"));
        }
        let d = self.feature_dim();
        let tau = T::from_config(params.temperature);
        for (&token, &coeff) in tokens.iter().zip(coeffs) {
            let (head, idx) = self.token_head(token)?;
            let logps = log_softmax_tempered(&self.head_logits(head, ctx), params.temperature);
            let (rows, base) = match head {
                Head::Answer => (self.n_options, 0),
                Head::Think => (self.think_vocab, self.n_options * d),
            };
            // d logp_idx / d W[a][j] = (delta(a = idx) - softmax_a) * f_j / tau
            for a in 0..rows {
                let indicator = if a == idx { T::one() } else { T::zero() };
                let factor = coeff * (indicator - logps[a].exp()) / tau;
                for (j, f) in ctx.iter().enumerate() {
                    grad[base + a * d + j] = grad[base + a * d + j] + factor * *f;
                }
            }
        }
        Ok(())
    }
}

/// Serializable parameter blob for the toy policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointData {
    pub version: u32,
    pub kind: String,
    pub n_options: usize,
    pub think_vocab: usize,
    pub think_len: usize,
    pub params: Vec<f64>,
    /// Training configuration that produced these parameters, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grpo: Option<GrpoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CheckpointData {
    pub const KIND: &'static str = "toy-linear-softmax";

    pub fn from_policy<T: Real>(policy: &ToyPolicy<T>) -> Self {
        Self {
            version: 1,
            kind: Self::KIND.to_string(),
            n_options: policy.n_options,
            think_vocab: policy.think_vocab,
            think_len: policy.think_len,
            params: policy.params.iter().map(|p| p.to_f64().expect("finite parameter")).collect(),
            grpo: None,
            seed: None,
        }
    }

    pub fn into_policy<T: Real>(&self) -> Result<ToyPolicy<T>, PolicyError> {
        if self.kind != Self::KIND {
            return Err(PolicyError::new(format!("unsupported checkpoint kind `{}`", self.kind)));
        }
        if self.version != 1 {
            return Err(PolicyError::new(format!("unsupported checkpoint version {}", self.version)));
        }
        let mut policy = ToyPolicy::with_dims(self.n_options, self.think_vocab, self.think_len);
        if self.params.len() != policy.params.len() {
            return Err(PolicyError::new(format!(
                "checkpoint has {} parameters, policy needs {}",
                self.params.len(),
                policy.params.len()
            )));
        }
        policy.params = self.params.iter().map(|p| T::from_config(*p)).collect();
        Ok(policy)
    }
}

/// Serves a [`ToyPolicy`] through the [`Inference`] interface by building
/// evidence features from the sample's synthetic video.
pub struct ToyInference<'a, T> {
    policy: &'a ToyPolicy<T>,
}

impl<'a, T> ToyInference<'a, T> {
    pub fn new(policy: &'a ToyPolicy<T>) -> Self {
        Self { policy }
    }
}

impl<T: Real> Inference for ToyInference<'_, T> {
    fn generate(
        &self,
        sample: &McqaSample,
        frame_indices: &[usize],
        params: &SamplingParams,
        seed: u64,
    ) -> Result<String, InferenceError> {
        let VideoRef::Synthetic(video) = &sample.video else {
            return Err(InferenceError::new(format!(
                "toy policy cannot serve external video for sample `{}`",
                sample.id
            )));
        };
        if sample.n_options() != self.policy.n_options {
            return Err(InferenceError::new(format!(
                "sample `{}` has {} options, policy expects {}",
                sample.id,
                sample.n_options(),
                self.policy.n_options
            )));
        }
        let features = evidence_features::<T>(video, frame_indices, self.policy.n_options);
        let generation =
            self.policy.sample(&features, params, seed).map_err(|e| InferenceError::new(e.to_string()))?;
        Ok(generation.text)
    }
}
