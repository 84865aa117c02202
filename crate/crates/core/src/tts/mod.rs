//! Sparse-to-dense test-time scaling: sample `m` answers at a small frame
//! budget, return on unanimity, otherwise double the budget and retry,
//! falling back to majority vote at the cap.

mod trace;

pub use trace::{
    read_traces, read_traces_from, save_traces, write_traces, Decision, GenerationRecord, RoundRecord,
    TraceIoError, TtsTrace,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{frame_indices_with, FrameSelection};
use crate::parse::parse_response;
use crate::seed::tts_member_seed;
use crate::types::{McqaSample, SamplingParams};

/// Transport or generation failure reported by an inference backend.
#[derive(Debug, Error)]
#[error("{message}")]
pub struct InferenceError {
    pub message: String,
}

impl InferenceError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum TtsError {
    #[error("inference failed for `{sample_id}` at budget {budget}: {source}")]
    Inference {
        sample_id: String,
        budget: usize,
        #[source]
        source: InferenceError,
        /// Rounds completed before the failure.
        partial: Vec<RoundRecord>,
    },
    #[error("majority vote over all-absent answers for `{sample_id}`")]
    Undecidable { sample_id: String },
    #[error("invalid TTS config: {0}")]
    Config(String),
}

/// One completion for a sample at a given frame budget.
///
/// Implementations must honor the sampling parameters verbatim; all
/// stochasticity comes from `seed`, so the controller itself is
/// deterministic given the sequence of generations.
pub trait Inference: Send + Sync {
    fn generate(
        &self,
        sample: &McqaSample,
        frame_indices: &[usize],
        params: &SamplingParams,
        seed: u64,
    ) -> Result<String, InferenceError>;
}

/// Closures double as inference backends; tests script them directly.
impl<F> Inference for F
where
    F: Fn(&McqaSample, &[usize], &SamplingParams, u64) -> Result<String, InferenceError> + Send + Sync,
{
    fn generate(
        &self,
        sample: &McqaSample,
        frame_indices: &[usize],
        params: &SamplingParams,
        seed: u64,
    ) -> Result<String, InferenceError> {
        self(sample, frame_indices, params, seed)
    }
}

/// Per-sample decoding schedule: temperature rises and the nucleus narrows
/// with the sample index so the m generations explore different reasoning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSchedule {
    pub temp_base: f64,
    pub temp_step: f64,
    pub top_p_base: f64,
    pub top_p_step: f64,
    pub top_p_floor: f64,
}

impl Default for SamplingSchedule {
    fn default() -> Self {
        Self { temp_base: 0.7, temp_step: 0.1, top_p_base: 0.9, top_p_step: 0.1, top_p_floor: 0.5 }
    }
}

impl SamplingSchedule {
    /// `(temperature, top_p)` for sample index `i`.
    pub fn at(&self, i: usize) -> (f64, f64) {
        let i = i as f64;
        let temperature = self.temp_base + self.temp_step * i;
        let top_p = (self.top_p_base - self.top_p_step * i).max(self.top_p_floor);
        (temperature, top_p)
    }
}

/// Default schedule: `tau_i = 0.7 + 0.1*i`, `p_i = max(0.5, 0.9 - 0.1*i)`.
pub fn sampling_schedule(i: usize) -> (f64, f64) {
    SamplingSchedule::default().at(i)
}

/// Controller configuration. The default targets long-video budgets; the
/// [`TtsConfig::knowledge`] preset caps at 64 frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtsConfig {
    /// Samples drawn per round.
    pub m: usize,
    /// Initial frame budget.
    pub n_init: usize,
    /// Maximum frame budget; growth is fixed doubling capped here.
    pub n_max: usize,
    pub schedule: SamplingSchedule,
    pub frame_selection: FrameSelection,
    pub max_tokens: usize,
    pub stop_sentinel: String,
}

impl Default for TtsConfig {
    fn default() -> Self {
        Self {
            m: 5,
            n_init: 32,
            n_max: 128,
            schedule: SamplingSchedule::default(),
            frame_selection: FrameSelection::UniformStride,
            max_tokens: 1024,
            stop_sentinel: "</answer>".to_string(),
        }
    }
}

impl TtsConfig {
    /// 64-frame cap used for knowledge-style workloads.
    pub fn knowledge() -> Self {
        Self { n_max: 64, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut problems = Vec::new();
        if self.m == 0 {
            problems.push("m must be >= 1".to_string());
        }
        if self.n_init == 0 {
            problems.push("n_init must be positive".to_string());
        }
        if self.n_init > self.n_max {
            problems.push(format!("n_init {} exceeds n_max {}", self.n_init, self.n_max));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join("; "))
        }
    }

    /// Full sampling parameters for sample index `i` of a round.
    pub fn params_for(&self, i: usize) -> SamplingParams {
        let (temperature, top_p) = self.schedule.at(i);
        SamplingParams { temperature, top_p, max_tokens: self.max_tokens, stop_sentinel: self.stop_sentinel.clone() }
    }
}

/// True iff every answer is present and all are equal. A single
/// unparseable response carries no answer evidence and defeats consensus.
pub fn consensus(answers: &[Option<char>]) -> bool {
    match answers.first() {
        Some(Some(first)) => answers.iter().all(|a| a.as_ref() == Some(first)),
        _ => false,
    }
}

/// Most frequent present letter; ties break toward the letter whose first
/// producing sample index is smallest, i.e. the lowest-temperature sample
/// under the schedule. Unparseable answers are excluded from the counts.
pub fn majority_vote(answers: &[Option<char>]) -> Result<char, TtsError> {
    let mut counts: Vec<(char, usize, usize)> = Vec::new(); // (letter, count, first index)
    for (i, answer) in answers.iter().enumerate() {
        if let Some(letter) = answer {
            match counts.iter_mut().find(|(l, _, _)| l == letter) {
                Some((_, count, _)) => *count += 1,
                None => counts.push((*letter, 1, i)),
            }
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .map(|(letter, _, _)| letter)
        .ok_or(TtsError::Undecidable { sample_id: String::new() })
}

/// Next frame budget: `min(2n, n_max)`.
pub fn next_budget(n: usize, n_max: usize) -> usize {
    (n * 2).min(n_max)
}

/// Runs the sparse-to-dense controller on one sample.
///
/// Starting at `n_init`, each round draws `m` generations with the per-index
/// schedule, checks unanimity, and returns on consensus; reaching `n_max`
/// without consensus falls back to majority vote over the final round. The
/// budget strictly doubles (capped), so the loop makes at most
/// `ceil(log2(n_max / n_init)) + 1` rounds.
pub fn run_tts(
    inference: &dyn Inference,
    sample: &McqaSample,
    config: &TtsConfig,
    seed: u64,
) -> Result<TtsTrace, TtsError> {
    config.validate().map_err(TtsError::Config)?;
    let total_frames = sample.video.total_frames();
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut budget = config.n_init;

    loop {
        let round_index = rounds.len();
        let indices = frame_indices_with(config.frame_selection, total_frames, budget);
        let mut generations = Vec::with_capacity(config.m);
        let mut answers = Vec::with_capacity(config.m);
        for i in 0..config.m {
            let params = config.params_for(i);
            let member_seed = tts_member_seed(seed, &sample.id, round_index, i);
            let raw = inference.generate(sample, &indices, &params, member_seed).map_err(|source| {
                TtsError::Inference {
                    sample_id: sample.id.clone(),
                    budget,
                    source,
                    partial: rounds.clone(),
                }
            })?;
            let parsed = parse_response(&raw);
            // Narrow to this sample's letter range: a stray out-of-range
            // letter must not win consensus or votes.
            let answer = parsed.answer.filter(|c| sample.contains_letter(*c));
            answers.push(answer);
            generations.push(GenerationRecord {
                temperature: params.temperature,
                top_p: params.top_p,
                raw,
                answer,
            });
        }

        let agreed = consensus(&answers);
        rounds.push(RoundRecord { budget, frame_indices: indices, generations, consensus: agreed });

        if agreed {
            return Ok(finish(sample, config, rounds, answers[0], Decision::Consensus));
        }
        if budget == config.n_max {
            let final_answer = majority_vote(&answers).ok();
            return Ok(finish(sample, config, rounds, final_answer, Decision::MajorityVote));
        }
        budget = next_budget(budget, config.n_max);
    }
}

/// Fixed-budget self-consistency baseline: one round at budget `n` with `m`
/// votes and no escalation. `m = 1` is the vanilla single pass. Identical to
/// [`run_tts`] with `n_init = n_max = n`, including the trace.
pub fn run_fixed(
    inference: &dyn Inference,
    sample: &McqaSample,
    n: usize,
    m: usize,
    base: &TtsConfig,
    seed: u64,
) -> Result<TtsTrace, TtsError> {
    let config = TtsConfig { m, n_init: n, n_max: n, ..base.clone() };
    run_tts(inference, sample, &config, seed)
}

fn finish(
    sample: &McqaSample,
    config: &TtsConfig,
    rounds: Vec<RoundRecord>,
    final_answer: Option<char>,
    decided_by: Decision,
) -> TtsTrace {
    let total_frames_processed = rounds.iter().map(|r| r.budget * config.m).sum();
    let total_generations = rounds.iter().map(|r| r.generations.len()).sum();
    TtsTrace {
        sample_id: sample.id.clone(),
        rounds,
        final_answer,
        decided_by,
        total_frames_processed,
        total_generations,
    }
}
