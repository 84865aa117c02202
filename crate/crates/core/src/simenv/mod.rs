//! Synthetic video-QA environment: videos with planted per-frame evidence,
//! a brute-force answer oracle, a tiny trainable policy, and evaluation.
//!
//! The corpus is built so that easy samples are answerable at the initial
//! frame budget while hard samples hide their evidence between the sparse
//! sample points, only becoming visible as the budget doubles — the regime
//! the sparse-to-dense controller is designed for.

mod eval;
mod policy;

pub use eval::{evaluate, run_mode, score_traces, DifficultyBreakdown, EvalMode, EvalReport, OracleInference};
pub use policy::{evidence_features, CheckpointData, ToyInference, ToyPolicy, ANSWER_TOKEN_BASE};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::frame_indices;
use crate::seed::derive_seed;
use crate::types::{McqaOption, McqaSample, VideoRef};

/// Contiguous frame range `[start, start + width)` that confines a hard
/// sample's ground-truth evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceWindow {
    pub start: usize,
    pub width: usize,
}

/// A synthetic video: per-frame evidence labels, one option letter or none
/// per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVideo {
    pub total_frames: usize,
    /// `evidence[i]` is the option letter frame `i` supports, if any.
    pub evidence: Vec<Option<char>>,
    /// Present iff the sample is hard.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<EvidenceWindow>,
}

impl SyntheticVideo {
    /// Evidence count per option over the given frame indices.
    pub fn evidence_counts(&self, frame_indices: &[usize], n_options: usize) -> Vec<usize> {
        let mut counts = vec![0usize; n_options];
        for &i in frame_indices {
            if let Some(letter) = self.evidence.get(i).copied().flatten() {
                let idx = (letter as u8 - b'A') as usize;
                if idx < n_options {
                    counts[idx] += 1;
                }
            }
        }
        counts
    }
}

/// Corpus construction parameters.
///
/// Evidence density is expressed as frame counts: easy samples spread
/// `easy_gt_frames` ground-truth evidence frames uniformly over the video
/// (at least one on the initial-budget grid), hard samples plant evidence on
/// every window frame the initial budget never samples. Each distractor
/// letter gets `floor(distractor_rate * gt_frames)` evidence frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_samples: usize,
    pub n_options: usize,
    pub hard_fraction: f64,
    pub total_frames: usize,
    /// Budget the hard windows hide from.
    pub n_init: usize,
    /// Hard-sample window width; must not exceed `total_frames / 8`.
    pub window_width: usize,
    pub easy_gt_frames: usize,
    pub distractor_rate: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_samples: 700,
            n_options: 4,
            hard_fraction: 0.5,
            total_frames: 128,
            n_init: 32,
            window_width: 16,
            easy_gt_frames: 48,
            distractor_rate: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("infeasible corpus config: {0}")]
    Infeasible(String),
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut problems = Vec::new();
        if self.n_samples == 0 {
            problems.push("n_samples must be positive".to_string());
        }
        if !(2..=26).contains(&self.n_options) {
            problems.push(format!("n_options must be in 2..=26, got {}", self.n_options));
        }
        if !(0.0..=1.0).contains(&self.hard_fraction) {
            problems.push(format!("hard_fraction must be in [0, 1], got {}", self.hard_fraction));
        }
        if self.n_init == 0 || self.n_init > self.total_frames {
            problems.push(format!(
                "n_init {} must be in 1..={} (total frames)",
                self.n_init, self.total_frames
            ));
        }
        if self.window_width == 0 || self.window_width * 8 > self.total_frames {
            problems.push(format!(
                "window_width {} must be positive and at most total_frames/8 = {}",
                self.window_width,
                self.total_frames / 8
            ));
        }
        if self.easy_gt_frames == 0 {
            problems.push("easy_gt_frames must be positive".to_string());
        }
        if !(0.0..1.0).contains(&self.distractor_rate) {
            problems.push(format!("distractor_rate must be in [0, 1), got {}", self.distractor_rate));
        }
        let easy_needed = self.easy_gt_frames
            + (self.n_options - 1) * ((self.distractor_rate * self.easy_gt_frames as f64) as usize);
        if easy_needed > self.total_frames {
            problems.push(format!(
                "easy samples need {easy_needed} evidence frames but the video has {}",
                self.total_frames
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CorpusError::Infeasible(problems.join("; ")))
        }
    }
}

/// Generates a corpus deterministically from the seed.
///
/// Guarantees, checked per sample and tested exhaustively:
/// * the ground-truth letter has strictly more evidence frames than any
///   distractor over the full video, so the full-video oracle is exact;
/// * easy samples have ground-truth evidence visible at `n_init`;
/// * hard samples show fewer than 2 ground-truth evidence frames at
///   `n_init` but at least 4 at the full budget.
pub fn generate_corpus(config: &CorpusConfig, seed: u64) -> Result<Vec<McqaSample>, CorpusError> {
    config.validate()?;
    let n_hard = (config.hard_fraction * config.n_samples as f64).round() as usize;
    let mut samples = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let hard = i < n_hard;
        let sample_seed = derive_seed(seed, &[b"corpus", &(i as u64).to_le_bytes()]);
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
        let sample = if hard {
            generate_hard(config, i, &mut rng)?
        } else {
            generate_easy(config, i, &mut rng)?
        };
        samples.push(sample);
    }
    // Interleave difficulties; order is seed-deterministic.
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"corpus-order"]));
    samples.shuffle(&mut order_rng);
    Ok(samples)
}

fn letters(n: usize) -> Vec<char> {
    (0..n).map(|i| (b'A' + i as u8) as char).collect()
}

fn build_sample(
    config: &CorpusConfig,
    id: String,
    gt: char,
    evidence: Vec<Option<char>>,
    window: Option<EvidenceWindow>,
) -> Result<McqaSample, CorpusError> {
    let video = SyntheticVideo { total_frames: config.total_frames, evidence, window };
    check_guarantees(config, &id, gt, &video)?;
    let options = letters(config.n_options)
        .into_iter()
        .map(|letter| McqaOption { letter, text: format!("event {letter}") })
        .collect();
    McqaSample::new(id, VideoRef::Synthetic(video), "Which event does the video show most often?", options, gt)
        .map_err(|e| CorpusError::Infeasible(e.to_string()))
}

fn generate_easy(config: &CorpusConfig, index: usize, rng: &mut ChaCha8Rng) -> Result<McqaSample, CorpusError> {
    let gt = *letters(config.n_options).choose(rng).expect("at least two options");
    let mut evidence: Vec<Option<char>> = vec![None; config.total_frames];

    let grid = frame_indices(config.total_frames, config.n_init);
    let mut free: Vec<usize> = (0..config.total_frames).collect();
    free.shuffle(rng);

    // One ground-truth evidence frame is forced onto the sparse grid so the
    // sample is answerable at n_init even in unlucky draws.
    let anchor = *grid.get(rng.gen_range(0..grid.len())).expect("grid non-empty");
    evidence[anchor] = Some(gt);
    let mut placed = 1;
    let mut cursor = free.into_iter().filter(|&f| f != anchor);
    for f in cursor.by_ref() {
        if placed == config.easy_gt_frames {
            break;
        }
        evidence[f] = Some(gt);
        placed += 1;
    }

    let per_distractor = (config.distractor_rate * config.easy_gt_frames as f64) as usize;
    for letter in letters(config.n_options).into_iter().filter(|l| *l != gt) {
        for _ in 0..per_distractor {
            match cursor.next() {
                Some(f) => evidence[f] = Some(letter),
                None => return Err(CorpusError::Infeasible("ran out of frames for distractor evidence".into())),
            }
        }
    }

    build_sample(config, format!("easy-{index:04}"), gt, evidence, None)
}

fn generate_hard(config: &CorpusConfig, index: usize, rng: &mut ChaCha8Rng) -> Result<McqaSample, CorpusError> {
    let gt = *letters(config.n_options).choose(rng).expect("at least two options");
    let mut evidence: Vec<Option<char>> = vec![None; config.total_frames];

    let sparse: std::collections::BTreeSet<usize> =
        frame_indices(config.total_frames, config.n_init).into_iter().collect();
    let denser: std::collections::BTreeSet<usize> =
        frame_indices(config.total_frames, (config.n_init * 2).min(config.total_frames))
            .into_iter()
            .collect();

    let start = rng.gen_range(0..=config.total_frames - config.window_width);
    let window = EvidenceWindow { start, width: config.window_width };

    // Ground truth fills every window frame the sparse budget never sees.
    let gt_frames: Vec<usize> =
        (start..start + config.window_width).filter(|f| !sparse.contains(f)).collect();
    if gt_frames.len() < 4 {
        return Err(CorpusError::Infeasible(format!(
            "window of width {} leaves only {} frames off the n_init grid; need at least 4",
            config.window_width,
            gt_frames.len()
        )));
    }
    for &f in &gt_frames {
        evidence[f] = Some(gt);
    }

    // Distractor evidence hides from both the sparse and the doubled budget
    // so intermediate rounds see ground-truth evidence or nothing.
    let mut deep_frames: Vec<usize> = (0..config.total_frames)
        .filter(|f| !sparse.contains(f) && !denser.contains(f) && evidence[*f].is_none())
        .collect();
    deep_frames.shuffle(rng);
    let per_distractor = (config.distractor_rate * gt_frames.len() as f64) as usize;
    let mut cursor = deep_frames.into_iter();
    for letter in letters(config.n_options).into_iter().filter(|l| *l != gt) {
        for _ in 0..per_distractor {
            match cursor.next() {
                Some(f) => evidence[f] = Some(letter),
                None => {
                    return Err(CorpusError::Infeasible(
                        "ran out of deep frames for hard-sample distractor evidence".into(),
                    ))
                }
            }
        }
    }

    build_sample(config, format!("hard-{index:04}"), gt, evidence, Some(window))
}

fn check_guarantees(
    config: &CorpusConfig,
    id: &str,
    gt: char,
    video: &SyntheticVideo,
) -> Result<(), CorpusError> {
    let gt_idx = (gt as u8 - b'A') as usize;
    let all: Vec<usize> = (0..video.total_frames).collect();
    let full = video.evidence_counts(&all, config.n_options);
    if full[gt_idx] == 0 {
        return Err(CorpusError::Infeasible(format!("{id}: no ground-truth evidence planted")));
    }
    for (i, count) in full.iter().enumerate() {
        if i != gt_idx && *count >= full[gt_idx] {
            return Err(CorpusError::Infeasible(format!(
                "{id}: distractor {} has {count} evidence frames, ground truth has {}",
                (b'A' + i as u8) as char,
                full[gt_idx]
            )));
        }
    }
    let sparse_counts =
        video.evidence_counts(&frame_indices(video.total_frames, config.n_init), config.n_options);
    if video.window.is_some() {
        if sparse_counts[gt_idx] >= 2 {
            return Err(CorpusError::Infeasible(format!(
                "{id}: hard sample shows {} ground-truth frames at n_init; must be < 2",
                sparse_counts[gt_idx]
            )));
        }
        let dense_counts = video
            .evidence_counts(&frame_indices(video.total_frames, video.total_frames), config.n_options);
        if dense_counts[gt_idx] < 4 {
            return Err(CorpusError::Infeasible(format!(
                "{id}: hard sample shows only {} ground-truth frames at full budget; need >= 4",
                dense_counts[gt_idx]
            )));
        }
    } else if sparse_counts[gt_idx] == 0 {
        return Err(CorpusError::Infeasible(format!(
            "{id}: easy sample has no ground-truth evidence visible at n_init"
        )));
    }
    Ok(())
}

/// Brute-force reference predictor: counts evidence per option over the
/// observed frames and puts all mass on the argmax; ties (including the
/// no-evidence case) split uniformly over the tied options.
pub fn oracle_answer(video: &SyntheticVideo, frame_indices: &[usize], n_options: usize) -> Vec<f64> {
    let counts = video.evidence_counts(frame_indices, n_options);
    let max = counts.iter().copied().max().unwrap_or(0);
    let tied: Vec<usize> =
        (0..n_options).filter(|&i| counts[i] == max).collect();
    let mass = 1.0 / tied.len() as f64;
    let mut dist = vec![0.0; n_options];
    for i in tied {
        dist[i] = mass;
    }
    dist
}
