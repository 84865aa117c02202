//! Shared domain types for multiple-choice video QA.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simenv::SyntheticVideo;

/// Validation failure for a domain type.
#[derive(Debug, Error, PartialEq)]
pub enum InvalidSample {
    #[error("sample `{id}`: expected between 2 and 26 options, got {got}")]
    OptionCount { id: String, got: usize },
    #[error("sample `{id}`: option {index} has letter `{got}`, expected `{expected}`")]
    OptionLetter { id: String, index: usize, got: char, expected: char },
    #[error("sample `{id}`: gt_answer `{gt}` is not one of the option letters")]
    GroundTruthNotAnOption { id: String, gt: char },
    #[error("sample `{id}`: evidence label `{label}` at frame {frame} is not an option letter")]
    EvidenceLabel { id: String, frame: usize, label: char },
    #[error("sample `{id}`: evidence array has {evidence_len} entries for {total_frames} frames")]
    EvidenceLength { id: String, evidence_len: usize, total_frames: usize },
    #[error("sample `{id}`: video has zero frames")]
    EmptyVideo { id: String },
}

/// One lettered answer option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqaOption {
    pub letter: char,
    pub text: String,
}

/// Reference to the video a question is about.
///
/// Synthetic videos carry their per-frame evidence labels inline; external
/// videos are addressed by URI only and frames by index — no decoding here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VideoRef {
    Synthetic(SyntheticVideo),
    External { uri: String, total_frames: usize },
}

impl VideoRef {
    pub fn total_frames(&self) -> usize {
        match self {
            VideoRef::Synthetic(v) => v.total_frames,
            VideoRef::External { total_frames, .. } => *total_frames,
        }
    }

    /// Key used to group samples that share a video; `None` when the video
    /// has no shared identity (synthetic one-off videos).
    pub fn group_key(&self) -> Option<&str> {
        match self {
            VideoRef::Synthetic(_) => None,
            VideoRef::External { uri, .. } => Some(uri),
        }
    }
}

/// One video + question + lettered options + ground-truth letter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqaSample {
    pub id: String,
    pub video: VideoRef,
    pub question: String,
    pub options: Vec<McqaOption>,
    pub gt_answer: char,
}

impl McqaSample {
    /// Builds a sample, checking the option-letter and ground-truth
    /// invariants.
    pub fn new(
        id: impl Into<String>,
        video: VideoRef,
        question: impl Into<String>,
        options: Vec<McqaOption>,
        gt_answer: char,
    ) -> Result<Self, InvalidSample> {
        let sample = Self { id: id.into(), video, question: question.into(), options, gt_answer };
        sample.validate()?;
        Ok(sample)
    }

    /// Checks every structural invariant; used by the constructor and by
    /// dataset loading.
    pub fn validate(&self) -> Result<(), InvalidSample> {
        let id = &self.id;
        let n = self.options.len();
        if !(2..=26).contains(&n) {
            return Err(InvalidSample::OptionCount { id: id.clone(), got: n });
        }
        for (index, opt) in self.options.iter().enumerate() {
            let expected = (b'A' + index as u8) as char;
            if opt.letter != expected {
                return Err(InvalidSample::OptionLetter { id: id.clone(), index, got: opt.letter, expected });
            }
        }
        if !self.contains_letter(self.gt_answer) {
            return Err(InvalidSample::GroundTruthNotAnOption { id: id.clone(), gt: self.gt_answer });
        }
        if self.video.total_frames() == 0 {
            return Err(InvalidSample::EmptyVideo { id: id.clone() });
        }
        if let VideoRef::Synthetic(v) = &self.video {
            if v.evidence.len() != v.total_frames {
                return Err(InvalidSample::EvidenceLength {
                    id: id.clone(),
                    evidence_len: v.evidence.len(),
                    total_frames: v.total_frames,
                });
            }
            for (frame, label) in v.evidence.iter().enumerate() {
                if let Some(letter) = label {
                    if !self.contains_letter(*letter) {
                        return Err(InvalidSample::EvidenceLabel { id: id.clone(), frame, label: *letter });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_options(&self) -> usize {
        self.options.len()
    }

    /// True when `letter` is one of this sample's option letters.
    pub fn contains_letter(&self, letter: char) -> bool {
        let n = self.options.len() as u8;
        letter.is_ascii_uppercase() && (letter as u8) < b'A' + n
    }

    /// Difficulty tag for synthetic samples: `hard` when the evidence is
    /// confined to a window, `easy` otherwise, `unknown` for external videos.
    pub fn difficulty_tag(&self) -> &'static str {
        match &self.video {
            VideoRef::Synthetic(v) if v.window.is_some() => "hard",
            VideoRef::Synthetic(_) => "easy",
            VideoRef::External { .. } => "unknown",
        }
    }
}

/// Outcome of parsing one raw model response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    /// Content between the think tags, when the response is well formed.
    pub think: Option<String>,
    /// The single option letter extracted from the answer block, if any.
    pub answer: Option<char>,
    /// True iff the response is exactly one think block followed by one
    /// answer block, each opened and closed once, with only whitespace
    /// around them.
    pub well_formed_format: bool,
    pub raw: String,
}

/// Decoding controls transmitted with every generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    pub stop_sentinel: String,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self { temperature: 1.0, top_p: 1.0, max_tokens: 1024, stop_sentinel: "</answer>".to_string() }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), String> {
        let mut problems = Vec::new();
        if !(self.temperature > 0.0) {
            problems.push(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            problems.push(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.max_tokens == 0 {
            problems.push("max_tokens must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join("; "))
        }
    }
}

/// A frame count bounded by the controller's initial and maximum budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameBudget {
    pub n: usize,
    pub n_init: usize,
    pub n_max: usize,
}

impl FrameBudget {
    pub fn new(n: usize, n_init: usize, n_max: usize) -> Result<Self, String> {
        if n_init == 0 || n == 0 {
            return Err("frame budgets must be positive".to_string());
        }
        if !(n_init <= n && n <= n_max) {
            return Err(format!("budget {n} outside [{n_init}, {n_max}]"));
        }
        Ok(Self { n, n_init, n_max })
    }
}
