//! Trace records for controller runs and their line-delimited file format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How the final answer was decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Consensus,
    MajorityVote,
}

/// One generation within a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub temperature: f64,
    pub top_p: f64,
    pub raw: String,
    pub answer: Option<char>,
}

/// One round at a fixed frame budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub budget: usize,
    pub frame_indices: Vec<usize>,
    pub generations: Vec<GenerationRecord>,
    pub consensus: bool,
}

/// Full record of one controller run on one sample.
///
/// Budgets strictly increase by doubling capped at `n_max`; at most one
/// round has `consensus = true` and it is the last; `decided_by` is
/// `MajorityVote` only when the last round ran at `n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtsTrace {
    pub sample_id: String,
    pub rounds: Vec<RoundRecord>,
    pub final_answer: Option<char>,
    pub decided_by: Decision,
    /// Sum over rounds of budget * m.
    pub total_frames_processed: usize,
    pub total_generations: usize,
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

pub fn write_traces<W: Write>(traces: &[TtsTrace], writer: W) -> Result<(), TraceIoError> {
    let mut w = BufWriter::new(writer);
    for trace in traces {
        let line = serde_json::to_string(trace)
            .map_err(|e| TraceIoError::Malformed { line: 0, message: e.to_string() })?;
        writeln!(w, "{line}").map_err(|source| TraceIoError::Io { path: "<writer>".into(), source })?;
    }
    w.flush().map_err(|source| TraceIoError::Io { path: "<writer>".into(), source })
}

pub fn read_traces_from<R: Read>(reader: R) -> Result<Vec<TtsTrace>, TraceIoError> {
    let reader = BufReader::new(reader);
    let mut traces = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| TraceIoError::Io { path: "<reader>".into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let trace = serde_json::from_str(&line)
            .map_err(|e| TraceIoError::Malformed { line: i + 1, message: e.to_string() })?;
        traces.push(trace);
    }
    Ok(traces)
}

pub fn read_traces(path: impl AsRef<Path>) -> Result<Vec<TtsTrace>, TraceIoError> {
    let path = path.as_ref();
    let file =
        File::open(path).map_err(|source| TraceIoError::Io { path: path.display().to_string(), source })?;
    read_traces_from(file)
}

pub fn save_traces(traces: &[TtsTrace], path: impl AsRef<Path>) -> Result<(), TraceIoError> {
    let path = path.as_ref();
    let file = File::create(path)
        .map_err(|source| TraceIoError::Io { path: path.display().to_string(), source })?;
    write_traces(traces, file)
}
