//! Line-delimited dataset files, one sample per line.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::types::{InvalidSample, McqaSample};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: InvalidSample,
    },
    #[error("line {line}: duplicate sample id `{id}`")]
    DuplicateId { line: usize, id: String },
}

/// Parses samples from anything line-readable. Lines are 1-indexed in
/// errors; ids must be unique because traces and difficulty records join
/// on them.
pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<McqaSample>, DatasetError> {
    let reader = BufReader::new(reader);
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DatasetError::Io { path: "<reader>".into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: McqaSample = serde_json::from_str(&line)
            .map_err(|e| DatasetError::Malformed { line: line_no, message: e.to_string() })?;
        sample.validate().map_err(|source| DatasetError::Invalid { line: line_no, source })?;
        if !seen.insert(sample.id.clone()) {
            return Err(DatasetError::DuplicateId { line: line_no, id: sample.id });
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<McqaSample>, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    read_dataset(file)
}

/// Serializes samples one JSON object per line. Field order is fixed by the
/// struct definitions, so save→load→save is byte-stable.
pub fn write_dataset<W: Write>(samples: &[McqaSample], writer: W) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(writer);
    for sample in samples {
        let line = serde_json::to_string(sample)
            .map_err(|e| DatasetError::Malformed { line: 0, message: e.to_string() })?;
        writeln!(w, "{line}").map_err(|source| DatasetError::Io { path: "<writer>".into(), source })?;
    }
    w.flush().map_err(|source| DatasetError::Io { path: "<writer>".into(), source })
}

pub fn save_dataset(samples: &[McqaSample], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = File::create(path)
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    write_dataset(samples, file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{McqaOption, VideoRef};

    fn sample(id: &str) -> McqaSample {
        McqaSample::new(
            id,
            VideoRef::External { uri: format!("vid://{id}"), total_frames: 64 },
            "what happens?",
            vec![
                McqaOption { letter: 'A', text: "first".into() },
                McqaOption { letter: 'B', text: "second".into() },
                McqaOption { letter: 'C', text: "third".into() },
            ],
            'B',
        )
        .unwrap()
    }

    #[test]
    fn round_trip_identity() {
        let samples = vec![sample("a"), sample("b"), sample("c")];
        let mut buf = Vec::new();
        write_dataset(&samples, &mut buf).unwrap();
        let loaded = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(loaded, samples);
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let samples = vec![sample("a"), sample("b")];
        let mut first = Vec::new();
        write_dataset(&samples, &mut first).unwrap();
        let mut second = Vec::new();
        write_dataset(&read_dataset(first.as_slice()).unwrap(), &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn missing_field_reports_line() {
        let mut buf = Vec::new();
        write_dataset(&[sample("a")], &mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("{\"id\":\"b\",\"video\":{\"kind\":\"external\",\"uri\":\"u\",\"total_frames\":4},\"question\":\"q\",\"options\":[{\"letter\":\"A\",\"text\":\"x\"},{\"letter\":\"B\",\"text\":\"y\"}]}\n");
        let err = read_dataset(text.as_bytes()).unwrap_err();
        match err {
            DatasetError::Malformed { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("gt_answer"), "message was: {message}");
            }
            other => panic!("expected Malformed, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_is_named() {
        let samples = vec![sample("dup"), sample("dup")];
        let mut buf = Vec::new();
        // write_dataset does not police ids; loading does.
        write_dataset(&samples, &mut buf).unwrap();
        let err = read_dataset(buf.as_slice()).unwrap_err();
        match err {
            DatasetError::DuplicateId { line, id } => {
                assert_eq!(line, 2);
                assert_eq!(id, "dup");
            }
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn invalid_sample_reports_line() {
        let line = "{\"id\":\"x\",\"video\":{\"kind\":\"external\",\"uri\":\"u\",\"total_frames\":4},\"question\":\"q\",\"options\":[{\"letter\":\"A\",\"text\":\"x\"},{\"letter\":\"B\",\"text\":\"y\"}],\"gt_answer\":\"Z\"}\n";
        let err = read_dataset(line.as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::Invalid { line: 1, .. }), "got {err:?}");
    }

    #[test]
    fn blank_lines_are_skipped() {
        let mut buf = Vec::new();
        write_dataset(&[sample("a")], &mut buf).unwrap();
        let text = format!("\n{}\n", String::from_utf8(buf).unwrap());
        assert_eq!(read_dataset(text.as_bytes()).unwrap().len(), 1);
    }
}
