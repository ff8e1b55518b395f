//! Append-only event log, persisted as JSON lines.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const EVENTS_SCHEMA: &str = "abyssal-events/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub seq: u64,
    /// Simulated seconds.
    pub t: f64,
    pub kind: String,
    pub payload: Value,
}

impl EventRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event records serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("corrupt log at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

/// Events plus their serialized lines. The line is produced once, on append,
/// so what is written to disk and what replay compares are the same bytes.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    records: Vec<EventRecord>,
    lines: Vec<String>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, t: f64, kind: &str, payload: Value) -> &EventRecord {
        let record = EventRecord { seq: self.records.len() as u64, t, kind: kind.to_string(), payload };
        self.lines.push(record.to_line());
        self.records.push(record);
        self.records.last().expect("just pushed")
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn since(&self, seq: usize) -> &[EventRecord] {
        &self.records[seq.min(self.records.len())..]
    }

    pub fn kinds(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.kind.as_str()).collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

/// Parses a JSON-lines log. Sequence numbers must run 0, 1, 2, ... and the
/// file must end with a newline.
pub fn parse_jsonl(text: &str) -> Result<Vec<(String, EventRecord)>, LogError> {
    if text.is_empty() {
        return Err(LogError::Corrupt { line: 0, reason: "empty log".into() });
    }
    if !text.ends_with('\n') {
        let line = text.lines().count().saturating_sub(1);
        return Err(LogError::Corrupt { line, reason: "log is truncated (no trailing newline)".into() });
    }
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let record: EventRecord = serde_json::from_str(line)
                .map_err(|e| LogError::Corrupt { line: i, reason: e.to_string() })?;
            if record.seq != i as u64 {
                return Err(LogError::Corrupt { line: i, reason: format!("expected seq {i}, found {}", record.seq) });
            }
            Ok((line.to_string(), record))
        })
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn seq_is_dense_and_lines_parse_back() {
        let mut log = EventLog::new();
        log.append(0.0, "A", json!({}));
        log.append(0.1, "B", json!({ "x": 1.5 }));
        let parsed = parse_jsonl(&log.to_jsonl()).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[1].1, log.records()[1]);
        assert_eq!(parsed[1].0, log.lines()[1]);
    }

    #[test]
    fn truncated_and_garbled_logs_are_corrupt() {
        let mut log = EventLog::new();
        log.append(0.0, "A", json!({}));
        log.append(0.1, "B", json!({}));
        let text = log.to_jsonl();
        assert!(matches!(parse_jsonl(&text[..text.len() - 5]), Err(LogError::Corrupt { line: 1, .. })));
        let swapped = text.replace("\"seq\":1", "\"seq\":7");
        assert!(matches!(parse_jsonl(&swapped), Err(LogError::Corrupt { line: 1, .. })));
        assert!(parse_jsonl("").is_err());
    }

    #[test]
    fn sha_is_hex() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
