//! Re-simulation of a recorded run and byte comparison against the log.

use crate::engine::{Engine, EngineError, EngineOptions, Input};
use crate::events::{parse_jsonl, LogError, EVENTS_SCHEMA};
use abyssal_core::planner::PlannerMode;
use abyssal_core::scenario::Scenario;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    CorruptLog(#[from] LogError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub seq: u64,
    /// The line the re-simulation produced, if it produced one.
    pub expected: Option<String>,
    /// The line found in the log, if the log has one.
    pub found: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub records: usize,
    pub divergence: Option<Divergence>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.divergence.is_none()
    }
}

fn diverged(seq: u64, reason: impl Into<String>, found: &str) -> Divergence {
    Divergence { seq, expected: None, found: Some(found.to_string()), reason: reason.into() }
}

/// Rebuilds the run from the log's embedded scenario, seed, mode and
/// operator inputs, then compares the two logs line by line.
pub fn replay_log(text: &str) -> Result<ReplayReport, ReplayError> {
    let parsed = parse_jsonl(text)?;
    let records = parsed.len();
    let report = |divergence| Ok(ReplayReport { records, divergence: Some(divergence) });

    let (head_line, head) = &parsed[0];
    if head.kind != "ScenarioLoaded" || head.payload["schema"] != EVENTS_SCHEMA {
        return report(diverged(0, "log does not start with ScenarioLoaded", head_line));
    }
    let scenario = match Scenario::from_value(head.payload["scenario"].clone()) {
        Ok(s) => s,
        Err(e) => return report(diverged(0, format!("embedded scenario: {e}"), head_line)),
    };
    let Some(seed) = head.payload["seed"].as_u64() else {
        return report(diverged(0, "missing seed", head_line));
    };
    let mode: PlannerMode = match serde_json::from_value(head.payload["mode"].clone()) {
        Ok(m) => m,
        Err(e) => return report(diverged(0, format!("mode: {e}"), head_line)),
    };
    let mut engine = Engine::new(scenario, EngineOptions { mode: Some(mode), seed: Some(seed) })?;

    let last_t = parsed.last().map(|(_, r)| r.t).unwrap_or(0.0);
    for (line, record) in &parsed[1..] {
        if record.kind != "OperatorInput" {
            continue;
        }
        let input: Input = match serde_json::from_value(record.payload["input"].clone()) {
            Ok(i) => i,
            Err(e) => return report(diverged(record.seq, format!("operator input: {e}"), line)),
        };
        engine.run_until(record.t)?;
        engine.apply_input(input);
    }
    engine.run_until(last_t)?;
    if parsed.last().is_some_and(|(_, r)| r.kind == "RunEnded") {
        engine.finish();
    }

    let produced = engine.log().lines();
    for (i, (line, _)) in parsed.iter().enumerate() {
        match produced.get(i) {
            Some(p) if p == line => {}
            other => {
                return report(Divergence {
                    seq: i as u64,
                    expected: other.cloned(),
                    found: Some(line.clone()),
                    reason: "re-simulated record differs".into(),
                })
            }
        }
    }
    if produced.len() > records {
        // Events the log stops short of are fine only when the log was cut
        // at a step boundary, which `run_until(last_t)` reproduces exactly.
        let extra = &produced[records];
        let same_step = serde_json::from_str::<serde_json::Value>(extra)
            .ok()
            .and_then(|v| v["t"].as_f64())
            .is_some_and(|t| t <= last_t);
        if same_step {
            return report(Divergence {
                seq: records as u64,
                expected: Some(extra.clone()),
                found: None,
                reason: "log ends before the re-simulated step does".into(),
            });
        }
    }
    Ok(ReplayReport { records, divergence: None })
}
