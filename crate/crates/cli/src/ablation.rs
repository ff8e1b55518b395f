//! Validation accuracy and tree completeness per planner configuration.

use crate::corpus::Corpus;
use abyssal_core::mission::parse_mission;
use abyssal_core::oracle::ViolationTag;
use abyssal_core::planner::{check_completeness, synthesize_bt, validate_mission, PlannerConfig, PlannerMode};
use abyssal_core::scenario::{Scenario, ScenarioError};
use serde::Serialize;
use std::fmt::Write;

pub const MODES: [PlannerMode; 3] = [PlannerMode::Full, PlannerMode::Kg, PlannerMode::State];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigResult {
    pub mode: PlannerMode,
    pub label: &'static str,
    /// Fraction of missions whose verdict matches the oracle; `None` for an
    /// empty corpus.
    pub validation_accuracy: Option<f64>,
    /// Mean completeness over the missions this configuration accepted.
    pub bt_completeness: Option<f64>,
    pub accepted: usize,
    pub missions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationResult {
    pub corpus_seed: u64,
    pub tags: Vec<(ViolationTag, usize)>,
    pub configs: Vec<ConfigResult>,
}

impl AblationResult {
    pub fn config(&self, mode: PlannerMode) -> &ConfigResult {
        self.configs.iter().find(|c| c.mode == mode).expect("every mode is evaluated")
    }
}

fn evaluate(corpus: &Corpus, scenario: &Scenario, mode: PlannerMode) -> Result<ConfigResult, ScenarioError> {
    let kb = &scenario.knowledge;
    let rt = scenario.world()?.runtime_state();
    let cfg = PlannerConfig { mode, ..scenario.planner_config() };
    let (mut agree, mut accepted, mut completeness) = (0usize, 0usize, 0.0);
    for entry in &corpus.missions {
        let mission = parse_mission(&entry.text).expect("corpus missions are rendered by the generator");
        let report = validate_mission(&mission, kb, &rt, &cfg);
        if report.feasible == entry.feasible {
            agree += 1;
        }
        if report.feasible {
            accepted += 1;
            let trees: Vec<_> = mission.tasks().iter().map(|t| synthesize_bt(t, kb, &rt, &cfg).ok()).collect();
            completeness += check_completeness(&trees, &mission).fraction;
        }
    }
    let n = corpus.missions.len();
    Ok(ConfigResult {
        mode,
        label: mode.label(),
        validation_accuracy: (n > 0).then(|| agree as f64 / n as f64),
        bt_completeness: (accepted > 0).then(|| completeness / accepted as f64),
        accepted,
        missions: n,
    })
}

pub fn run_ablation(corpus: &Corpus, scenario: &Scenario) -> Result<AblationResult, ScenarioError> {
    let configs = MODES.iter().map(|m| evaluate(corpus, scenario, *m)).collect::<Result<_, _>>()?;
    let tags = ViolationTag::ALL.iter().map(|t| (*t, corpus.count(*t))).collect();
    Ok(AblationResult { corpus_seed: corpus.seed, tags, configs })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

/// Plain-text table, one block per corpus.
pub fn render_table(results: &[AblationResult]) -> String {
    let mut out = String::new();
    for r in results {
        let tags: Vec<String> = r.tags.iter().map(|(t, n)| format!("{} {n}", t.as_str())).collect();
        let n = r.configs.first().map_or(0, |c| c.missions);
        let _ = writeln!(out, "corpus seed {}: {n} missions ({})", r.corpus_seed, tags.join(", "));
        let _ = writeln!(out, "{:<12} {:>9} {:>13} {:>9}", "config", "accuracy", "completeness", "accepted");
        for c in &r.configs {
            let _ = writeln!(
                out,
                "{:<12} {:>9} {:>13} {:>9}",
                c.label,
                cell(c.validation_accuracy),
                cell(c.bt_completeness),
                format!("{}/{}", c.accepted, c.missions)
            );
        }
        out.push('\n');
    }
    out.push_str(
        "KG_ONLY skips affordance checks and STATE_ONLY also skips capability checks;\n\
         their rows measure those rule ablations, not a language model.\n",
    );
    out
}
