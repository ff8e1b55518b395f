//! Mission validation, behavior-tree synthesis, path generation and
//! context-driven switching.

mod context;
mod paths;
mod templates;
mod validate;

pub use context::{context_decide, Context, PlanRef, SwitchDecision, RETURN_TO_DOCK};
pub use paths::{generate_inspection_path, generate_survey_path, Path};
pub use templates::{
    check_completeness, plan_mission, return_to_dock_tree, synthesize_bt, template, template_by_name, CompletenessReport,
    MissionPlan, PlannedTask, Template, TEMPLATES,
};
pub use validate::{project_task, resolve_target_class, validate_mission, validate_task, TaskVerdict, ValidationReport};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlannerMode {
    #[default]
    Full,
    #[serde(alias = "kg_only")]
    Kg,
    #[serde(alias = "state_only")]
    State,
}

impl PlannerMode {
    pub const ALL: [PlannerMode; 3] = [PlannerMode::Full, PlannerMode::Kg, PlannerMode::State];

    pub fn checks_capability(self) -> bool {
        self != PlannerMode::State
    }

    pub fn checks_affordance(self) -> bool {
        self == PlannerMode::Full
    }

    pub fn label(self) -> &'static str {
        match self {
            PlannerMode::Full => "FULL",
            PlannerMode::Kg => "KG_ONLY",
            PlannerMode::State => "STATE_ONLY",
        }
    }
}

impl fmt::Display for PlannerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PlannerMode {
    type Err = PlanError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(PlannerMode::Full),
            "kg" | "kg_only" => Ok(PlannerMode::Kg),
            "state" | "state_only" => Ok(PlannerMode::State),
            _ => Err(PlanError::BadParameter(format!("unknown planner mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub mode: PlannerMode,
    /// %.
    pub battery_floor: f64,
    /// Simulated seconds between knowledge refresh ticks.
    pub refresh_interval: f64,
    /// Battery cost per meter used for resource projection, %/m. Scenarios
    /// take this from the simulator's `drain_move`.
    #[serde(skip)]
    pub drain_per_meter: f64,
    pub survey_lane_spacing: f64,
    /// Side of the square surveyed around the robot when a survey names no region, m.
    pub default_survey_side: f64,
    pub inspection_radius: f64,
    pub inspection_points: usize,
    /// Stand-off distance for approaching objects, stations and peers, m.
    pub approach_distance: f64,
    /// Battery level the return-to-dock plan recharges to, %.
    pub recharge_target: f64,
    /// How long a returning robot waits near the dock for a peer to collect its data, s.
    pub handoff_timeout: f64,
    /// Records below this confidence are handed to a peer for inspection.
    pub handoff_confidence: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            mode: PlannerMode::Full,
            battery_floor: 20.0,
            refresh_interval: 1.0,
            drain_per_meter: 0.05,
            survey_lane_spacing: 5.0,
            default_survey_side: 20.0,
            inspection_radius: 3.0,
            inspection_points: 16,
            approach_distance: 3.0,
            recharge_target: 95.0,
            handoff_timeout: 60.0,
            handoff_confidence: 0.6,
        }
    }
}

impl PlannerConfig {
    pub fn with_mode(mut self, mode: PlannerMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.battery_floor > 0.0 && self.battery_floor < 100.0) {
            return Err(PlanError::BadParameter("battery_floor must be within (0, 100)".into()));
        }
        let positive = [
            ("refresh_interval", self.refresh_interval),
            ("survey_lane_spacing", self.survey_lane_spacing),
            ("default_survey_side", self.default_survey_side),
            ("inspection_radius", self.inspection_radius),
            ("approach_distance", self.approach_distance),
            ("handoff_timeout", self.handoff_timeout),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlanError::BadParameter(format!("{name} must be positive")));
            }
        }
        if !(self.drain_per_meter.is_finite() && self.drain_per_meter >= 0.0) {
            return Err(PlanError::BadParameter("drain_per_meter must be non-negative".into()));
        }
        if self.inspection_points < 3 {
            return Err(PlanError::BadParameter("inspection_points must be at least 3".into()));
        }
        if !(0.0..=100.0).contains(&self.recharge_target) || !(0.0..=1.0).contains(&self.handoff_confidence) {
            return Err(PlanError::BadParameter("recharge_target or handoff_confidence out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("no template for `{0}`")]
    TemplateMissing(String),
    #[error("cannot bind task parameters: {0}")]
    BindError(String),
    #[error("mission `{}` failed validation", .0.mission_id)]
    ValidationFailed(ValidationReport),
    #[error("bad parameter: {0}")]
    BadParameter(String),
}
