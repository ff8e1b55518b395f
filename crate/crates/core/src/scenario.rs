//! Scenario documents (`abyssal-scenario/1`), scripted events and operator
//! interventions.

use crate::geometry::{Pose, Vec3};
use crate::knowledge::{
    GraphDocument, KnowledgeBase, KnowledgeError, KnowledgeGraph, KnowledgePatch, NodeKind, SensorHealth, Taxonomy,
    TaxonomyDocument,
};
use crate::planner::{PlanError, PlannerConfig};
use crate::sim::{RobotState, SimError, SimParams, World};
use crate::ActionKind;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const SCENARIO_SCHEMA: &str = "abyssal-scenario/1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Planner(#[from] PlanError),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

fn default_battery() -> f64 {
    100.0
}

fn default_true() -> bool {
    true
}

fn default_count() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub id: String,
    pub position: Vec3,
    #[serde(default)]
    pub heading: f64,
    #[serde(default = "default_battery")]
    pub battery: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub docked_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home_station: Option<String>,
    #[serde(default)]
    pub misclassification: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub forced_classifications: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSpec {
    pub id: String,
    pub position: Vec3,
    #[serde(default)]
    pub heading: f64,
    #[serde(default = "default_true")]
    pub vlc: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: String,
    pub class: String,
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunParams {
    /// Simulated seconds after which a run stops even with missions pending.
    pub max_time: f64,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams { max_time: 600.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub sim: SimParams,
    pub planner: PlannerConfig,
    pub run: RunParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionSpec {
    pub robot: String,
    pub text: String,
}

/// Operator action applied at a step boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intervention {
    ClassifyObject { object: String, class: String },
    DeployRobot { robot: String, mission: String },
    PatchKnowledge { patch: KnowledgePatch },
    AbortMission { mission: String },
}

impl Intervention {
    /// Event kind recorded when the intervention is applied.
    pub fn kind(&self) -> &'static str {
        match self {
            Intervention::ClassifyObject { .. } => "ClassifyObject",
            Intervention::DeployRobot { .. } => "DeployRobot",
            Intervention::PatchKnowledge { .. } => "PatchKnowledge",
            Intervention::AbortMission { .. } => "AbortMission",
        }
    }
}

/// Matches an event by kind, occurrence count and a payload subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventMatch {
    pub kind: String,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
}

fn is_subset(pattern: &Value, value: &Value) -> bool {
    match (pattern, value) {
        (Value::Object(p), Value::Object(v)) => p.iter().all(|(k, pv)| v.get(k).is_some_and(|vv| is_subset(pv, vv))),
        _ => pattern == value,
    }
}

impl EventMatch {
    pub fn matches(&self, kind: &str, payload: &Value) -> bool {
        self.kind == kind && self.payload.as_ref().is_none_or(|p| is_subset(p, payload))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trigger {
    /// Fire at this simulated time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<f64>,
    /// Fire `delay` seconds after the `count`-th matching event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after_event: Option<EventMatch>,
    #[serde(default)]
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptAction {
    ForceBattery { robot: String, level: f64 },
    Intervention(Intervention),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub trigger: Trigger,
    pub action: ScriptAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub stations: Vec<StationSpec>,
    pub graph: GraphDocument,
    pub taxonomy: TaxonomyDocument,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub params: ScenarioParams,
    #[serde(default)]
    pub missions: Vec<MissionSpec>,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
}

/// A checked scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub document: ScenarioDocument,
    pub knowledge: KnowledgeBase,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let document: ScenarioDocument = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Self::from_document(document)
    }

    pub fn from_value(value: Value) -> Result<Self, ScenarioError> {
        let document: ScenarioDocument = serde_json::from_value(value).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Self::from_document(document)
    }

    pub fn from_document(document: ScenarioDocument) -> Result<Self, ScenarioError> {
        if document.schema != SCENARIO_SCHEMA {
            return Err(invalid(format!("unsupported schema `{}`", document.schema)));
        }
        let graph = KnowledgeGraph::from_document(document.graph.clone())?;
        let taxonomy = Taxonomy::from_document(document.taxonomy.clone())?;
        document.params.sim.validate()?;
        document.params.planner.validate()?;
        if !(document.params.run.max_time.is_finite() && document.params.run.max_time >= 0.0) {
            return Err(invalid("run.max_time must be non-negative"));
        }

        let mut ids = BTreeSet::new();
        let mut claim = |id: &str| {
            if ids.insert(id.to_string()) {
                Ok(())
            } else {
                Err(invalid(format!("duplicate id `{id}`")))
            }
        };
        let stations: BTreeSet<&str> = document.stations.iter().map(|s| s.id.as_str()).collect();
        for s in &document.stations {
            claim(&s.id)?;
        }
        for r in &document.robots {
            claim(&r.id)?;
            if !graph.is_robot(&r.id) {
                return Err(invalid(format!("robot `{}` is not a Robot node in the graph", r.id)));
            }
            for st in r.docked_at.iter().chain(&r.home_station) {
                if !stations.contains(st.as_str()) {
                    return Err(invalid(format!("robot `{}` references unknown station `{st}`", r.id)));
                }
            }
            if !(0.0..=1.0).contains(&r.misclassification) {
                return Err(invalid(format!("robot `{}` misclassification must be within [0, 1]", r.id)));
            }
            if !(0.0..=100.0).contains(&r.battery) {
                return Err(invalid(format!("robot `{}` battery must be within [0, 100]", r.id)));
            }
        }
        let objects: BTreeSet<&str> = document.objects.iter().map(|o| o.id.as_str()).collect();
        for o in &document.objects {
            claim(&o.id)?;
            if taxonomy.class(&o.class).is_none() {
                return Err(invalid(format!("object `{}` has unknown class `{}`", o.id, o.class)));
            }
        }
        for r in &document.robots {
            for (obj, class) in &r.forced_classifications {
                if !objects.contains(obj.as_str()) || taxonomy.class(class).is_none() {
                    return Err(invalid(format!("robot `{}` forces unknown object or class `{obj}` -> `{class}`", r.id)));
                }
            }
        }
        let robots: BTreeSet<&str> = document.robots.iter().map(|r| r.id.as_str()).collect();
        for m in &document.missions {
            if !robots.contains(m.robot.as_str()) {
                return Err(invalid(format!("mission submitted for unknown robot `{}`", m.robot)));
            }
        }
        for entry in &document.script {
            let t = &entry.trigger;
            if t.at.is_some() == t.after_event.is_some() {
                return Err(invalid("script trigger needs exactly one of `at` and `after_event`"));
            }
            if !(t.delay.is_finite() && t.delay >= 0.0) || t.at.is_some_and(|a| !(a.is_finite() && a >= 0.0)) {
                return Err(invalid("script trigger times must be non-negative"));
            }
            if let ScriptAction::ForceBattery { robot, .. } = &entry.action {
                if !robots.contains(robot.as_str()) {
                    return Err(invalid(format!("script forces battery of unknown robot `{robot}`")));
                }
            }
        }
        Ok(Scenario { knowledge: KnowledgeBase::new(graph, taxonomy), document })
    }

    pub fn seed(&self) -> u64 {
        self.document.seed
    }

    /// Planner settings with the simulator's drain rate.
    pub fn planner_config(&self) -> PlannerConfig {
        let mut c = self.document.params.planner.clone();
        c.drain_per_meter = self.document.params.sim.drain_move;
        c
    }

    pub fn sim_params(&self) -> &SimParams {
        &self.document.params.sim
    }

    /// Compact canonical JSON of the document.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.document).expect("scenario serializes")
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(&self.document).expect("scenario serializes")
    }

    /// Initial world. Manipulator and VLC flags follow the capability closure.
    pub fn world(&self) -> Result<World, ScenarioError> {
        let doc = &self.document;
        let class_primitives = self
            .knowledge
            .taxonomy
            .classes()
            .iter()
            .map(|c| (c.name.clone(), c.primitives.clone()))
            .collect();
        let mut world = World::new(doc.params.sim.clone(), doc.seed, class_primitives)?;
        for s in &doc.stations {
            world.add_station(&s.id, Pose::new(s.position, s.heading), s.vlc)?;
        }
        for spec in &doc.robots {
            let closure = self.knowledge.capability_closure(&spec.id)?;
            let mut r = RobotState::new(&spec.id, Pose::new(spec.position, spec.heading), spec.battery);
            r.docked_at = spec.docked_at.clone();
            r.home_station = spec.home_station.clone();
            r.has_manipulator = closure.contains(&ActionKind::Manipulate) || closure.contains(&ActionKind::Touch);
            r.vlc_equipped = closure.contains(&ActionKind::Communicate);
            r.misclassification = spec.misclassification;
            r.forced_classifications = spec.forced_classifications.clone();
            r.sensor_health = self
                .knowledge
                .graph
                .devices(&spec.id)
                .into_iter()
                .filter(|d| self.knowledge.graph.node(d).is_some_and(|n| n.kind == NodeKind::Sensor))
                .map(|d| (d.to_string(), SensorHealth::Ok))
                .collect();
            world.add_robot(r)?;
        }
        for o in &doc.objects {
            world.add_object(&o.id, &o.class, o.position)?;
        }
        Ok(world)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn fixture_loads() {
        let s = fixtures::two_auv();
        assert_eq!(s.seed(), 7);
        let w = s.world().unwrap();
        assert!(w.robots["beta"].has_manipulator);
        assert!(!w.robots["alpha"].has_manipulator);
        assert!(w.robots["alpha"].vlc_equipped);
        assert_eq!(w.robots["beta"].docked_at.as_deref(), Some("dock_b"));
        assert_eq!(w.objects.len(), 5);
    }

    #[test]
    fn canonical_json_round_trips() {
        let s = fixtures::two_auv();
        let again = Scenario::from_json(&s.canonical_json()).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.canonical_json(), s.canonical_json());
    }

    #[test]
    fn rejects_bad_references() {
        let mut v = fixtures::two_auv().to_value();
        v["objects"][0]["class"] = "pyramid".into();
        assert!(matches!(Scenario::from_value(v), Err(ScenarioError::Invalid(_))));
        let mut v = fixtures::two_auv().to_value();
        v["robots"][0]["home_station"] = "nowhere".into();
        assert!(matches!(Scenario::from_value(v), Err(ScenarioError::Invalid(_))));
        let mut v = fixtures::two_auv().to_value();
        v["schema"] = "abyssal-scenario/9".into();
        assert!(Scenario::from_value(v).is_err());
        let mut v = fixtures::two_auv().to_value();
        v["surprise"] = 1.into();
        assert!(matches!(Scenario::from_value(v), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn event_match_subset() {
        let m = EventMatch { kind: "VlcConnected".into(), count: 1, payload: Some(serde_json::json!({"a": "alpha"})) };
        assert!(m.matches("VlcConnected", &serde_json::json!({"a": "alpha", "b": "dock_a"})));
        assert!(!m.matches("VlcConnected", &serde_json::json!({"a": "beta", "b": "dock_a"})));
        assert!(!m.matches("VlcLost", &serde_json::json!({"a": "alpha"})));
    }

    #[test]
    fn intervention_json_shape() {
        let i: Intervention = serde_json::from_str(r#"{"classify_object":{"object":"o7","class":"torus"}}"#).unwrap();
        assert_eq!(i, Intervention::ClassifyObject { object: "o7".into(), class: "torus".into() });
        assert_eq!(i.kind(), "ClassifyObject");
    }
}
