use crate::geometry::{Pose, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSource {
    SelfSensed,
    Transferred,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorHealth {
    Ok,
    Degraded,
}

/// What a robot believes about one object. `classification: None` is Unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub object_id: String,
    pub position: Vec3,
    pub classification: Option<String>,
    pub confidence: f64,
    pub source: RecordSource,
}

/// Merges `incoming` into `records`. Human records always win and are never
/// replaced by sensed or transferred ones; otherwise the incoming record wins
/// when its confidence is at least the stored one. Returns the replaced record
/// when the stored entry changed.
pub fn merge_record(
    records: &mut BTreeMap<String, ObjectRecord>,
    incoming: ObjectRecord,
) -> MergeOutcome {
    match records.get(&incoming.object_id) {
        None => {
            records.insert(incoming.object_id.clone(), incoming);
            MergeOutcome::Inserted
        }
        Some(existing) => {
            let take = incoming.source == RecordSource::Human
                || (existing.source != RecordSource::Human
                    && incoming.confidence >= existing.confidence);
            if take && *existing != incoming {
                let old = records.insert(incoming.object_id.clone(), incoming).expect("present");
                MergeOutcome::Replaced(old)
            } else {
                MergeOutcome::Kept
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MergeOutcome {
    Inserted,
    Replaced(ObjectRecord),
    Kept,
}

impl MergeOutcome {
    pub fn changed(&self) -> bool {
        !matches!(self, MergeOutcome::Kept)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRuntime {
    pub battery: f64,
    pub pose: Pose,
    pub docked: bool,
    #[serde(default)]
    pub sensor_health: BTreeMap<String, SensorHealth>,
    #[serde(default)]
    pub object_records: BTreeMap<String, ObjectRecord>,
}

/// Runtime facts the planner reasons over next to the knowledge base.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeState {
    pub robots: BTreeMap<String, RobotRuntime>,
    /// Docking/communication stations by id.
    #[serde(default)]
    pub stations: BTreeMap<String, Pose>,
    /// Each robot's home station.
    #[serde(default)]
    pub home_stations: BTreeMap<String, String>,
    /// Object ids declared by the scenario.
    #[serde(default)]
    pub declared_objects: BTreeSet<String>,
}

impl RuntimeState {
    /// Best record for an object: the robot's own, otherwise the most
    /// confident one held by any robot (ties broken by robot id order).
    pub fn record_for(&self, robot: &str, object_id: &str) -> Option<&ObjectRecord> {
        if let Some(r) = self.robots.get(robot).and_then(|r| r.object_records.get(object_id)) {
            return Some(r);
        }
        let mut best: Option<&ObjectRecord> = None;
        for rt in self.robots.values() {
            if let Some(r) = rt.object_records.get(object_id) {
                if best.is_none_or(|b| r.confidence > b.confidence) {
                    best = Some(r);
                }
            }
        }
        best
    }

    /// Whether any robot has a record of the object, or the scenario declares it.
    pub fn knows_object(&self, object_id: &str) -> bool {
        self.declared_objects.contains(object_id)
            || self.robots.values().any(|r| r.object_records.contains_key(object_id))
    }

    /// Positions of objects recorded with the given class, across all robots.
    pub fn positions_of_class(&self, class: &str) -> Vec<Vec3> {
        let mut seen = BTreeMap::new();
        for rt in self.robots.values() {
            for rec in rt.object_records.values() {
                if rec.classification.as_deref() == Some(class) {
                    seen.entry(rec.object_id.clone()).or_insert(rec.position);
                }
            }
        }
        seen.into_values().collect()
    }
}
