//! Brute-force feasibility labels.
//!
//! Recomputes reachability by scanning the raw edge list and re-derives path
//! lengths in closed form, sharing no code with the planner's checks. Used to
//! label generated mission corpora.

use crate::geometry::Vec3;
use crate::knowledge::{KnowledgeBase, NodeKind, Relation, RuntimeState};
use crate::mission::{Mission, TargetRef, Task};
use crate::planner::{PlannerConfig, PlannerMode};
use crate::ActionKind;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::PI;

/// Actions `robot` can perform, by exhaustive scan of the edges.
pub fn closure(kb: &KnowledgeBase, robot: &str) -> BTreeSet<ActionKind> {
    let doc = kb.graph.to_document();
    let has = |from: &str, to: &str, rel: Relation| doc.edges.iter().any(|e| e.from == from && e.to == to && e.relation == rel);
    let caps: Vec<&str> = doc
        .nodes
        .iter()
        .filter(|c| c.kind == NodeKind::Capability)
        .filter(|c| {
            doc.nodes.iter().any(|d| {
                (has(robot, &d.id, Relation::HasSensor) || has(robot, &d.id, Relation::HasActuator))
                    && has(&d.id, &c.id, Relation::Provides)
            })
        })
        .map(|c| c.id.as_str())
        .collect();
    let mut out = BTreeSet::new();
    for action in doc.nodes.iter().filter(|n| n.kind == NodeKind::Action) {
        let enabled = caps.iter().any(|c| has(c, &action.id, Relation::Enables));
        let satisfied = doc
            .nodes
            .iter()
            .filter(|c| c.kind == NodeKind::Capability && has(&action.id, &c.id, Relation::Requires))
            .all(|c| caps.contains(&c.id.as_str()));
        if enabled && satisfied {
            if let Ok(kind) = action.id.parse() {
                out.insert(kind);
            }
        }
    }
    out
}

pub fn affords(kb: &KnowledgeBase, class: &str, action: ActionKind) -> bool {
    kb.taxonomy
        .classes()
        .iter()
        .any(|c| c.name == class && c.affordances.iter().any(|a| *a == action))
}

/// Which checks one task passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskChecks {
    pub capability: bool,
    pub affordance: bool,
    pub resource: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationTag {
    None,
    Capability,
    Affordance,
    Resource,
}

impl ViolationTag {
    pub const ALL: [ViolationTag; 4] =
        [ViolationTag::None, ViolationTag::Capability, ViolationTag::Affordance, ViolationTag::Resource];

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationTag::None => "none",
            ViolationTag::Capability => "capability",
            ViolationTag::Affordance => "affordance",
            ViolationTag::Resource => "resource",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionLabel {
    pub tasks: Vec<TaskChecks>,
}

impl MissionLabel {
    pub fn any_capability(&self) -> bool {
        self.tasks.iter().any(|t| !t.capability)
    }

    pub fn any_affordance(&self) -> bool {
        self.tasks.iter().any(|t| !t.affordance)
    }

    pub fn any_resource(&self) -> bool {
        self.tasks.iter().any(|t| !t.resource)
    }

    pub fn feasible(&self) -> bool {
        !self.any_capability() && !self.any_affordance() && !self.any_resource()
    }

    /// Verdict a planner running only `mode`'s checks should reach.
    pub fn feasible_in(&self, mode: PlannerMode) -> bool {
        let cap = mode != PlannerMode::State && self.any_capability();
        let aff = mode == PlannerMode::Full && self.any_affordance();
        !cap && !aff && !self.any_resource()
    }

    /// The single violation kind present, `None` if feasible. Missions with
    /// several kinds of violation have no tag.
    pub fn tag(&self) -> Option<ViolationTag> {
        match (self.any_capability(), self.any_affordance(), self.any_resource()) {
            (false, false, false) => Some(ViolationTag::None),
            (true, _, false) => Some(ViolationTag::Capability),
            (false, true, false) => Some(ViolationTag::Affordance),
            (false, false, true) => Some(ViolationTag::Resource),
            _ => None,
        }
    }
}

fn nearest(points: impl Iterator<Item = Vec3>, from: Vec3) -> Option<Vec3> {
    let mut best: Option<(f64, Vec3)> = None;
    for p in points {
        let d = from.distance(p);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, p));
        }
    }
    best.map(|(_, p)| p)
}

fn record_class(task: &Task, rt: &RuntimeState, id: &str) -> Option<(Option<String>, Vec3)> {
    let own = rt.robots.get(&task.subject).and_then(|r| r.object_records.get(id));
    let rec = own.or_else(|| {
        let mut best = None::<&crate::knowledge::ObjectRecord>;
        for r in rt.robots.values() {
            if let Some(rec) = r.object_records.get(id) {
                if best.is_none_or(|b| rec.confidence > b.confidence) {
                    best = Some(rec);
                }
            }
        }
        best
    })?;
    Some((rec.classification.clone(), rec.position))
}

/// Closed-form boustrophedon: (length, start, end).
fn lawnmower(cx: f64, cy: f64, w: f64, h: f64, s: f64, z: f64) -> (f64, Vec3, Vec3) {
    let (long, short) = if w >= h { (w, h) } else { (h, w) };
    let n = (short / s + 1e-9).floor() + 1.0;
    let first = -short / 2.0 + (short - (n - 1.0) * s) / 2.0;
    let last = first + (n - 1.0) * s;
    let end_along = if (n as u64 - 1).is_multiple_of(2) { long / 2.0 } else { -long / 2.0 };
    let pt = |along: f64, across: f64| if w >= h { Vec3::new(cx + along, cy + across, z) } else { Vec3::new(cx + across, cy + along, z) };
    (n * long + (n - 1.0) * s, pt(-long / 2.0, first), pt(end_along, last))
}

fn move_cost(task: &Task, from: Vec3, rt: &RuntimeState, cfg: &PlannerConfig) -> (f64, Vec3) {
    let go = |p: Option<Vec3>| p.map_or((0.0, from), |p| (from.distance(p), p));
    match (task.action, task.target.as_ref()) {
        (ActionKind::Undock, _) => (0.0, from),
        (ActionKind::Dock, _) => {
            let home = rt.home_stations.get(&task.subject).and_then(|h| rt.stations.get(h)).map(|p| p.position);
            go(home.or_else(|| nearest(rt.stations.values().map(|p| p.position), from)))
        }
        (ActionKind::Survey, target) => {
            let (cx, cy, w, h) = match target {
                Some(TargetRef::Region(r)) => (r.center[0], r.center[1], r.width, r.height),
                _ => (from.x, from.y, cfg.default_survey_side, cfg.default_survey_side),
            };
            let (len, start, end) = lawnmower(cx, cy, w, h, cfg.survey_lane_spacing, from.z);
            (from.distance(start) + len, end)
        }
        (action, Some(target)) => {
            let p = match target {
                TargetRef::Object { id } => record_class(task, rt, id).map(|(_, p)| p),
                TargetRef::Class { name } => nearest(
                    rt.robots
                        .values()
                        .flat_map(|r| r.object_records.values())
                        .filter(|r| r.classification.as_deref() == Some(name))
                        .map(|r| r.position),
                    from,
                ),
                TargetRef::Region(r) => Some(Vec3::new(r.center[0], r.center[1], from.z)),
                TargetRef::Robot { id } => rt.robots.get(id).map(|r| r.pose.position),
                TargetRef::Station { id } => rt.stations.get(id).map(|p| p.position),
            };
            let (mut d, end) = go(p);
            if action == ActionKind::Observe && p.is_some() {
                let n = cfg.inspection_points as f64;
                d += 2.0 * n * cfg.inspection_radius * (PI / n).sin();
            }
            (d, end)
        }
        (_, None) => (0.0, from),
    }
}

/// Labels every task of a mission. References are assumed valid.
pub fn label_mission(mission: &Mission, kb: &KnowledgeBase, rt: &RuntimeState, cfg: &PlannerConfig) -> MissionLabel {
    let mut state: std::collections::BTreeMap<&str, (Vec3, f64)> =
        rt.robots.iter().map(|(id, r)| (id.as_str(), (r.pose.position, r.battery))).collect();
    let tasks = mission
        .tasks()
        .iter()
        .map(|task| {
            let capability = closure(kb, &task.subject).contains(&task.action);
            let class = match &task.target {
                Some(TargetRef::Class { name }) => Some(name.clone()),
                Some(TargetRef::Object { id }) => record_class(task, rt, id).and_then(|(c, _)| c),
                _ => None,
            };
            let affordance = !ActionKind::AFFORDABLE.contains(&task.action)
                || class.is_none_or(|c| affords(kb, &c, task.action));
            let resource = match state.get_mut(task.subject.as_str()) {
                Some((pos, battery)) => {
                    let (d, end) = move_cost(task, *pos, rt, cfg);
                    *battery -= d * cfg.drain_per_meter;
                    *pos = end;
                    *battery >= cfg.battery_floor
                }
                None => false,
            };
            TaskChecks { capability, affordance, resource }
        })
        .collect();
    MissionLabel { tasks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mission::parse_mission;

    #[test]
    fn fixture_closures() {
        let kb = fixtures::knowledge_base();
        assert_eq!(closure(&kb, "beta"), kb.capability_closure("beta").unwrap());
        assert!(!closure(&kb, "alpha").contains(&ActionKind::Manipulate));
        assert!(closure(&kb, "nobody").is_empty());
    }

    #[test]
    fn lawnmower_closed_form() {
        let (len, start, end) = lawnmower(0.0, 0.0, 40.0, 10.0, 5.0, 0.0);
        assert!((len - 130.0).abs() < 1e-9);
        assert_eq!(start, Vec3::new(-20.0, -5.0, 0.0));
        assert_eq!(end, Vec3::new(20.0, 5.0, 0.0));
    }

    #[test]
    fn labels() {
        let (kb, rt, cfg) = (fixtures::knowledge_base(), fixtures::runtime_state(), PlannerConfig::default());
        let m = parse_mission("mission m normal\nalpha manipulate class cube\n").unwrap();
        assert_eq!(label_mission(&m, &kb, &rt, &cfg).tag(), Some(ViolationTag::Capability));
        let m = parse_mission("mission m normal\nbeta observe class cylinder\n").unwrap();
        let l = label_mission(&m, &kb, &rt, &cfg);
        assert_eq!(l.tag(), Some(ViolationTag::Affordance));
        assert!(l.feasible_in(PlannerMode::Kg));
        assert!(!l.feasible_in(PlannerMode::Full));
    }
}
