use super::validate::{dock_station, resolve_target_class, survey_region};
use super::{generate_survey_path, validate_mission, PlanError, PlannerConfig};
use crate::bt::{BehaviorTree, BtNode, Params};
use crate::geometry::Vec3;
use crate::knowledge::{KnowledgeBase, NodeKind, RuntimeState, Scalar};
use crate::mission::{Mission, Priority, TargetRef, Task};
use crate::ActionKind;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Required leaves of a task tree and the (guard, action) orderings it must respect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub action: ActionKind,
    pub required: &'static [&'static str],
    pub guards: &'static [(&'static str, &'static str)],
}

pub const TEMPLATES: [Template; 8] = [
    Template {
        action: ActionKind::Observe,
        required: &["battery_above", "navigate_to", "target_in_view", "circumnavigate", "record_observation"],
        guards: &[
            ("battery_above", "navigate_to"),
            ("target_in_view", "circumnavigate"),
            ("target_in_view", "record_observation"),
        ],
    },
    Template {
        action: ActionKind::Touch,
        required: &["battery_above", "navigate_to", "target_in_reach", "touch"],
        guards: &[("battery_above", "navigate_to"), ("target_in_reach", "touch")],
    },
    Template {
        action: ActionKind::Manipulate,
        required: &["battery_above", "navigate_to", "target_in_reach", "grasp"],
        guards: &[("battery_above", "navigate_to"), ("target_in_reach", "grasp")],
    },
    Template {
        action: ActionKind::Survey,
        required: &["battery_above", "detect_objects", "follow_path"],
        guards: &[("battery_above", "follow_path")],
    },
    Template {
        action: ActionKind::Navigate,
        required: &["battery_above", "navigate_to"],
        guards: &[("battery_above", "navigate_to")],
    },
    Template {
        action: ActionKind::Dock,
        required: &["navigate_to", "dock_in_range", "align", "dock"],
        guards: &[("dock_in_range", "align"), ("dock_in_range", "dock")],
    },
    Template {
        action: ActionKind::Undock,
        required: &["is_docked", "undock"],
        guards: &[("is_docked", "undock")],
    },
    Template {
        action: ActionKind::Communicate,
        required: &["navigate_to", "vlc_connected", "exchange_data"],
        guards: &[("vlc_connected", "exchange_data")],
    },
];

pub fn template(action: ActionKind) -> &'static Template {
    TEMPLATES.iter().find(|t| t.action == action).expect("one template per action")
}

pub fn template_by_name(name: &str) -> Result<&'static Template, PlanError> {
    let action: ActionKind = name.parse().map_err(|_| PlanError::TemplateMissing(name.to_string()))?;
    Ok(template(action))
}

fn params(v: Value) -> Params {
    match v {
        Value::Object(m) => m.into_iter().collect(),
        _ => Params::new(),
    }
}

fn cond(id: &str, p: Value) -> BtNode {
    BtNode::condition(id, params(p))
}

fn act(id: &str, p: Value) -> BtNode {
    BtNode::action(id, params(p))
}

/// Target key/value understood by the object-facing leaves.
fn object_binding(task: &Task) -> Result<Value, PlanError> {
    match &task.target {
        Some(TargetRef::Object { id }) => Ok(json!({ "object": id })),
        Some(TargetRef::Class { name }) => Ok(json!({ "class": name })),
        _ => Err(PlanError::BindError(format!("`{}` needs an object or class target", task.action))),
    }
}

fn merged(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

fn point_in_front(rt: &RuntimeState, station: &str, distance: f64) -> Result<Vec3, PlanError> {
    let pose = rt.stations.get(station).ok_or_else(|| PlanError::BindError(format!("no pose for station `{station}`")))?;
    Ok(pose.position + pose.boresight().scale(distance))
}

/// Manipulator reach from the robot's actuators, 0.5 m if none is recorded.
fn reach(kb: &KnowledgeBase, robot: &str) -> f64 {
    kb.graph
        .devices(robot)
        .into_iter()
        .filter_map(|d| kb.graph.node(d))
        .filter(|n| n.kind == NodeKind::Actuator)
        .find_map(|n| match n.attributes.get("reach_m") {
            Some(Scalar::Number(r)) => Some(*r),
            _ => None,
        })
        .unwrap_or(0.5)
}

const DOCK_STANDOFF: f64 = 0.5;

/// Instantiates the task's template with parameters bound from the store.
pub fn synthesize_bt(task: &Task, kb: &KnowledgeBase, rt: &RuntimeState, config: &PlannerConfig) -> Result<BehaviorTree, PlanError> {
    let robot = rt
        .robots
        .get(&task.subject)
        .ok_or_else(|| PlanError::BindError(format!("unknown robot `{}`", task.subject)))?;
    let closure = kb.capability_closure(&task.subject).map_err(|e| PlanError::BindError(e.to_string()))?;
    if !closure.contains(&task.action) {
        return Err(PlanError::BindError(format!("`{}` has no device that can {}", task.subject, task.action)));
    }
    if task.action.is_affordable() {
        if let Some(class) = resolve_target_class(task, rt) {
            if !kb.affords(&class, task.action).unwrap_or(false) {
                return Err(PlanError::BindError(format!("class `{class}` does not afford {}", task.action)));
            }
        }
    }
    let battery = cond("battery_above", json!({ "floor": config.battery_floor }));
    let root = match task.action {
        ActionKind::Observe => {
            let target = object_binding(task)?;
            BtNode::sequence(vec![
                battery,
                act("navigate_to", merged(target.clone(), json!({ "stop_distance": config.inspection_radius }))),
                cond("target_in_view", target.clone()),
                act(
                    "circumnavigate",
                    merged(target.clone(), json!({ "radius": config.inspection_radius, "points": config.inspection_points })),
                ),
                act("record_observation", target),
            ])
        }
        ActionKind::Touch | ActionKind::Manipulate => {
            let target = object_binding(task)?;
            let reach = reach(kb, &task.subject);
            let leaf = if task.action == ActionKind::Touch { "touch" } else { "grasp" };
            BtNode::sequence(vec![
                battery,
                act("navigate_to", merged(target.clone(), json!({ "stop_distance": reach * 0.5, "match_depth": true }))),
                cond("target_in_reach", merged(target.clone(), json!({ "reach": reach }))),
                act(leaf, target),
            ])
        }
        ActionKind::Survey => {
            let region = survey_region(task, robot.pose.position, config);
            let path = generate_survey_path(&region, config.survey_lane_spacing, robot.pose.position.z)?;
            BtNode::sequence(vec![
                battery,
                BtNode::monitor(
                    "detect_objects",
                    Params::new(),
                    act("follow_path", json!({ "path": path.waypoints, "kind": "survey" })),
                ),
            ])
        }
        ActionKind::Navigate => {
            let target = match task.target.as_ref() {
                Some(TargetRef::Object { id }) => json!({ "object": id, "stop_distance": config.approach_distance }),
                Some(TargetRef::Class { name }) => json!({ "class": name, "stop_distance": config.approach_distance }),
                Some(TargetRef::Region(r)) => {
                    json!({ "point": [r.center[0], r.center[1], robot.pose.position.z], "stop_distance": 0.0 })
                }
                Some(TargetRef::Robot { id }) => json!({ "robot": id, "stop_distance": config.approach_distance }),
                Some(TargetRef::Station { id }) => {
                    json!({ "point": point_in_front(rt, id, config.approach_distance)?, "stop_distance": 0.0 })
                }
                None => return Err(PlanError::BindError("navigate needs a target".into())),
            };
            BtNode::sequence(vec![battery, act("navigate_to", target)])
        }
        ActionKind::Dock => {
            let station = dock_station(&task.subject, robot.pose.position, rt)
                .ok_or_else(|| PlanError::BindError(format!("no station for `{}`", task.subject)))?;
            BtNode::sequence(dock_children(rt, station, &[])?)
        }
        ActionKind::Undock => BtNode::sequence(vec![cond("is_docked", json!({})), act("undock", json!({}))]),
        ActionKind::Communicate => {
            let (approach, peer) = match task.target.as_ref() {
                Some(TargetRef::Robot { id }) => {
                    (json!({ "robot": id, "stop_distance": config.approach_distance, "face": id }), id.clone())
                }
                Some(TargetRef::Station { id }) => (
                    json!({ "point": point_in_front(rt, id, config.approach_distance)?, "stop_distance": 0.0, "face": id }),
                    id.clone(),
                ),
                _ => return Err(PlanError::BindError("communicate needs a robot or station target".into())),
            };
            BtNode::sequence(vec![
                act("navigate_to", approach),
                cond("vlc_connected", json!({ "peer": peer })),
                act("exchange_data", json!({ "peer": peer })),
            ])
        }
    };
    Ok(BehaviorTree::new(root))
}

fn dock_children(rt: &RuntimeState, station: &str, between: &[BtNode]) -> Result<Vec<BtNode>, PlanError> {
    let approach = point_in_front(rt, station, DOCK_STANDOFF)?;
    let mut children = vec![
        act("navigate_to", json!({ "point": approach, "stop_distance": 0.0, "face": station })),
        cond("dock_in_range", json!({ "station": station })),
    ];
    children.extend_from_slice(between);
    children.push(act("align", json!({ "station": station })));
    children.push(act("dock", json!({ "station": station })));
    Ok(children)
}

/// Safety plan: go home, wait for a peer to collect pending handoffs, dock,
/// recharge and leave the dock again so the interrupted plan can resume.
pub fn return_to_dock_tree(robot: &str, rt: &RuntimeState, config: &PlannerConfig) -> Result<BehaviorTree, PlanError> {
    let pos = rt
        .robots
        .get(robot)
        .map(|r| r.pose.position)
        .ok_or_else(|| PlanError::BindError(format!("unknown robot `{robot}`")))?;
    let station = dock_station(robot, pos, rt).ok_or_else(|| PlanError::BindError(format!("no station for `{robot}`")))?;
    let hold = act("hold_for_handoff", json!({ "station": station, "timeout": config.handoff_timeout }));
    let mut children = dock_children(rt, station, &[hold])?;
    children.push(act("recharge", json!({ "level": config.recharge_target })));
    children.push(act("undock", json!({})));
    Ok(BehaviorTree::new(BtNode::sequence(children)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTask {
    pub task: Task,
    pub tree: BehaviorTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    pub mission_id: String,
    pub priority: Priority,
    pub tasks: Vec<PlannedTask>,
}

impl MissionPlan {
    /// One tree running the task trees in mission order.
    pub fn combined_tree(&self) -> BehaviorTree {
        BehaviorTree::new(BtNode::sequence(self.tasks.iter().map(|t| t.tree.root.clone()).collect()))
    }

    pub fn trees(&self) -> Vec<Option<BehaviorTree>> {
        self.tasks.iter().map(|t| Some(t.tree.clone())).collect()
    }
}

/// Validates under `config.mode`, then synthesizes one tree per task.
pub fn plan_mission(mission: &Mission, kb: &KnowledgeBase, rt: &RuntimeState, config: &PlannerConfig) -> Result<MissionPlan, PlanError> {
    let report = validate_mission(mission, kb, rt, config);
    if !report.feasible {
        return Err(PlanError::ValidationFailed(report));
    }
    let tasks = mission
        .tasks()
        .iter()
        .map(|task| Ok(PlannedTask { task: task.clone(), tree: synthesize_bt(task, kb, rt, config)? }))
        .collect::<Result<Vec<_>, PlanError>>()?;
    Ok(MissionPlan { mission_id: mission.id().to_string(), priority: mission.priority(), tasks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub fraction: f64,
    pub tasks: Vec<bool>,
}

fn tree_is_complete(tree: &BehaviorTree, t: &Template) -> bool {
    if !tree.root.is_well_formed() {
        return false;
    }
    let leaves = tree.root.leaf_ids();
    if !t.required.iter().all(|r| leaves.contains(r)) {
        return false;
    }
    let sites = tree.root.guard_sites();
    t.guards.iter().all(|(guard, action)| {
        sites.iter().filter(|s| s.action == *action).all(|s| s.guards.contains(guard))
    })
}

/// A task is complete when its tree exists, holds every leaf its template
/// requires and runs each guarded action only after its guard.
pub fn check_completeness(trees: &[Option<BehaviorTree>], mission: &Mission) -> CompletenessReport {
    let tasks: Vec<bool> = mission
        .tasks()
        .iter()
        .enumerate()
        .map(|(i, task)| {
            trees
                .get(i)
                .and_then(Option::as_ref)
                .is_some_and(|tree| tree_is_complete(tree, template(task.action)))
        })
        .collect();
    let fraction = if tasks.is_empty() { 1.0 } else { tasks.iter().filter(|c| **c).count() as f64 / tasks.len() as f64 };
    CompletenessReport { fraction, tasks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mission::parse_mission;

    fn synth(text: &str) -> (Mission, Result<MissionPlan, PlanError>) {
        let m = parse_mission(text).unwrap();
        let plan = plan_mission(&m, &fixtures::knowledge_base(), &fixtures::runtime_state(), &PlannerConfig::default());
        (m, plan)
    }

    fn shape(node: &BtNode) -> Vec<String> {
        match node {
            BtNode::Sequence { children, .. } => children.iter().map(|c| match c {
                BtNode::Condition { id, .. } => format!("cond:{id}"),
                BtNode::Action { id, .. } => format!("act:{id}"),
                BtNode::Monitor { watcher, child, .. } => format!("monitor:{watcher}:{}", shape_leaf(child)),
                _ => "composite".into(),
            }).collect(),
            _ => vec![],
        }
    }

    fn shape_leaf(n: &BtNode) -> String {
        match n {
            BtNode::Action { id, .. } => id.clone(),
            _ => "?".into(),
        }
    }

    #[test]
    fn observe_template_shape() {
        let (_, plan) = synth("mission m normal\nbeta observe class cube\n");
        let plan = plan.unwrap();
        assert_eq!(
            shape(&plan.tasks[0].tree.root),
            ["cond:battery_above", "act:navigate_to", "cond:target_in_view", "act:circumnavigate", "act:record_observation"]
        );
    }

    #[test]
    fn survey_and_dock() {
        let (m, plan) = synth("mission m normal\nalpha survey region 25 0 30 16\nalpha dock\n");
        let plan = plan.unwrap();
        assert_eq!(plan.tasks.len(), 2);
        assert_eq!(shape(&plan.tasks[0].tree.root), ["cond:battery_above", "monitor:detect_objects:follow_path"]);
        assert_eq!(
            shape(&plan.tasks[1].tree.root),
            ["act:navigate_to", "cond:dock_in_range", "act:align", "act:dock"]
        );
        assert_eq!(check_completeness(&plan.trees(), &m).fraction, 1.0);
    }

    #[test]
    fn infeasible_mission_is_not_planned() {
        let (_, plan) = synth("mission m normal\nalpha manipulate class cube\n");
        assert!(matches!(plan, Err(PlanError::ValidationFailed(_))));
    }

    #[test]
    fn bind_error_without_manipulator() {
        let task = Task::new("alpha", ActionKind::Touch, Some(TargetRef::Class { name: "cube".into() }));
        let r = synthesize_bt(&task, &fixtures::knowledge_base(), &fixtures::runtime_state(), &PlannerConfig::default());
        assert!(matches!(r, Err(PlanError::BindError(_))));
    }

    #[test]
    fn swapped_guard_is_incomplete() {
        let m = parse_mission("mission m normal\nbeta observe class cube\n").unwrap();
        let good = synthesize_bt(&m.tasks()[0], &fixtures::knowledge_base(), &fixtures::runtime_state(), &PlannerConfig::default()).unwrap();
        let BtNode::Sequence { mut children, .. } = good.root.clone() else { panic!() };
        children.swap(2, 3);
        let swapped = BehaviorTree::new(BtNode::sequence(children));
        assert_eq!(check_completeness(&[Some(good)], &m).fraction, 1.0);
        let r = check_completeness(&[Some(swapped)], &m);
        assert_eq!(r.fraction, 0.0);
        assert_eq!(r.tasks, vec![false]);
    }

    #[test]
    fn no_trees_means_zero() {
        let m = parse_mission("mission m normal\nalpha survey\nalpha dock\nalpha undock\n").unwrap();
        assert_eq!(check_completeness(&[], &m).fraction, 0.0);
    }

    #[test]
    fn return_to_dock_covers_dock_template() {
        let t = return_to_dock_tree("alpha", &fixtures::runtime_state(), &PlannerConfig::default()).unwrap();
        assert!(tree_is_complete(&t, template(ActionKind::Dock)));
        assert_eq!(t.root.leaf_ids().last(), Some(&"undock"));
    }

    #[test]
    fn template_lookup() {
        assert_eq!(template_by_name("collect").unwrap().action, ActionKind::Manipulate);
        assert!(matches!(template_by_name("fly"), Err(PlanError::TemplateMissing(_))));
    }
}
