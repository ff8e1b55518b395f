use super::{generate_inspection_path, generate_survey_path, PlannerConfig, PlannerMode};
use crate::geometry::Vec3;
use crate::knowledge::{KnowledgeBase, RuntimeState};
use crate::mission::{Mission, Region, TargetRef, Task};
use crate::ActionKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum TaskVerdict {
    Feasible,
    InfeasibleCapability { robot: String, action: ActionKind },
    InfeasibleAffordance { class: String, action: ActionKind },
    InfeasibleResource { detail: String },
    UnknownReference { detail: String },
}

impl TaskVerdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, TaskVerdict::Feasible)
    }

    /// Short name of the check that produced this verdict.
    pub fn check(&self) -> &'static str {
        match self {
            TaskVerdict::Feasible => "none",
            TaskVerdict::InfeasibleCapability { .. } => "capability",
            TaskVerdict::InfeasibleAffordance { .. } => "affordance",
            TaskVerdict::InfeasibleResource { .. } => "resource",
            TaskVerdict::UnknownReference { .. } => "reference",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mission_id: String,
    pub mode: PlannerMode,
    pub tasks: Vec<TaskVerdict>,
    pub feasible: bool,
}

impl ValidationReport {
    pub fn first_failure(&self) -> Option<(usize, &TaskVerdict)> {
        self.tasks.iter().enumerate().find(|(_, v)| !v.is_feasible())
    }
}

/// Where a robot is expected to be and how much charge it should have left
/// after the tasks projected so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub position: Vec3,
    pub battery: f64,
}

fn unknown(detail: String) -> TaskVerdict {
    TaskVerdict::UnknownReference { detail }
}

fn check_references(task: &Task, kb: &KnowledgeBase, rt: &RuntimeState) -> Result<(), TaskVerdict> {
    if !kb.graph.is_robot(&task.subject) || !rt.robots.contains_key(&task.subject) {
        return Err(unknown(format!("robot `{}`", task.subject)));
    }
    match &task.target {
        Some(TargetRef::Object { id }) if !rt.knows_object(id) => Err(unknown(format!("object `{id}`"))),
        Some(TargetRef::Class { name }) if kb.taxonomy.class(name).is_none() => Err(unknown(format!("class `{name}`"))),
        Some(TargetRef::Robot { id }) if !kb.graph.is_robot(id) || !rt.robots.contains_key(id) => {
            Err(unknown(format!("robot `{id}`")))
        }
        Some(TargetRef::Station { id }) if !rt.stations.contains_key(id) => Err(unknown(format!("station `{id}`"))),
        _ if task.action == ActionKind::Dock && dock_station(&task.subject, Vec3::ZERO, rt).is_none() => {
            Err(unknown(format!("no station for `{}` to dock at", task.subject)))
        }
        _ => Ok(()),
    }
}

/// Home station if the robot has one, else the station nearest to `from`.
pub(crate) fn dock_station<'a>(robot: &str, from: Vec3, rt: &'a RuntimeState) -> Option<&'a str> {
    if let Some(home) = rt.home_stations.get(robot) {
        if rt.stations.contains_key(home) {
            return Some(home);
        }
    }
    rt.stations
        .iter()
        .min_by(|a, b| a.1.position.distance(from).total_cmp(&b.1.position.distance(from)))
        .map(|(id, _)| id.as_str())
}

/// Class the task's target is believed to belong to. `None` when the target
/// is not an object, or the object's class is unknown.
pub fn resolve_target_class(task: &Task, rt: &RuntimeState) -> Option<String> {
    match &task.target {
        Some(TargetRef::Class { name }) => Some(name.clone()),
        Some(TargetRef::Object { id }) => rt.record_for(&task.subject, id).and_then(|r| r.classification.clone()),
        _ => None,
    }
}

/// Believed position of the task's target as seen from `from`.
pub(crate) fn target_position(task: &Task, from: Vec3, rt: &RuntimeState) -> Option<Vec3> {
    match task.target.as_ref()? {
        TargetRef::Object { id } => rt.record_for(&task.subject, id).map(|r| r.position),
        TargetRef::Class { name } => rt
            .positions_of_class(name)
            .into_iter()
            .min_by(|a, b| a.distance(from).total_cmp(&b.distance(from))),
        TargetRef::Region(r) => Some(Vec3::new(r.center[0], r.center[1], from.z)),
        TargetRef::Robot { id } => rt.robots.get(id).map(|r| r.pose.position),
        TargetRef::Station { id } => rt.stations.get(id).map(|p| p.position),
    }
}

pub(crate) fn survey_region(task: &Task, from: Vec3, config: &PlannerConfig) -> Region {
    match &task.target {
        Some(TargetRef::Region(r)) => *r,
        _ => Region::new(from.x, from.y, config.default_survey_side, config.default_survey_side),
    }
}

/// Distance the task is expected to cover and where it leaves the robot.
/// Straight lines stand in for paths that are not known yet.
pub fn project_task(task: &Task, from: Vec3, rt: &RuntimeState, config: &PlannerConfig) -> (f64, Vec3) {
    match task.action {
        ActionKind::Undock => (0.0, from),
        ActionKind::Dock => match dock_station(&task.subject, from, rt).and_then(|s| rt.stations.get(s)) {
            Some(p) => (from.distance(p.position), p.position),
            None => (0.0, from),
        },
        ActionKind::Survey => {
            let region = survey_region(task, from, config);
            match generate_survey_path(&region, config.survey_lane_spacing, from.z) {
                Ok(path) => (from.distance(path.start()) + path.length(), path.end()),
                Err(_) => (0.0, from),
            }
        }
        _ => {
            let Some(target) = target_position(task, from, rt) else { return (0.0, from) };
            let mut distance = from.distance(target);
            if task.action == ActionKind::Observe {
                if let Ok(loop_path) = generate_inspection_path(target, config.inspection_radius, config.inspection_points) {
                    distance += loop_path.length();
                }
            }
            (distance, target)
        }
    }
}

/// Verdict for one task, advancing `state` by the task's projected cost.
pub fn validate_task(
    task: &Task,
    state: &mut Projection,
    kb: &KnowledgeBase,
    rt: &RuntimeState,
    config: &PlannerConfig,
) -> TaskVerdict {
    if let Err(v) = check_references(task, kb, rt) {
        return v;
    }
    let (distance, end) = project_task(task, state.position, rt, config);
    state.battery -= distance * config.drain_per_meter;
    state.position = end;

    if config.mode.checks_capability() {
        let closure = kb.capability_closure(&task.subject).unwrap_or_default();
        if !closure.contains(&task.action) {
            return TaskVerdict::InfeasibleCapability { robot: task.subject.clone(), action: task.action };
        }
    }
    if config.mode.checks_affordance() && task.action.is_affordable() {
        if let Some(class) = resolve_target_class(task, rt) {
            if !kb.affords(&class, task.action).unwrap_or(false) {
                return TaskVerdict::InfeasibleAffordance { class, action: task.action };
            }
        }
    }
    if state.battery < config.battery_floor {
        return TaskVerdict::InfeasibleResource {
            detail: format!(
                "projected battery {:.2}% for `{}` falls below the {:.0}% floor",
                state.battery, task.subject, config.battery_floor
            ),
        };
    }
    TaskVerdict::Feasible
}

/// Validates every task in order. Each robot's projection carries over from
/// its previous task in the mission.
pub fn validate_mission(mission: &Mission, kb: &KnowledgeBase, rt: &RuntimeState, config: &PlannerConfig) -> ValidationReport {
    let mut projections: std::collections::BTreeMap<String, Projection> = rt
        .robots
        .iter()
        .map(|(id, r)| (id.clone(), Projection { position: r.pose.position, battery: r.battery }))
        .collect();
    let mut tasks = Vec::with_capacity(mission.tasks().len());
    for task in mission.tasks() {
        let verdict = match projections.get_mut(&task.subject) {
            Some(state) => validate_task(task, state, kb, rt, config),
            None => unknown(format!("robot `{}`", task.subject)),
        };
        tasks.push(verdict);
    }
    let feasible = tasks.iter().all(TaskVerdict::is_feasible);
    ValidationReport { mission_id: mission.id().to_string(), mode: config.mode, tasks, feasible }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mission::parse_mission;

    fn check(text: &str, mode: PlannerMode) -> ValidationReport {
        let (kb, rt) = (fixtures::knowledge_base(), fixtures::runtime_state());
        let m = parse_mission(text).unwrap();
        validate_mission(&m, &kb, &rt, &PlannerConfig::default().with_mode(mode))
    }

    #[test]
    fn beta_manipulates_cube() {
        let r = check("mission m normal\nbeta manipulate class cube\n", PlannerMode::Full);
        assert!(r.feasible, "{r:?}");
    }

    #[test]
    fn alpha_cannot_manipulate() {
        let r = check("mission m normal\nalpha manipulate class cube\n", PlannerMode::Full);
        assert_eq!(r.tasks[0], TaskVerdict::InfeasibleCapability { robot: "alpha".into(), action: ActionKind::Manipulate });
    }

    #[test]
    fn cylinder_is_not_observable() {
        let text = "mission m normal\nbeta observe class cylinder\n";
        let r = check(text, PlannerMode::Full);
        assert_eq!(r.tasks[0], TaskVerdict::InfeasibleAffordance { class: "cylinder".into(), action: ActionKind::Observe });
        assert!(check(text, PlannerMode::Kg).feasible);
    }

    #[test]
    fn state_only_skips_capability() {
        let r = check("mission m normal\nalpha manipulate class cube\n", PlannerMode::State);
        assert!(r.feasible);
    }

    #[test]
    fn unknown_robot_in_every_mode() {
        for mode in PlannerMode::ALL {
            let r = check("mission m normal\ngamma survey\n", mode);
            assert_eq!(r.tasks[0].check(), "reference");
        }
        let r = check("mission m normal\nbeta communicate robot gamma\n", PlannerMode::Full);
        assert_eq!(r.tasks[0].check(), "reference");
    }

    #[test]
    fn long_trip_fails_resource() {
        let r = check("mission m normal\nalpha navigate region 3000 0 10 10\n", PlannerMode::Full);
        assert_eq!(r.tasks[0].check(), "resource");
        let r = check("mission m normal\nalpha navigate region 3000 0 10 10\n", PlannerMode::State);
        assert_eq!(r.tasks[0].check(), "resource");
    }

    #[test]
    fn capability_cited_before_resource() {
        let r = check("mission m normal\nalpha touch class cube\nalpha navigate region 3000 0 10 10\n", PlannerMode::Full);
        assert_eq!(r.tasks[0].check(), "capability");
        assert_eq!(r.tasks[1].check(), "resource");
        assert_eq!(r.first_failure().unwrap().0, 0);
    }

    #[test]
    fn fixture_survey_mission_is_feasible() {
        let text = &fixtures::two_auv().document.missions[0].text;
        assert!(check(text, PlannerMode::Full).feasible);
    }
}
