//! Leaf implementations for the mission templates.
//!
//! Leaves never touch the world. The engine writes the robot's view of the
//! world into its blackboard before each tick (see [`keys`]); leaves answer
//! with a motion command under [`keys::COMMAND`] and side requests appended
//! to [`keys::EFFECTS`].

use abyssal_core::bt::{Blackboard, LeafRegistry, Params, TickStatus};
use abyssal_core::geometry::{off_boresight, wrap_angle, Pose, Vec3};
use abyssal_core::knowledge::ObjectRecord;
use abyssal_core::planner::generate_inspection_path;
use abyssal_core::sim::{Command, Detection, LinkState, VlcLinkStatus};
use serde_json::{json, Value};
use std::collections::BTreeMap;

/// Blackboard keys shared between the engine and the leaves.
pub mod keys {
    pub const ROBOT: &str = "robot";
    pub const PLAN: &str = "plan";
    pub const TIME: &str = "time";
    pub const DT: &str = "dt";
    pub const MAX_SPEED: &str = "max_speed";
    pub const DOCK_DISTANCE: &str = "dock_distance";
    pub const SENSOR_RANGE: &str = "sensor_range";
    pub const FOV_DEG: &str = "fov_deg";
    pub const VLC_RANGE: &str = "vlc_range";
    /// Seconds a leaf waits for a VLC link before giving up.
    pub const LINK_TIMEOUT: &str = "link_timeout";
    pub const POSE: &str = "pose";
    pub const BATTERY: &str = "battery";
    pub const DOCKED_AT: &str = "docked_at";
    pub const CARRIED: &str = "carried";
    /// Station id -> pose.
    pub const STATIONS: &str = "stations";
    /// Other robot id -> pose.
    pub const ROBOTS: &str = "robots";
    /// Object id -> this robot's record.
    pub const RECORDS: &str = "records";
    /// Object id -> best record in the fleet, this robot's own first.
    pub const KNOWN: &str = "known";
    /// This step's sensor reading.
    pub const DETECTIONS: &str = "detections";
    /// Peer id -> VLC link status.
    pub const LINKS: &str = "links";
    /// Peer id -> "pending" | "in_progress" | "complete" | "failed".
    pub const TRANSFERS: &str = "transfers";
    /// True when this robot holds records a peer should follow up.
    pub const HANDOFF_PENDING: &str = "handoff_pending";
    /// Set by the engine when a peer has pulled this robot's handoff.
    pub const HANDOFF_COLLECTED: &str = "handoff_collected";
    pub const COMMAND: &str = "command";
    pub const EFFECTS: &str = "effects";
}

/// Every leaf id the registry provides, conditions first.
pub const CONDITION_IDS: [&str; 7] =
    ["battery_above", "is_docked", "dock_in_range", "target_in_view", "target_in_reach", "vlc_connected", "detect_objects"];
pub const ACTION_IDS: [&str; 13] = [
    "navigate_to",
    "follow_path",
    "circumnavigate",
    "record_observation",
    "touch",
    "grasp",
    "align",
    "dock",
    "undock",
    "recharge",
    "exchange_data",
    "hold_for_handoff",
    "release",
];

const ARRIVE_TOL: f64 = 1e-6;
const ALIGN_TOL: f64 = 0.02;

fn command(bb: &mut Blackboard, c: Command) {
    bb.set(keys::COMMAND, c);
}

fn hold(bb: &mut Blackboard, heading: Option<f64>) {
    command(bb, Command::Hold { heading });
}

fn effect(bb: &mut Blackboard, e: Value) {
    let mut effects: Vec<Value> = bb.get(keys::EFFECTS).unwrap_or_default();
    effects.push(e);
    bb.set(keys::EFFECTS, effects);
}

fn emit(bb: &mut Blackboard, kind: &str, mut payload: Value) {
    payload["robot"] = json!(bb.str(keys::ROBOT).unwrap_or_default());
    effect(bb, json!({ "effect": "event", "kind": kind, "payload": payload }));
}

fn pose(bb: &Blackboard) -> Pose {
    bb.get(keys::POSE).unwrap_or_default()
}

fn docked(bb: &Blackboard) -> bool {
    bb.raw(keys::DOCKED_AT).is_some_and(|v| !v.is_null())
}

fn time(bb: &Blackboard) -> f64 {
    bb.f64(keys::TIME).unwrap_or(0.0)
}

fn known(bb: &Blackboard) -> BTreeMap<String, ObjectRecord> {
    bb.get(keys::KNOWN).unwrap_or_default()
}

fn str_param<'a>(p: &'a Params, key: &str) -> Option<&'a str> {
    p.get(key).and_then(Value::as_str)
}

fn num_param(p: &Params, key: &str, default: f64) -> f64 {
    p.get(key).and_then(Value::as_f64).unwrap_or(default)
}

/// Position of a robot or station as the blackboard knows it.
fn endpoint(bb: &Blackboard, id: &str) -> Option<Vec3> {
    let stations: BTreeMap<String, Pose> = bb.get(keys::STATIONS).unwrap_or_default();
    let robots: BTreeMap<String, Pose> = bb.get(keys::ROBOTS).unwrap_or_default();
    stations.get(id).or_else(|| robots.get(id)).map(|p| p.position)
}

/// Object id a target binding refers to: the object itself, or the nearest
/// believed instance of the class.
fn target_object(p: &Params, bb: &Blackboard) -> Option<String> {
    if let Some(id) = str_param(p, "object") {
        return Some(id.to_string());
    }
    let class = str_param(p, "class")?;
    let here = pose(bb).position;
    known(bb)
        .into_values()
        .filter(|r| r.classification.as_deref() == Some(class))
        .min_by(|a, b| a.position.distance(here).total_cmp(&b.position.distance(here)))
        .map(|r| r.object_id)
}

fn target_position(p: &Params, bb: &Blackboard) -> Option<Vec3> {
    if let Some(point) = p.get("point") {
        return serde_json::from_value(point.clone()).ok();
    }
    if let Some(robot) = str_param(p, "robot") {
        return endpoint(bb, robot);
    }
    let id = target_object(p, bb)?;
    known(bb).get(&id).map(|r| r.position)
}

fn bearing(from: Vec3, to: Vec3) -> f64 {
    from.bearing_to(to)
}

fn aligned(heading: f64, wanted: f64) -> bool {
    wrap_angle(heading - wanted).abs() <= ALIGN_TOL
}

/// One step toward `goal`, stopping `stop` meters short. Motion stays at the
/// current depth unless `match_depth`.
fn drive(bb: &Blackboard, goal: Vec3, stop: f64, match_depth: bool) -> Option<Command> {
    let here = pose(bb).position;
    let goal = if match_depth { goal } else { goal.with_z(here.z) };
    let delta = goal - here;
    let dist = delta.norm();
    if dist <= stop + ARRIVE_TOL {
        return None;
    }
    let dt = bb.f64(keys::DT).unwrap_or(0.1);
    let travel = (bb.f64(keys::MAX_SPEED).unwrap_or(1.0) * dt).min(dist - stop);
    Some(Command::SetVelocity { velocity: delta.scale(travel / (dist * dt)), heading: None })
}

fn link(bb: &Blackboard, peer: &str) -> Option<VlcLinkStatus> {
    let links: BTreeMap<String, VlcLinkStatus> = bb.get(keys::LINKS).unwrap_or_default();
    links.get(peer).copied()
}

fn link_connected(bb: &Blackboard, peer: &str) -> bool {
    link(bb, peer).is_some_and(|l| l.state == LinkState::Connected)
}

fn navigate_to(p: &Params, memory: &mut Value, bb: &mut Blackboard) -> TickStatus {
    let Some(target) = target_position(p, bb) else { return TickStatus::Failure };
    if docked(bb) {
        command(bb, Command::Undock);
        return TickStatus::Running;
    }
    let stop = num_param(p, "stop_distance", 0.0);
    let match_depth = p.get("match_depth").and_then(Value::as_bool).unwrap_or(false);
    if let Some(c) = drive(bb, target, stop, match_depth) {
        command(bb, c);
        return TickStatus::Running;
    }
    let Some(face) = str_param(p, "face").map(str::to_string) else {
        hold(bb, None);
        return TickStatus::Success;
    };
    let here = pose(bb);
    let Some(face_at) = endpoint(bb, &face) else { return TickStatus::Failure };
    let wanted = bearing(here.position, face_at);
    if !aligned(here.heading, wanted) {
        hold(bb, Some(wanted));
        return TickStatus::Running;
    }
    hold(bb, Some(wanted));
    // In position: wait for the optical link to come up, for a while.
    if link(bb, &face).is_none() || link_connected(bb, &face) {
        return TickStatus::Success;
    }
    let since = memory.get("waiting_since").and_then(Value::as_f64).unwrap_or_else(|| time(bb));
    memory["waiting_since"] = json!(since);
    if time(bb) - since >= bb.f64(keys::LINK_TIMEOUT).unwrap_or(0.0) {
        TickStatus::Success
    } else {
        TickStatus::Running
    }
}

fn waypoints(p: &Params) -> Option<Vec<Vec3>> {
    serde_json::from_value(p.get("path")?.clone()).ok()
}

/// Advances along `path` from memory index `i`; `face` overrides the heading.
fn follow(bb: &mut Blackboard, memory: &mut Value, path: &[Vec3], face: Option<Vec3>) -> TickStatus {
    let here = pose(bb).position;
    let mut i = memory.get("i").and_then(Value::as_u64).unwrap_or(0) as usize;
    while i < path.len() && drive(bb, path[i], 0.0, false).is_none() {
        i += 1;
    }
    memory["i"] = json!(i);
    let heading = face.map(|c| bearing(here, c));
    if i == path.len() {
        hold(bb, heading);
        return TickStatus::Success;
    }
    match drive(bb, path[i], 0.0, false) {
        Some(Command::SetVelocity { velocity, .. }) => command(bb, Command::SetVelocity { velocity, heading }),
        _ => hold(bb, heading),
    }
    TickStatus::Running
}

fn follow_path(p: &Params, memory: &mut Value, bb: &mut Blackboard) -> TickStatus {
    let Some(path) = waypoints(p) else { return TickStatus::Failure };
    if path.is_empty() {
        return TickStatus::Failure;
    }
    if docked(bb) {
        command(bb, Command::Undock);
        return TickStatus::Running;
    }
    if memory.is_null() {
        *memory = json!({ "i": 0 });
        if str_param(p, "kind") == Some("survey") {
            let length = abyssal_core::geometry::polyline_length(&path);
            let plan = bb.str(keys::PLAN).unwrap_or_default().to_string();
            emit(bb, "SurveyStarted", json!({ "plan": plan, "waypoints": path.len(), "length": length }));
        }
    }
    follow(bb, memory, &path, None)
}

fn circumnavigate(p: &Params, memory: &mut Value, bb: &mut Blackboard) -> TickStatus {
    if memory.is_null() {
        let Some(object) = target_object(p, bb) else { return TickStatus::Failure };
        let Some(center) = known(bb).get(&object).map(|r| r.position) else { return TickStatus::Failure };
        let radius = num_param(p, "radius", 3.0);
        let points = num_param(p, "points", 16.0) as usize;
        let Ok(path) = generate_inspection_path(center.with_z(pose(bb).position.z), radius, points) else {
            return TickStatus::Failure;
        };
        *memory = json!({ "i": 0, "object": object, "center": center, "path": path.waypoints });
        emit(bb, "InspectionStarted", json!({ "object": object, "radius": radius, "points": points }));
    }
    let path: Vec<Vec3> = serde_json::from_value(memory["path"].clone()).unwrap_or_default();
    let center: Vec3 = serde_json::from_value(memory["center"].clone()).unwrap_or_default();
    if docked(bb) {
        command(bb, Command::Undock);
        return TickStatus::Running;
    }
    follow(bb, memory, &path, Some(center))
}

fn record_observation(p: &Params, _: &mut Value, bb: &mut Blackboard) -> TickStatus {
    let Some(object) = target_object(p, bb) else { return TickStatus::Failure };
    let detections: Vec<Detection> = bb.get(keys::DETECTIONS).unwrap_or_default();
    match detections.into_iter().find(|d| d.object_id == object) {
        Some(d) => {
            effect(bb, json!({ "effect": "observe", "detection": d }));
            hold(bb, None);
            TickStatus::Success
        }
        None => TickStatus::Failure,
    }
}

fn touch(p: &Params, _: &mut Value, bb: &mut Blackboard) -> TickStatus {
    let Some(object) = target_object(p, bb) else { return TickStatus::Failure };
    emit(bb, "Touched", json!({ "object": object }));
    hold(bb, None);
    TickStatus::Success
}

fn grasp(p: &Params, memory: &mut Value, bb: &mut Blackboard) -> TickStatus {
    let Some(object) = target_object(p, bb) else { return TickStatus::Failure };
    if bb.str(keys::CARRIED) == Some(object.as_str()) {
        return TickStatus::Success;
    }
    if memory.get("sent").is_some() {
        return TickStatus::Failure;
    }
    *memory = json!({ "sent": true });
    command(bb, Command::Grasp { object });
    TickStatus::Running
}

fn release(_: &Params, memory: &mut Value, bb: &mut Blackboard) -> TickStatus {
    if bb.str(keys::CARRIED).is_none() {
        return if memory.is_null() { TickStatus::Failure } else { TickStatus::Success };
    }
    *memory = json!({ "sent": true });
    command(bb, Command::Release);
    TickStatus::Running
}

fn align(p: &Params, _: &mut Value, bb: &mut Blackboard) -> TickStatus {
    let Some(at) = str_param(p, "station").and_then(|s| endpoint(bb, s)) else { return TickStatus::Failure };
    let here = pose(bb);
    let wanted = bearing(here.position, at);
    hold(bb, Some(wanted));
    if aligned(here.heading, wanted) {
        TickStatus::Success
    } else {
        TickStatus::Running
    }
}

fn dock(p: &Params, memory: &mut Value, bb: &mut Blackboard) -> TickStatus {
    let Some(station) = str_param(p, "station") else { return TickStatus::Failure };
    if bb.str(keys::DOCKED_AT) == Some(station) {
        return TickStatus::Success;
    }
    if memory.get("sent").is_some() {
        return TickStatus::Failure;
    }
    *memory = json!({ "sent": true });
    command(bb, Command::Dock { station: station.to_string() });
    TickStatus::Running
}

fn undock(_: &Params, _: &mut Value, bb: &mut Blackboard) -> TickStatus {
    if docked(bb) {
        command(bb, Command::Undock);
        TickStatus::Running
    } else {
        TickStatus::Success
    }
}

fn recharge(p: &Params, _: &mut Value, bb: &mut Blackboard) -> TickStatus {
    if !docked(bb) {
        return TickStatus::Failure;
    }
    hold(bb, None);
    if bb.f64(keys::BATTERY).unwrap_or(0.0) >= num_param(p, "level", 95.0) {
        TickStatus::Success
    } else {
        TickStatus::Running
    }
}

fn exchange_data(p: &Params, memory: &mut Value, bb: &mut Blackboard) -> TickStatus {
    let Some(peer) = str_param(p, "peer").map(str::to_string) else { return TickStatus::Failure };
    let mut transfers: BTreeMap<String, String> = bb.get(keys::TRANSFERS).unwrap_or_default();
    hold(bb, endpoint(bb, &peer).map(|at| bearing(pose(bb).position, at)));
    if memory.is_null() {
        *memory = json!({ "started": true });
        transfers.insert(peer.clone(), "pending".into());
        bb.set(keys::TRANSFERS, transfers);
        effect(bb, json!({ "effect": "transfer", "peer": peer }));
        return TickStatus::Running;
    }
    match transfers.get(&peer).map(String::as_str) {
        Some("complete") => TickStatus::Success,
        Some("failed") | None => TickStatus::Failure,
        _ => TickStatus::Running,
    }
}

fn hold_for_handoff(p: &Params, memory: &mut Value, bb: &mut Blackboard) -> TickStatus {
    let now = time(bb);
    if memory.is_null() {
        bb.remove(keys::HANDOFF_COLLECTED);
        if !bb.flag(keys::HANDOFF_PENDING) {
            return TickStatus::Success;
        }
        *memory = json!({ "since": now });
    }
    if bb.flag(keys::HANDOFF_COLLECTED) {
        return TickStatus::Success;
    }
    let since = memory["since"].as_f64().unwrap_or(now);
    if now - since >= num_param(p, "timeout", 60.0) {
        return TickStatus::Success;
    }
    // Face the nearest peer in optical range, else the station.
    let here = pose(bb).position;
    let range = bb.f64(keys::VLC_RANGE).unwrap_or(10.0);
    let robots: BTreeMap<String, Pose> = bb.get(keys::ROBOTS).unwrap_or_default();
    let peer = robots
        .values()
        .map(|r| r.position)
        .filter(|q| q.distance(here) < range)
        .min_by(|a, b| a.distance(here).total_cmp(&b.distance(here)));
    let face = peer.or_else(|| str_param(p, "station").and_then(|s| endpoint(bb, s)));
    hold(bb, face.map(|q| bearing(here, q)));
    TickStatus::Running
}

fn target_in_view(p: &Params, bb: &mut Blackboard) -> bool {
    let Some(at) = target_position(p, bb) else { return false };
    let here = pose(bb);
    let range = bb.f64(keys::SENSOR_RANGE).unwrap_or(8.0);
    let half_fov = bb.f64(keys::FOV_DEG).unwrap_or(90.0).to_radians() / 2.0;
    here.position.distance(at) <= range && off_boresight(&here, at) <= half_fov + 1e-9
}

fn target_in_reach(p: &Params, bb: &mut Blackboard) -> bool {
    let Some(at) = target_position(p, bb) else { return false };
    pose(bb).position.distance(at) <= num_param(p, "reach", 0.5) + ARRIVE_TOL
}

fn dock_in_range(p: &Params, bb: &mut Blackboard) -> bool {
    let Some(at) = str_param(p, "station").and_then(|s| endpoint(bb, s)) else { return false };
    pose(bb).position.distance(at) <= bb.f64(keys::DOCK_DISTANCE).unwrap_or(1.0)
}

pub fn registry() -> LeafRegistry {
    let mut r = LeafRegistry::new();
    r.condition("battery_above", |p, bb| bb.f64(keys::BATTERY).unwrap_or(0.0) >= num_param(p, "floor", 0.0))
        .condition("is_docked", |_, bb| docked(bb))
        .condition("dock_in_range", dock_in_range)
        .condition("target_in_view", target_in_view)
        .condition("target_in_reach", target_in_reach)
        .condition("vlc_connected", |p, bb| str_param(p, "peer").is_some_and(|peer| link_connected(bb, peer)))
        .condition("detect_objects", |_, bb| {
            effect(bb, json!({ "effect": "detect" }));
            true
        })
        .action("navigate_to", navigate_to)
        .action("follow_path", follow_path)
        .action("circumnavigate", circumnavigate)
        .action("record_observation", record_observation)
        .action("touch", touch)
        .action("grasp", grasp)
        .action("release", release)
        .action("align", align)
        .action("dock", dock)
        .action("undock", undock)
        .action("recharge", recharge)
        .action("exchange_data", exchange_data)
        .action("hold_for_handoff", hold_for_handoff);
    r
}
