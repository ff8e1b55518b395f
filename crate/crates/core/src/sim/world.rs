use super::{SimError, SimParams};
use crate::geometry::{wrap_angle, Pose, Vec3};
use crate::knowledge::{ObjectRecord, Primitive, RobotRuntime, RuntimeState, SensorHealth};
use super::HandoffTask;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub pose: Pose,
    pub vlc: bool,
    pub reports_received: u32,
}

impl Station {
    /// Pose a robot occupies while docked here: in front of the station, facing it.
    pub fn dock_pose(&self, params: &SimParams) -> Pose {
        let pos = self.pose.position + self.pose.boresight().scale(params.dock_offset);
        Pose::new(pos, wrap_angle(self.pose.heading + PI))
    }

    /// Point `distance` meters in front of the station.
    pub fn approach_point(&self, distance: f64) -> Vec3 {
        self.pose.position + self.pose.boresight().scale(distance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: String,
    pub class: String,
    pub primitives: Vec<Primitive>,
    /// `None` once collected.
    pub position: Option<Vec3>,
    pub carried_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: String,
    pub pose: Pose,
    pub velocity: Vec3,
    pub battery: f64,
    pub docked_at: Option<String>,
    pub home_station: Option<String>,
    pub carried: Option<String>,
    pub has_manipulator: bool,
    pub vlc_equipped: bool,
    /// Probability that a detection reports another class's primitives.
    pub misclassification: f64,
    /// Object id -> class whose primitives this robot always reports.
    pub forced_classifications: BTreeMap<String, String>,
    pub sensor_health: BTreeMap<String, SensorHealth>,
    pub records: BTreeMap<String, ObjectRecord>,
    pub inbox: Vec<HandoffTask>,
    pub distance_travelled: f64,
    reported_battery: f64,
}

impl RobotState {
    pub fn new(id: impl Into<String>, pose: Pose, battery: f64) -> Self {
        let battery = battery.clamp(0.0, 100.0);
        RobotState {
            id: id.into(),
            pose,
            velocity: Vec3::ZERO,
            battery,
            docked_at: None,
            home_station: None,
            carried: None,
            has_manipulator: false,
            vlc_equipped: false,
            misclassification: 0.0,
            forced_classifications: BTreeMap::new(),
            sensor_health: BTreeMap::new(),
            records: BTreeMap::new(),
            inbox: Vec::new(),
            distance_travelled: 0.0,
            reported_battery: battery,
        }
    }

    pub fn is_docked(&self) -> bool {
        self.docked_at.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Command {
    SetVelocity {
        velocity: Vec3,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        heading: Option<f64>,
    },
    Hold {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        heading: Option<f64>,
    },
    Dock { station: String },
    Undock,
    Grasp { object: String },
    Release,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SimEvent {
    LowBattery { robot: String, battery: f64 },
    BatteryRecovered { robot: String, battery: f64 },
    BatteryDepleted { robot: String },
    Docked { robot: String, station: String },
    Undocked { robot: String, station: String },
    Grasped { robot: String, object: String },
    Released { robot: String, object: String },
    KnowledgeTransferred { from: String, to: String, records: usize, tasks: usize },
}

impl SimEvent {
    /// Splits the event into its kind and its payload object.
    pub fn into_parts(self) -> (String, serde_json::Value) {
        let mut value = serde_json::to_value(&self).expect("sim events serialize");
        let kind = value
            .as_object_mut()
            .and_then(|m| m.remove("kind"))
            .and_then(|k| k.as_str().map(str::to_string))
            .expect("tagged enum");
        (kind, value)
    }
}

/// Complete simulated environment.
#[derive(Debug, Clone)]
pub struct World {
    pub time: f64,
    pub params: SimParams,
    pub seed: u64,
    pub robots: BTreeMap<String, RobotState>,
    pub objects: BTreeMap<String, WorldObject>,
    pub stations: BTreeMap<String, Station>,
    /// Class name -> primitive multiset, used when a detection is corrupted.
    pub class_primitives: BTreeMap<String, Vec<Primitive>>,
    pub(crate) step_index: u64,
}

fn round_time(t: f64) -> f64 {
    (t * 1e9).round() / 1e9
}

impl World {
    pub fn new(params: SimParams, seed: u64, class_primitives: BTreeMap<String, Vec<Primitive>>) -> Result<Self, SimError> {
        params.validate()?;
        Ok(World {
            time: 0.0,
            params,
            seed,
            robots: BTreeMap::new(),
            objects: BTreeMap::new(),
            stations: BTreeMap::new(),
            class_primitives,
            step_index: 0,
        })
    }

    fn id_taken(&self, id: &str) -> bool {
        self.robots.contains_key(id) || self.stations.contains_key(id) || self.objects.contains_key(id)
    }

    pub fn add_station(&mut self, id: &str, pose: Pose, vlc: bool) -> Result<(), SimError> {
        if self.id_taken(id) {
            return Err(SimError::BadParameter(format!("duplicate id `{id}`")));
        }
        self.stations.insert(id.to_string(), Station { id: id.to_string(), pose, vlc, reports_received: 0 });
        Ok(())
    }

    pub fn add_robot(&mut self, mut robot: RobotState) -> Result<(), SimError> {
        if self.id_taken(&robot.id) {
            return Err(SimError::BadParameter(format!("duplicate id `{}`", robot.id)));
        }
        if !(0.0..=1.0).contains(&robot.misclassification) {
            return Err(SimError::BadParameter("misclassification must be within [0, 1]".into()));
        }
        if let Some(station) = &robot.docked_at {
            let st = self
                .stations
                .get(station)
                .ok_or_else(|| SimError::UnknownEntity(station.clone()))?;
            robot.pose = st.dock_pose(&self.params);
        }
        self.robots.insert(robot.id.clone(), robot);
        Ok(())
    }

    pub fn add_object(&mut self, id: &str, class: &str, position: Vec3) -> Result<(), SimError> {
        if self.id_taken(id) {
            return Err(SimError::BadParameter(format!("duplicate id `{id}`")));
        }
        let primitives = self
            .class_primitives
            .get(class)
            .cloned()
            .ok_or_else(|| SimError::UnknownEntity(class.to_string()))?;
        self.objects.insert(
            id.to_string(),
            WorldObject { id: id.to_string(), class: class.to_string(), primitives, position: Some(position), carried_by: None },
        );
        Ok(())
    }

    pub fn robot(&self, id: &str) -> Result<&RobotState, SimError> {
        self.robots.get(id).ok_or_else(|| SimError::UnknownEntity(id.to_string()))
    }

    pub fn robot_mut(&mut self, id: &str) -> Result<&mut RobotState, SimError> {
        self.robots.get_mut(id).ok_or_else(|| SimError::UnknownEntity(id.to_string()))
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Position of a robot or station.
    pub fn endpoint_pose(&self, id: &str) -> Option<Pose> {
        self.robots
            .get(id)
            .map(|r| r.pose)
            .or_else(|| self.stations.get(id).map(|s| s.pose))
    }

    /// Fault injection: overwrite a robot's battery level.
    pub fn force_battery(&mut self, robot: &str, level: f64) -> Result<(), SimError> {
        self.robot_mut(robot)?.battery = level.clamp(0.0, 100.0);
        Ok(())
    }

    pub fn check_command(&self, robot: &str, command: &Command) -> Result<(), SimError> {
        let r = self.robot(robot)?;
        let invalid = |reason: &str| SimError::InvalidCommand { robot: robot.to_string(), reason: reason.to_string() };
        match command {
            Command::SetVelocity { velocity, heading } => {
                if r.is_docked() {
                    return Err(invalid("cannot move while docked"));
                }
                let finite = [velocity.x, velocity.y, velocity.z].iter().all(|v| v.is_finite())
                    && heading.is_none_or(f64::is_finite);
                if !finite {
                    return Err(invalid("non-finite velocity"));
                }
            }
            Command::Hold { heading } => {
                if heading.is_some_and(|h| !h.is_finite()) {
                    return Err(invalid("non-finite heading"));
                }
            }
            Command::Dock { station } => {
                if r.is_docked() {
                    return Err(invalid("already docked"));
                }
                let st = self.stations.get(station).ok_or_else(|| invalid("no such station"))?;
                if r.pose.position.distance(st.pose.position) > self.params.dock_distance {
                    return Err(invalid("no station within docking distance"));
                }
            }
            Command::Undock => {
                if !r.is_docked() {
                    return Err(invalid("not docked"));
                }
            }
            Command::Grasp { object } => {
                if !r.has_manipulator {
                    return Err(invalid("robot has no manipulator"));
                }
                if r.carried.is_some() {
                    return Err(invalid("already carrying an object"));
                }
                let pos = self
                    .objects
                    .get(object)
                    .and_then(|o| o.position)
                    .ok_or_else(|| invalid("no such object in the field"))?;
                if r.pose.position.distance(pos) > self.params.grasp_distance {
                    return Err(invalid("no object within grasp distance"));
                }
            }
            Command::Release => {
                if r.carried.is_none() {
                    return Err(invalid("not carrying anything"));
                }
            }
        }
        Ok(())
    }

    /// Advances the world by `dt`. All commands are checked before anything
    /// moves; one invalid command rejects the whole step.
    pub fn step(&mut self, commands: &BTreeMap<String, Command>, dt: f64) -> Result<Vec<SimEvent>, SimError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SimError::BadParameter("dt must be positive".into()));
        }
        for (robot, command) in commands {
            self.check_command(robot, command)?;
        }
        let mut events = Vec::new();
        let params = self.params.clone();
        let ids: Vec<String> = self.robots.keys().cloned().collect();
        for id in ids {
            let command = commands.get(&id).cloned().unwrap_or(Command::Hold { heading: None });
            self.integrate_robot(&id, command, dt, &params, &mut events);
        }
        self.time = round_time(self.time + dt);
        self.step_index += 1;
        Ok(events)
    }

    fn integrate_robot(&mut self, id: &str, command: Command, dt: f64, params: &SimParams, events: &mut Vec<SimEvent>) {
        let robot = self.robots.get(id).expect("known robot").clone();
        let mut r = robot;
        if let Some(station_id) = r.docked_at.clone() {
            if command == Command::Undock {
                r.docked_at = None;
                events.push(SimEvent::Undocked { robot: id.to_string(), station: station_id });
                r.battery = (r.battery - params.drain_idle * dt).clamp(0.0, 100.0);
            } else {
                r.velocity = Vec3::ZERO;
                r.battery = (r.battery + params.recharge * dt).clamp(0.0, 100.0);
            }
        } else {
            let mut distance = 0.0;
            match command {
                Command::SetVelocity { velocity, heading } if r.battery > 0.0 => {
                    let speed = velocity.norm();
                    let v = if speed > params.max_speed { velocity.scale(params.max_speed / speed) } else { velocity };
                    let disp = v.scale(dt);
                    distance = disp.norm();
                    r.pose.position = r.pose.position + disp;
                    r.velocity = v;
                    if let Some(h) = heading {
                        r.pose.heading = wrap_angle(h);
                    } else if v.x.hypot(v.y) > 1e-9 {
                        r.pose.heading = v.y.atan2(v.x);
                    }
                }
                Command::SetVelocity { .. } => r.velocity = Vec3::ZERO,
                Command::Hold { heading } => {
                    r.velocity = Vec3::ZERO;
                    if let Some(h) = heading {
                        r.pose.heading = wrap_angle(h);
                    }
                }
                Command::Dock { station } => {
                    r.velocity = Vec3::ZERO;
                    r.docked_at = Some(station.clone());
                    events.push(SimEvent::Docked { robot: id.to_string(), station });
                }
                Command::Undock => {}
                Command::Grasp { object } => {
                    let obj = self.objects.get_mut(&object).expect("checked");
                    obj.position = None;
                    obj.carried_by = Some(id.to_string());
                    r.carried = Some(object.clone());
                    r.velocity = Vec3::ZERO;
                    events.push(SimEvent::Grasped { robot: id.to_string(), object });
                }
                Command::Release => {
                    let object = r.carried.take().expect("checked");
                    let obj = self.objects.get_mut(&object).expect("carried object exists");
                    obj.position = Some(r.pose.position);
                    obj.carried_by = None;
                    r.velocity = Vec3::ZERO;
                    events.push(SimEvent::Released { robot: id.to_string(), object });
                }
            }
            r.distance_travelled += distance;
            r.battery = (r.battery - params.drain_idle * dt - params.drain_move * distance).clamp(0.0, 100.0);
        }

        let floor = params.battery_floor;
        if r.reported_battery >= floor && r.battery < floor {
            events.push(SimEvent::LowBattery { robot: id.to_string(), battery: r.battery });
        } else if r.reported_battery < floor && r.battery >= floor {
            events.push(SimEvent::BatteryRecovered { robot: id.to_string(), battery: r.battery });
        }
        if r.reported_battery > 0.0 && r.battery <= 0.0 {
            events.push(SimEvent::BatteryDepleted { robot: id.to_string() });
        }
        r.reported_battery = r.battery;
        self.robots.insert(id.to_string(), r);
    }

    /// Projection consumed by the planner.
    pub fn runtime_state(&self) -> RuntimeState {
        RuntimeState {
            robots: self
                .robots
                .values()
                .map(|r| {
                    (
                        r.id.clone(),
                        RobotRuntime {
                            battery: r.battery,
                            pose: r.pose,
                            docked: r.is_docked(),
                            sensor_health: r.sensor_health.clone(),
                            object_records: r.records.clone(),
                        },
                    )
                })
                .collect(),
            stations: self.stations.values().map(|s| (s.id.clone(), s.pose)).collect(),
            home_stations: self
                .robots
                .values()
                .filter_map(|r| r.home_station.clone().map(|h| (r.id.clone(), h)))
                .collect(),
            declared_objects: self.objects.keys().cloned().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_world() -> World {
        let mut classes = BTreeMap::new();
        classes.insert("cube".to_string(), vec![Primitive::Cube]);
        classes.insert("cylinder".to_string(), vec![Primitive::Cylinder]);
        let mut w = World::new(SimParams::default(), 1, classes).unwrap();
        w.add_station("dock", Pose::new(Vec3::new(0.0, 0.0, -5.0), 0.0), true).unwrap();
        let mut alpha = RobotState::new("alpha", Pose::new(Vec3::new(5.0, 0.0, -5.0), 0.0), 100.0);
        alpha.vlc_equipped = true;
        w.add_robot(alpha).unwrap();
        let mut beta = RobotState::new("beta", Pose::default(), 50.0);
        beta.docked_at = Some("dock".into());
        beta.has_manipulator = true;
        w.add_robot(beta).unwrap();
        w.add_object("o1", "cube", Vec3::new(5.2, 0.0, -5.0)).unwrap();
        w
    }

    fn run(w: &mut World, seconds: f64, commands: &BTreeMap<String, Command>) {
        let steps = (seconds / w.params.dt).round() as usize;
        for _ in 0..steps {
            w.step(commands, w.params.dt).unwrap();
        }
    }

    #[test]
    fn idle_drain_over_100s() {
        let mut w = small_world();
        run(&mut w, 100.0, &BTreeMap::new());
        assert!((w.robots["alpha"].battery - 99.0).abs() < 1e-9);
        assert!((w.time - 100.0).abs() < 1e-9);
    }

    #[test]
    fn docked_recharge_over_10s() {
        let mut w = small_world();
        run(&mut w, 10.0, &BTreeMap::new());
        assert!((w.robots["beta"].battery - 60.0).abs() < 1e-9);
    }

    #[test]
    fn grasp_without_manipulator_rejected() {
        let mut w = small_world();
        let cmds = BTreeMap::from([("alpha".to_string(), Command::Grasp { object: "o1".into() })]);
        assert!(matches!(w.step(&cmds, 0.1), Err(SimError::InvalidCommand { .. })));
        assert_eq!(w.time, 0.0);
    }

    #[test]
    fn dock_requires_nearby_station() {
        let mut w = small_world();
        let cmds = BTreeMap::from([("alpha".to_string(), Command::Dock { station: "dock".into() })]);
        assert!(matches!(w.step(&cmds, 0.1), Err(SimError::InvalidCommand { .. })));
        w.robots.get_mut("alpha").unwrap().pose.position = Vec3::new(0.8, 0.0, -5.0);
        let events = w.step(&cmds, 0.1).unwrap();
        assert_eq!(events, vec![SimEvent::Docked { robot: "alpha".into(), station: "dock".into() }]);
        assert!(w.robots["alpha"].is_docked());
    }

    #[test]
    fn speed_is_clamped() {
        let mut w = small_world();
        let cmds = BTreeMap::from([(
            "alpha".to_string(),
            Command::SetVelocity { velocity: Vec3::new(3.0, 4.0, 0.0), heading: None },
        )]);
        let before = w.robots["alpha"].pose.position;
        w.step(&cmds, 0.1).unwrap();
        let moved = w.robots["alpha"].pose.position.distance(before);
        assert!((moved - 0.1).abs() < 1e-12);
        let expected = 100.0 - 0.01 * 0.1 - 0.05 * 0.1;
        assert!((w.robots["alpha"].battery - expected).abs() < 1e-12);
    }

    #[test]
    fn grasp_and_release() {
        let mut w = small_world();
        let undock = BTreeMap::from([("beta".to_string(), Command::Undock)]);
        w.step(&undock, 0.1).unwrap();
        let pos = w.robots["beta"].pose.position;
        w.objects.get_mut("o1").unwrap().position = Some(pos + Vec3::new(0.3, 0.0, 0.0));
        let grasp = BTreeMap::from([("beta".to_string(), Command::Grasp { object: "o1".into() })]);
        let ev = w.step(&grasp, 0.1).unwrap();
        assert!(ev.contains(&SimEvent::Grasped { robot: "beta".into(), object: "o1".into() }));
        assert_eq!(w.objects["o1"].position, None);
        let release = BTreeMap::from([("beta".to_string(), Command::Release)]);
        w.step(&release, 0.1).unwrap();
        assert_eq!(w.objects["o1"].position, Some(w.robots["beta"].pose.position));
    }

    #[test]
    fn low_battery_crossing_event() {
        let mut w = small_world();
        w.force_battery("alpha", 15.0).unwrap();
        let ev = w.step(&BTreeMap::new(), 0.1).unwrap();
        assert!(matches!(&ev[0], SimEvent::LowBattery { robot, .. } if robot == "alpha"));
        let ev = w.step(&BTreeMap::new(), 0.1).unwrap();
        assert!(ev.is_empty());
    }

    #[test]
    fn event_parts() {
        let (kind, payload) = SimEvent::Docked { robot: "a".into(), station: "s".into() }.into_parts();
        assert_eq!(kind, "Docked");
        assert_eq!(payload, serde_json::json!({"robot": "a", "station": "s"}));
    }
}
