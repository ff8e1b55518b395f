//! The deterministic mission engine.

use crate::events::{sha256_hex, EventLog, EventRecord, EVENTS_SCHEMA};
use crate::leaves::{self, keys};
use abyssal_core::bt::{BehaviorTree, Blackboard, BtError, BtStack, LeafRegistry, TickStatus};
use abyssal_core::knowledge::{merge_record, KnowledgeBase, KnowledgeStore, MergeOutcome, ObjectRecord, RecordSource};
use abyssal_core::mission::{parse_mission, Mission, Priority, TargetRef, Task};
use abyssal_core::planner::{
    context_decide, plan_mission, return_to_dock_tree, validate_mission, Context, PlanError, PlanRef, PlannerConfig,
    PlannerMode, SwitchDecision, ValidationReport, RETURN_TO_DOCK,
};
use abyssal_core::scenario::{Intervention, Scenario, ScenarioError, ScriptAction};
use abyssal_core::sim::{
    sense, vlc_link, Command, LinkState, SimError, SimEvent, Transfer, TransferError, TransferPacket,
    TransferProgress, VlcLinkStatus, World,
};
use abyssal_core::ActionKind;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Bt(#[from] BtError),
    #[error("the run has ended")]
    Finished,
}

/// Overrides applied on top of the scenario's own settings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<PlannerMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Something an operator asks of the engine. Inputs are recorded in the log
/// so a run can be reproduced from its log alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Input {
    Mission { robot: String, text: String },
    Intervention(Intervention),
    Seed(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionOutcome {
    pub accepted: bool,
    pub robot: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mission_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ValidationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub applied: bool,
    /// Sequence number of the event that records the outcome.
    pub seq: u64,
    pub knowledge_version: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mission: Option<MissionOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Scenario,
    Api,
    Script,
    Handoff,
    Deploy,
}

impl Origin {
    fn as_str(self) -> &'static str {
        match self {
            Origin::Scenario => "scenario",
            Origin::Api => "api",
            Origin::Script => "script",
            Origin::Handoff => "handoff",
            Origin::Deploy => "deploy",
        }
    }
}

#[derive(Debug, Default, Clone, Serialize)]
struct Stats {
    detections: u32,
    corrections: u32,
    missions_succeeded: u32,
    missions_failed: u32,
}

struct Executive {
    stack: BtStack,
    bb: Blackboard,
    /// Plans that have been ticked at least once.
    started: BTreeSet<String>,
    safety_plans: u32,
    force_undock: bool,
    /// Peer -> transfer status, mirrored into the blackboard.
    transfers: BTreeMap<String, String>,
    /// Objects already handed to a peer.
    handed_off: BTreeSet<String>,
    stats: Stats,
}

impl Executive {
    fn new() -> Self {
        Executive {
            stack: BtStack::new(),
            bb: Blackboard::new(),
            started: BTreeSet::new(),
            safety_plans: 0,
            force_undock: false,
            transfers: BTreeMap::new(),
            handed_off: BTreeSet::new(),
            stats: Stats::default(),
        }
    }
}

enum TransferKind {
    /// The initiator pulls the peer's records and handoff tasks.
    Pull { initiator: String, sender: String, objects: Vec<String> },
    /// The robot delivers its report to a station.
    Report { robot: String, station: String },
}

struct ActiveTransfer {
    transfer: Transfer,
    kind: TransferKind,
}

struct ScriptSlot {
    matched: usize,
    due: Option<f64>,
    fired: bool,
}

pub struct Engine {
    scenario: Scenario,
    options: EngineOptions,
    config: PlannerConfig,
    store: KnowledgeStore,
    world: World,
    registry: LeafRegistry,
    execs: BTreeMap<String, Executive>,
    log: EventLog,
    script: Vec<ScriptSlot>,
    transfers: Vec<ActiveTransfer>,
    links: BTreeMap<(String, String), VlcLinkStatus>,
    mission_ids: BTreeSet<String>,
    handoff_counter: BTreeMap<String, u32>,
    gate: u64,
    /// Events raised while ticking, held until the step's end time is known.
    deferred: Option<Vec<(String, Value)>>,
    started: bool,
    finished: bool,
}

fn round_time(t: f64) -> f64 {
    (t * 1e9).round() / 1e9
}

fn is_terminal_kind(kind: &str) -> bool {
    matches!(kind, "MissionSucceeded" | "MissionFailed" | "MissionAborted")
}

impl Engine {
    pub fn new(scenario: Scenario, options: EngineOptions) -> Result<Self, EngineError> {
        let mut config = scenario.planner_config();
        if let Some(mode) = options.mode {
            config.mode = mode;
        }
        let mut world = scenario.world()?;
        if let Some(seed) = options.seed {
            world.seed = seed;
        }
        let execs = world.robots.keys().map(|id| (id.clone(), Executive::new())).collect();
        let script = scenario
            .document
            .script
            .iter()
            .map(|e| ScriptSlot { matched: 0, due: e.trigger.at, fired: false })
            .collect();
        let mut engine = Engine {
            store: KnowledgeStore::new(scenario.knowledge.clone()),
            scenario,
            options,
            config,
            world,
            registry: leaves::registry(),
            execs,
            log: EventLog::new(),
            script,
            transfers: Vec::new(),
            links: BTreeMap::new(),
            mission_ids: BTreeSet::new(),
            handoff_counter: BTreeMap::new(),
            gate: 0,
            deferred: None,
            started: false,
            finished: false,
        };
        let sha = sha256_hex(engine.scenario.canonical_json().as_bytes());
        let (seed, mode) = (engine.world.seed, engine.config.mode);
        engine.emit(
            "ScenarioLoaded",
            json!({
                "schema": EVENTS_SCHEMA,
                "scenario": engine.scenario.to_value(),
                "sha256": sha,
                "seed": seed,
                "mode": mode,
                "digest": sha256_hex(format!("{sha}:{seed}:{}", mode.label()).as_bytes()),
            }),
        );
        Ok(engine)
    }

    pub fn time(&self) -> f64 {
        self.world.time
    }

    pub fn step_index(&self) -> u64 {
        self.world.step_index()
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn options(&self) -> EngineOptions {
        self.options
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn store(&self) -> &KnowledgeStore {
        &self.store
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn max_time(&self) -> f64 {
        self.scenario.document.params.run.max_time
    }

    /// Plan ids on a robot's stack, highest priority first.
    pub fn plans(&self, robot: &str) -> Vec<String> {
        self.execs
            .get(robot)
            .map(|e| e.stack.entries().iter().map(|s| s.plan_id.clone()).collect())
            .unwrap_or_default()
    }

    pub fn blackboard(&self, robot: &str) -> Option<&Blackboard> {
        self.execs.get(robot).map(|e| &e.bb)
    }

    fn emit(&mut self, kind: &str, payload: Value) -> u64 {
        if let Some(buffer) = self.deferred.as_mut() {
            buffer.push((kind.to_string(), payload));
            return self.log.len() as u64 + buffer.len() as u64 - 1;
        }
        let t = self.world.time;
        let seq = self.log.append(t, kind, payload).seq;
        let record = self.log.records()[seq as usize].clone();
        self.observe_for_script(&record);
        seq
    }

    fn observe_for_script(&mut self, record: &EventRecord) {
        for (slot, entry) in self.script.iter_mut().zip(&self.scenario.document.script) {
            let Some(m) = &entry.trigger.after_event else { continue };
            if slot.due.is_none() && m.matches(&record.kind, &record.payload) {
                slot.matched += 1;
                if slot.matched == m.count {
                    slot.due = Some(round_time(record.t + entry.trigger.delay));
                }
            }
        }
    }

    // ---- missions ------------------------------------------------------

    /// Validates a mission against the planner-visible knowledge without
    /// submitting it.
    pub fn validate_text(&self, text: &str) -> Result<ValidationReport, String> {
        let mission = parse_mission(text).map_err(|e| e.to_string())?;
        Ok(validate_mission(&mission, &self.store.snapshot(), &self.world.runtime_state(), &self.config))
    }

    fn reject(&mut self, robot: &str, mission: Option<&str>, reason: &str, detail: String, report: Option<ValidationReport>) -> MissionOutcome {
        self.emit(
            "MissionRejected",
            json!({ "robot": robot, "mission": mission, "reason": reason, "detail": detail, "report": report }),
        );
        MissionOutcome {
            accepted: false,
            robot: robot.to_string(),
            mission_id: mission.map(str::to_string),
            plan_id: None,
            report,
            error: Some(detail),
        }
    }

    fn submit(&mut self, robot: &str, text: &str, origin: Origin) -> MissionOutcome {
        self.emit("MissionSubmitted", json!({ "robot": robot, "text": text, "origin": origin.as_str() }));
        let mission = match parse_mission(text) {
            Ok(m) => m,
            Err(e) => return self.reject(robot, None, "syntax", e.to_string(), None),
        };
        let id = mission.id().to_string();
        if !self.execs.contains_key(robot) {
            return self.reject(robot, Some(&id), "reference", format!("unknown robot `{robot}`"), None);
        }
        if self.mission_ids.contains(&id) {
            return self.reject(robot, Some(&id), "duplicate", format!("mission id `{id}` is already in use"), None);
        }
        let kb = self.store.snapshot();
        let rt = self.world.runtime_state();
        let report = validate_mission(&mission, &kb, &rt, &self.config);
        if let Some((i, verdict)) = report.first_failure() {
            let detail = format!("task {}: {} check failed", i + 1, verdict.check());
            let reason = verdict.check();
            return self.reject(robot, Some(&id), reason, detail, Some(report));
        }
        if let Some(other) = mission.tasks().iter().find(|t| t.subject != robot) {
            let detail = format!("task for `{}` cannot run on `{robot}`", other.subject);
            return self.reject(robot, Some(&id), "subject", detail, Some(report));
        }
        let plan = match plan_mission(&mission, &kb, &rt, &self.config) {
            Ok(p) => p,
            Err(PlanError::ValidationFailed(r)) => {
                return self.reject(robot, Some(&id), "validation", "validation failed".into(), Some(r))
            }
            Err(e) => return self.reject(robot, Some(&id), "plan", e.to_string(), Some(report)),
        };
        self.mission_ids.insert(id.clone());
        let trees: Vec<Value> = plan.tasks.iter().map(|t| t.tree.to_value()).collect();
        self.emit(
            "MissionValidated",
            json!({
                "robot": robot,
                "mission": id,
                "plan": id,
                "priority": mission.priority(),
                "report": report,
                "trees": trees,
            }),
        );
        self.offer(robot, &id, plan.combined_tree(), mission.priority());
        MissionOutcome {
            accepted: true,
            robot: robot.to_string(),
            mission_id: Some(id.clone()),
            plan_id: Some(id),
            report: Some(report),
            error: None,
        }
    }

    fn context(&self, robot: &str) -> Context {
        let r = &self.world.robots[robot];
        Context { battery: r.battery, docked: r.is_docked(), human_request: None }
    }

    fn plan_refs(&self, robot: &str) -> (Option<PlanRef>, Vec<PlanRef>) {
        let stack = &self.execs[robot].stack;
        let active = stack.active().map(|e| PlanRef::new(&e.plan_id, e.priority));
        let suspended = stack.entries().iter().skip(1).map(|e| PlanRef::new(&e.plan_id, e.priority)).collect();
        (active, suspended)
    }

    /// Offers a new plan to a robot's executive.
    fn offer(&mut self, robot: &str, plan_id: &str, tree: BehaviorTree, priority: Priority) {
        let (active, suspended) = self.plan_refs(robot);
        let candidate = PlanRef::new(plan_id, priority);
        let decision = context_decide(
            &self.context(robot),
            active.as_ref(),
            std::slice::from_ref(&candidate),
            &suspended,
            self.config.battery_floor,
        );
        let preempted = self.execs.get_mut(robot).expect("known robot").stack.push(plan_id, tree, priority);
        if decision == SwitchDecision::Override(plan_id.to_string()) {
            debug_assert_eq!(preempted, Ok(true));
            self.emit(
                "Override",
                json!({ "robot": robot, "plan": plan_id, "priority": priority, "preempted": active.map(|a| a.plan_id) }),
            );
        }
    }

    // ---- interventions -------------------------------------------------

    /// Applies an operator input at the current step boundary.
    pub fn apply_input(&mut self, input: Input) -> Ack {
        self.start();
        let digest = sha256_hex(serde_json::to_string(&input).expect("inputs serialize").as_bytes());
        self.emit("OperatorInput", json!({ "input": input, "digest": digest }));
        match input {
            Input::Mission { robot, text } => {
                let outcome = self.submit(&robot, &text, Origin::Api);
                Ack {
                    applied: outcome.accepted,
                    seq: self.log.len() as u64 - 1,
                    knowledge_version: self.store.version(),
                    error: outcome.error.clone(),
                    mission: Some(outcome),
                }
            }
            Input::Intervention(iv) => self.intervene(iv, Origin::Api),
            Input::Seed(seed) => {
                self.world.seed = seed;
                let seq = self.emit("SeedChanged", json!({ "seed": seed }));
                Ack { applied: true, seq, knowledge_version: self.store.version(), error: None, mission: None }
            }
        }
    }

    fn intervention_payload(iv: &Intervention, origin: Origin) -> Value {
        let mut v = serde_json::to_value(iv).expect("interventions serialize");
        let body = v.as_object_mut().and_then(|m| m.values_mut().next()).map(Value::take).unwrap_or(Value::Null);
        let mut payload = if body.is_object() { body } else { json!({}) };
        payload["origin"] = json!(origin.as_str());
        payload
    }

    fn intervene(&mut self, iv: Intervention, origin: Origin) -> Ack {
        match self.try_intervene(&iv, origin) {
            Ok(ack) => ack,
            Err(reason) => {
                let seq = self.emit(
                    "InterventionRejected",
                    json!({ "intervention": iv, "reason": reason, "origin": origin.as_str() }),
                );
                Ack { applied: false, seq, knowledge_version: self.store.version(), error: Some(reason), mission: None }
            }
        }
    }

    fn try_intervene(&mut self, iv: &Intervention, origin: Origin) -> Result<Ack, String> {
        let mut mission = None;
        let seq = match iv {
            Intervention::ClassifyObject { object, class } => {
                if !self.world.objects.contains_key(object) {
                    return Err(format!("unknown object `{object}`"));
                }
                if self.store.snapshot().taxonomy.class(class).is_none() {
                    return Err(format!("unknown class `{class}`"));
                }
                let holders: Vec<String> = self
                    .world
                    .robots
                    .values()
                    .filter(|r| r.records.contains_key(object))
                    .map(|r| r.id.clone())
                    .collect();
                if holders.is_empty() {
                    return Err(format!("no robot holds a record of `{object}`"));
                }
                let seq = self.emit(iv.kind(), Self::intervention_payload(iv, origin));
                for robot in holders {
                    let position = self.world.robots[&robot].records[object].position;
                    let record = ObjectRecord {
                        object_id: object.clone(),
                        position,
                        classification: Some(class.clone()),
                        confidence: 1.0,
                        source: RecordSource::Human,
                    };
                    self.merge(&robot, record, false);
                }
                seq
            }
            Intervention::DeployRobot { robot, mission: text } => {
                let Some(r) = self.world.robots.get(robot) else { return Err(format!("unknown robot `{robot}`")) };
                let docked = r.is_docked();
                let seq = self.emit(iv.kind(), Self::intervention_payload(iv, origin));
                if docked {
                    self.execs.get_mut(robot).expect("known robot").force_undock = true;
                }
                mission = Some(self.submit(robot, text, Origin::Deploy));
                seq
            }
            Intervention::PatchKnowledge { patch } => {
                let version = self.store.apply_patch(patch).map_err(|e| e.to_string())?;
                let mut payload = Self::intervention_payload(iv, origin);
                payload["version"] = json!(version);
                payload["visible_version"] = json!(self.store.visible_version());
                self.emit(iv.kind(), payload)
            }
            Intervention::AbortMission { mission: id } => {
                let Some(robot) = self.execs.iter().find(|(_, e)| e.stack.contains(id)).map(|(r, _)| r.clone()) else {
                    return Err(format!("no running plan `{id}`"));
                };
                let seq = self.emit(iv.kind(), Self::intervention_payload(iv, origin));
                let exec = self.execs.get_mut(&robot).expect("known robot");
                let was_active = exec.stack.active().is_some_and(|a| &a.plan_id == id);
                exec.stack.remove(id);
                self.emit("MissionAborted", json!({ "robot": robot, "plan": id, "reason": "operator" }));
                if was_active {
                    self.announce_resume(&robot);
                }
                seq
            }
        };
        let applied = mission.as_ref().is_none_or(|m| m.accepted);
        Ok(Ack {
            applied,
            seq,
            knowledge_version: self.store.version(),
            error: mission.as_ref().and_then(|m| m.error.clone()),
            mission,
        })
    }

    // ---- records -------------------------------------------------------

    fn classify(kb: &KnowledgeBase, primitives: &[abyssal_core::knowledge::Primitive]) -> Option<String> {
        kb.taxonomy.resolve_object_class(primitives).ok().flatten().map(str::to_string)
    }

    /// Merges a record into a robot's beliefs and reports what changed.
    fn merge(&mut self, robot: &str, record: ObjectRecord, announce_new: bool) {
        let source = record.source;
        let object = record.object_id.clone();
        let class = record.classification.clone();
        let confidence = record.confidence;
        let position = record.position;
        let r = self.world.robots.get_mut(robot).expect("known robot");
        match merge_record(&mut r.records, record) {
            MergeOutcome::Inserted if announce_new => {
                self.execs.get_mut(robot).expect("known robot").stats.detections += 1;
                self.emit(
                    "ObjectDetected",
                    json!({ "robot": robot, "object": object, "class": class, "confidence": confidence, "position": position }),
                );
            }
            MergeOutcome::Replaced(old) if old.classification != class => {
                self.execs.get_mut(robot).expect("known robot").stats.corrections += 1;
                self.emit(
                    "ClassificationCorrected",
                    json!({ "robot": robot, "object": object, "from": old.classification, "to": class, "source": source, "confidence": confidence }),
                );
            }
            _ => {}
        }
    }

    fn sensed_record(&self, d: &abyssal_core::sim::Detection) -> ObjectRecord {
        ObjectRecord {
            object_id: d.object_id.clone(),
            position: d.position,
            classification: Self::classify(&self.store.snapshot(), &d.primitives),
            confidence: d.confidence,
            source: RecordSource::SelfSensed,
        }
    }

    /// Records a peer should follow up: not confirmed by a human and below
    /// the handoff confidence.
    fn handoff_objects(&self, robot: &str) -> Vec<String> {
        let exec = &self.execs[robot];
        self.world.robots[robot]
            .records
            .values()
            .filter(|r| r.source != RecordSource::Human && r.confidence < self.config.handoff_confidence)
            .filter(|r| !exec.handed_off.contains(&r.object_id))
            .map(|r| r.object_id.clone())
            .collect()
    }

    // ---- links and transfers --------------------------------------------

    fn vlc_pairs(&self) -> Vec<(String, String)> {
        let robots: Vec<&String> = self.world.robots.values().filter(|r| r.vlc_equipped).map(|r| &r.id).collect();
        let mut pairs = Vec::new();
        for (i, a) in robots.iter().enumerate() {
            for s in self.world.stations.values().filter(|s| s.vlc) {
                pairs.push(((*a).clone(), s.id.clone()));
            }
            for b in &robots[i + 1..] {
                pairs.push(((*a).clone(), (*b).clone()));
            }
        }
        pairs
    }

    fn update_links(&mut self) {
        for (a, b) in self.vlc_pairs() {
            let Ok(status) = vlc_link(&self.world, &a, &b, &self.world.params) else { continue };
            let before = self.links.get(&(a.clone(), b.clone())).map(|s| s.state);
            if before != Some(status.state) {
                if status.state == LinkState::Connected {
                    self.emit("VlcConnected", json!({ "a": a, "b": b, "quality": status.quality, "distance": status.distance }));
                } else if before == Some(LinkState::Connected) {
                    self.emit("VlcLost", json!({ "a": a, "b": b, "state": status.state }));
                }
            }
            self.links.insert((a, b), status);
        }
    }

    fn set_transfer(&mut self, robot: &str, peer: &str, status: &str) {
        let exec = self.execs.get_mut(robot).expect("known robot");
        exec.transfers.insert(peer.to_string(), status.to_string());
        exec.bb.set(keys::TRANSFERS, &exec.transfers);
    }

    fn start_transfer(&mut self, robot: &str, peer: &str) {
        let (from, to, packet, kind) = if self.world.stations.contains_key(peer) {
            let records = self.world.robots[robot].records.values().cloned().collect();
            let packet = TransferPacket { records, tasks: vec![] };
            (robot.to_string(), peer.to_string(), packet, TransferKind::Report { robot: robot.into(), station: peer.into() })
        } else if self.world.robots.contains_key(peer) {
            let objects = self.handoff_objects(peer);
            let records = self.world.robots[peer].records.values().cloned().collect();
            let tasks = objects
                .iter()
                .map(|o| Task::new(peer, ActionKind::Observe, Some(TargetRef::Object { id: o.clone() })))
                .collect();
            let kind = TransferKind::Pull { initiator: robot.into(), sender: peer.into(), objects };
            (peer.to_string(), robot.to_string(), TransferPacket { records, tasks }, kind)
        } else {
            self.set_transfer(robot, peer, "failed");
            self.emit("TransferFailed", json!({ "from": robot, "to": peer, "reason": "unknown peer" }));
            return;
        };
        let bytes = packet.size_bytes();
        match Transfer::start(&self.world, &from, &to, packet) {
            Ok(transfer) => {
                self.set_transfer(robot, peer, "in_progress");
                self.emit("TransferStarted", json!({ "from": from, "to": to, "bytes": bytes }));
                self.transfers.push(ActiveTransfer { transfer, kind });
            }
            Err(e) => {
                self.set_transfer(robot, peer, "failed");
                self.emit("TransferFailed", json!({ "from": from, "to": to, "reason": e.to_string() }));
            }
        }
    }

    fn metrics(&self, robot: &str) -> Value {
        let r = &self.world.robots[robot];
        let exec = &self.execs[robot];
        json!({
            "records": r.records.len(),
            "classified": r.records.values().filter(|x| x.classification.is_some()).count(),
            "detections": exec.stats.detections,
            "corrections": exec.stats.corrections,
            "missions_succeeded": exec.stats.missions_succeeded,
            "missions_failed": exec.stats.missions_failed,
            "distance_m": r.distance_travelled,
            "battery": r.battery,
        })
    }

    fn advance_transfers(&mut self) -> Result<(), EngineError> {
        let dt = self.world.params.dt;
        let mut still = Vec::new();
        for mut active in std::mem::take(&mut self.transfers) {
            match active.transfer.advance(&self.world, dt) {
                Ok(TransferProgress::InProgress { .. }) => still.push(active),
                Ok(TransferProgress::Complete) => {
                    let result = active.transfer.deliver(&mut self.world)?;
                    match active.kind {
                        TransferKind::Pull { initiator, sender, objects } => {
                            let (kind, payload) = result.event.into_parts();
                            self.emit(&kind, payload);
                            self.set_transfer(&initiator, &sender, "complete");
                            let exec = self.execs.get_mut(&sender).expect("known robot");
                            exec.handed_off.extend(objects);
                            exec.bb.set(keys::HANDOFF_COLLECTED, true);
                        }
                        TransferKind::Report { robot, station } => {
                            let metrics = self.metrics(&robot);
                            self.emit(
                                "ReportDelivered",
                                json!({ "robot": robot, "station": station, "records": result.records_offered, "metrics": metrics }),
                            );
                            self.set_transfer(&robot, &station, "complete");
                        }
                    }
                }
                Err(e) => {
                    let (initiator, peer) = match &active.kind {
                        TransferKind::Pull { initiator, sender, .. } => (initiator.clone(), sender.clone()),
                        TransferKind::Report { robot, station } => (robot.clone(), station.clone()),
                    };
                    let reason = match &e {
                        TransferError::LinkLost { .. } => "link lost".to_string(),
                        other => other.to_string(),
                    };
                    self.set_transfer(&initiator, &peer, "failed");
                    self.emit(
                        "TransferFailed",
                        json!({ "from": active.transfer.from, "to": active.transfer.to, "reason": reason, "sent": active.transfer.sent() }),
                    );
                }
            }
        }
        self.transfers = still;
        Ok(())
    }

    /// Turns handed-over tasks into one follow-up mission per sender.
    fn drain_inboxes(&mut self) {
        let ids: Vec<String> = self.world.robots.keys().cloned().collect();
        for robot in ids {
            let inbox = std::mem::take(&mut self.world.robots.get_mut(&robot).expect("known robot").inbox);
            let mut by_sender: BTreeMap<String, Vec<Task>> = BTreeMap::new();
            for h in inbox {
                by_sender.entry(h.from).or_default().push(h.task);
            }
            for (from, mut tasks) in by_sender {
                let n = self.handoff_counter.entry(from.clone()).or_insert(0);
                *n += 1;
                let id = format!("handoff_{from}_{n}");
                let home = self.world.robots.get(&from).and_then(|r| r.home_station.clone());
                if let Some(station) = home {
                    tasks.push(Task::new(&robot, ActionKind::Communicate, Some(TargetRef::Station { id: station })));
                }
                let Ok(mission) = Mission::new(id, Priority::Communication, tasks) else { continue };
                self.submit(&robot, &mission.render(), Origin::Handoff);
            }
        }
    }

    // ---- the loop ------------------------------------------------------

    fn write_inputs(&mut self, robot: &str) {
        let w = &self.world;
        let r = &w.robots[robot];
        let stations: BTreeMap<&str, _> = w.stations.values().map(|s| (s.id.as_str(), s.pose)).collect();
        let others: BTreeMap<&str, _> =
            w.robots.values().filter(|o| o.id != robot).map(|o| (o.id.as_str(), o.pose)).collect();
        let mut links: BTreeMap<&str, VlcLinkStatus> = BTreeMap::new();
        for ((a, b), status) in &self.links {
            if a == robot {
                links.insert(b, *status);
            } else if b == robot {
                links.insert(a, *status);
            }
        }
        let detections = if r.is_docked() { Vec::new() } else { sense(w, robot, &w.params).detections };
        let handoff_pending = !self.handoff_objects(robot).is_empty();
        // Same choice as `RuntimeState::record_for`: own record, else the
        // most confident one.
        let mut known: BTreeMap<&String, &ObjectRecord> = r.records.iter().collect();
        for other in w.robots.values().filter(|o| o.id != robot) {
            for (id, rec) in &other.records {
                if r.records.contains_key(id) {
                    continue;
                }
                let entry = known.entry(id).or_insert(rec);
                if rec.confidence > entry.confidence {
                    *entry = rec;
                }
            }
        }
        let p = &w.params;
        let exec = self.execs.get_mut(robot).expect("known robot");
        let bb = &mut exec.bb;
        bb.set(keys::ROBOT, robot);
        bb.set(keys::TIME, w.time);
        bb.set(keys::DT, p.dt);
        bb.set(keys::MAX_SPEED, p.max_speed);
        bb.set(keys::DOCK_DISTANCE, p.dock_distance);
        bb.set(keys::SENSOR_RANGE, p.sensor_range);
        bb.set(keys::FOV_DEG, p.fov_deg);
        bb.set(keys::VLC_RANGE, p.vlc_range);
        bb.set(keys::LINK_TIMEOUT, self.config.handoff_timeout);
        bb.set(keys::POSE, r.pose);
        bb.set(keys::BATTERY, r.battery);
        bb.set(keys::DOCKED_AT, &r.docked_at);
        bb.set(keys::CARRIED, &r.carried);
        bb.set(keys::STATIONS, stations);
        bb.set(keys::ROBOTS, others);
        bb.set(keys::RECORDS, &r.records);
        bb.set(keys::KNOWN, known);
        bb.set(keys::DETECTIONS, detections);
        bb.set(keys::LINKS, links);
        bb.set(keys::TRANSFERS, &exec.transfers);
        bb.set(keys::HANDOFF_PENDING, handoff_pending);
        bb.remove(keys::COMMAND);
        bb.set(keys::EFFECTS, Vec::<Value>::new());
    }

    fn announce_resume(&mut self, robot: &str) {
        let (active, suspended) = self.plan_refs(robot);
        let Some(active) = active else { return };
        let mut all = vec![active];
        all.extend(suspended);
        let decision = context_decide(&self.context(robot), None, &[], &all, self.config.battery_floor);
        if let SwitchDecision::Resume(id) = decision {
            if self.execs[robot].started.contains(&id) {
                self.emit("Resume", json!({ "robot": robot, "plan": id }));
            }
        }
    }

    /// Ticks a robot's executive once; returns its command and effects.
    fn tick_robot(&mut self, robot: &str) -> Result<(Command, Vec<Value>), EngineError> {
        self.write_inputs(robot);
        let exec = self.execs.get_mut(robot).expect("known robot");
        let Some(active) = exec.stack.active().map(|a| a.plan_id.clone()) else {
            return Ok((Command::Hold { heading: None }, Vec::new()));
        };
        exec.bb.set(keys::PLAN, &active);
        exec.started.insert(active.clone());
        let outcome = exec.stack.step(&mut exec.bb, &self.registry)?;
        let command = exec.bb.get::<Command>(keys::COMMAND).unwrap_or(Command::Hold { heading: None });
        let effects: Vec<Value> = exec.bb.get(keys::EFFECTS).unwrap_or_default();
        if outcome.popped {
            let kind = if outcome.status == TickStatus::Success {
                exec.stats.missions_succeeded += 1;
                "MissionSucceeded"
            } else {
                exec.stats.missions_failed += 1;
                "MissionFailed"
            };
            // Effects first: they happened during the final tick.
            let effects = self.handle_effects(robot, effects);
            self.emit(kind, json!({ "robot": robot, "plan": outcome.plan_id }));
            self.announce_resume(robot);
            return Ok((command, effects));
        }
        let effects = self.handle_effects(robot, effects);
        Ok((command, effects))
    }

    /// Applies effects that need no world motion; returns the rest for after
    /// the sim step.
    fn handle_effects(&mut self, robot: &str, effects: Vec<Value>) -> Vec<Value> {
        let mut later = Vec::new();
        for e in effects {
            match e["effect"].as_str() {
                Some("event") => {
                    let kind = e["kind"].as_str().unwrap_or("Unknown").to_string();
                    self.emit(&kind, e["payload"].clone());
                }
                Some("detect") => {
                    let detections: Vec<abyssal_core::sim::Detection> =
                        self.execs[robot].bb.get(keys::DETECTIONS).unwrap_or_default();
                    for d in detections {
                        let record = self.sensed_record(&d);
                        self.merge(robot, record, true);
                    }
                }
                Some("observe") => {
                    if let Ok(d) = serde_json::from_value::<abyssal_core::sim::Detection>(e["detection"].clone()) {
                        let record = self.sensed_record(&d);
                        self.merge(robot, record, true);
                    }
                }
                _ => later.push(e),
            }
        }
        later
    }

    /// Re-checks battery state and synthesizes a return-to-dock plan when
    /// needed.
    fn decide(&mut self, robot: &str) {
        let (active, suspended) = self.plan_refs(robot);
        let decision = context_decide(&self.context(robot), active.as_ref(), &[], &suspended, self.config.battery_floor);
        if decision != SwitchDecision::Override(RETURN_TO_DOCK.to_string()) {
            return;
        }
        let exec = self.execs.get_mut(robot).expect("known robot");
        exec.safety_plans += 1;
        let plan_id = format!("{RETURN_TO_DOCK}_{robot}_{}", exec.safety_plans);
        match return_to_dock_tree(robot, &self.world.runtime_state(), &self.config) {
            Ok(tree) => {
                let exec = self.execs.get_mut(robot).expect("known robot");
                let _ = exec.stack.push(&plan_id, tree, Priority::Safety);
                let battery = self.world.robots[robot].battery;
                self.emit(
                    "Override",
                    json!({
                        "robot": robot,
                        "plan": plan_id,
                        "priority": Priority::Safety,
                        "preempted": active.map(|a| a.plan_id),
                        "reason": "battery_below_floor",
                        "battery": battery,
                    }),
                );
            }
            Err(e) => {
                self.emit("SafetyPlanUnavailable", json!({ "robot": robot, "reason": e.to_string() }));
            }
        }
    }

    /// Script entries and the refresh gate, run at the end of every step.
    fn boundary(&mut self) {
        let idx = (self.world.time / self.config.refresh_interval + 1e-9).floor() as u64;
        if idx > self.gate {
            self.gate = idx;
            if self.store.refresh() {
                self.emit("KnowledgeRefreshed", json!({ "version": self.store.visible_version() }));
            }
        }
        for i in 0..self.script.len() {
            let slot = &self.script[i];
            let due = !slot.fired && slot.due.is_some_and(|d| d <= self.world.time + 1e-9);
            if !due {
                continue;
            }
            self.script[i].fired = true;
            match self.scenario.document.script[i].action.clone() {
                ScriptAction::ForceBattery { robot, level } => {
                    if self.world.force_battery(&robot, level).is_ok() {
                        self.emit("BatteryForced", json!({ "robot": robot, "level": level }));
                    }
                }
                ScriptAction::Intervention(iv) => {
                    self.intervene(iv, Origin::Script);
                }
            }
        }
    }

    /// Initial links, the scenario's own missions and the t = 0 boundary.
    /// Deferred until the first step or input so that a run bounded at
    /// t = 0 logs nothing past `ScenarioLoaded`.
    fn start(&mut self) {
        if self.started {
            return;
        }
        self.started = true;
        self.update_links();
        for m in self.scenario.document.missions.clone() {
            self.submit(&m.robot, &m.text, Origin::Scenario);
        }
        self.boundary();
    }

    /// One full engine step of `dt` seconds.
    pub fn step(&mut self) -> Result<(), EngineError> {
        if self.finished {
            return Err(EngineError::Finished);
        }
        self.start();
        let ids: Vec<String> = self.world.robots.keys().cloned().collect();
        let mut commands = BTreeMap::new();
        let mut pending = Vec::new();
        self.deferred = Some(Vec::new());
        for id in &ids {
            let (mut command, later) = match self.tick_robot(id) {
                Ok(out) => out,
                Err(e) => {
                    self.deferred = None;
                    return Err(e);
                }
            };
            let exec = self.execs.get_mut(id).expect("known robot");
            if std::mem::take(&mut exec.force_undock) && self.world.robots[id].is_docked() {
                command = Command::Undock;
            }
            if let Err(e) = self.world.check_command(id, &command) {
                self.emit("CommandRejected", json!({ "robot": id, "command": command, "reason": e.to_string() }));
                command = Command::Hold { heading: None };
            }
            commands.insert(id.clone(), command);
            pending.push((id.clone(), later));
        }
        let dt = self.world.params.dt;
        let sim_events = self.world.step(&commands, dt);
        for (kind, payload) in self.deferred.take().unwrap_or_default() {
            self.emit(&kind, payload);
        }
        for event in sim_events? {
            if let SimEvent::Docked { robot, .. } | SimEvent::Undocked { robot, .. } = &event {
                self.execs.get_mut(robot).expect("known robot").bb.set(keys::DOCKED_AT, &self.world.robots[robot].docked_at);
            }
            let (kind, payload) = event.into_parts();
            self.emit(&kind, payload);
        }
        for (id, effects) in pending {
            for e in effects {
                match e["effect"].as_str() {
                    Some("transfer") => {
                        let peer = e["peer"].as_str().unwrap_or_default().to_string();
                        self.start_transfer(&id, &peer);
                    }
                    other => {
                        self.emit("UnknownEffect", json!({ "robot": id, "effect": other }));
                    }
                }
            }
        }
        self.advance_transfers()?;
        self.update_links();
        self.drain_inboxes();
        for id in &ids {
            self.decide(id);
        }
        self.boundary();
        Ok(())
    }

    /// Steps until simulated time reaches `t` (or the run has ended).
    pub fn run_until(&mut self, t: f64) -> Result<(), EngineError> {
        while !self.finished && self.world.time < t - 1e-9 {
            self.step()?;
        }
        Ok(())
    }

    /// Steps until `stop` holds for a new event or `max_time` passes.
    pub fn run_until_event(&mut self, max_time: f64, mut stop: impl FnMut(&EventRecord) -> bool) -> Result<bool, EngineError> {
        let mut seen = self.log.len();
        while !self.finished && self.world.time < max_time - 1e-9 {
            self.step()?;
            if self.log.since(seen).iter().any(&mut stop) {
                return Ok(true);
            }
            seen = self.log.len();
        }
        Ok(false)
    }

    /// Aborts every plan still on a stack and closes the log.
    pub fn finish(&mut self) {
        if self.finished {
            return;
        }
        let ids: Vec<String> = self.execs.keys().cloned().collect();
        for robot in ids {
            let plans = self.plans(&robot);
            for plan in plans {
                self.execs.get_mut(&robot).expect("known robot").stack.remove(&plan);
                self.emit("MissionAborted", json!({ "robot": robot, "plan": plan, "reason": "run ended" }));
            }
        }
        self.emit("RunEnded", json!({ "steps": self.world.step_index() }));
        self.finished = true;
    }

    /// Read-only view for the API and the console.
    pub fn snapshot(&self) -> Value {
        let kb = self.store.snapshot();
        let robots: BTreeMap<&str, Value> = self
            .world
            .robots
            .values()
            .map(|r| {
                let exec = &self.execs[&r.id];
                let stack: Vec<Value> = exec
                    .stack
                    .entries()
                    .iter()
                    .map(|e| json!({ "plan": e.plan_id, "priority": e.priority }))
                    .collect();
                (
                    r.id.as_str(),
                    json!({
                        "pose": r.pose,
                        "velocity": r.velocity,
                        "battery": r.battery,
                        "docked_at": r.docked_at,
                        "home_station": r.home_station,
                        "carried": r.carried,
                        "has_manipulator": r.has_manipulator,
                        "vlc_equipped": r.vlc_equipped,
                        "records": r.records,
                        "active_plan": exec.stack.active().map(|e| &e.plan_id),
                        "stack": stack,
                        "distance_travelled": r.distance_travelled,
                    }),
                )
            })
            .collect();
        let objects: BTreeMap<&str, Value> = self
            .world
            .objects
            .values()
            .map(|o| (o.id.as_str(), json!({ "position": o.position, "carried_by": o.carried_by })))
            .collect();
        let stations: BTreeMap<&str, Value> = self
            .world
            .stations
            .values()
            .map(|s| (s.id.as_str(), json!({ "pose": s.pose, "vlc": s.vlc, "reports_received": s.reports_received })))
            .collect();
        let links: Vec<Value> = self
            .links
            .iter()
            .map(|((a, b), s)| json!({ "a": a, "b": b, "state": s.state, "quality": s.quality, "distance": s.distance }))
            .collect();
        json!({
            "time": self.world.time,
            "step": self.world.step_index(),
            "seed": self.world.seed,
            "mode": self.config.mode,
            "finished": self.finished,
            "head": self.log.len(),
            "robots": robots,
            "objects": objects,
            "stations": stations,
            "links": links,
            "knowledge": {
                "version": self.store.version(),
                "visible_version": kb.version,
                "graph": kb.graph.to_document(),
                "taxonomy": kb.taxonomy.to_document(),
            },
        })
    }
}

/// True when every plan that was accepted has exactly one terminal event.
pub fn terminal_events_balanced(log: &EventLog) -> bool {
    let mut accepted: BTreeMap<String, usize> = BTreeMap::new();
    for r in log.records() {
        let plan = r.payload["plan"].as_str().unwrap_or_default().to_string();
        if r.kind == "MissionValidated" || (r.kind == "Override" && r.payload["reason"].is_string()) {
            accepted.entry(plan).or_insert(0);
        } else if is_terminal_kind(&r.kind) {
            *accepted.entry(plan).or_insert(0) += 1;
        }
    }
    accepted.values().all(|n| *n == 1)
}
