use super::{ActionKind, KnowledgeError};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Robot,
    Sensor,
    Actuator,
    Capability,
    Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Relation {
    HasSensor,
    HasActuator,
    Provides,
    Enables,
    Requires,
}

impl Relation {
    pub const ALL: [Relation; 5] = [
        Relation::HasSensor,
        Relation::HasActuator,
        Relation::Provides,
        Relation::Enables,
        Relation::Requires,
    ];

    /// Whether an edge of this relation may connect `from` to `to`.
    pub fn permits(self, from: NodeKind, to: NodeKind) -> bool {
        use NodeKind::*;
        match self {
            Relation::HasSensor => from == Robot && to == Sensor,
            Relation::HasActuator => from == Robot && to == Actuator,
            Relation::Provides => matches!(from, Sensor | Actuator) && to == Capability,
            Relation::Enables => from == Capability && to == Action,
            Relation::Requires => from == Action && to == Capability,
        }
    }
}

/// Scalar attribute value (`depth_limit_m`, `fov_deg`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, Scalar>,
}

impl Node {
    pub fn new(id: impl Into<String>, kind: NodeKind) -> Self {
        Node { id: id.into(), kind, attributes: BTreeMap::new() }
    }

    pub fn with_attr(mut self, key: &str, value: Scalar) -> Self {
        self.attributes.insert(key.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub relation: Relation,
}

impl Edge {
    pub fn new(from: impl Into<String>, to: impl Into<String>, relation: Relation) -> Self {
        Edge { from: from.into(), to: to.into(), relation }
    }
}

/// Serialized form of a graph. Order of nodes and edges is not significant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    #[serde(default)]
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub edges: Vec<Edge>,
}

/// Validated knowledge graph. Construct through [`KnowledgeGraph::from_document`]
/// so that referential integrity and relation kind constraints always hold.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<String, Node>,
    edges: BTreeSet<Edge>,
}

impl KnowledgeGraph {
    pub fn from_document(doc: GraphDocument) -> Result<Self, KnowledgeError> {
        let mut nodes = BTreeMap::new();
        for node in doc.nodes {
            if node.id.is_empty() {
                return Err(KnowledgeError::integrity("<empty id>", "node id must be non-empty"));
            }
            if nodes.contains_key(&node.id) {
                return Err(KnowledgeError::integrity(&node.id, "duplicate node id"));
            }
            nodes.insert(node.id.clone(), node);
        }
        let mut edges = BTreeSet::new();
        for edge in doc.edges {
            let label = format!("{} -{:?}-> {}", edge.from, edge.relation, edge.to);
            if !edges.insert(edge) {
                return Err(KnowledgeError::integrity(label, "duplicate edge"));
            }
        }
        let graph = KnowledgeGraph { nodes, edges };
        graph.validate()?;
        Ok(graph)
    }

    pub(crate) fn validate(&self) -> Result<(), KnowledgeError> {
        for node in self.nodes.values() {
            if node.kind == NodeKind::Action && node.id.parse::<ActionKind>().is_err() {
                return Err(KnowledgeError::integrity(
                    &node.id,
                    "Action node id must name an action kind",
                ));
            }
        }
        let mut action_kinds = BTreeMap::new();
        for node in self.nodes.values().filter(|n| n.kind == NodeKind::Action) {
            let kind: ActionKind = node.id.parse().expect("checked above");
            if let Some(other) = action_kinds.insert(kind, &node.id) {
                return Err(KnowledgeError::integrity(
                    &node.id,
                    format!("action kind already represented by `{other}`"),
                ));
            }
        }
        for edge in &self.edges {
            let from = self
                .nodes
                .get(&edge.from)
                .ok_or_else(|| KnowledgeError::integrity(&edge.from, "edge endpoint does not exist"))?;
            let to = self
                .nodes
                .get(&edge.to)
                .ok_or_else(|| KnowledgeError::integrity(&edge.to, "edge endpoint does not exist"))?;
            if !edge.relation.permits(from.kind, to.kind) {
                return Err(KnowledgeError::integrity(
                    format!("{} -{:?}-> {}", edge.from, edge.relation, edge.to),
                    format!("{:?} cannot connect {:?} to {:?}", edge.relation, from.kind, to.kind),
                ));
            }
        }
        Ok(())
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.iter().cloned().collect(),
        }
    }

    /// Canonical JSON rendering (nodes by id, edges sorted).
    pub fn render(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("graph serializes")
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn robots(&self) -> impl Iterator<Item = &str> {
        self.nodes_of(NodeKind::Robot)
    }

    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = &str> {
        self.nodes.values().filter(move |n| n.kind == kind).map(|n| n.id.as_str())
    }

    pub fn is_robot(&self, id: &str) -> bool {
        self.nodes.get(id).is_some_and(|n| n.kind == NodeKind::Robot)
    }

    fn targets<'a, 'b>(&'a self, from: &'b str, relation: Relation) -> impl Iterator<Item = &'a str> + use<'a, 'b> {
        self.edges
            .range(Edge::new(from, "", relation)..)
            .take_while(move |e| e.from == from)
            .filter(move |e| e.relation == relation)
            .map(|e| e.to.as_str())
    }

    /// Sensors and actuators mounted on `robot`.
    pub fn devices(&self, robot: &str) -> BTreeSet<&str> {
        self.targets(robot, Relation::HasSensor)
            .chain(self.targets(robot, Relation::HasActuator))
            .collect()
    }

    /// Capabilities provided by the devices mounted on `robot`.
    pub fn provided_capabilities(&self, robot: &str) -> BTreeSet<&str> {
        self.devices(robot)
            .into_iter()
            .flat_map(|d| self.targets(d, Relation::Provides))
            .collect()
    }

    /// Set of actions `robot` can perform: every capability an action requires
    /// is provided, and at least one provided capability enables it.
    pub fn capability_closure(&self, robot: &str) -> Result<BTreeSet<ActionKind>, KnowledgeError> {
        if !self.is_robot(robot) {
            return Err(KnowledgeError::UnknownRobot(robot.to_string()));
        }
        let provided = self.provided_capabilities(robot);
        let mut closure = BTreeSet::new();
        for cap in &provided {
            for action in self.targets(cap, Relation::Enables) {
                let kind: ActionKind = action.parse().expect("validated action node");
                if closure.contains(&kind) {
                    continue;
                }
                if self.targets(action, Relation::Requires).all(|req| provided.contains(req)) {
                    closure.insert(kind);
                }
            }
        }
        Ok(closure)
    }

    pub(crate) fn nodes_mut(&mut self) -> &mut BTreeMap<String, Node> {
        &mut self.nodes
    }

    pub(crate) fn edges_mut(&mut self) -> &mut BTreeSet<Edge> {
        &mut self.edges
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::knowledge::load_knowledge;

    #[test]
    fn fixture_robots_and_manipulator() {
        let kg = fixtures::knowledge_graph();
        let robots: Vec<_> = kg.robots().collect();
        assert_eq!(robots, vec!["alpha", "beta"]);
        assert!(kg.edges().any(|e| e.from == "beta"
            && e.to == "manipulator"
            && e.relation == Relation::HasActuator));
    }

    #[test]
    fn empty_document_is_valid() {
        let kg = load_knowledge(r#"{"nodes":[],"edges":[]}"#).unwrap();
        assert_eq!(kg.node_count(), 0);
    }

    #[test]
    fn dangling_edge_names_ghost() {
        let doc = r#"{"nodes":[{"id":"r","kind":"Robot"}],
            "edges":[{"from":"r","to":"ghost","relation":"hasSensor"}]}"#;
        match load_knowledge(doc) {
            Err(KnowledgeError::Integrity { element, .. }) => assert_eq!(element, "ghost"),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn kind_violation_rejected() {
        let doc = r#"{"nodes":[{"id":"r","kind":"Robot"},{"id":"c","kind":"Capability"}],
            "edges":[{"from":"r","to":"c","relation":"hasSensor"}]}"#;
        assert!(matches!(load_knowledge(doc), Err(KnowledgeError::Integrity { .. })));
    }

    #[test]
    fn malformed_document_is_parse_error() {
        assert!(matches!(load_knowledge("{nodes:"), Err(KnowledgeError::Parse(_))));
    }

    #[test]
    fn closure_matches_roles() {
        let kg = fixtures::knowledge_graph();
        let beta = kg.capability_closure("beta").unwrap();
        let alpha = kg.capability_closure("alpha").unwrap();
        assert!(beta.contains(&ActionKind::Manipulate));
        assert!(!alpha.contains(&ActionKind::Manipulate));
        assert!(alpha.contains(&ActionKind::Survey));
        assert!(alpha.contains(&ActionKind::Communicate));
    }

    #[test]
    fn robot_without_devices_has_empty_closure() {
        let doc = r#"{"nodes":[{"id":"bare","kind":"Robot"},{"id":"cap","kind":"Capability"},
            {"id":"observe","kind":"Action"}],
            "edges":[{"from":"cap","to":"observe","relation":"enables"}]}"#;
        let kg = load_knowledge(doc).unwrap();
        assert!(kg.capability_closure("bare").unwrap().is_empty());
        assert!(matches!(kg.capability_closure("cap"), Err(KnowledgeError::UnknownRobot(_))));
    }

    #[test]
    fn render_round_trip() {
        let kg = fixtures::knowledge_graph();
        assert_eq!(load_knowledge(&kg.render()).unwrap(), kg);
    }
}
