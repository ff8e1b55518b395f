#![allow(dead_code, clippy::needless_range_loop, clippy::needless_borrows_for_generic_args)]

use abyssal_core::knowledge::{Edge, GraphDocument, Node, NodeKind, Relation};
use abyssal_core::ActionKind;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn node(id: String, kind: NodeKind) -> Node {
    Node::new(id, kind)
}

/// Random well-formed capability graphs of at most 50 nodes.
pub fn graph() -> impl Strategy<Value = GraphDocument> {
    (1usize..4, 1usize..12, 1usize..7, proptest::sample::subsequence(ActionKind::ALL.to_vec(), 1..=8))
        .prop_flat_map(|(robots, devices, caps, actions)| {
            let n_actions = actions.len();
            (
                Just((robots, devices, caps, actions)),
                proptest::collection::vec(any::<bool>(), devices),
                proptest::collection::vec(proptest::collection::vec(any::<bool>(), devices), robots),
                proptest::collection::vec(proptest::collection::vec(any::<bool>(), caps), devices),
                proptest::collection::vec(proptest::collection::vec(0u8..4, n_actions), caps),
            )
        })
        .prop_map(|((robots, devices, caps, actions), is_sensor, mounts, provides, links)| {
            let mut nodes = Vec::new();
            let mut edges = Vec::new();
            let robot_id = |i: usize| format!("r{i}");
            let dev_id = |i: usize| format!("d{i}");
            let cap_id = |i: usize| format!("c{i}");
            for r in 0..robots {
                nodes.push(node(robot_id(r), NodeKind::Robot));
            }
            for d in 0..devices {
                nodes.push(node(dev_id(d), if is_sensor[d] { NodeKind::Sensor } else { NodeKind::Actuator }));
            }
            for c in 0..caps {
                nodes.push(node(cap_id(c), NodeKind::Capability));
            }
            for a in &actions {
                nodes.push(node(a.as_str().to_string(), NodeKind::Action));
            }
            for r in 0..robots {
                for d in 0..devices {
                    if mounts[r][d] {
                        let rel = if is_sensor[d] { Relation::HasSensor } else { Relation::HasActuator };
                        edges.push(Edge::new(&robot_id(r), &dev_id(d), rel));
                    }
                }
            }
            for d in 0..devices {
                for c in 0..caps {
                    if provides[d][c] {
                        edges.push(Edge::new(&dev_id(d), &cap_id(c), Relation::Provides));
                    }
                }
            }
            // 0: unrelated, 1: enables, 2: requires, 3: both.
            for c in 0..caps {
                for (ai, a) in actions.iter().enumerate() {
                    let l = links[c][ai];
                    if l & 1 == 1 {
                        edges.push(Edge::new(&cap_id(c), a.as_str(), Relation::Enables));
                    }
                    if l & 2 == 2 {
                        edges.push(Edge::new(a.as_str(), &cap_id(c), Relation::Requires));
                    }
                }
            }
            GraphDocument { nodes, edges }
        })
}

/// Reachability over an adjacency list, written independently of the library.
pub fn reference_closure(doc: &GraphDocument, robot: &str) -> Vec<ActionKind> {
    let mut out_edges: BTreeMap<&str, Vec<(&str, Relation)>> = BTreeMap::new();
    for e in &doc.edges {
        out_edges.entry(e.from.as_str()).or_default().push((e.to.as_str(), e.relation));
    }
    let next = |from: &str, rel: Relation| -> Vec<String> {
        out_edges
            .get(from)
            .map(|v| v.iter().filter(|(_, r)| *r == rel).map(|(t, _)| t.to_string()).collect())
            .unwrap_or_default()
    };
    let mut caps = Vec::new();
    for dev in next(robot, Relation::HasSensor).into_iter().chain(next(robot, Relation::HasActuator)) {
        for c in next(&dev, Relation::Provides) {
            if !caps.contains(&c) {
                caps.push(c);
            }
        }
    }
    let mut actions = Vec::new();
    for c in &caps {
        for a in next(c, Relation::Enables) {
            let reqs = next(&a, Relation::Requires);
            if reqs.iter().all(|r| caps.contains(r)) {
                let kind: ActionKind = a.parse().unwrap();
                if !actions.contains(&kind) {
                    actions.push(kind);
                }
            }
        }
    }
    actions.sort();
    actions
}
