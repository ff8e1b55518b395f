use super::{
    ActionKind, GraphDocument, KnowledgeError, KnowledgeGraph, KnowledgePatch, ObjectClass,
    PatchOp, Taxonomy, TaxonomyDocument,
};
use serde::Serialize;
use std::collections::BTreeSet;
use std::sync::Arc;

/// One immutable version of the graph and taxonomy.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub graph: KnowledgeGraph,
    pub taxonomy: Taxonomy,
    pub version: u64,
}

#[derive(Serialize)]
struct BaseDocument {
    version: u64,
    graph: GraphDocument,
    taxonomy: TaxonomyDocument,
}

impl KnowledgeBase {
    pub fn new(graph: KnowledgeGraph, taxonomy: Taxonomy) -> Self {
        KnowledgeBase { graph, taxonomy, version: 0 }
    }

    pub fn capability_closure(&self, robot: &str) -> Result<BTreeSet<ActionKind>, KnowledgeError> {
        self.graph.capability_closure(robot)
    }

    pub fn affords(&self, class: &str, action: ActionKind) -> Result<bool, KnowledgeError> {
        self.taxonomy.affords(class, action)
    }

    /// Canonical serialization of the whole snapshot.
    pub fn render(&self) -> String {
        serde_json::to_string_pretty(&BaseDocument {
            version: self.version,
            graph: self.graph.to_document(),
            taxonomy: self.taxonomy.to_document(),
        })
        .expect("knowledge base serializes")
    }

    fn patched(&self, patch: &KnowledgePatch) -> Result<KnowledgeBase, KnowledgeError> {
        let mut next = self.clone();
        for op in &patch.ops {
            match op {
                PatchOp::AddNode { node } => {
                    if next.graph.nodes_mut().insert(node.id.clone(), node.clone()).is_some() {
                        return Err(KnowledgeError::integrity(&node.id, "duplicate node id"));
                    }
                }
                PatchOp::RemoveNode { id } => {
                    if next.graph.nodes_mut().remove(id).is_none() {
                        return Err(KnowledgeError::integrity(id, "no such node"));
                    }
                }
                PatchOp::AddEdge { edge } => {
                    if !next.graph.edges_mut().insert(edge.clone()) {
                        return Err(KnowledgeError::integrity(
                            format!("{} -{:?}-> {}", edge.from, edge.relation, edge.to),
                            "duplicate edge",
                        ));
                    }
                }
                PatchOp::RemoveEdge { edge } => {
                    if !next.graph.edges_mut().remove(edge) {
                        return Err(KnowledgeError::integrity(
                            format!("{} -{:?}-> {}", edge.from, edge.relation, edge.to),
                            "no such edge",
                        ));
                    }
                }
                PatchOp::SetClass { class } => {
                    next.taxonomy.upsert(ObjectClass::from_document(class.clone())?);
                }
                PatchOp::RemoveClass { name } => {
                    if !next.taxonomy.remove(name) {
                        return Err(KnowledgeError::UnknownClass(name.clone()));
                    }
                }
            }
        }
        next.graph.validate()?;
        next.version = patch.version;
        Ok(next)
    }
}

/// Single-writer store with a version gate: patches land in the committed
/// snapshot immediately but readers only see them after [`KnowledgeStore::refresh`].
#[derive(Debug, Clone)]
pub struct KnowledgeStore {
    committed: Arc<KnowledgeBase>,
    visible: Arc<KnowledgeBase>,
}

impl KnowledgeStore {
    pub fn new(base: KnowledgeBase) -> Self {
        let base = Arc::new(base);
        KnowledgeStore { committed: base.clone(), visible: base }
    }

    /// The snapshot readers query.
    pub fn snapshot(&self) -> Arc<KnowledgeBase> {
        self.visible.clone()
    }

    pub fn committed(&self) -> Arc<KnowledgeBase> {
        self.committed.clone()
    }

    pub fn version(&self) -> u64 {
        self.committed.version
    }

    pub fn visible_version(&self) -> u64 {
        self.visible.version
    }

    pub fn has_pending(&self) -> bool {
        self.committed.version != self.visible.version
    }

    pub fn apply_patch(&mut self, patch: &KnowledgePatch) -> Result<u64, KnowledgeError> {
        let current = self.committed.version;
        if patch.version != current + 1 {
            return Err(KnowledgeError::VersionConflict { current, got: patch.version });
        }
        let next = self.committed.patched(patch)?;
        self.committed = Arc::new(next);
        Ok(self.committed.version)
    }

    /// Publishes the committed snapshot. Returns true when readers now see a
    /// newer version.
    pub fn refresh(&mut self) -> bool {
        if self.has_pending() {
            self.visible = self.committed.clone();
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::knowledge::{ClassDocument, Edge, Relation};

    fn store() -> KnowledgeStore {
        KnowledgeStore::new(KnowledgeBase::new(fixtures::knowledge_graph(), fixtures::taxonomy()))
    }

    #[test]
    fn add_composite_class_bumps_version() {
        let mut s = store();
        let patch = KnowledgePatch {
            version: 1,
            ops: vec![PatchOp::SetClass {
                class: ClassDocument {
                    name: "composite_1".into(),
                    primitives: vec!["cube".into(), "sphere".into()],
                    affordances: vec!["observe".into()],
                },
            }],
        };
        assert_eq!(s.apply_patch(&patch), Ok(1));
        assert_eq!(s.version(), 1);
        assert!(s.snapshot().taxonomy.class("composite_1").is_none());
        assert!(s.refresh());
        assert!(s.snapshot().taxonomy.class("composite_1").is_some());
        assert!(!s.refresh());
    }

    #[test]
    fn dangling_removal_rejected_atomically() {
        let mut s = store();
        let before = s.committed().render();
        let patch = KnowledgePatch {
            version: 1,
            ops: vec![
                PatchOp::SetClass {
                    class: ClassDocument {
                        name: "x".into(),
                        primitives: vec!["cone".into()],
                        affordances: vec![],
                    },
                },
                PatchOp::RemoveNode { id: "manipulator".into() },
            ],
        };
        assert!(matches!(s.apply_patch(&patch), Err(KnowledgeError::Integrity { .. })));
        assert_eq!(s.version(), 0);
        assert_eq!(s.committed().render(), before);
    }

    #[test]
    fn stale_version_conflicts() {
        let mut s = store();
        let patch = KnowledgePatch { version: 0, ops: vec![] };
        assert_eq!(
            s.apply_patch(&patch),
            Err(KnowledgeError::VersionConflict { current: 0, got: 0 })
        );
        let patch = KnowledgePatch { version: 5, ops: vec![] };
        assert!(matches!(s.apply_patch(&patch), Err(KnowledgeError::VersionConflict { .. })));
    }

    #[test]
    fn removing_edge_shrinks_closure() {
        let mut s = store();
        let patch = KnowledgePatch {
            version: 1,
            ops: vec![PatchOp::RemoveEdge {
                edge: Edge::new("beta", "manipulator", Relation::HasActuator),
            }],
        };
        s.apply_patch(&patch).unwrap();
        s.refresh();
        assert!(!s.snapshot().capability_closure("beta").unwrap().contains(&ActionKind::Manipulate));
    }
}
