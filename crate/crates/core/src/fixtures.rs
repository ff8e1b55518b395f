//! The bundled two-vehicle harbour scenario and pieces of it.

use crate::knowledge::{ClassDocument, KnowledgeBase, KnowledgeGraph, KnowledgePatch, PatchOp, RuntimeState, Taxonomy};
use crate::scenario::Scenario;

pub const TWO_AUV_JSON: &str = include_str!("../fixtures/two_auv.json");

pub fn two_auv() -> Scenario {
    Scenario::from_json(TWO_AUV_JSON).expect("bundled scenario is valid")
}

pub fn knowledge_graph() -> KnowledgeGraph {
    two_auv().knowledge.graph
}

pub fn taxonomy() -> Taxonomy {
    two_auv().knowledge.taxonomy
}

pub fn knowledge_base() -> KnowledgeBase {
    two_auv().knowledge
}

/// Runtime state at t = 0 (no object records yet).
pub fn runtime_state() -> RuntimeState {
    two_auv().world().expect("bundled scenario builds").runtime_state()
}

/// A composite class: a sphere float on a cylindrical mooring.
pub fn composite_class() -> ClassDocument {
    ClassDocument {
        name: "buoy_mooring".into(),
        primitives: vec!["sphere".into(), "cylinder".into()],
        affordances: vec!["observe".into(), "touch".into()],
    }
}

/// Patch adding [`composite_class`] at the given store version.
pub fn composite_class_patch(version: u64) -> KnowledgePatch {
    KnowledgePatch { version, ops: vec![PatchOp::SetClass { class: composite_class() }] }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_taxonomy_has_five_single_primitive_classes() {
        let t = taxonomy();
        assert_eq!(t.classes().len(), 5);
        assert!(t.classes().iter().all(|c| c.primitives.len() == 1));
    }

    #[test]
    fn composite_patch_applies() {
        let mut store = crate::knowledge::KnowledgeStore::new(knowledge_base());
        store.apply_patch(&composite_class_patch(1)).unwrap();
        store.refresh();
        let snap = store.snapshot();
        let class = snap.taxonomy.class("buoy_mooring").unwrap();
        assert_eq!(class.primitives.len(), 2);
    }
}
