use super::{ClassDocument, Edge, Node};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PatchOp {
    AddNode { node: Node },
    RemoveNode { id: String },
    AddEdge { edge: Edge },
    RemoveEdge { edge: Edge },
    SetClass { class: ClassDocument },
    RemoveClass { name: String },
}

/// A batch of store edits applied all-or-nothing. `version` must be exactly
/// one past the store's current version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgePatch {
    pub version: u64,
    pub ops: Vec<PatchOp>,
}

impl KnowledgePatch {
    pub fn parse(text: &str) -> Result<Self, super::KnowledgeError> {
        serde_json::from_str(text).map_err(|e| super::KnowledgeError::Parse(e.to_string()))
    }
}
