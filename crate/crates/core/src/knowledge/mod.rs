//! Knowledge store: capability graph, object taxonomy, runtime state and the
//! versioned, refresh-gated container that holds them.

mod graph;
mod patch;
mod runtime;
mod store;
mod taxonomy;

pub use graph::{Edge, GraphDocument, KnowledgeGraph, Node, NodeKind, Relation, Scalar};
pub use patch::{KnowledgePatch, PatchOp};
pub use runtime::{merge_record, MergeOutcome, ObjectRecord, RecordSource, RobotRuntime, RuntimeState, SensorHealth};
pub use store::{KnowledgeBase, KnowledgeStore};
pub use taxonomy::{canonical as canonical_primitives, ClassDocument, ObjectClass, Primitive, Taxonomy, TaxonomyDocument};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnowledgeError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("integrity error at `{element}`: {detail}")]
    Integrity { element: String, detail: String },
    #[error("unknown robot `{0}`")]
    UnknownRobot(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("ambiguous class: {0:?} share the same primitive multiset")]
    AmbiguousClass(Vec<String>),
    #[error("version conflict: store is at {current}, patch carries {got}")]
    VersionConflict { current: u64, got: u64 },
}

impl KnowledgeError {
    pub(crate) fn integrity(element: impl Into<String>, detail: impl Into<String>) -> Self {
        KnowledgeError::Integrity { element: element.into(), detail: detail.into() }
    }
}

/// Closed set of actions a robot can be asked to perform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Observe,
    Touch,
    Manipulate,
    Survey,
    Navigate,
    Dock,
    Undock,
    Communicate,
}

impl ActionKind {
    pub const ALL: [ActionKind; 8] = [
        ActionKind::Observe,
        ActionKind::Touch,
        ActionKind::Manipulate,
        ActionKind::Survey,
        ActionKind::Navigate,
        ActionKind::Dock,
        ActionKind::Undock,
        ActionKind::Communicate,
    ];

    /// Actions an object class may afford.
    pub const AFFORDABLE: [ActionKind; 3] =
        [ActionKind::Observe, ActionKind::Touch, ActionKind::Manipulate];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Observe => "observe",
            ActionKind::Touch => "touch",
            ActionKind::Manipulate => "manipulate",
            ActionKind::Survey => "survey",
            ActionKind::Navigate => "navigate",
            ActionKind::Dock => "dock",
            ActionKind::Undock => "undock",
            ActionKind::Communicate => "communicate",
        }
    }

    pub fn is_affordable(self) -> bool {
        Self::AFFORDABLE.contains(&self)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown action `{0}`")]
pub struct UnknownAction(pub String);

impl FromStr for ActionKind {
    type Err = UnknownAction;

    /// Case-insensitive; `collect` is an alias of `manipulate`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        if lower == "collect" {
            return Ok(ActionKind::Manipulate);
        }
        ActionKind::ALL
            .into_iter()
            .find(|a| a.as_str() == lower)
            .ok_or_else(|| UnknownAction(s.to_string()))
    }
}

/// Parses a JSON knowledge-graph document.
pub fn load_knowledge(document: &str) -> Result<KnowledgeGraph, KnowledgeError> {
    let doc: GraphDocument =
        serde_json::from_str(document).map_err(|e| KnowledgeError::Parse(e.to_string()))?;
    KnowledgeGraph::from_document(doc)
}

/// Parses a JSON taxonomy document.
pub fn load_taxonomy(document: &str) -> Result<Taxonomy, KnowledgeError> {
    let doc: TaxonomyDocument =
        serde_json::from_str(document).map_err(|e| KnowledgeError::Parse(e.to_string()))?;
    Taxonomy::from_document(doc)
}
