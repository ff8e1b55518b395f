//! Behavior trees with memory, a leaf registry and a priority stack.

mod blackboard;
mod node;
mod schema;
mod stack;

pub use blackboard::Blackboard;
pub use node::{tick, BehaviorTree, BtNode, GuardSite, Params};
pub use schema::BT_SCHEMA;
pub use stack::{BtStack, StackEntry, StepOutcome};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TickStatus {
    Success,
    Failure,
    Running,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BtError {
    #[error("unknown leaf `{0}`")]
    UnknownLeaf(String),
    #[error("plan `{0}` is already on the stack")]
    DuplicatePlan(String),
    #[error("behavior stack is empty")]
    EmptyStack,
    #[error("malformed tree: {0}")]
    Schema(String),
}

pub type ConditionFn = Box<dyn Fn(&Params, &mut Blackboard) -> bool + Send + Sync>;
pub type ActionFn = Box<dyn Fn(&Params, &mut serde_json::Value, &mut Blackboard) -> TickStatus + Send + Sync>;

/// Named condition predicates and action leaves.
#[derive(Default)]
pub struct LeafRegistry {
    conditions: BTreeMap<String, ConditionFn>,
    actions: BTreeMap<String, ActionFn>,
}

impl LeafRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn condition<F>(&mut self, id: &str, f: F) -> &mut Self
    where
        F: Fn(&Params, &mut Blackboard) -> bool + Send + Sync + 'static,
    {
        self.conditions.insert(id.to_string(), Box::new(f));
        self
    }

    pub fn action<F>(&mut self, id: &str, f: F) -> &mut Self
    where
        F: Fn(&Params, &mut serde_json::Value, &mut Blackboard) -> TickStatus + Send + Sync + 'static,
    {
        self.actions.insert(id.to_string(), Box::new(f));
        self
    }

    pub fn get_condition(&self, id: &str) -> Option<&ConditionFn> {
        self.conditions.get(id)
    }

    pub fn get_action(&self, id: &str) -> Option<&ActionFn> {
        self.actions.get(id)
    }

    pub fn condition_ids(&self) -> impl Iterator<Item = &str> {
        self.conditions.keys().map(String::as_str)
    }

    pub fn action_ids(&self) -> impl Iterator<Item = &str> {
        self.actions.keys().map(String::as_str)
    }

    /// First leaf id in `tree` with no registered implementation.
    pub fn check(&self, tree: &BehaviorTree) -> Result<(), BtError> {
        let mut missing = None;
        tree.root.visit(&mut |n| {
            if missing.is_some() {
                return;
            }
            match n {
                BtNode::Condition { id, .. } if !self.conditions.contains_key(id) => missing = Some(id.clone()),
                BtNode::Monitor { watcher, .. } if !self.conditions.contains_key(watcher) => missing = Some(watcher.clone()),
                BtNode::Action { id, .. } if !self.actions.contains_key(id) => missing = Some(id.clone()),
                _ => {}
            }
        });
        missing.map_or(Ok(()), |id| Err(BtError::UnknownLeaf(id)))
    }
}
