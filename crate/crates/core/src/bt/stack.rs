use super::{BehaviorTree, Blackboard, BtError, LeafRegistry, TickStatus};
use crate::mission::Priority;

#[derive(Debug, Clone, PartialEq)]
pub struct StackEntry {
    pub plan_id: String,
    pub tree: BehaviorTree,
    pub priority: Priority,
    arrival: u64,
}

impl StackEntry {
    pub fn arrival(&self) -> u64 {
        self.arrival
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub plan_id: String,
    pub status: TickStatus,
    /// True when the entry finished and left the stack.
    pub popped: bool,
}

/// Plans ordered by priority, then arrival. Only the first entry runs; the
/// others keep their tree state untouched until they are on top again.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BtStack {
    entries: Vec<StackEntry>,
    next_arrival: u64,
}

impl BtStack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[StackEntry] {
        &self.entries
    }

    pub fn active(&self) -> Option<&StackEntry> {
        self.entries.first()
    }

    pub fn contains(&self, plan_id: &str) -> bool {
        self.entries.iter().any(|e| e.plan_id == plan_id)
    }

    pub fn get(&self, plan_id: &str) -> Option<&StackEntry> {
        self.entries.iter().find(|e| e.plan_id == plan_id)
    }

    /// Inserts a plan. Returns true when it displaces the executing entry.
    pub fn push(&mut self, plan_id: &str, tree: BehaviorTree, priority: Priority) -> Result<bool, BtError> {
        if self.contains(plan_id) {
            return Err(BtError::DuplicatePlan(plan_id.to_string()));
        }
        let arrival = self.next_arrival;
        self.next_arrival += 1;
        let pos = self.entries.iter().position(|e| e.priority < priority).unwrap_or(self.entries.len());
        self.entries.insert(pos, StackEntry { plan_id: plan_id.to_string(), tree, priority, arrival });
        Ok(pos == 0 && self.entries.len() > 1)
    }

    pub fn remove(&mut self, plan_id: &str) -> Option<StackEntry> {
        let pos = self.entries.iter().position(|e| e.plan_id == plan_id)?;
        Some(self.entries.remove(pos))
    }

    /// Ticks the first entry once; a finished entry is popped.
    pub fn step(&mut self, bb: &mut Blackboard, registry: &LeafRegistry) -> Result<StepOutcome, BtError> {
        let entry = self.entries.first_mut().ok_or(BtError::EmptyStack)?;
        let status = entry.tree.tick(bb, registry)?;
        let plan_id = entry.plan_id.clone();
        let popped = status != TickStatus::Running;
        if popped {
            self.entries.remove(0);
        }
        Ok(StepOutcome { plan_id, status, popped })
    }
}
