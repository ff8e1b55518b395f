use super::{Blackboard, BtError, LeafRegistry, TickStatus};
use serde_json::Value;
use std::collections::BTreeMap;

pub type Params = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq)]
pub enum BtNode {
    /// `cursor` is the child to tick first; it only moves past 0 while a child is Running.
    Sequence { children: Vec<BtNode>, cursor: usize },
    Fallback { children: Vec<BtNode>, cursor: usize },
    Condition { id: String, params: Params },
    Action { id: String, params: Params, memory: Value },
    /// Ticks `child` while `watcher` holds.
    Monitor { child: Box<BtNode>, watcher: String, params: Params },
}

impl BtNode {
    pub fn sequence(children: Vec<BtNode>) -> Self {
        BtNode::Sequence { children, cursor: 0 }
    }

    pub fn fallback(children: Vec<BtNode>) -> Self {
        BtNode::Fallback { children, cursor: 0 }
    }

    pub fn condition(id: &str, params: Params) -> Self {
        BtNode::Condition { id: id.to_string(), params }
    }

    pub fn action(id: &str, params: Params) -> Self {
        BtNode::Action { id: id.to_string(), params, memory: Value::Null }
    }

    pub fn monitor(watcher: &str, params: Params, child: BtNode) -> Self {
        BtNode::Monitor { child: Box::new(child), watcher: watcher.to_string(), params }
    }

    /// Clears every cursor and leaf memory below this node.
    pub fn reset(&mut self) {
        match self {
            BtNode::Sequence { children, cursor } | BtNode::Fallback { children, cursor } => {
                *cursor = 0;
                children.iter_mut().for_each(BtNode::reset);
            }
            BtNode::Action { memory, .. } => *memory = Value::Null,
            BtNode::Monitor { child, .. } => child.reset(),
            BtNode::Condition { .. } => {}
        }
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a BtNode)) {
        f(self);
        match self {
            BtNode::Sequence { children, .. } | BtNode::Fallback { children, .. } => {
                children.iter().for_each(|c| c.visit(f));
            }
            BtNode::Monitor { child, .. } => child.visit(f),
            _ => {}
        }
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    /// Leaf ids in pre-order, monitors contributing their watcher.
    pub fn leaf_ids(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |n| match n {
            BtNode::Condition { id, .. } | BtNode::Action { id, .. } => out.push(id.as_str()),
            BtNode::Monitor { watcher, .. } => out.push(watcher.as_str()),
            _ => {}
        });
        out
    }

    /// Every action leaf together with the conditions that must have
    /// succeeded before it can run.
    pub fn guard_sites(&self) -> Vec<GuardSite<'_>> {
        let mut out = Vec::new();
        collect_guards(self, &[], &mut out);
        out
    }

    pub fn is_well_formed(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |n| {
            if let BtNode::Sequence { children, cursor } | BtNode::Fallback { children, cursor } = n {
                ok &= !children.is_empty() && *cursor < children.len();
            }
        });
        ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuardSite<'a> {
    pub action: &'a str,
    pub params: &'a Params,
    pub guards: Vec<&'a str>,
}

fn collect_guards<'a>(node: &'a BtNode, seen: &[&'a str], out: &mut Vec<GuardSite<'a>>) {
    match node {
        BtNode::Sequence { children, .. } => {
            let mut local = seen.to_vec();
            for child in children {
                collect_guards(child, &local, out);
                sure_conditions(child, &mut local);
            }
        }
        BtNode::Fallback { children, .. } => children.iter().for_each(|c| collect_guards(c, seen, out)),
        BtNode::Monitor { child, .. } => collect_guards(child, seen, out),
        BtNode::Action { id, params, .. } => out.push(GuardSite { action: id, params, guards: seen.to_vec() }),
        BtNode::Condition { .. } => {}
    }
}

/// Conditions that have necessarily succeeded once `node` returns Success.
fn sure_conditions<'a>(node: &'a BtNode, out: &mut Vec<&'a str>) {
    match node {
        BtNode::Condition { id, .. } => out.push(id),
        BtNode::Sequence { children, .. } => children.iter().for_each(|c| sure_conditions(c, out)),
        _ => {}
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorTree {
    pub root: BtNode,
}

impl BehaviorTree {
    pub fn new(root: BtNode) -> Self {
        BehaviorTree { root }
    }

    pub fn reset(&mut self) {
        self.root.reset();
    }

    pub fn tick(&mut self, bb: &mut Blackboard, registry: &LeafRegistry) -> Result<TickStatus, BtError> {
        tick(&mut self.root, bb, registry)
    }
}

/// One tick of `node`. Composites remember a Running child and resume there.
pub fn tick(node: &mut BtNode, bb: &mut Blackboard, registry: &LeafRegistry) -> Result<TickStatus, BtError> {
    match node {
        BtNode::Sequence { children, cursor } => tick_composite(children, cursor, TickStatus::Success, bb, registry),
        BtNode::Fallback { children, cursor } => tick_composite(children, cursor, TickStatus::Failure, bb, registry),
        BtNode::Condition { id, params } => {
            let f = registry.get_condition(id).ok_or_else(|| BtError::UnknownLeaf(id.clone()))?;
            Ok(if f(params, bb) { TickStatus::Success } else { TickStatus::Failure })
        }
        BtNode::Action { id, params, memory } => {
            let f = registry.get_action(id).ok_or_else(|| BtError::UnknownLeaf(id.clone()))?;
            let status = f(params, memory, bb);
            if status != TickStatus::Running {
                *memory = Value::Null;
            }
            Ok(status)
        }
        BtNode::Monitor { child, watcher, params } => {
            let f = registry.get_condition(watcher).ok_or_else(|| BtError::UnknownLeaf(watcher.clone()))?;
            if !f(params, bb) {
                child.reset();
                return Ok(TickStatus::Failure);
            }
            tick(child, bb, registry)
        }
    }
}

/// `pass` is the status that moves a composite on to its next child.
fn tick_composite(
    children: &mut [BtNode],
    cursor: &mut usize,
    pass: TickStatus,
    bb: &mut Blackboard,
    registry: &LeafRegistry,
) -> Result<TickStatus, BtError> {
    if children.is_empty() {
        return Err(BtError::Schema("composite without children".into()));
    }
    while *cursor < children.len() {
        let status = tick(&mut children[*cursor], bb, registry)?;
        match status {
            TickStatus::Running => return Ok(TickStatus::Running),
            s if s == pass => *cursor += 1,
            s => {
                *cursor = 0;
                return Ok(s);
            }
        }
    }
    *cursor = 0;
    Ok(pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn fixed(status: TickStatus) -> impl Fn(&Params, &mut Value, &mut Blackboard) -> TickStatus {
        move |_, _, _| status
    }

    fn registry() -> LeafRegistry {
        let mut r = LeafRegistry::new();
        r.action("ok", fixed(TickStatus::Success))
            .action("fail", fixed(TickStatus::Failure))
            .action("run", fixed(TickStatus::Running))
            .condition("yes", |_, _| true)
            .condition("no", |_, _| false);
        r
    }

    fn act(id: &str) -> BtNode {
        BtNode::action(id, Params::new())
    }

    #[test]
    fn sequence_of_successes() {
        let mut t = BehaviorTree::new(BtNode::sequence(vec![act("ok"), act("ok")]));
        assert_eq!(t.tick(&mut Blackboard::new(), &registry()).unwrap(), TickStatus::Success);
    }

    #[test]
    fn fallback_takes_first_success() {
        let mut t = BehaviorTree::new(BtNode::fallback(vec![act("fail"), act("ok")]));
        assert_eq!(t.tick(&mut Blackboard::new(), &registry()).unwrap(), TickStatus::Success);
    }

    #[test]
    fn sequence_resumes_at_running_child() {
        let first = Arc::new(AtomicUsize::new(0));
        let second = Arc::new(AtomicUsize::new(0));
        let mut r = registry();
        let f = first.clone();
        r.action("probe1", move |_, _, _| {
            f.fetch_add(1, Ordering::SeqCst);
            TickStatus::Success
        });
        let s = second.clone();
        r.action("probe2", move |_, _, _| {
            s.fetch_add(1, Ordering::SeqCst);
            TickStatus::Running
        });
        let mut t = BehaviorTree::new(BtNode::sequence(vec![act("probe1"), act("probe2")]));
        let mut bb = Blackboard::new();
        assert_eq!(t.tick(&mut bb, &r).unwrap(), TickStatus::Running);
        assert_eq!(t.tick(&mut bb, &r).unwrap(), TickStatus::Running);
        assert_eq!(first.load(Ordering::SeqCst), 1);
        assert_eq!(second.load(Ordering::SeqCst), 2);

        t.reset();
        t.tick(&mut bb, &r).unwrap();
        assert_eq!(first.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn reset_is_idempotent() {
        let fresh = BehaviorTree::new(BtNode::sequence(vec![act("ok"), act("run")]));
        let mut t = fresh.clone();
        t.reset();
        assert_eq!(t, fresh);
        t.tick(&mut Blackboard::new(), &registry()).unwrap();
        assert_ne!(t, fresh);
        t.reset();
        let once = t.clone();
        t.reset();
        assert_eq!(t, once);
        assert_eq!(t, fresh);
    }

    #[test]
    fn monitor_fails_when_watcher_fails() {
        let r = registry();
        let mut t = BehaviorTree::new(BtNode::monitor("yes", Params::new(), act("run")));
        assert_eq!(t.tick(&mut Blackboard::new(), &r).unwrap(), TickStatus::Running);
        let mut t = BehaviorTree::new(BtNode::monitor("no", Params::new(), act("run")));
        assert_eq!(t.tick(&mut Blackboard::new(), &r).unwrap(), TickStatus::Failure);
    }

    #[test]
    fn unknown_leaf() {
        let mut t = BehaviorTree::new(BtNode::sequence(vec![act("ok"), act("nope")]));
        assert_eq!(t.tick(&mut Blackboard::new(), &registry()), Err(BtError::UnknownLeaf("nope".into())));
        assert_eq!(registry().check(&t), Err(BtError::UnknownLeaf("nope".into())));
    }

    #[test]
    fn action_memory_persists_while_running() {
        let mut r = LeafRegistry::new();
        r.action("count3", |_, mem, _| {
            let n = mem.as_u64().unwrap_or(0) + 1;
            *mem = Value::from(n);
            if n >= 3 { TickStatus::Success } else { TickStatus::Running }
        });
        let mut t = BehaviorTree::new(act("count3"));
        let mut bb = Blackboard::new();
        let statuses: Vec<_> = (0..4).map(|_| t.tick(&mut bb, &r).unwrap()).collect();
        assert_eq!(statuses, [TickStatus::Running, TickStatus::Running, TickStatus::Success, TickStatus::Running]);
    }

    #[test]
    fn guard_sites_follow_sequence_order() {
        let tree = BtNode::sequence(vec![
            BtNode::condition("g1", Params::new()),
            act("a1"),
            BtNode::fallback(vec![BtNode::condition("g2", Params::new()), act("a2")]),
            act("a3"),
        ]);
        let sites = tree.guard_sites();
        assert_eq!(sites[0].guards, vec!["g1"]);
        assert_eq!(sites[1].action, "a2");
        assert_eq!(sites[1].guards, vec!["g1"]);
        assert_eq!(sites[2].guards, vec!["g1"]);
    }
}
