use crate::mission::Priority;
use serde::{Deserialize, Serialize};

/// Plan id `context_decide` returns when a return-to-dock plan must be created.
pub const RETURN_TO_DOCK: &str = "return_to_dock";

/// Runtime facts the switching rule looks at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub battery: f64,
    pub docked: bool,
    /// Id of a plan a human has just asked for, if any.
    pub human_request: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRef {
    pub plan_id: String,
    pub priority: Priority,
}

impl PlanRef {
    pub fn new(plan_id: &str, priority: Priority) -> Self {
        PlanRef { plan_id: plan_id.to_string(), priority }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "plan_id")]
pub enum SwitchDecision {
    KeepCurrent,
    Override(String),
    Resume(String),
}

/// Highest priority first; among equals the earlier entry.
fn best<'a>(plans: impl Iterator<Item = &'a PlanRef>) -> Option<&'a PlanRef> {
    plans.fold(None, |acc: Option<&PlanRef>, p| match acc {
        Some(a) if a.priority >= p.priority => Some(a),
        _ => Some(p),
    })
}

/// Chooses between the executing plan, newly offered candidates and plans
/// suspended earlier. Strict priority: safety > human > communication > normal.
pub fn context_decide(
    ctx: &Context,
    active: Option<&PlanRef>,
    candidates: &[PlanRef],
    suspended: &[PlanRef],
    battery_floor: f64,
) -> SwitchDecision {
    let safety_known = active
        .into_iter()
        .chain(candidates)
        .chain(suspended)
        .any(|p| p.priority == Priority::Safety);
    if ctx.battery < battery_floor && !ctx.docked && !safety_known {
        return SwitchDecision::Override(RETURN_TO_DOCK.to_string());
    }
    let requested = ctx
        .human_request
        .as_ref()
        .and_then(|id| candidates.iter().find(|c| &c.plan_id == id));
    let candidate = requested.or_else(|| best(candidates.iter()));
    match active {
        Some(a) => match candidate {
            Some(c) if c.priority > a.priority => SwitchDecision::Override(c.plan_id.clone()),
            _ => SwitchDecision::KeepCurrent,
        },
        None => match (best(suspended.iter()), candidate) {
            (Some(s), Some(c)) if c.priority > s.priority => SwitchDecision::Override(c.plan_id.clone()),
            (Some(s), _) => SwitchDecision::Resume(s.plan_id.clone()),
            _ => SwitchDecision::KeepCurrent,
        },
    }
}
