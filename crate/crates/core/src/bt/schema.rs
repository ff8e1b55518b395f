//! `abyssal-bt/1`: each node is a tagged array.
//!
//! ```text
//! ["sequence", [child, ...]]
//! ["fallback", [child, ...]]
//! ["condition", id, {params}]
//! ["action", id, {params}]
//! ["monitor", watcher, {params}, child]
//! ```
//!
//! Cursors and leaf memory are execution state and are not serialized.

use super::{BehaviorTree, BtError, BtNode, Params};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

pub const BT_SCHEMA: &str = "abyssal-bt/1";

fn node_to_value(node: &BtNode) -> Value {
    match node {
        BtNode::Sequence { children, .. } => json!(["sequence", children.iter().map(node_to_value).collect::<Vec<_>>()]),
        BtNode::Fallback { children, .. } => json!(["fallback", children.iter().map(node_to_value).collect::<Vec<_>>()]),
        BtNode::Condition { id, params } => json!(["condition", id, params]),
        BtNode::Action { id, params, .. } => json!(["action", id, params]),
        BtNode::Monitor { child, watcher, params } => json!(["monitor", watcher, params, node_to_value(child)]),
    }
}

fn bad(msg: impl Into<String>) -> BtError {
    BtError::Schema(msg.into())
}

fn params_from(v: Option<&Value>) -> Result<Params, BtError> {
    match v {
        None => Ok(Params::new()),
        Some(Value::Object(m)) => Ok(m.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
        Some(_) => Err(bad("params must be an object")),
    }
}

fn node_from_value(v: &Value) -> Result<BtNode, BtError> {
    let arr = v.as_array().ok_or_else(|| bad("node must be an array"))?;
    let tag = arr.first().and_then(Value::as_str).ok_or_else(|| bad("node tag missing"))?;
    let text = |i: usize| arr.get(i).and_then(Value::as_str).map(str::to_string).ok_or_else(|| bad(format!("`{tag}` needs an id")));
    let children = || -> Result<Vec<BtNode>, BtError> {
        let list = arr.get(1).and_then(Value::as_array).ok_or_else(|| bad(format!("`{tag}` needs a child list")))?;
        if list.is_empty() {
            return Err(bad(format!("`{tag}` has no children")));
        }
        list.iter().map(node_from_value).collect()
    };
    let node = match tag {
        "sequence" => BtNode::sequence(children()?),
        "fallback" => BtNode::fallback(children()?),
        "condition" => BtNode::condition(&text(1)?, params_from(arr.get(2))?),
        "action" => BtNode::action(&text(1)?, params_from(arr.get(2))?),
        "monitor" => {
            let child = arr.get(3).ok_or_else(|| bad("`monitor` needs a child"))?;
            BtNode::monitor(&text(1)?, params_from(arr.get(2))?, node_from_value(child)?)
        }
        other => return Err(bad(format!("unknown node tag `{other}`"))),
    };
    Ok(node)
}

impl BehaviorTree {
    pub fn to_value(&self) -> Value {
        json!({ "schema": BT_SCHEMA, "root": node_to_value(&self.root) })
    }

    pub fn from_value(v: &Value) -> Result<Self, BtError> {
        match v.get("schema").and_then(Value::as_str) {
            Some(BT_SCHEMA) => {}
            Some(other) => return Err(bad(format!("unsupported schema `{other}`"))),
            None => return Err(bad("schema missing")),
        }
        let root = v.get("root").ok_or_else(|| bad("root missing"))?;
        Ok(BehaviorTree::new(node_from_value(root)?))
    }

    pub fn to_json(&self) -> String {
        self.to_value().to_string()
    }

    pub fn from_json(text: &str) -> Result<Self, BtError> {
        let v: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        Self::from_value(&v)
    }
}

impl Serialize for BehaviorTree {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BehaviorTree {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        BehaviorTree::from_value(&v).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BehaviorTree {
        let mut p = Params::new();
        p.insert("floor".into(), json!(20.0));
        BehaviorTree::new(BtNode::sequence(vec![
            BtNode::condition("battery_above", p.clone()),
            BtNode::fallback(vec![BtNode::action("a", Params::new()), BtNode::action("b", p.clone())]),
            BtNode::monitor("detect_objects", Params::new(), BtNode::action("follow_path", p)),
        ]))
    }

    #[test]
    fn round_trip() {
        let t = sample();
        let back = BehaviorTree::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn shape() {
        let v = BehaviorTree::new(BtNode::action("dock", Params::new())).to_value();
        assert_eq!(v, json!({"schema": "abyssal-bt/1", "root": ["action", "dock", {}]}));
    }

    #[test]
    fn rejects_malformed() {
        assert!(BehaviorTree::from_json(r#"{"schema":"abyssal-bt/1","root":["sequence",[]]}"#).is_err());
        assert!(BehaviorTree::from_json(r#"{"schema":"abyssal-bt/2","root":["action","x",{}]}"#).is_err());
        assert!(BehaviorTree::from_json(r#"{"schema":"abyssal-bt/1","root":["parallel",[]]}"#).is_err());
    }
}
