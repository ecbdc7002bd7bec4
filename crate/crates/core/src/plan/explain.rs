use serde_json::{Map, Value};

use super::{ConditionKind, OperatorTree, PlanError, PlanNode};

fn text(obj: &Map<String, Value>, key: &str) -> Result<Option<String>, PlanError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(PlanError::MalformedDocument(format!("{key:?} should be a string, got {other}"))),
    }
}

fn text_list(obj: &Map<String, Value>, key: &str) -> Result<Vec<String>, PlanError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(vec![s.clone()]),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| PlanError::MalformedDocument(format!("{key:?} holds a non-string")))
            })
            .collect(),
        Some(other) => Err(PlanError::MalformedDocument(format!("{key:?} should be a list, got {other}"))),
    }
}

fn parse_node(v: &Value) -> Result<PlanNode, PlanError> {
    let obj = v
        .as_object()
        .ok_or_else(|| PlanError::MalformedDocument("plan node is not an object".into()))?;
    let node_type = text(obj, "Node Type")?.ok_or(PlanError::MissingField("Node Type"))?;
    let mut node = PlanNode::new(&node_type);
    node.relation_name = text(obj, "Relation Name")?;
    node.alias = text(obj, "Alias")?;
    node.index_name = text(obj, "Index Name")?;
    for kind in ConditionKind::ALL {
        if let Some(c) = text(obj, kind.json_key())? {
            node.conditions.insert(kind, c);
        }
    }
    node.sort_keys = text_list(obj, "Sort Key")?;
    node.group_keys = text_list(obj, "Group Key")?;
    node.strategy = text(obj, "Strategy")?;
    node.parallel_aware = match obj.get("Parallel Aware") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(other) => return Err(PlanError::MalformedDocument(format!("\"Parallel Aware\" should be a boolean, got {other}"))),
    };
    if node_type == "Limit" {
        node.limit_count = match obj.get("Plan Rows") {
            None | Some(Value::Null) => None,
            Some(Value::Number(n)) => n.as_u64().or_else(|| n.as_f64().map(|f| f.max(0.0).round() as u64)),
            Some(other) => return Err(PlanError::MalformedDocument(format!("\"Plan Rows\" should be a number, got {other}"))),
        };
    }
    if let Some(plans) = obj.get("Plans") {
        let items = plans
            .as_array()
            .ok_or_else(|| PlanError::MalformedDocument("\"Plans\" is not an array".into()))?;
        node.children = items.iter().map(parse_node).collect::<Result<_, _>>()?;
    }
    // A sorted aggregate consumes sorted input; make that sort visible.
    if node_type == "Aggregate"
        && node.strategy.as_deref() == Some("Sorted")
        && !node.children.iter().any(|c| c.node_type == "Sort")
    {
        let sort = PlanNode {
            node_type: "Sort".to_string(),
            sort_keys: node.group_keys.clone(),
            implicit: true,
            children: std::mem::take(&mut node.children),
            ..Default::default()
        };
        node.children = vec![sort];
    }
    Ok(node)
}

/// Reads a PostgreSQL `EXPLAIN (FORMAT JSON)` document: either
/// `[{"Plan": ...}]` or `{"Plan": ...}`. Unrecognised fields are ignored.
pub fn parse_explain_json(text: &str) -> Result<OperatorTree, PlanError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| PlanError::MalformedDocument(e.to_string()))?;
    let top = match &doc {
        Value::Array(items) => items
            .first()
            .ok_or_else(|| PlanError::MalformedDocument("empty top-level array".into()))?,
        other => other,
    };
    let plan = top
        .as_object()
        .and_then(|o| o.get("Plan"))
        .ok_or_else(|| PlanError::MalformedDocument("no \"Plan\" entry".into()))?;
    Ok(OperatorTree::new(parse_node(plan)?))
}

/// Number of `"Node Type"` keys anywhere in a JSON document.
pub fn count_node_types(text: &str) -> Result<usize, PlanError> {
    fn go(v: &Value) -> usize {
        match v {
            Value::Object(o) => usize::from(o.contains_key("Node Type")) + o.values().map(go).sum::<usize>(),
            Value::Array(a) => a.iter().map(go).sum(),
            _ => 0,
        }
    }
    let doc: Value = serde_json::from_str(text).map_err(|e| PlanError::MalformedDocument(e.to_string()))?;
    Ok(go(&doc))
}

fn emit_node(n: &PlanNode) -> Vec<Value> {
    if n.implicit {
        return n.children.iter().flat_map(emit_node).collect();
    }
    let mut o = Map::new();
    o.insert("Node Type".into(), Value::from(n.node_type.clone()));
    if n.parallel_aware {
        o.insert("Parallel Aware".into(), Value::Bool(true));
    }
    if let Some(s) = &n.strategy {
        o.insert("Strategy".into(), Value::from(s.clone()));
    }
    if let Some(r) = &n.relation_name {
        o.insert("Relation Name".into(), Value::from(r.clone()));
    }
    if let Some(a) = &n.alias {
        o.insert("Alias".into(), Value::from(a.clone()));
    }
    if let Some(i) = &n.index_name {
        o.insert("Index Name".into(), Value::from(i.clone()));
    }
    if let Some(rows) = n.limit_count {
        o.insert("Plan Rows".into(), Value::from(rows));
    }
    for (kind, cond) in &n.conditions {
        o.insert(kind.json_key().into(), Value::from(cond.clone()));
    }
    if !n.sort_keys.is_empty() {
        o.insert("Sort Key".into(), Value::from(n.sort_keys.clone()));
    }
    if !n.group_keys.is_empty() {
        o.insert("Group Key".into(), Value::from(n.group_keys.clone()));
    }
    let children: Vec<Value> = n.children.iter().flat_map(emit_node).collect();
    if !children.is_empty() {
        o.insert("Plans".into(), Value::Array(children));
    }
    vec![Value::Object(o)]
}

pub fn emit_explain_value(tree: &OperatorTree) -> Value {
    let mut roots = emit_node(&tree.root);
    let plan = if roots.len() == 1 { roots.remove(0) } else { Value::Array(roots) };
    Value::Array(vec![serde_json::json!({ "Plan": plan })])
}

/// Serialises a tree in the EXPLAIN JSON layout accepted by [`parse_explain_json`].
pub fn emit_explain_json(tree: &OperatorTree) -> String {
    serde_json::to_string_pretty(&emit_explain_value(tree)).expect("plan values always serialise")
}
