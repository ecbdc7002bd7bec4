//! Operator trees: EXPLAIN JSON ingestion and emission, condition
//! normalisation, and random tree synthesis over a schema.

mod condition;
mod explain;
mod synth;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use condition::normalize_condition;
pub use explain::{count_node_types, emit_explain_json, emit_explain_value, parse_explain_json};
pub use synth::{generate_random_tree, ColumnKind, ColumnSpec, SchemaSpec, TableSpec};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("malformed plan document: {0}")]
    MalformedDocument(String),
    #[error("missing field {0:?}")]
    MissingField(&'static str),
    #[error("schema declares no tables")]
    EmptySchema,
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("size budget must be at least 1")]
    InvalidBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConditionKind {
    HashCond,
    MergeCond,
    IndexCond,
    JoinFilter,
    Filter,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 5] = [
        ConditionKind::HashCond,
        ConditionKind::MergeCond,
        ConditionKind::IndexCond,
        ConditionKind::JoinFilter,
        ConditionKind::Filter,
    ];

    /// Key of the field in EXPLAIN JSON.
    pub fn json_key(self) -> &'static str {
        match self {
            ConditionKind::HashCond => "Hash Cond",
            ConditionKind::MergeCond => "Merge Cond",
            ConditionKind::IndexCond => "Index Cond",
            ConditionKind::JoinFilter => "Join Filter",
            ConditionKind::Filter => "Filter",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlanNode {
    pub node_type: String,
    pub relation_name: Option<String>,
    pub alias: Option<String>,
    pub index_name: Option<String>,
    /// Raw condition strings as they appear in the plan.
    pub conditions: BTreeMap<ConditionKind, String>,
    pub sort_keys: Vec<String>,
    pub group_keys: Vec<String>,
    pub limit_count: Option<u64>,
    pub strategy: Option<String>,
    pub parallel_aware: bool,
    /// Inserted by the parser rather than read from the document. Implicit
    /// nodes are narrated but never emitted back to JSON.
    pub implicit: bool,
    /// Outer child first.
    pub children: Vec<PlanNode>,
}

impl PlanNode {
    pub fn new(node_type: &str) -> Self {
        PlanNode { node_type: node_type.to_string(), ..Default::default() }
    }

    pub fn scan(node_type: &str, relation: &str, alias: &str) -> Self {
        PlanNode {
            node_type: node_type.to_string(),
            relation_name: Some(relation.to_string()),
            alias: Some(alias.to_string()),
            ..Default::default()
        }
    }

    pub fn with_condition(mut self, kind: ConditionKind, cond: &str) -> Self {
        self.conditions.insert(kind, cond.to_string());
        self
    }

    pub fn with_children(mut self, children: Vec<PlanNode>) -> Self {
        self.children = children;
        self
    }

    pub fn condition(&self, kind: ConditionKind) -> Option<&str> {
        self.conditions.get(&kind).map(String::as_str)
    }

    pub fn is_scan(&self) -> bool {
        self.node_type.contains("Scan")
    }

    /// Nodes in this subtree, implicit ones included.
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(PlanNode::node_count).sum::<usize>()
    }

    pub fn explicit_node_count(&self) -> usize {
        usize::from(!self.implicit) + self.children.iter().map(PlanNode::explicit_node_count).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(PlanNode::depth).max().unwrap_or(0)
    }

    /// Post-order walk.
    pub fn post_order(&self) -> Vec<&PlanNode> {
        fn go<'a>(n: &'a PlanNode, out: &mut Vec<&'a PlanNode>) {
            for c in &n.children {
                go(c, out);
            }
            out.push(n);
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorTree {
    pub root: PlanNode,
    pub source_engine: String,
}

impl OperatorTree {
    pub fn new(root: PlanNode) -> Self {
        OperatorTree { root, source_engine: "pg".to_string() }
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }
}

impl fmt::Display for OperatorTree {
    /// Indented outline, one node per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(n: &PlanNode, depth: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            write!(f, "{:indent$}{}", "", n.node_type, indent = depth * 2)?;
            if let Some(r) = &n.relation_name {
                write!(f, " on {r}")?;
            }
            if n.implicit {
                f.write_str(" (implicit)")?;
            }
            writeln!(f)?;
            for c in &n.children {
                go(c, depth + 1, f)?;
            }
            Ok(())
        }
        go(&self.root, 0, f)
    }
}

/// Wire form of a plan tree used for corpus files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeRecord {
    pub id: String,
    pub plan: serde_json::Value,
}
