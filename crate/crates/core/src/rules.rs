//! Rule-based narration: annotate an operator tree with templates (the LOT),
//! cluster auxiliary operators into their critical parent, number the
//! intermediate results and emit one step per act.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::par::{self, Execution};
use crate::plan::{normalize_condition, ConditionKind, OperatorTree, PlanNode};
use crate::poem::{OpType, PoemStore};
use crate::pool::template::{OperatorTemplate, Piece, Placeholder};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("no catalog operator for node type {0:?}")]
    UnknownOperator(String),
}

/// Catalog operator name for a plan node type.
pub fn catalog_name(node_type: &str) -> Option<&'static str> {
    Some(match node_type {
        "Seq Scan" => "seq scan",
        "Parallel Seq Scan" => "parallel seq scan",
        "Index Scan" | "Index Only Scan" => "index scan",
        "Bitmap Heap Scan" => "bitmap heap scan",
        "Bitmap Index Scan" => "bitmap index scan",
        "Hash" => "hash",
        "Hash Join" => "hashjoin",
        "Merge Join" => "mergejoin",
        "Nested Loop" => "nested loop join",
        "Sort" => "sort",
        "Aggregate" | "GroupAggregate" | "HashAggregate" => "aggregate",
        "Unique" => "unique",
        "Limit" => "limit",
        "Materialize" => "materialize",
        _ => return None,
    })
}

/// Node type as narrated: a parallel-aware sequential scan counts as a
/// parallel sequential scan whichever way the plan spells it.
pub fn effective_node_type(n: &PlanNode) -> &str {
    if n.parallel_aware && n.node_type == "Seq Scan" {
        "Parallel Seq Scan"
    } else {
        &n.node_type
    }
}

const JOINS: [&str; 3] = ["hashjoin", "mergejoin", "nested loop join"];

fn containing_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\(?([A-Za-z_][\w.]*)\)?\s*~~\s*'%([^'%]*)%'").expect("static regex"))
}

/// Rewrites `x ~~ '%y%'` as `x containing 'y'`.
pub fn prettify_condition(cond: &str) -> String {
    containing_re().replace_all(cond, "$1 containing '$2'").into_owned()
}

fn render_condition(raw: &str) -> String {
    prettify_condition(&normalize_condition(raw))
}

/// What an input placeholder refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputRef {
    Relation(String),
    Intermediate(String),
}

impl InputRef {
    pub fn text(&self) -> &str {
        match self {
            InputRef::Relation(s) | InputRef::Intermediate(s) => s,
        }
    }
}

/// Category of a literal inserted into a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LiteralKind {
    Relation,
    /// An identifier produced by an earlier step.
    Intermediate,
    /// The identifier this step produces.
    NewIntermediate,
    Filter,
    JoinCondition,
    IndexCondition,
    SortKey,
    GroupKey,
    RowCount,
}

#[derive(Debug, Clone)]
pub struct LotNode<'t> {
    /// Alias when the plan gives one, otherwise the operator name.
    pub name: String,
    pub operator: String,
    pub op_type: OpType,
    pub template: OperatorTemplate,
    /// Template with unbound clauses removed.
    pub label_template: String,
    pub identifier: Option<String>,
    pub bindings: BTreeMap<Placeholder, String>,
    pub inputs: BTreeMap<Placeholder, InputRef>,
    pub underlying: &'t PlanNode,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
}

/// Language-annotated operator tree. Nodes are stored in post-order, so the
/// root is last and every child precedes its parent.
#[derive(Debug, Clone)]
pub struct Lot<'t> {
    pub nodes: Vec<LotNode<'t>>,
    pub source: String,
}

impl<'t> Lot<'t> {
    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Auxiliary/critical pairs as `(aux, critical)` node indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClusterSet {
    pub pairs: BTreeSet<(usize, usize)>,
    aux: BTreeSet<usize>,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_auxiliary(&self, node: usize) -> bool {
        self.aux.contains(&node)
    }

    /// Auxiliaries clustered into `critical`, in child order.
    pub fn auxiliaries_of(&self, lot: &Lot<'_>, critical: usize) -> Vec<usize> {
        lot.nodes[critical].children.iter().copied().filter(|c| self.pairs.contains(&(*c, critical))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Narrative {
    pub steps: Vec<String>,
}

impl Narrative {
    pub fn numbered(&self) -> String {
        self.steps.iter().enumerate().map(|(i, s)| format!("{}. {s}\n", i + 1)).collect()
    }
}

impl fmt::Display for Narrative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

fn literal_bindings(node: &PlanNode, operator: &str) -> BTreeMap<Placeholder, String> {
    let mut b = BTreeMap::new();
    if JOINS.contains(&operator) {
        let conds: Vec<String> = [ConditionKind::HashCond, ConditionKind::MergeCond, ConditionKind::JoinFilter, ConditionKind::Filter]
            .into_iter()
            .filter_map(|k| node.condition(k))
            .map(render_condition)
            .collect();
        if !conds.is_empty() {
            b.insert(Placeholder::C, conds.join(" and "));
        }
    } else if operator == "limit" {
        if let Some(n) = node.limit_count {
            b.insert(Placeholder::C, n.to_string());
        }
    } else if let Some(f) = node.condition(ConditionKind::Filter) {
        b.insert(Placeholder::C, render_condition(f));
    }
    if let Some(i) = node.condition(ConditionKind::IndexCond) {
        b.insert(Placeholder::I, render_condition(i));
    }
    if !node.group_keys.is_empty() {
        b.insert(Placeholder::G, node.group_keys.join(", "));
    }
    if !node.sort_keys.is_empty() {
        b.insert(Placeholder::A, node.sort_keys.join(", "));
    }
    b
}

/// Annotates every node with its operator template and literal bindings.
/// Scans bind their relation; other inputs are bound by [`assign_identifiers`].
pub fn generate_lot<'t>(tree: &'t OperatorTree, store: &PoemStore) -> Result<Lot<'t>, RuleError> {
    fn go<'t>(
        n: &'t PlanNode,
        store: &PoemStore,
        source: &str,
        out: &mut Vec<LotNode<'t>>,
    ) -> Result<usize, RuleError> {
        let mut children = Vec::with_capacity(n.children.len());
        for c in &n.children {
            children.push(go(c, store, source, out)?);
        }
        let unknown = || RuleError::UnknownOperator(n.node_type.clone());
        let operator = catalog_name(effective_node_type(n)).ok_or_else(unknown)?;
        let op = store.get_operator(source, operator).map_err(|_| unknown())?;
        let desc = op.descriptions.first().map(String::as_str).unwrap_or("");
        let template = OperatorTemplate::build(op, desc);
        let present = template.placeholders();
        let mut bindings = literal_bindings(n, operator);
        bindings.retain(|p, _| present.contains(p));
        let mut inputs = BTreeMap::new();
        if n.is_scan() {
            let rel = if n.node_type == "Bitmap Index Scan" {
                n.index_name.clone().or_else(|| n.relation_name.clone())
            } else {
                n.relation_name.clone().or_else(|| n.index_name.clone())
            };
            let rel = rel.unwrap_or_else(|| operator.to_string());
            bindings.insert(Placeholder::R1, rel.clone());
            inputs.insert(Placeholder::R1, InputRef::Relation(rel));
        }
        let label_template =
            template.with_clauses(|p| bindings.contains_key(&p));
        let idx = out.len();
        for &c in &children {
            out[c].parent = Some(idx);
        }
        out.push(LotNode {
            name: n.alias.clone().unwrap_or_else(|| op.name.clone()),
            operator: operator.to_string(),
            op_type: op.op_type,
            template,
            label_template,
            identifier: None,
            bindings,
            inputs,
            underlying: n,
            children,
            parent: None,
        });
        Ok(idx)
    }
    let mut nodes = Vec::with_capacity(tree.node_count());
    go(&tree.root, store, &tree.source_engine, &mut nodes)?;
    Ok(Lot { nodes, source: tree.source_engine.clone() })
}

/// Every tree edge whose `(child, parent)` operators form an auxiliary pair
/// in the store. A binary critical may absorb both of its children.
pub fn cluster_lot(lot: &Lot<'_>, store: &PoemStore) -> ClusterSet {
    let pairs = store.auxiliary_pairs(&lot.source);
    let mut set = ClusterSet::default();
    for (i, n) in lot.nodes.iter().enumerate() {
        if let Some(p) = n.parent {
            if pairs.contains(&(n.operator.clone(), lot.nodes[p].operator.clone())) {
                set.pairs.insert((i, p));
                set.aux.insert(i);
            }
        }
    }
    set
}

fn is_pass_through(n: &LotNode<'_>) -> bool {
    n.underlying.is_scan() && n.underlying.conditions.is_empty() && n.children.is_empty()
}

/// What the output of node `i` is called by its consumer.
fn output_ref(lot: &Lot<'_>, clusters: &ClusterSet, i: usize) -> InputRef {
    let n = &lot.nodes[i];
    if let Some(id) = &n.identifier {
        return InputRef::Intermediate(id.clone());
    }
    if clusters.is_auxiliary(i) || !n.underlying.is_scan() {
        if let Some(r) = n.inputs.get(&Placeholder::R1) {
            return r.clone();
        }
    }
    match n.inputs.get(&Placeholder::R1) {
        Some(r) => r.clone(),
        None => InputRef::Relation(n.name.clone()),
    }
}

/// Numbers intermediate results `T1, T2, ...` in post-order and binds every
/// input placeholder. The root, clustered auxiliaries and scans that pass a
/// base relation through unchanged get no identifier.
pub fn assign_identifiers<'t>(mut lot: Lot<'t>, clusters: &ClusterSet) -> Lot<'t> {
    let root = lot.root();
    let mut next = 1;
    for i in 0..lot.nodes.len() {
        let n = &lot.nodes[i];
        if !n.underlying.is_scan() {
            let slots: &[(Placeholder, usize)] = match (n.op_type, n.children.len()) {
                (_, 0) => &[],
                (OpType::Binary, l) if l >= 2 => &[(Placeholder::R2, 0), (Placeholder::R1, 1)],
                _ => &[(Placeholder::R1, 0)],
            };
            let refs: Vec<(Placeholder, InputRef)> =
                slots.iter().map(|&(p, c)| (p, output_ref(&lot, clusters, n.children[c]))).collect();
            let n = &mut lot.nodes[i];
            for (p, r) in refs {
                n.bindings.insert(p, r.text().to_string());
                n.inputs.insert(p, r);
            }
            for p in n.template.placeholders() {
                if matches!(p, Placeholder::R1 | Placeholder::R2) && !n.inputs.contains_key(&p) {
                    let r = InputRef::Relation(n.name.clone());
                    n.bindings.insert(p, r.text().to_string());
                    n.inputs.insert(p, r);
                }
            }
        }
        let n = &lot.nodes[i];
        if i != root && !clusters.is_auxiliary(i) && !is_pass_through(n) {
            lot.nodes[i].identifier = Some(format!("T{next}"));
            next += 1;
        }
    }
    lot
}

/// One narrative step: a critical node and the auxiliaries merged into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepUnit {
    pub critical: usize,
    pub auxiliaries: Vec<usize>,
}

/// Steps in post-order; clustered auxiliaries are folded into their critical.
pub fn step_units(lot: &Lot<'_>, clusters: &ClusterSet) -> Vec<StepUnit> {
    (0..lot.nodes.len())
        .filter(|&i| !clusters.is_auxiliary(i))
        .map(|i| StepUnit { critical: i, auxiliaries: clusters.auxiliaries_of(lot, i) })
        .collect()
}

fn literal_kind(n: &LotNode<'_>, p: Placeholder) -> LiteralKind {
    match p {
        Placeholder::R1 | Placeholder::R2 => match n.inputs.get(&p) {
            Some(InputRef::Intermediate(_)) => LiteralKind::Intermediate,
            _ => LiteralKind::Relation,
        },
        Placeholder::C if JOINS.contains(&n.operator.as_str()) => LiteralKind::JoinCondition,
        Placeholder::C if n.operator == "limit" => LiteralKind::RowCount,
        Placeholder::C => LiteralKind::Filter,
        Placeholder::I => LiteralKind::IndexCondition,
        Placeholder::G => LiteralKind::GroupKey,
        Placeholder::A => LiteralKind::SortKey,
    }
}

fn render_node(n: &LotNode<'_>, out: &mut String, emit: &mut dyn FnMut(LiteralKind, &str) -> String) {
    let mut put = |pieces: &[Piece], out: &mut String| {
        for piece in pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(p) => match n.bindings.get(p) {
                    Some(v) => out.push_str(&emit(literal_kind(n, *p), v)),
                    None => out.push_str(&p.to_string()),
                },
            }
        }
    };
    put(&n.template.head, out);
    for c in &n.template.clauses {
        if n.bindings.contains_key(&c.slot) {
            put(&c.pieces, out);
        }
    }
}

/// Renders one step, passing every literal through `emit` so callers can
/// substitute tags for values.
pub fn render_step(
    lot: &Lot<'_>,
    unit: &StepUnit,
    emit: &mut dyn FnMut(LiteralKind, &str) -> String,
) -> String {
    let mut out = String::new();
    for &a in &unit.auxiliaries {
        render_node(&lot.nodes[a], &mut out, emit);
        out.push_str(" and ");
    }
    let n = &lot.nodes[unit.critical];
    render_node(n, &mut out, emit);
    if unit.critical == lot.root() {
        out.push_str(" to get the final results.");
    } else if let Some(id) = &n.identifier {
        out.push_str(" to get the intermediate relation ");
        out.push_str(&emit(LiteralKind::NewIntermediate, id));
        out.push('.');
    } else {
        out.push('.');
    }
    out
}

pub fn translate(lot: &Lot<'_>, clusters: &ClusterSet) -> Narrative {
    let steps = step_units(lot, clusters)
        .iter()
        .map(|u| render_step(lot, u, &mut |_, v| v.to_string()))
        .collect();
    Narrative { steps }
}

/// Annotated, clustered and numbered LOT of `tree`.
pub fn prepare<'t>(tree: &'t OperatorTree, store: &PoemStore) -> Result<(Lot<'t>, ClusterSet), RuleError> {
    let lot = generate_lot(tree, store)?;
    let clusters = cluster_lot(&lot, store);
    Ok((assign_identifiers(lot, &clusters), clusters))
}

pub fn translate_tree(tree: &OperatorTree, store: &PoemStore) -> Result<Narrative, RuleError> {
    let (lot, clusters) = prepare(tree, store)?;
    Ok(translate(&lot, &clusters))
}

/// Translates independent trees, in input order.
pub fn translate_batch(
    exec: Execution,
    trees: &[OperatorTree],
    store: &PoemStore,
) -> Vec<Result<Narrative, RuleError>> {
    par::map(exec, trees, |t| translate_tree(t, store))
}
