use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ConditionKind, OperatorTree, PlanError, PlanNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Int,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSpec {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
}

/// Tables and the column pairs they may be joined on (`"table.column"`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SchemaSpec {
    pub tables: Vec<TableSpec>,
    #[serde(default)]
    pub join_edges: Vec<(String, String)>,
}

impl SchemaSpec {
    fn column(&self, qualified: &str) -> Option<(usize, usize)> {
        let (t, c) = qualified.split_once('.')?;
        let ti = self.tables.iter().position(|x| x.name == t)?;
        let ci = self.tables[ti].columns.iter().position(|x| x.name == c)?;
        Some((ti, ci))
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.tables.is_empty() {
            return Err(PlanError::EmptySchema);
        }
        for t in &self.tables {
            if t.columns.is_empty() {
                return Err(PlanError::InvalidSchema(format!("table {} has no columns", t.name)));
            }
        }
        for (a, b) in &self.join_edges {
            for side in [a, b] {
                if self.column(side).is_none() {
                    return Err(PlanError::InvalidSchema(format!("join edge names undeclared column {side}")));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, PlanError> {
        let s: SchemaSpec = serde_json::from_str(text).map_err(|e| PlanError::InvalidSchema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Names of every table and column, for leak checks.
    pub fn identifiers(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for t in &self.tables {
            out.insert(t.name.clone());
            for c in &t.columns {
                out.insert(c.name.clone());
            }
        }
        out
    }
}

/// A scanned relation instance: table index and alias.
type Rel = (usize, String);

struct Sub {
    node: PlanNode,
    rels: Vec<Rel>,
}

struct Gen<'a> {
    schema: &'a SchemaSpec,
    edges: Vec<((usize, usize), (usize, usize))>,
    rng: ChaCha8Rng,
    aliases: HashMap<usize, usize>,
}

const WORDS: [&str; 8] = ["July", "data", "query", "graph", "VLDB", "index", "stream", "cloud"];

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[(T, u32)]) -> T {
    let total: u32 = items.iter().map(|i| i.1).sum();
    let mut x = rng.gen_range(0..total);
    for &(v, w) in items {
        if x < w {
            return v;
        }
        x -= w;
    }
    items[items.len() - 1].0
}

#[derive(Clone, Copy)]
enum Unary {
    Sort,
    Aggregate,
    Unique,
    Limit,
    Materialize,
}

#[derive(Clone, Copy)]
enum Join {
    Hash,
    Merge(usize),
    Nested(bool),
}

impl<'a> Gen<'a> {
    fn alias(&mut self, t: usize) -> String {
        let n = self.aliases.entry(t).or_insert(0);
        *n += 1;
        let name = &self.schema.tables[t].name;
        if *n == 1 {
            name.clone()
        } else {
            format!("{name}_{n}")
        }
    }

    fn column_of(&mut self, rels: &[Rel]) -> String {
        let (t, alias) = &rels[self.rng.gen_range(0..rels.len())];
        let cols = &self.schema.tables[*t].columns;
        format!("{alias}.{}", cols[self.rng.gen_range(0..cols.len())].name)
    }

    fn filter(&mut self, t: usize, alias: &str) -> String {
        let cols = &self.schema.tables[t].columns;
        let col = &cols[self.rng.gen_range(0..cols.len())];
        match col.kind {
            ColumnKind::Int => {
                let op = ["=", ">", "<", ">="][self.rng.gen_range(0..4)];
                format!("({alias}.{} {op} {})", col.name, self.rng.gen_range(1..1000))
            }
            ColumnKind::Text => {
                let w = WORDS[self.rng.gen_range(0..WORDS.len())];
                format!("(({alias}.{})::text ~~ '%{w}%'::text)", col.name)
            }
        }
    }

    fn scan(&mut self, forced_seq: bool) -> Sub {
        let t = self.rng.gen_range(0..self.schema.tables.len());
        let alias = self.alias(t);
        let table = self.schema.tables[t].name.clone();
        let kind = if forced_seq {
            "Seq Scan"
        } else {
            pick(&mut self.rng, &[("Seq Scan", 55), ("Index Scan", 30), ("Parallel Seq Scan", 15)])
        };
        // PostgreSQL spells a parallel scan as a parallel-aware "Seq Scan".
        let node_type = if kind == "Parallel Seq Scan" { "Seq Scan" } else { kind };
        let mut node = PlanNode::scan(node_type, &table, &alias);
        node.parallel_aware = kind == "Parallel Seq Scan";
        let filter_p = if kind == "Index Scan" {
            let cols = &self.schema.tables[t].columns;
            let col = cols[self.rng.gen_range(0..cols.len())].name.clone();
            node.index_name = Some(format!("{table}_{col}_idx"));
            let v = self.rng.gen_range(1..1000);
            node.conditions.insert(ConditionKind::IndexCond, format!("({col} = {v})"));
            0.3
        } else {
            0.5
        };
        if self.rng.gen_bool(filter_p) {
            let f = self.filter(t, &alias);
            node.conditions.insert(ConditionKind::Filter, f);
        }
        Sub { node, rels: vec![(t, alias)] }
    }

    fn bitmap(&mut self) -> Sub {
        let t = self.rng.gen_range(0..self.schema.tables.len());
        let alias = self.alias(t);
        let table = self.schema.tables[t].name.clone();
        let cols = &self.schema.tables[t].columns;
        let col = cols[self.rng.gen_range(0..cols.len())].name.clone();
        let v = self.rng.gen_range(1..1000);
        let mut index = PlanNode::new("Bitmap Index Scan");
        index.index_name = Some(format!("{table}_{col}_idx"));
        index.conditions.insert(ConditionKind::IndexCond, format!("({col} < {v})"));
        let mut heap = PlanNode::scan("Bitmap Heap Scan", &table, &alias);
        if self.rng.gen_bool(0.4) {
            let f = self.filter(t, &alias);
            heap.conditions.insert(ConditionKind::Filter, f);
        }
        heap.children = vec![index];
        Sub { node: heap, rels: vec![(t, alias)] }
    }

    fn unary(&mut self, op: Unary, child: Sub) -> Sub {
        let rels = child.rels.clone();
        let node = match op {
            Unary::Sort => {
                let mut n = PlanNode::new("Sort");
                n.sort_keys = vec![self.column_of(&rels)];
                n.with_children(vec![child.node])
            }
            Unary::Aggregate => {
                let mut n = PlanNode::new("Aggregate");
                let strategy = pick(&mut self.rng, &[("Sorted", 4), ("Hashed", 3), ("Plain", 3)]);
                n.strategy = Some(strategy.to_string());
                if strategy != "Plain" {
                    n.group_keys = vec![self.column_of(&rels)];
                }
                if self.rng.gen_bool(0.4) {
                    let v = self.rng.gen_range(1..500);
                    n.conditions.insert(ConditionKind::Filter, format!("(count(*) > {v})"));
                }
                if strategy == "Sorted" && child.node.node_type != "Sort" {
                    let sort = PlanNode {
                        node_type: "Sort".into(),
                        sort_keys: n.group_keys.clone(),
                        implicit: true,
                        children: vec![child.node],
                        ..Default::default()
                    };
                    n.with_children(vec![sort])
                } else {
                    n.with_children(vec![child.node])
                }
            }
            Unary::Unique => PlanNode::new("Unique").with_children(vec![child.node]),
            Unary::Limit => {
                let mut n = PlanNode::new("Limit");
                n.limit_count = Some(self.rng.gen_range(1..=100));
                n.with_children(vec![child.node])
            }
            Unary::Materialize => PlanNode::new("Materialize").with_children(vec![child.node]),
        };
        Sub { node, rels }
    }

    /// A join condition between the two sides, when the schema has one.
    fn join_condition(&mut self, left: &[Rel], right: &[Rel]) -> Option<(String, String, String)> {
        let mut found = Vec::new();
        for &((ta, ca), (tb, cb)) in &self.edges {
            for (lt, la) in left {
                for (rt, ra) in right {
                    if *lt == ta && *rt == tb {
                        found.push((la.clone(), ca, ta, ra.clone(), cb, tb));
                    } else if *lt == tb && *rt == ta {
                        found.push((la.clone(), cb, tb, ra.clone(), ca, ta));
                    }
                }
            }
        }
        if found.is_empty() {
            return None;
        }
        let (la, lc, lt, ra, rc, rt) = found.swap_remove(self.rng.gen_range(0..found.len()));
        let lcol = format!("{la}.{}", self.schema.tables[lt].columns[lc].name);
        let rcol = format!("{ra}.{}", self.schema.tables[rt].columns[rc].name);
        Some((format!("({lcol} = {rcol})"), lcol, rcol))
    }

    fn join(&mut self, kind: Join, budget: usize) -> Sub {
        let extra = match kind {
            Join::Hash => 1,
            Join::Merge(sorts) => sorts,
            Join::Nested(mat) => usize::from(mat),
        };
        let rest = budget - 1 - extra;
        let lb = self.rng.gen_range(1..rest);
        let left = self.gen(lb);
        let right = self.gen(rest - lb);
        let cond = self.join_condition(&left.rels, &right.rels);
        let mut rels = left.rels.clone();
        rels.extend(right.rels.iter().cloned());
        let (mut l, mut r) = (left.node, right.node);
        let node = match kind {
            Join::Hash => {
                let mut n = PlanNode::new("Hash Join");
                if let Some((c, _, _)) = &cond {
                    n.conditions.insert(ConditionKind::HashCond, c.clone());
                }
                n.with_children(vec![l, PlanNode::new("Hash").with_children(vec![r])])
            }
            Join::Merge(sorts) => {
                let mut n = PlanNode::new("Merge Join");
                let (lk, rk) = match &cond {
                    Some((c, lk, rk)) => {
                        n.conditions.insert(ConditionKind::MergeCond, c.clone());
                        (lk.clone(), rk.clone())
                    }
                    None => (self.column_of(&left.rels), self.column_of(&right.rels)),
                };
                let sort_left = sorts == 2 || (sorts == 1 && self.rng.gen_bool(0.5));
                let sort_right = sorts == 2 || (sorts == 1 && !sort_left);
                if sort_left {
                    let mut s = PlanNode::new("Sort").with_children(vec![l]);
                    s.sort_keys = vec![lk];
                    l = s;
                }
                if sort_right {
                    let mut s = PlanNode::new("Sort").with_children(vec![r]);
                    s.sort_keys = vec![rk];
                    r = s;
                }
                n.with_children(vec![l, r])
            }
            Join::Nested(mat) => {
                let mut n = PlanNode::new("Nested Loop");
                if let Some((c, _, _)) = &cond {
                    n.conditions.insert(ConditionKind::JoinFilter, c.clone());
                }
                if mat {
                    r = PlanNode::new("Materialize").with_children(vec![r]);
                }
                n.with_children(vec![l, r])
            }
        };
        Sub { node, rels }
    }

    fn gen(&mut self, budget: usize) -> Sub {
        match budget {
            1 => self.scan(false),
            2 => {
                if self.rng.gen_bool(0.3) {
                    self.bitmap()
                } else {
                    let op = self.pick_unary(false);
                    let leaf = self.scan(false);
                    self.unary(op, leaf)
                }
            }
            _ => {
                if self.rng.gen_bool(0.55) {
                    let mut joins = vec![(Join::Merge(0), 2), (Join::Nested(false), 3)];
                    if budget >= 4 {
                        joins.extend([(Join::Hash, 5), (Join::Merge(1), 2), (Join::Nested(true), 2)]);
                    }
                    if budget >= 5 {
                        joins.push((Join::Merge(2), 3));
                    }
                    let kind = pick(&mut self.rng, &joins);
                    self.join(kind, budget)
                } else {
                    let op = self.pick_unary(true);
                    let child = self.gen(budget - 1);
                    self.unary(op, child)
                }
            }
        }
    }

    fn pick_unary(&mut self, deep: bool) -> Unary {
        let mat = if deep { 1 } else { 2 };
        pick(
            &mut self.rng,
            &[
                (Unary::Sort, 3),
                (Unary::Aggregate, 3),
                (Unary::Unique, 2),
                (Unary::Limit, 2),
                (Unary::Materialize, mat),
            ],
        )
    }
}

/// A random operator tree with exactly `size_budget` explicit nodes (implicit
/// sorts under sorted aggregates are extra). Deterministic in
/// `(schema, rng_seed, size_budget)`. A budget of one yields a sequential scan.
pub fn generate_random_tree(schema: &SchemaSpec, rng_seed: u64, size_budget: usize) -> Result<OperatorTree, PlanError> {
    schema.validate()?;
    if size_budget == 0 {
        return Err(PlanError::InvalidBudget);
    }
    let edges = schema
        .join_edges
        .iter()
        .map(|(a, b)| (schema.column(a).expect("validated"), schema.column(b).expect("validated")))
        .collect();
    let mut g = Gen { schema, edges, rng: ChaCha8Rng::seed_from_u64(rng_seed), aliases: HashMap::new() };
    let sub = if size_budget == 1 { g.scan(true) } else { g.gen(size_budget) };
    Ok(OperatorTree::new(sub.node))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{emit_explain_json, parse_explain_json};

    fn toy() -> SchemaSpec {
        SchemaSpec::from_json(
            r#"{"tables":[
                {"name":"users","columns":[{"name":"id","kind":"int"},{"name":"age","kind":"int"},{"name":"city","kind":"text"}]},
                {"name":"orders","columns":[{"name":"oid","kind":"int"},{"name":"uid","kind":"int"},{"name":"total","kind":"int"}]},
                {"name":"items","columns":[{"name":"iid","kind":"int"},{"name":"order_id","kind":"int"},{"name":"title","kind":"text"}]}],
              "joinEdges":[["users.id","orders.uid"],["orders.oid","items.order_id"],["users.id","items.iid"]]}"#,
        )
        .unwrap()
    }

    #[test]
    fn budget_one_is_a_seq_scan() {
        let t = generate_random_tree(&toy(), 7, 1).unwrap();
        assert_eq!(t.root.node_type, "Seq Scan");
        assert!(t.root.children.is_empty());
    }

    #[test]
    fn deterministic_and_exact_size() {
        let s = toy();
        for seed in 0..200 {
            let a = generate_random_tree(&s, seed, 9).unwrap();
            assert_eq!(a, generate_random_tree(&s, seed, 9).unwrap());
            assert_eq!(a.root.explicit_node_count(), 9);
        }
    }

    #[test]
    fn round_trips_through_explain_json() {
        let s = toy();
        for seed in 0..200 {
            let t = generate_random_tree(&s, seed, 1 + (seed as usize % 30)).unwrap();
            assert_eq!(parse_explain_json(&emit_explain_json(&t)).unwrap(), t, "seed {seed}");
        }
    }

    #[test]
    fn errors() {
        let empty = SchemaSpec { tables: vec![], join_edges: vec![] };
        assert_eq!(generate_random_tree(&empty, 0, 3), Err(PlanError::EmptySchema));
        assert_eq!(generate_random_tree(&toy(), 0, 0), Err(PlanError::InvalidBudget));
    }
}
