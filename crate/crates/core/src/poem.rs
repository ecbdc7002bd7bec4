//! Physical-operator description store.
//!
//! Objects are keyed by `(source, name)`. Names are lowercased when an object
//! is created; every lookup afterwards is case-sensitive. An auxiliary
//! operator lists the critical operators it supports in `targets`, and the
//! store keeps an index of those `(auxiliary, critical)` pairs per source.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoemError {
    #[error("operator {1:?} already exists for source {0:?}")]
    DuplicateOperator(String, String),
    #[error("missing mandatory attribute {0}")]
    MissingMandatoryAttribute(&'static str),
    /// `(source, name, target)`.
    #[error("target {2:?} of {1:?} does not name an operator in {0:?}")]
    DanglingTarget(String, String, String),
    #[error("no operator {1:?} for source {0:?}")]
    NotFound(String, String),
    #[error("unknown source {0:?}")]
    UnknownSource(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("corrupt store: {0}")]
    CorruptStore(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpType {
    Unary,
    Binary,
}

impl OpType {
    pub fn as_str(self) -> &'static str {
        match self {
            OpType::Unary => "unary",
            OpType::Binary => "binary",
        }
    }
}

impl fmt::Display for OpType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpType {
    type Err = PoemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "unary" => Ok(OpType::Unary),
            "binary" => Ok(OpType::Binary),
            other => Err(PoemError::InvariantViolation(format!("type must be unary or binary, got {other:?}"))),
        }
    }
}

/// One stored operator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhysicalOperator {
    pub oid: u64,
    pub source: String,
    pub name: String,
    pub alias: Option<String>,
    pub op_type: OpType,
    pub defn: Option<String>,
    pub descriptions: Vec<String>,
    pub cond: bool,
    pub targets: Vec<String>,
}

/// Attributes of an operator that does not exist yet.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NewOperator {
    pub source: String,
    pub name: String,
    pub alias: Option<String>,
    pub op_type: Option<OpType>,
    pub defn: Option<String>,
    pub descriptions: Vec<String>,
    pub cond: bool,
    pub targets: Vec<String>,
}

impl NewOperator {
    pub fn new(source: &str, name: &str, op_type: OpType, desc: &str) -> Self {
        NewOperator {
            source: source.to_string(),
            name: name.to_string(),
            op_type: Some(op_type),
            descriptions: vec![desc.to_string()],
            ..Default::default()
        }
    }

    pub fn cond(mut self, cond: bool) -> Self {
        self.cond = cond;
        self
    }

    pub fn target(mut self, target: &str) -> Self {
        self.targets.push(target.to_string());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Attribute {
    Oid,
    Source,
    Name,
    Alias,
    Type,
    Defn,
    Desc,
    Cond,
    Target,
}

impl Attribute {
    pub const ALL: [Attribute; 9] = [
        Attribute::Oid,
        Attribute::Source,
        Attribute::Name,
        Attribute::Alias,
        Attribute::Type,
        Attribute::Defn,
        Attribute::Desc,
        Attribute::Cond,
        Attribute::Target,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Oid => "oid",
            Attribute::Source => "source",
            Attribute::Name => "name",
            Attribute::Alias => "alias",
            Attribute::Type => "type",
            Attribute::Defn => "defn",
            Attribute::Desc => "desc",
            Attribute::Cond => "cond",
            Attribute::Target => "target",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Attribute {
    type Err = PoemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        let a = match lower.as_str() {
            "oid" => Attribute::Oid,
            "source" => Attribute::Source,
            "name" => Attribute::Name,
            "alias" => Attribute::Alias,
            "type" => Attribute::Type,
            "defn" => Attribute::Defn,
            "desc" => Attribute::Desc,
            "cond" => Attribute::Cond,
            "target" | "targets" => Attribute::Target,
            _ => return Err(PoemError::UnknownAttribute(s.to_string())),
        };
        Ok(a)
    }
}

/// An attribute value as seen by queries and assignments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Null,
    Text(String),
    List(Vec<String>),
}

impl Value {
    fn texts(&self) -> Vec<&str> {
        match self {
            Value::Null => Vec::new(),
            Value::Text(s) => vec![s.as_str()],
            Value::List(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            Value::Text(s) => f.write_str(s),
            Value::List(v) => write!(f, "[{}]", v.join(", ")),
        }
    }
}

impl PhysicalOperator {
    pub fn get(&self, attr: Attribute) -> Value {
        let opt = |o: &Option<String>| o.clone().map_or(Value::Null, Value::Text);
        match attr {
            Attribute::Oid => Value::Text(self.oid.to_string()),
            Attribute::Source => Value::Text(self.source.clone()),
            Attribute::Name => Value::Text(self.name.clone()),
            Attribute::Alias => opt(&self.alias),
            Attribute::Type => Value::Text(self.op_type.as_str().to_string()),
            Attribute::Defn => opt(&self.defn),
            Attribute::Desc => Value::List(self.descriptions.clone()),
            Attribute::Cond => Value::Text(self.cond.to_string()),
            Attribute::Target => Value::List(self.targets.clone()),
        }
    }

    /// Name used in narratives: the alias when present, else the operator name.
    pub fn display_name(&self) -> &str {
        match &self.alias {
            Some(a) if !a.is_empty() => a,
            _ => &self.name,
        }
    }
}

/// SQL `LIKE`: `%` matches any run, `_` any single character.
pub fn like(text: &str, pattern: &str) -> bool {
    let t: Vec<char> = text.chars().collect();
    let p: Vec<char> = pattern.chars().collect();
    // reach[j]: pattern prefix of length j matches the text prefix seen so far.
    let mut reach = vec![false; p.len() + 1];
    reach[0] = true;
    for j in 0..p.len() {
        if p[j] == '%' {
            reach[j + 1] = reach[j];
        }
    }
    for &c in &t {
        let mut next = vec![false; p.len() + 1];
        for j in 0..p.len() {
            match p[j] {
                '%' => next[j + 1] = next[j] || reach[j] || reach[j + 1],
                '_' => next[j + 1] = reach[j],
                pc => next[j + 1] = reach[j] && pc == c,
            }
        }
        reach = next;
    }
    reach[p.len()]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    True,
    Eq(Attribute, String),
    Like(Attribute, String),
}

impl Predicate {
    /// List-valued attributes match when any element matches; `null` only
    /// equals an absent value.
    pub fn matches(&self, op: &PhysicalOperator) -> bool {
        match self {
            Predicate::True => true,
            Predicate::Eq(a, v) => {
                let val = op.get(*a);
                if v.eq_ignore_ascii_case("null") && val == Value::Null {
                    return true;
                }
                val.texts().iter().any(|t| t == v)
            }
            Predicate::Like(a, pat) => op.get(*a).texts().iter().any(|t| like(t, pat)),
        }
    }
}

pub type Pair = (String, String);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PoemStore {
    objects: BTreeMap<(String, String), PhysicalOperator>,
    pair_index: BTreeMap<String, BTreeSet<Pair>>,
    next_oid: u64,
}

impl PoemStore {
    pub fn new() -> Self {
        PoemStore { next_oid: 1, ..Default::default() }
    }

    /// A store holding the default PostgreSQL catalog under `"pg"`.
    pub fn seeded() -> Self {
        let mut s = Self::new();
        seed_default_catalog(&mut s, "pg").expect("default catalog is consistent");
        s
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn sources(&self) -> BTreeSet<&str> {
        self.objects.keys().map(|(s, _)| s.as_str()).collect()
    }

    pub fn has_source(&self, source: &str) -> bool {
        self.objects.keys().any(|(s, _)| s == source)
    }

    /// All objects of `source`, in name order.
    pub fn operators<'a>(&'a self, source: &str) -> impl Iterator<Item = &'a PhysicalOperator> + 'a {
        let source = source.to_string();
        self.objects.iter().filter(move |((s, _), _)| *s == source).map(|(_, o)| o)
    }

    pub fn create_operator(&mut self, spec: NewOperator) -> Result<u64, PoemError> {
        let op_type = spec.op_type.ok_or(PoemError::MissingMandatoryAttribute("type"))?;
        if spec.descriptions.is_empty() {
            return Err(PoemError::MissingMandatoryAttribute("desc"));
        }
        let name = spec.name.to_lowercase();
        if name.is_empty() {
            return Err(PoemError::MissingMandatoryAttribute("name"));
        }
        let key = (spec.source.clone(), name.clone());
        if self.objects.contains_key(&key) {
            return Err(PoemError::DuplicateOperator(spec.source, name));
        }
        let mut targets: Vec<String> = Vec::new();
        for t in spec.targets {
            let t = t.to_lowercase();
            if t == name || !self.objects.contains_key(&(spec.source.clone(), t.clone())) {
                return Err(PoemError::DanglingTarget(spec.source, name, t));
            }
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        let oid = self.next_oid;
        self.next_oid += 1;
        let op = PhysicalOperator {
            oid,
            source: spec.source,
            name,
            alias: spec.alias,
            op_type,
            defn: spec.defn,
            descriptions: spec.descriptions,
            cond: spec.cond,
            targets,
        };
        self.index(&op);
        self.objects.insert(key, op);
        Ok(oid)
    }

    fn index(&mut self, op: &PhysicalOperator) {
        if op.targets.is_empty() {
            return;
        }
        let set = self.pair_index.entry(op.source.clone()).or_default();
        for t in &op.targets {
            set.insert((op.name.clone(), t.clone()));
        }
    }

    fn rebuild_index(&mut self) {
        self.pair_index.clear();
        let ops: Vec<PhysicalOperator> = self.objects.values().cloned().collect();
        for op in &ops {
            self.index(op);
        }
    }

    pub fn get_operator(&self, source: &str, name: &str) -> Result<&PhysicalOperator, PoemError> {
        self.objects
            .get(&(source.to_string(), name.to_string()))
            .ok_or_else(|| PoemError::NotFound(source.to_string(), name.to_string()))
    }

    pub fn query_operators(&self, source: &str, predicate: &Predicate) -> Result<Vec<&PhysicalOperator>, PoemError> {
        if !self.has_source(source) {
            return Err(PoemError::UnknownSource(source.to_string()));
        }
        Ok(self.operators(source).filter(|o| predicate.matches(o)).collect())
    }

    /// Applies every assignment to every matching object of `source`. The
    /// whole update is rejected, leaving the store untouched, if any result
    /// breaks an invariant.
    pub fn update_operators(
        &mut self,
        source: &str,
        assignments: &[(Attribute, Value)],
        predicate: &Predicate,
    ) -> Result<usize, PoemError> {
        if !self.has_source(source) {
            return Err(PoemError::UnknownSource(source.to_string()));
        }
        let keys: Vec<(String, String)> = self
            .objects
            .iter()
            .filter(|((s, _), o)| s == source && predicate.matches(o))
            .map(|(k, _)| k.clone())
            .collect();
        if keys.is_empty() {
            return Ok(0);
        }
        let mut next = self.clone();
        for key in &keys {
            let op = next.objects.get_mut(key).expect("key taken from the map");
            for (attr, value) in assignments {
                assign(op, *attr, value)?;
            }
        }
        next.validate().map_err(|e| match e {
            PoemError::CorruptStore(m) => PoemError::InvariantViolation(m),
            other => other,
        })?;
        next.rebuild_index();
        *self = next;
        Ok(keys.len())
    }

    pub fn auxiliary_pairs(&self, source: &str) -> BTreeSet<Pair> {
        self.pair_index.get(source).cloned().unwrap_or_default()
    }

    pub fn is_auxiliary_pair(&self, source: &str, aux: &str, critical: &str) -> bool {
        self.pair_index
            .get(source)
            .is_some_and(|s| s.contains(&(aux.to_string(), critical.to_string())))
    }

    /// Checks every store invariant, reporting the first violation as `CorruptStore`.
    pub fn validate(&self) -> Result<(), PoemError> {
        let corrupt = |m: String| Err(PoemError::CorruptStore(m));
        let mut oids = BTreeSet::new();
        for ((source, name), op) in &self.objects {
            if &op.source != source || &op.name != name {
                return corrupt(format!("object {} stored under the wrong key", op.oid));
            }
            if name.is_empty() || *name != name.to_lowercase() {
                return corrupt(format!("name {name:?} is not a non-empty lowercase string"));
            }
            if !oids.insert(op.oid) {
                return corrupt(format!("duplicate oid {}", op.oid));
            }
            if op.descriptions.is_empty() {
                return corrupt(format!("{source}.{name} has no description"));
            }
            for t in &op.targets {
                if t == name || !self.objects.contains_key(&(source.clone(), t.clone())) {
                    return corrupt(format!("target {t:?} of {source}.{name} does not exist"));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut ops: Vec<&PhysicalOperator> = self.objects.values().collect();
        ops.sort_by_key(|o| o.oid);
        let file = StoreFile {
            poperators: ops
                .iter()
                .map(|o| OperatorRow {
                    oid: o.oid,
                    source: o.source.clone(),
                    name: o.name.clone(),
                    alias: o.alias.clone(),
                    op_type: o.op_type,
                    defn: o.defn.clone(),
                    cond: o.cond,
                    targets: o.targets.clone(),
                })
                .collect(),
            pdesc: ops
                .iter()
                .flat_map(|o| o.descriptions.iter().map(|d| DescRow { oid: o.oid, desc: d.clone() }))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("store rows always serialise")
    }

    pub fn from_json(text: &str) -> Result<Self, PoemError> {
        let file: StoreFile = serde_json::from_str(text).map_err(|e| PoemError::CorruptStore(e.to_string()))?;
        let mut descs: BTreeMap<u64, Vec<String>> = BTreeMap::new();
        for row in file.pdesc {
            descs.entry(row.oid).or_default().push(row.desc);
        }
        let mut store = PoemStore::new();
        for row in file.poperators {
            let key = (row.source.clone(), row.name.clone());
            if store.objects.contains_key(&key) {
                return Err(PoemError::CorruptStore(format!("duplicate operator {}.{}", row.source, row.name)));
            }
            store.next_oid = store.next_oid.max(row.oid + 1);
            let op = PhysicalOperator {
                oid: row.oid,
                source: row.source,
                name: row.name,
                alias: row.alias,
                op_type: row.op_type,
                defn: row.defn,
                descriptions: descs.remove(&row.oid).unwrap_or_default(),
                cond: row.cond,
                targets: row.targets,
            };
            store.objects.insert(key, op);
        }
        if let Some(oid) = descs.keys().next() {
            return Err(PoemError::CorruptStore(format!("description row for unknown oid {oid}")));
        }
        store.validate()?;
        store.rebuild_index();
        Ok(store)
    }
}

fn assign(op: &mut PhysicalOperator, attr: Attribute, value: &Value) -> Result<(), PoemError> {
    let text = |v: &Value| -> Option<String> {
        match v {
            Value::Null => None,
            Value::Text(s) => Some(s.clone()),
            Value::List(l) => Some(l.join(" ")),
        }
    };
    let list = |v: &Value| -> Vec<String> {
        match v {
            Value::Null => Vec::new(),
            Value::Text(s) => vec![s.clone()],
            Value::List(l) => l.clone(),
        }
    };
    match attr {
        Attribute::Oid | Attribute::Source | Attribute::Name => {
            return Err(PoemError::InvariantViolation(format!("{attr} cannot be updated")));
        }
        Attribute::Alias => op.alias = text(value),
        Attribute::Defn => op.defn = text(value),
        Attribute::Type => {
            let t = text(value).ok_or(PoemError::MissingMandatoryAttribute("type"))?;
            op.op_type = t.parse()?;
        }
        Attribute::Desc => {
            let d = list(value);
            if d.is_empty() {
                return Err(PoemError::MissingMandatoryAttribute("desc"));
            }
            op.descriptions = d;
        }
        Attribute::Cond => {
            op.cond = match text(value).map(|s| s.to_ascii_lowercase()).as_deref() {
                Some("true") => true,
                Some("false") => false,
                other => return Err(PoemError::InvariantViolation(format!("cond must be true or false, got {other:?}"))),
            }
        }
        Attribute::Target => {
            let mut ts: Vec<String> = Vec::new();
            for t in list(value) {
                let t = t.to_lowercase();
                if !ts.contains(&t) {
                    ts.push(t);
                }
            }
            op.targets = ts;
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    poperators: Vec<OperatorRow>,
    pdesc: Vec<DescRow>,
}

#[derive(Serialize, Deserialize)]
struct OperatorRow {
    oid: u64,
    source: String,
    name: String,
    alias: Option<String>,
    #[serde(rename = "type")]
    op_type: OpType,
    defn: Option<String>,
    cond: bool,
    targets: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct DescRow {
    oid: u64,
    desc: String,
}

pub fn save_store(store: &PoemStore, path: &Path) -> Result<(), PoemError> {
    fs::write(path, store.to_json()).map_err(|e| PoemError::Io(format!("{}: {e}", path.display())))
}

pub fn load_store(path: &Path) -> Result<PoemStore, PoemError> {
    let text = fs::read_to_string(path).map_err(|e| PoemError::Io(format!("{}: {e}", path.display())))?;
    PoemStore::from_json(&text)
}

/// `(name, type, cond, targets, description)` of the default PostgreSQL
/// catalog, ordered so every target precedes the operators naming it.
pub const DEFAULT_CATALOG: [(&str, OpType, bool, &[&str], &str); 14] = [
    ("seq scan", OpType::Unary, true, &[], "perform sequential scan"),
    ("parallel seq scan", OpType::Unary, true, &[], "perform parallel sequential scan"),
    ("index scan", OpType::Unary, true, &[], "perform index scan"),
    ("bitmap heap scan", OpType::Unary, true, &[], "perform bitmap heap scan"),
    ("bitmap index scan", OpType::Unary, true, &["bitmap heap scan"], "scan index"),
    ("hashjoin", OpType::Binary, true, &[], "perform hash join"),
    ("hash", OpType::Unary, false, &["hashjoin"], "hash"),
    ("mergejoin", OpType::Binary, true, &[], "perform merge join"),
    ("nested loop join", OpType::Binary, true, &[], "perform nested loop join"),
    ("aggregate", OpType::Unary, true, &[], "perform aggregate"),
    ("unique", OpType::Unary, false, &[], "perform duplicate removal"),
    ("sort", OpType::Unary, false, &["mergejoin", "aggregate", "unique"], "sort"),
    ("limit", OpType::Unary, true, &[], "limit the result from"),
    ("materialize", OpType::Unary, false, &[], "materialize"),
];

/// Creates the default catalog under `source`; returns how many objects were made.
pub fn seed_default_catalog(store: &mut PoemStore, source: &str) -> Result<usize, PoemError> {
    for (name, op_type, cond, targets, desc) in DEFAULT_CATALOG {
        let mut spec = NewOperator::new(source, name, op_type, desc).cond(cond);
        for t in targets {
            spec = spec.target(t);
        }
        store.create_operator(spec)?;
    }
    Ok(DEFAULT_CATALOG.len())
}
