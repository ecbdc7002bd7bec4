//! The POOL statement language: lexer, parser, renderer and interpreter.

mod ast;
mod lexer;
mod parser;
pub mod template;

use std::fmt;

use thiserror::Error;

pub use ast::*;
pub use lexer::{tokenize, Keyword, Token, TokenKind};
pub use parser::{parse, parse_script, parse_str};
pub use template::{OperatorTemplate, Placeholder};

use crate::poem::{Attribute, NewOperator, PoemError, PoemStore, Predicate, Value};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("lex error at byte {position} near {snippet:?}")]
    Lex { position: usize, snippet: String },
    #[error("parse error at byte {position}: expected {expected}, found {found}")]
    Parse { expected: String, found: String, position: usize },
    #[error(transparent)]
    Store(#[from] PoemError),
    #[error("sub-select must yield exactly one value, got {0} rows")]
    AmbiguousSubSelect(usize),
    #[error("sub-select must project exactly one attribute")]
    SubSelectProjection,
    #[error("unknown operator {0:?} in COMPOSE")]
    UnknownOperatorInCompose(String),
    #[error("{0:?} is not an auxiliary operator of {1:?}")]
    NotAuxiliaryCriticalPair(String, String),
    #[error("qualifier {0:?} names neither the source nor its alias")]
    UnknownQualifier(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("invalid USING clause: {0}")]
    InvalidUsing(String),
}

/// One projected object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub fields: Vec<(Attribute, Value)>,
}

impl Row {
    pub fn get(&self, attr: Attribute) -> Option<&Value> {
        self.fields.iter().find(|(a, _)| *a == attr).map(|(_, v)| v)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut m = serde_json::Map::new();
        for (a, v) in &self.fields {
            let j = match v {
                Value::Null => serde_json::Value::Null,
                Value::Text(s) => serde_json::Value::String(s.clone()),
                Value::List(l) => serde_json::Value::from(l.clone()),
            };
            m.insert(a.as_str().to_string(), j);
        }
        serde_json::Value::Object(m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PoolResult {
    Objects(Vec<Row>),
    Template(String),
    Count(usize),
}

impl fmt::Display for PoolResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoolResult::Objects(rows) => {
                for (i, r) in rows.iter().enumerate() {
                    if i > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "{}", r.to_json())?;
                }
                Ok(())
            }
            PoolResult::Template(t) => f.write_str(t),
            PoolResult::Count(n) => write!(f, "{n}"),
        }
    }
}

fn check_qualifier(q: &Option<String>, source: &str, alias: Option<&str>) -> Result<(), PoolError> {
    match q {
        Some(q) if q != source && Some(q.as_str()) != alias => Err(PoolError::UnknownQualifier(q.clone())),
        _ => Ok(()),
    }
}

fn predicate(p: &Option<Pred>, source: &str, alias: Option<&str>) -> Result<Predicate, PoolError> {
    let Some(p) = p else { return Ok(Predicate::True) };
    check_qualifier(&p.attr.qualifier, source, alias)?;
    Ok(match p.op {
        CompareOp::Eq => Predicate::Eq(p.attr.attr, p.value.clone()),
        CompareOp::Like => Predicate::Like(p.attr.attr, p.value.clone()),
    })
}

fn select(stmt: &SelectStmt, store: &PoemStore) -> Result<Vec<Row>, PoolError> {
    let pred = predicate(&stmt.predicate, &stmt.source, stmt.alias.as_deref())?;
    let attrs: Vec<Attribute> = match &stmt.projection {
        Projection::All => Attribute::ALL.to_vec(),
        Projection::Attrs(a) => a.clone(),
    };
    let found = store.query_operators(&stmt.source, &pred)?;
    Ok(found
        .into_iter()
        .map(|o| Row { fields: attrs.iter().map(|&a| (a, o.get(a))).collect() })
        .collect())
}

fn evaluate(expr: &ValueExpr, store: &PoemStore) -> Result<Value, PoolError> {
    match expr {
        ValueExpr::Literal(s) => Ok(Value::Text(s.clone())),
        ValueExpr::Null => Ok(Value::Null),
        ValueExpr::SubSelect(sel) => {
            if !matches!(&sel.projection, Projection::Attrs(a) if a.len() == 1) {
                return Err(PoolError::SubSelectProjection);
            }
            let mut rows = select(sel, store)?;
            if rows.len() != 1 {
                return Err(PoolError::AmbiguousSubSelect(rows.len()));
            }
            Ok(rows.remove(0).fields.remove(0).1)
        }
        ValueExpr::Replace(inner, from, to) => Ok(match evaluate(inner, store)? {
            Value::Null => Value::Null,
            Value::Text(s) => Value::Text(s.replace(from.as_str(), to)),
            Value::List(l) => Value::List(l.into_iter().map(|s| s.replace(from.as_str(), to)).collect()),
        }),
    }
}

fn single_text(attr: Attribute, v: Value) -> Result<Option<String>, PoolError> {
    match v {
        Value::Null => Ok(None),
        Value::Text(s) => Ok(Some(s)),
        Value::List(mut l) if l.len() == 1 => Ok(l.pop()),
        Value::List(_) => Err(PoolError::InvalidValue(format!("{attr} takes a single value"))),
    }
}

fn create(stmt: &CreateStmt, store: &mut PoemStore) -> Result<PoolResult, PoolError> {
    let mut spec = NewOperator { source: stmt.source.clone(), name: stmt.name.clone(), ..Default::default() };
    for (attr, expr) in &stmt.assignments {
        let v = evaluate(expr, store)?;
        match attr {
            Attribute::Alias => spec.alias = single_text(*attr, v)?,
            Attribute::Defn => spec.defn = single_text(*attr, v)?,
            Attribute::Type => {
                let t = single_text(*attr, v)?.ok_or(PoemError::MissingMandatoryAttribute("type"))?;
                spec.op_type = Some(t.parse()?);
            }
            Attribute::Cond => {
                spec.cond = match single_text(*attr, v)?.map(|s| s.to_ascii_lowercase()).as_deref() {
                    Some("true") => true,
                    Some("false") | None => false,
                    Some(other) => return Err(PoolError::InvalidValue(format!("cond must be true or false, got {other:?}"))),
                }
            }
            Attribute::Desc => match v {
                Value::Null => {}
                Value::Text(s) => spec.descriptions.push(s),
                Value::List(l) => spec.descriptions.extend(l),
            },
            Attribute::Target => match v {
                Value::Null => {}
                Value::Text(s) => spec.targets.push(s),
                Value::List(l) => spec.targets.extend(l),
            },
            Attribute::Oid | Attribute::Source | Attribute::Name => {
                return Err(PoolError::InvalidValue(format!("{attr} cannot be assigned in CREATE")));
            }
        }
    }
    store.create_operator(spec)?;
    Ok(PoolResult::Count(1))
}

fn update(stmt: &UpdateStmt, store: &mut PoemStore) -> Result<PoolResult, PoolError> {
    let pred = predicate(&stmt.predicate, &stmt.source, None)?;
    let mut values = Vec::with_capacity(stmt.assignments.len());
    for (attr, expr) in &stmt.assignments {
        values.push((*attr, evaluate(expr, store)?));
    }
    Ok(PoolResult::Count(store.update_operators(&stmt.source, &values, &pred)?))
}

/// Builds the template string for one operator or an `(auxiliary, critical)`
/// pair. A pair renders as the auxiliary template, `" and "`, then the
/// critical template. `using` fixes the description of one named operator;
/// every other operator with several descriptions draws one from a
/// generator seeded with `seed`.
pub fn compose_template(
    store: &PoemStore,
    names: &[String],
    source: &str,
    using: Option<(&QualifiedAttr, &str)>,
    seed: u64,
) -> Result<String, PoolError> {
    if names.is_empty() || names.len() > 2 {
        return Err(PoolError::InvalidValue("COMPOSE takes one or two operators".into()));
    }
    let mut ops = Vec::new();
    for n in names {
        match store.get_operator(source, n) {
            Ok(op) => ops.push(op),
            Err(_) => return Err(PoolError::UnknownOperatorInCompose(n.clone())),
        }
    }
    if let [aux, crit] = ops[..] {
        if !aux.targets.contains(&crit.name) {
            return Err(PoolError::NotAuxiliaryCriticalPair(aux.name.clone(), crit.name.clone()));
        }
    }
    let fixed: Option<(usize, &str)> = match using {
        None => None,
        Some((qa, value)) => {
            if qa.attr != Attribute::Desc {
                return Err(PoolError::InvalidUsing(format!("only desc can be selected, got {}", qa.attr)));
            }
            let idx = match &qa.qualifier {
                None => ops.len() - 1,
                Some(q) => ops
                    .iter()
                    .position(|o| &o.name == q)
                    .ok_or_else(|| PoolError::InvalidUsing(format!("{q:?} is not composed here")))?,
            };
            if !ops[idx].descriptions.iter().any(|d| d == value) {
                return Err(PoolError::InvalidUsing(format!("{value:?} is not a description of {:?}", ops[idx].name)));
            }
            Some((idx, value))
        }
    };
    let mut rng = template::rng(seed);
    let parts: Vec<String> = ops
        .iter()
        .enumerate()
        .map(|(i, op)| {
            let pinned = fixed.and_then(|(j, v)| (i == j).then_some(v));
            let desc = template::choose_description(op, pinned, &mut rng);
            OperatorTemplate::build(op, desc).full()
        })
        .collect();
    Ok(parts.join(" and "))
}

/// Runs one statement. SELECT and COMPOSE never modify the store; a failing
/// UPDATE leaves it unchanged.
pub fn execute(stmt: &Statement, store: &mut PoemStore, seed: u64) -> Result<PoolResult, PoolError> {
    match stmt {
        Statement::Create(c) => create(c, store),
        Statement::Select(s) => Ok(PoolResult::Objects(select(s, store)?)),
        Statement::Compose(c) => {
            let using = c.using.as_ref().map(|(a, v)| (a, v.as_str()));
            Ok(PoolResult::Template(compose_template(store, &c.names, &c.source, using, seed)?))
        }
        Statement::Update(u) => update(u, store),
    }
}

/// Parses and runs a `;`-separated script, stopping at the first error.
pub fn execute_script(text: &str, store: &mut PoemStore, seed: u64) -> Result<Vec<PoolResult>, PoolError> {
    parse_script(text)?.iter().map(|s| execute(s, store, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(store: &mut PoemStore, text: &str) -> Result<PoolResult, PoolError> {
        execute(&parse_str(text)?, store, 0)
    }

    #[test]
    fn select_like_returns_join_operators() {
        let mut s = PoemStore::seeded();
        let PoolResult::Objects(rows) = run(&mut s, "SELECT * FROM pg WHERE name LIKE '%join%'").unwrap() else {
            panic!()
        };
        let names: Vec<String> = rows.iter().map(|r| r.get(Attribute::Name).unwrap().to_string()).collect();
        assert_eq!(names, ["hashjoin", "mergejoin", "nested loop join"]);
    }

    #[test]
    fn cross_source_transfer() {
        let mut s = PoemStore::seeded();
        run(&mut s, "CREATE POPERATOR hsjoin FOR db2 (TYPE = 'binary', DESC = 'x')").unwrap();
        let r = run(
            &mut s,
            "UPDATE db2 SET desc = (SELECT desc FROM pg WHERE pg.name = 'hashjoin') WHERE db2.name = 'hsjoin'",
        )
        .unwrap();
        assert_eq!(r, PoolResult::Count(1));
        assert_eq!(
            s.get_operator("db2", "hsjoin").unwrap().descriptions,
            s.get_operator("pg", "hashjoin").unwrap().descriptions
        );
    }

    #[test]
    fn compose_errors() {
        let mut s = PoemStore::seeded();
        assert_eq!(
            run(&mut s, "COMPOSE zzjoin FROM pg"),
            Err(PoolError::UnknownOperatorInCompose("zzjoin".into()))
        );
        assert!(matches!(
            run(&mut s, "COMPOSE hashjoin, hash FROM pg"),
            Err(PoolError::NotAuxiliaryCriticalPair(..))
        ));
    }

    #[test]
    fn compose_templates() {
        let mut s = PoemStore::seeded();
        assert_eq!(run(&mut s, "COMPOSE hash FROM pg").unwrap(), PoolResult::Template("hash $R1$".into()));
        assert_eq!(
            run(&mut s, "COMPOSE hash, hashjoin FROM pg USING hashjoin.desc = 'perform hash join'").unwrap(),
            PoolResult::Template("hash $R1$ and perform hash join on $R2$ and $R1$ on condition $C$".into())
        );
    }

    #[test]
    fn random_description_choice_is_seeded() {
        let mut s = PoemStore::seeded();
        run(&mut s, "UPDATE pg SET desc = (SELECT desc FROM pg WHERE name = 'hashjoin') WHERE name = 'mergejoin'")
            .unwrap();
        s.update_operators(
            "pg",
            &[(Attribute::Desc, Value::List(vec!["perform hash join".into(), "join by hashing".into()]))],
            &Predicate::Eq(Attribute::Name, "hashjoin".into()),
        )
        .unwrap();
        let names = vec!["hash".to_string(), "hashjoin".to_string()];
        let outs: Vec<String> = (0..20).map(|seed| compose_template(&s, &names, "pg", None, seed).unwrap()).collect();
        assert!(outs.iter().any(|t| t.contains("join by hashing")));
        assert!(outs.iter().any(|t| t.contains("perform hash join")));
        for seed in 0..20 {
            assert_eq!(compose_template(&s, &names, "pg", None, seed).unwrap(), outs[seed as usize]);
        }
    }

    #[test]
    fn subselect_must_be_unambiguous() {
        let mut s = PoemStore::seeded();
        let r = run(&mut s, "UPDATE pg SET defn = (SELECT defn FROM pg WHERE name LIKE '%join%') WHERE name = 'sort'");
        assert_eq!(r, Err(PoolError::AmbiguousSubSelect(3)));
    }

    #[test]
    fn unknown_qualifier() {
        let mut s = PoemStore::seeded();
        assert!(matches!(
            run(&mut s, "SELECT * FROM pg WHERE db2.name = 'x'"),
            Err(PoolError::UnknownQualifier(_))
        ));
    }
}
