use std::fmt;

use super::lexer::Keyword;
use crate::poem::Attribute;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Create(CreateStmt),
    Select(SelectStmt),
    Compose(ComposeStmt),
    Update(UpdateStmt),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreateStmt {
    pub name: String,
    pub source: String,
    pub assignments: Vec<(Attribute, ValueExpr)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Projection {
    All,
    Attrs(Vec<Attribute>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectStmt {
    pub projection: Projection,
    pub source: String,
    pub alias: Option<String>,
    pub predicate: Option<Pred>,
}

/// `qualifier.attr`; the qualifier is optional.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QualifiedAttr {
    pub qualifier: Option<String>,
    pub attr: Attribute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareOp {
    Eq,
    Like,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pred {
    pub attr: QualifiedAttr,
    pub op: CompareOp,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComposeStmt {
    /// One operator, or an `(auxiliary, critical)` pair.
    pub names: Vec<String>,
    pub source: String,
    /// `USING op.desc = '...'`: fixes the description of one operator.
    pub using: Option<(QualifiedAttr, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateStmt {
    pub source: String,
    pub assignments: Vec<(Attribute, ValueExpr)>,
    pub predicate: Option<Pred>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueExpr {
    Literal(String),
    Null,
    SubSelect(Box<SelectStmt>),
    Replace(Box<ValueExpr>, String, String),
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

/// A name renders bare when it would lex back to the same identifier,
/// otherwise as a string literal.
fn name(s: &str) -> String {
    let bare = !s.is_empty()
        && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        && Keyword::lookup(s).is_none();
    if bare {
        s.to_string()
    } else {
        quote(s)
    }
}

impl fmt::Display for QualifiedAttr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(q) = &self.qualifier {
            write!(f, "{}.", name(q))?;
        }
        f.write_str(self.attr.as_str())
    }
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            CompareOp::Eq => "=",
            CompareOp::Like => "LIKE",
        };
        write!(f, "{} {op} {}", self.attr, quote(&self.value))
    }
}

impl fmt::Display for ValueExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueExpr::Literal(s) => f.write_str(&quote(s)),
            ValueExpr::Null => f.write_str("NULL"),
            ValueExpr::SubSelect(s) => write!(f, "({s})"),
            ValueExpr::Replace(v, from, to) => write!(f, "REPLACE({v}, {}, {})", quote(from), quote(to)),
        }
    }
}

fn assignments(f: &mut fmt::Formatter<'_>, items: &[(Attribute, ValueExpr)]) -> fmt::Result {
    for (i, (a, v)) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{a} = {v}")?;
    }
    Ok(())
}

impl fmt::Display for SelectStmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        match &self.projection {
            Projection::All => f.write_str("*")?,
            Projection::Attrs(a) => {
                let names: Vec<&str> = a.iter().map(|a| a.as_str()).collect();
                f.write_str(&names.join(", "))?;
            }
        }
        write!(f, " FROM {}", name(&self.source))?;
        if let Some(a) = &self.alias {
            write!(f, " AS {}", name(a))?;
        }
        if let Some(p) = &self.predicate {
            write!(f, " WHERE {p}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Create(c) => {
                write!(f, "CREATE POPERATOR {} FOR {} (", name(&c.name), name(&c.source))?;
                assignments(f, &c.assignments)?;
                f.write_str(")")
            }
            Statement::Select(s) => write!(f, "{s}"),
            Statement::Compose(c) => {
                let names: Vec<String> = c.names.iter().map(|n| name(n)).collect();
                write!(f, "COMPOSE {} FROM {}", names.join(", "), name(&c.source))?;
                if let Some((a, v)) = &c.using {
                    write!(f, " USING {a} = {}", quote(v))?;
                }
                Ok(())
            }
            Statement::Update(u) => {
                write!(f, "UPDATE {} SET ", name(&u.source))?;
                assignments(f, &u.assignments)?;
                if let Some(p) = &u.predicate {
                    write!(f, " WHERE {p}")?;
                }
                Ok(())
            }
        }
    }
}
