use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::poem::{OpType, PhysicalOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Placeholder {
    /// Sole input of a unary operator; inner input of a binary one.
    R1,
    /// Outer input of a binary operator.
    R2,
    /// Filter, join or limit condition.
    C,
    /// Group-by attribute.
    G,
    /// Sort attribute.
    A,
    /// Index condition.
    I,
}

impl Placeholder {
    pub const ALL: [Placeholder; 6] =
        [Placeholder::R1, Placeholder::R2, Placeholder::C, Placeholder::G, Placeholder::A, Placeholder::I];

    pub fn name(self) -> &'static str {
        match self {
            Placeholder::R1 => "R1",
            Placeholder::R2 => "R2",
            Placeholder::C => "C",
            Placeholder::G => "G",
            Placeholder::A => "A",
            Placeholder::I => "I",
        }
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}$", self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Piece {
    Text(String),
    Slot(Placeholder),
}

/// Optional trailing phrase built around exactly one placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    pub slot: Placeholder,
    pub pieces: Vec<Piece>,
}

/// Description template of one operator: a head naming the inputs, then
/// condition clauses that only appear when their placeholder has a value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorTemplate {
    pub head: Vec<Piece>,
    pub clauses: Vec<Clause>,
}

fn text(s: &str) -> Piece {
    Piece::Text(s.to_string())
}

fn clause(before: &str, slot: Placeholder, after: &str) -> Clause {
    let mut pieces = vec![text(before), Piece::Slot(slot)];
    if !after.is_empty() {
        pieces.push(text(after));
    }
    Clause { slot, pieces }
}

impl OperatorTemplate {
    /// Template for `op` using description `desc`.
    pub fn build(op: &PhysicalOperator, desc: &str) -> Self {
        let connective = if desc.starts_with("perform ") { " on " } else { " " };
        let head = match op.op_type {
            OpType::Unary => vec![text(desc), text(connective), Piece::Slot(Placeholder::R1)],
            OpType::Binary => vec![
                text(desc),
                text(" on "),
                Piece::Slot(Placeholder::R2),
                text(" and "),
                Piece::Slot(Placeholder::R1),
            ],
        };
        let clauses = if !op.cond {
            Vec::new()
        } else if op.name.contains("index") {
            vec![
                clause(" using index condition ", Placeholder::I, ""),
                clause(" and filtering on ", Placeholder::C, ""),
            ]
        } else if op.name.contains("scan") {
            vec![clause(" and filtering on ", Placeholder::C, "")]
        } else if op.name == "aggregate" {
            vec![
                clause(" with grouping on attribute ", Placeholder::G, ""),
                clause(" and filtering on ", Placeholder::C, ""),
            ]
        } else if op.name == "limit" {
            vec![clause(" to ", Placeholder::C, " rows")]
        } else if op.name == "sort" {
            vec![clause(" on attribute ", Placeholder::A, "")]
        } else {
            vec![clause(" on condition ", Placeholder::C, "")]
        };
        OperatorTemplate { head, clauses }
    }

    fn write(pieces: &[Piece], out: &mut String) {
        for p in pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(s) => out.push_str(&s.to_string()),
            }
        }
    }

    /// Every clause included.
    pub fn full(&self) -> String {
        self.with_clauses(|_| true)
    }

    /// Head plus the clauses whose placeholder satisfies `keep`.
    pub fn with_clauses(&self, keep: impl Fn(Placeholder) -> bool) -> String {
        let mut out = String::new();
        Self::write(&self.head, &mut out);
        for c in &self.clauses {
            if keep(c.slot) {
                Self::write(&c.pieces, &mut out);
            }
        }
        out
    }

    pub fn placeholders(&self) -> BTreeSet<Placeholder> {
        let mut set = BTreeSet::new();
        for p in self.head.iter().chain(self.clauses.iter().flat_map(|c| c.pieces.iter())) {
            if let Piece::Slot(s) = p {
                set.insert(*s);
            }
        }
        set
    }
}

/// Picks one description: `fixed` when given, otherwise uniformly with `rng`.
pub fn choose_description<'a>(op: &'a PhysicalOperator, fixed: Option<&'a str>, rng: &mut ChaCha8Rng) -> &'a str {
    if let Some(d) = fixed {
        return d;
    }
    match op.descriptions.len() {
        0 => "",
        1 => &op.descriptions[0],
        n => &op.descriptions[rng.gen_range(0..n)],
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Replaces every `$X$` in `template` by its value from `lookup`;
/// placeholders without a value are left untouched.
pub fn substitute(template: &str, lookup: impl Fn(Placeholder) -> Option<String>) -> String {
    let mut out = template.to_string();
    for p in Placeholder::ALL {
        if let Some(v) = lookup(p) {
            out = out.replace(&p.to_string(), &v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poem::PoemStore;

    fn tpl(name: &str) -> OperatorTemplate {
        let s = PoemStore::seeded();
        let op = s.get_operator("pg", name).unwrap();
        OperatorTemplate::build(op, &op.descriptions[0])
    }

    #[test]
    fn templates_of_the_default_catalog() {
        assert_eq!(tpl("hash").full(), "hash $R1$");
        assert_eq!(tpl("hashjoin").full(), "perform hash join on $R2$ and $R1$ on condition $C$");
        assert_eq!(tpl("seq scan").full(), "perform sequential scan on $R1$ and filtering on $C$");
        assert_eq!(
            tpl("aggregate").full(),
            "perform aggregate on $R1$ with grouping on attribute $G$ and filtering on $C$"
        );
        assert_eq!(tpl("unique").full(), "perform duplicate removal on $R1$");
        assert_eq!(tpl("limit").full(), "limit the result from $R1$ to $C$ rows");
        assert_eq!(tpl("sort").full(), "sort $R1$");
        assert_eq!(
            tpl("index scan").full(),
            "perform index scan on $R1$ using index condition $I$ and filtering on $C$"
        );
    }

    #[test]
    fn clauses_drop_when_unbound() {
        let t = tpl("aggregate");
        assert_eq!(t.with_clauses(|p| p == Placeholder::C), "perform aggregate on $R1$ and filtering on $C$");
        assert_eq!(t.with_clauses(|_| false), "perform aggregate on $R1$");
    }

    #[test]
    fn substitution() {
        let s = substitute("hash $R1$ and join $R2$", |p| (p == Placeholder::R1).then(|| "T1".to_string()));
        assert_eq!(s, "hash T1 and join $R2$");
    }
}
