use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::ir::eval::mask;
use crate::ir::{BinOp, Expr, UnOp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Rel {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Rel {
    fn from_op(op: BinOp) -> Option<Rel> {
        Some(match op {
            BinOp::Eq => Rel::Eq,
            BinOp::Ne => Rel::Ne,
            BinOp::Lt => Rel::Lt,
            BinOp::Le => Rel::Le,
            BinOp::Gt => Rel::Gt,
            BinOp::Ge => Rel::Ge,
            _ => return None,
        })
    }

    pub fn negate(self) -> Rel {
        match self {
            Rel::Eq => Rel::Ne,
            Rel::Ne => Rel::Eq,
            Rel::Lt => Rel::Ge,
            Rel::Le => Rel::Gt,
            Rel::Gt => Rel::Le,
            Rel::Ge => Rel::Lt,
        }
    }

    /// The relation with operands swapped: `c < f` is `f > c`.
    fn flip(self) -> Rel {
        match self {
            Rel::Lt => Rel::Gt,
            Rel::Le => Rel::Ge,
            Rel::Gt => Rel::Lt,
            Rel::Ge => Rel::Le,
            r => r,
        }
    }

    pub fn holds(self, a: u64, b: u64) -> bool {
        match self {
            Rel::Eq => a == b,
            Rel::Ne => a != b,
            Rel::Lt => a < b,
            Rel::Le => a <= b,
            Rel::Gt => a > b,
            Rel::Ge => a >= b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Eq => "==",
            Rel::Ne => "!=",
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Gt => ">",
            Rel::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Literal {
    pub field: String,
    pub rel: Rel,
    pub value: u64,
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.field, self.rel.symbol(), self.value)
    }
}

/// Conjunction of literals. An empty condition is `true`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PathCondition {
    pub literals: Vec<Literal>,
}

impl PathCondition {
    pub fn and(&self, other: &PathCondition) -> PathCondition {
        let mut literals = self.literals.clone();
        for l in &other.literals {
            if !literals.contains(l) {
                literals.push(l.clone());
            }
        }
        PathCondition { literals }
    }

    /// Whether some valuation of the fields satisfies every literal. Each
    /// field ranges over `0..2^width`.
    pub fn satisfiable(&self, width_of: &dyn Fn(&str) -> u32) -> bool {
        let mut per_field: BTreeMap<&str, Vec<&Literal>> = BTreeMap::new();
        for l in &self.literals {
            per_field.entry(&l.field).or_default().push(l);
        }
        per_field
            .into_iter()
            .all(|(f, lits)| field_satisfiable(&lits, mask(width_of(f))))
    }
}

impl fmt::Display for PathCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.literals.is_empty() {
            return write!(f, "true");
        }
        let parts: Vec<String> = self.literals.iter().map(|l| l.to_string()).collect();
        write!(f, "{}", parts.join(" && "))
    }
}

fn field_satisfiable(lits: &[&Literal], max: u64) -> bool {
    let (mut lo, mut hi) = (0u64, max);
    let mut eq: Option<u64> = None;
    let mut ne: Vec<u64> = Vec::new();
    for l in lits {
        let v = l.value;
        match l.rel {
            Rel::Eq => {
                if eq.is_some_and(|e| e != v) {
                    return false;
                }
                eq = Some(v);
            }
            Rel::Ne => ne.push(v),
            Rel::Lt => {
                if v == 0 {
                    return false;
                }
                hi = hi.min(v - 1);
            }
            Rel::Le => hi = hi.min(v),
            Rel::Gt => {
                if v == u64::MAX {
                    return false;
                }
                lo = lo.max(v + 1);
            }
            Rel::Ge => lo = lo.max(v),
        }
    }
    if lo > hi {
        return false;
    }
    if let Some(e) = eq {
        return lo <= e && e <= hi && !ne.contains(&e);
    }
    ne.sort_unstable();
    ne.dedup();
    let excluded = ne.iter().filter(|v| lo <= **v && **v <= hi).count() as u64;
    hi - lo + 1 > excluded
}

/// Splits a branch condition into the literals it guarantees on its then
/// arm. Conjuncts that are not `field rel const` are dropped, which only
/// weakens the condition.
pub fn literals_of(cond: &Expr) -> Vec<Literal> {
    let mut out = Vec::new();
    collect_conjuncts(cond, &mut out);
    out
}

fn collect_conjuncts(e: &Expr, out: &mut Vec<Literal>) {
    if let Expr::Binary(BinOp::And, a, b) = e {
        collect_conjuncts(a, out);
        collect_conjuncts(b, out);
    } else if let Some(l) = as_literal(e) {
        out.push(l);
    }
}

pub fn as_literal(e: &Expr) -> Option<Literal> {
    match e {
        Expr::Binary(op, a, b) => {
            let rel = Rel::from_op(*op)?;
            match (&**a, &**b) {
                (Expr::Var(f), Expr::Const(c)) if f.contains('.') => Some(Literal {
                    field: f.clone(),
                    rel,
                    value: *c,
                }),
                (Expr::Const(c), Expr::Var(f)) if f.contains('.') => Some(Literal {
                    field: f.clone(),
                    rel: rel.flip(),
                    value: *c,
                }),
                _ => None,
            }
        }
        Expr::Unary(UnOp::Not, a) => {
            let l = as_literal(a)?;
            Some(Literal {
                rel: l.rel.negate(),
                ..l
            })
        }
        _ => None,
    }
}

/// Literals guaranteed on the else arm: only a single literal can be negated
/// into a conjunction.
pub fn negated_literals_of(cond: &Expr) -> Vec<Literal> {
    match as_literal(cond) {
        Some(l) => vec![Literal {
            rel: l.rel.negate(),
            ..l
        }],
        None => Vec::new(),
    }
}
