//! ALU grammars: TOML files describing one stateful or stateless ALU family.
//!
//! A stateful grammar carries a template in a small C-like language whose
//! holes the synthesizer fills:
//!
//! ```text
//! body  := { "let" NAME "=" expr ";" } ( { REG "=" expr ";" } | if )
//! if    := "if" "(" expr ")" "{" block "}" [ "else" "{" block "}" ]
//! block := { REG "=" expr ";" } | if
//! expr  := cond [ "?" expr ":" expr ]
//! cond  := binary expression over terms with the usual C operators
//! term  := "in" | "imm" | "mux" | "regs" | "any" | REG | NAME | NUMBER
//!        | "opt" "(" expr ")" | "arith" "(" expr "," expr ")"
//!        | "rel" "(" expr "," expr ")" | "bin" "(" expr "," expr ")"
//!        | "pred" "(" expr "," expr ")" | "(" expr ")" | "!" term
//! ```
//!
//! `in` selects an ALU input, `imm` a constant, `mux` either, `regs` a
//! register and `any` any of those. `opt(e)` is `e` or 0, `arith` picks `+`
//! or `-`, `rel` a comparison, `bin` any binary operator, and `pred(a, b)`
//! one of nine boolean combinations of its arguments.

use std::collections::BTreeSet;
use std::fmt;

use serde::Deserialize;
use thiserror::Error;

use crate::ir::BinOp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("grammar file: {0}")]
    Toml(String),
    #[error("grammar {name}: {msg}")]
    Invalid { name: String, msg: String },
    #[error("unknown grammar `{0}`")]
    Unknown(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum TKind {
    In,
    Imm,
    Mux,
    Regs,
    Any,
    Reg(usize),
    Let(String),
    Num(u64),
    Opt(Box<TExpr>),
    Arith(Box<TExpr>, Box<TExpr>),
    Rel(Box<TExpr>, Box<TExpr>),
    Bin(Box<TExpr>, Box<TExpr>),
    Pred(Box<TExpr>, Box<TExpr>),
    Op(BinOp, Box<TExpr>, Box<TExpr>),
    Not(Box<TExpr>),
    Ternary(Box<TExpr>, Box<TExpr>, Box<TExpr>),
}

/// Template expression; `id` is unique within its grammar.
#[derive(Clone, Debug, PartialEq)]
pub struct TExpr {
    pub id: usize,
    pub kind: TKind,
}

impl TExpr {
    pub fn children(&self) -> Vec<&TExpr> {
        match &self.kind {
            TKind::Opt(a) | TKind::Not(a) => vec![a],
            TKind::Arith(a, b)
            | TKind::Rel(a, b)
            | TKind::Bin(a, b)
            | TKind::Pred(a, b)
            | TKind::Op(_, a, b) => {
                vec![a, b]
            }
            TKind::Ternary(c, a, b) => vec![c, a, b],
            _ => vec![],
        }
    }

    pub fn uses_let(&self) -> bool {
        matches!(self.kind, TKind::Let(_)) || self.children().iter().any(|c| c.uses_let())
    }

    /// Structure without ids, for comparing templates.
    pub fn shape(&self) -> String {
        let kids: Vec<String> = self.children().iter().map(|c| c.shape()).collect();
        let head = match &self.kind {
            TKind::In => "in".into(),
            TKind::Imm => "imm".into(),
            TKind::Mux => "mux".into(),
            TKind::Regs => "regs".into(),
            TKind::Any => "any".into(),
            TKind::Reg(r) => format!("reg{r}"),
            TKind::Let(n) => n.clone(),
            TKind::Num(n) => n.to_string(),
            TKind::Opt(_) => "opt".into(),
            TKind::Arith(..) => "arith".into(),
            TKind::Rel(..) => "rel".into(),
            TKind::Bin(..) => "bin".into(),
            TKind::Pred(..) => "pred".into(),
            TKind::Op(op, ..) => op.symbol().into(),
            TKind::Not(_) => "!".into(),
            TKind::Ternary(..) => "?:".into(),
        };
        if kids.is_empty() {
            head
        } else {
            format!("{head}({})", kids.join(","))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TStmt {
    Let(String, TExpr),
    Assign(usize, TExpr),
    If(TExpr, Vec<TStmt>, Vec<TStmt>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatefulGrammar {
    pub name: String,
    pub registers: usize,
    pub max_inputs: usize,
    pub lets: Vec<(String, TExpr)>,
    pub body: Vec<TStmt>,
    pub template: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatelessGrammar {
    pub name: String,
    pub max_inputs: usize,
    pub ops: Vec<BinOp>,
    /// Whether the ALU can also compute `in ? mux : mux`.
    pub select: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AluGrammar {
    Stateful(StatefulGrammar),
    Stateless(StatelessGrammar),
}

impl AluGrammar {
    pub fn name(&self) -> &str {
        match self {
            AluGrammar::Stateful(g) => &g.name,
            AluGrammar::Stateless(g) => &g.name,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GrammarFile {
    name: String,
    kind: String,
    registers: Option<usize>,
    max_inputs: usize,
    template: Option<String>,
    ops: Option<Vec<String>>,
    select: Option<bool>,
}

const BUILTIN: &[(&str, &str)] = &[
    ("tofino", include_str!("../../grammars/tofino.toml")),
    (
        "tofino-stateless",
        include_str!("../../grammars/tofino_stateless.toml"),
    ),
    ("banzai-raw", include_str!("../../grammars/banzai_raw.toml")),
    (
        "banzai-pred-raw",
        include_str!("../../grammars/banzai_pred_raw.toml"),
    ),
    (
        "banzai-if-else-raw",
        include_str!("../../grammars/banzai_if_else_raw.toml"),
    ),
    ("banzai-sub", include_str!("../../grammars/banzai_sub.toml")),
    (
        "banzai-nested-ifs",
        include_str!("../../grammars/banzai_nested_ifs.toml"),
    ),
    (
        "banzai-pair",
        include_str!("../../grammars/banzai_pair.toml"),
    ),
    (
        "banzai-stateless",
        include_str!("../../grammars/banzai_stateless.toml"),
    ),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

pub fn builtin(name: &str) -> Result<AluGrammar, GrammarError> {
    let (_, src) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| GrammarError::Unknown(name.into()))?;
    parse_grammar(src)
}

fn binop_of(s: &str) -> Option<BinOp> {
    use BinOp::*;
    Some(match s {
        "+" => Add,
        "-" => Sub,
        "*" => Mul,
        "&" => BitAnd,
        "|" => BitOr,
        "^" => BitXor,
        "<<" => Shl,
        ">>" => Shr,
        "==" => Eq,
        "!=" => Ne,
        "<" => Lt,
        "<=" => Le,
        ">" => Gt,
        ">=" => Ge,
        "&&" => And,
        "||" => Or,
        _ => return None,
    })
}

pub fn parse_grammar(src: &str) -> Result<AluGrammar, GrammarError> {
    let f: GrammarFile = toml::from_str(src).map_err(|e| GrammarError::Toml(e.to_string()))?;
    let invalid = |msg: String| GrammarError::Invalid {
        name: f.name.clone(),
        msg,
    };
    match f.kind.as_str() {
        "stateless" => {
            let ops = f
                .ops
                .as_ref()
                .ok_or_else(|| invalid("stateless grammar needs `ops`".into()))?
                .iter()
                .map(|o| binop_of(o).ok_or_else(|| invalid(format!("unknown operator `{o}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            if ops.is_empty() {
                return Err(invalid("empty `ops`".into()));
            }
            Ok(AluGrammar::Stateless(StatelessGrammar {
                name: f.name.clone(),
                max_inputs: f.max_inputs,
                ops,
                select: f.select.unwrap_or(false),
            }))
        }
        "stateful" => {
            let registers = f
                .registers
                .ok_or_else(|| invalid("stateful grammar needs `registers`".into()))?;
            if registers == 0 {
                return Err(invalid("at least one register".into()));
            }
            let template = f
                .template
                .clone()
                .ok_or_else(|| invalid("stateful grammar needs `template`".into()))?;
            let stmts = TemplateParser::new(&template)
                .and_then(|mut p| p.body())
                .map_err(invalid)?;
            let mut lets = Vec::new();
            let mut body = Vec::new();
            for s in stmts {
                match s {
                    TStmt::Let(n, e) if body.is_empty() => lets.push((n, e)),
                    TStmt::Let(n, _) => return Err(invalid(format!("let {n} after an update"))),
                    other => body.push(other),
                }
            }
            let g = StatefulGrammar {
                name: f.name.clone(),
                registers,
                max_inputs: f.max_inputs,
                lets,
                body,
                template,
            };
            validate(&g).map_err(invalid)?;
            Ok(AluGrammar::Stateful(g))
        }
        other => Err(invalid(format!("unknown kind `{other}`"))),
    }
}

fn validate(g: &StatefulGrammar) -> Result<(), String> {
    let mut names: BTreeSet<&str> = BTreeSet::new();
    for (n, e) in &g.lets {
        check_expr(e, g.registers, &names)?;
        if !names.insert(n) {
            return Err(format!("let {n} defined twice"));
        }
    }
    check_block(&g.body, g.registers, &names)
}

fn check_block(b: &[TStmt], k: usize, lets: &BTreeSet<&str>) -> Result<(), String> {
    let ifs = b.iter().filter(|s| matches!(s, TStmt::If(..))).count();
    if ifs > 0 && b.len() > 1 {
        return Err("a block is either register updates or a single if".into());
    }
    let mut seen = BTreeSet::new();
    for s in b {
        match s {
            TStmt::Let(n, _) => return Err(format!("let {n} inside a block")),
            TStmt::Assign(r, e) => {
                if *r >= k {
                    return Err(format!("reg{r} out of range"));
                }
                if !seen.insert(*r) {
                    return Err(format!("reg{r} assigned twice"));
                }
                check_expr(e, k, lets)?;
            }
            TStmt::If(c, t, e) => {
                check_expr(c, k, lets)?;
                check_block(t, k, lets)?;
                check_block(e, k, lets)?;
            }
        }
    }
    Ok(())
}

fn check_expr(e: &TExpr, k: usize, lets: &BTreeSet<&str>) -> Result<(), String> {
    match &e.kind {
        TKind::Reg(r) if *r >= k => Err(format!("reg{r} out of range")),
        TKind::Let(n) if !lets.contains(n.as_str()) => Err(format!("unknown name `{n}`")),
        _ => e.children().iter().try_for_each(|c| check_expr(c, k, lets)),
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(u64),
    Sym(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "{s}"),
            Tok::Num(n) => write!(f, "{n}"),
            Tok::Sym(s) => write!(f, "{s}"),
        }
    }
}

const SYMBOLS: &[&str] = &[
    "<<", ">>", "==", "!=", "<=", ">=", "&&", "||", "+", "-", "*", "&", "|", "^", "<", ">", "!",
    "(", ")", "{", "}", ";", ",", "=", "?", ":",
];

fn lex(src: &str) -> Result<Vec<Tok>, String> {
    let mut out = Vec::new();
    let b = src.as_bytes();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c == '/' && b.get(i + 1) == Some(&b'/') {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
        } else if c.is_ascii_digit() {
            let s = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            out.push(Tok::Num(
                src[s..i]
                    .parse()
                    .map_err(|_| format!("bad number `{}`", &src[s..i]))?,
            ));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push(Tok::Ident(src[s..i].to_string()));
        } else {
            let sym = SYMBOLS
                .iter()
                .find(|s| src[i..].starts_with(*s))
                .ok_or_else(|| format!("unexpected `{c}`"))?;
            out.push(Tok::Sym(sym));
            i += sym.len();
        }
    }
    Ok(out)
}

struct TemplateParser {
    toks: Vec<Tok>,
    pos: usize,
    next_id: usize,
}

fn reg_index(s: &str) -> Option<usize> {
    s.strip_prefix("reg").and_then(|n| n.parse().ok())
}

impl TemplateParser {
    fn new(src: &str) -> Result<Self, String> {
        Ok(TemplateParser {
            toks: lex(src)?,
            pos: 0,
            next_id: 0,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn at(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn expect(&mut self, s: &str) -> Result<(), String> {
        if self.at(s) {
            self.pos += 1;
            Ok(())
        } else {
            Err(format!(
                "expected `{s}`, found {}",
                self.peek().map_or("end".into(), |t| format!("`{t}`"))
            ))
        }
    }

    fn ident(&mut self) -> Result<String, String> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s)
            }
            t => Err(format!(
                "expected a name, found {}",
                t.map_or("end".into(), |t| format!("`{t}`"))
            )),
        }
    }

    fn mk(&mut self, kind: TKind) -> TExpr {
        self.next_id += 1;
        TExpr {
            id: self.next_id - 1,
            kind,
        }
    }

    fn body(&mut self) -> Result<Vec<TStmt>, String> {
        let mut out = Vec::new();
        while self.peek().is_some() && !self.at("}") {
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn stmt(&mut self) -> Result<TStmt, String> {
        let name = self.ident()?;
        match name.as_str() {
            "let" => {
                let n = self.ident()?;
                self.expect("=")?;
                let e = self.expr()?;
                self.expect(";")?;
                Ok(TStmt::Let(n, e))
            }
            "if" => {
                self.expect("(")?;
                let c = self.expr()?;
                self.expect(")")?;
                self.expect("{")?;
                let t = self.body()?;
                self.expect("}")?;
                let mut e = Vec::new();
                if matches!(self.peek(), Some(Tok::Ident(s)) if s == "else") {
                    self.pos += 1;
                    self.expect("{")?;
                    e = self.body()?;
                    self.expect("}")?;
                }
                Ok(TStmt::If(c, t, e))
            }
            _ => {
                let r = reg_index(&name).ok_or_else(|| format!("cannot assign to `{name}`"))?;
                self.expect("=")?;
                let e = self.expr()?;
                self.expect(";")?;
                Ok(TStmt::Assign(r, e))
            }
        }
    }

    fn expr(&mut self) -> Result<TExpr, String> {
        let c = self.binary(0)?;
        if self.at("?") {
            self.pos += 1;
            let a = self.expr()?;
            self.expect(":")?;
            let b = self.expr()?;
            return Ok(self.mk(TKind::Ternary(Box::new(c), Box::new(a), Box::new(b))));
        }
        Ok(c)
    }

    fn binary(&mut self, min_prec: u8) -> Result<TExpr, String> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Sym(s)) => binop_of(s),
                _ => None,
            };
            let Some(op) = op else { break };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(prec + 1)?;
            lhs = self.mk(TKind::Op(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn args2(&mut self) -> Result<(Box<TExpr>, Box<TExpr>), String> {
        self.expect("(")?;
        let a = self.expr()?;
        self.expect(",")?;
        let b = self.expr()?;
        self.expect(")")?;
        Ok((Box::new(a), Box::new(b)))
    }

    fn term(&mut self) -> Result<TExpr, String> {
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(self.mk(TKind::Num(n)))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Some(Tok::Sym("!")) => {
                self.pos += 1;
                let e = self.term()?;
                Ok(self.mk(TKind::Not(Box::new(e))))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let kind = match name.as_str() {
                    "in" => TKind::In,
                    "imm" => TKind::Imm,
                    "mux" => TKind::Mux,
                    "regs" => TKind::Regs,
                    "any" => TKind::Any,
                    "opt" => {
                        self.expect("(")?;
                        let a = self.expr()?;
                        self.expect(")")?;
                        TKind::Opt(Box::new(a))
                    }
                    "arith" => {
                        let (a, b) = self.args2()?;
                        TKind::Arith(a, b)
                    }
                    "rel" => {
                        let (a, b) = self.args2()?;
                        TKind::Rel(a, b)
                    }
                    "bin" => {
                        let (a, b) = self.args2()?;
                        TKind::Bin(a, b)
                    }
                    "pred" => {
                        let (a, b) = self.args2()?;
                        TKind::Pred(a, b)
                    }
                    _ => match reg_index(&name) {
                        Some(r) => TKind::Reg(r),
                        None => TKind::Let(name),
                    },
                };
                Ok(self.mk(kind))
            }
            t => Err(format!(
                "unexpected {}",
                t.map_or("end".into(), |t| format!("`{t}`"))
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for n in builtin_names() {
            let g = builtin(n).unwrap();
            assert_eq!(g.name(), n);
        }
    }

    #[test]
    fn tofino_template_structure() {
        let AluGrammar::Stateful(g) = builtin("tofino").unwrap() else {
            panic!()
        };
        assert_eq!(g.registers, 2);
        assert_eq!(g.lets.len(), 2);
        assert_eq!(g.lets[0].1.shape(), g.lets[1].1.shape());
        assert!(matches!(&g.body[0], TStmt::Assign(0, e) if matches!(e.kind, TKind::Ternary(..))));
    }

    #[test]
    fn rejects_bad_templates() {
        let file = |t: &str| {
            format!("name = \"x\"\nkind = \"stateful\"\nregisters = 1\nmax_inputs = 2\ntemplate = \"{t}\"")
        };
        assert!(parse_grammar(&file("reg1 = in;")).is_err());
        assert!(parse_grammar(&file("reg0 = c;")).is_err());
        assert!(parse_grammar(&file("reg0 = in; if (in) { reg0 = in; }")).is_err());
        assert!(parse_grammar(&file("reg0 = in +;")).is_err());
        assert!(parse_grammar(&file("reg0 = opt(reg0) + mux;")).is_ok());
        assert!(
            parse_grammar("name = \"y\"\nkind = \"stateless\"\nmax_inputs = 2\nops = [\"/\"]")
                .is_err()
        );
    }
}
