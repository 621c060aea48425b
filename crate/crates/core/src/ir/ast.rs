use std::fmt;

use serde::Serialize;

/// Source location of a statement or declaration.
///
/// Spans never participate in equality so that ASTs built by different
/// routes (parsing, pretty-printing, rewriting) compare structurally.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Self { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    BitAnd,
    BitOr,
    BitXor,
    Shl,
    Shr,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub const ALL: [BinOp; 16] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::BitAnd,
        BinOp::BitOr,
        BinOp::BitXor,
        BinOp::Shl,
        BinOp::Shr,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
        BinOp::And,
        BinOp::Or,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::BitAnd => "&",
            BinOp::BitOr => "|",
            BinOp::BitXor => "^",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::BitOr => 3,
            BinOp::BitXor => 4,
            BinOp::BitAnd => 5,
            BinOp::Eq | BinOp::Ne => 6,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 7,
            BinOp::Shl | BinOp::Shr => 8,
            BinOp::Add | BinOp::Sub => 9,
            BinOp::Mul => 10,
        }
    }

    /// Operators whose result is a 0/1 truth value.
    pub fn is_boolean(self) -> bool {
        matches!(
            self,
            BinOp::Eq
                | BinOp::Ne
                | BinOp::Lt
                | BinOp::Le
                | BinOp::Gt
                | BinOp::Ge
                | BinOp::And
                | BinOp::Or
        )
    }

    pub fn is_relational(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            BinOp::Add
                | BinOp::Mul
                | BinOp::BitAnd
                | BinOp::BitOr
                | BinOp::BitXor
                | BinOp::Eq
                | BinOp::Ne
                | BinOp::And
                | BinOp::Or
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum UnOp {
    /// Logical negation, yields 0/1.
    Not,
    BitNot,
    Neg,
}

impl UnOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Not => "!",
            UnOp::BitNot => "~",
            UnOp::Neg => "-",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Expr {
    Const(u64),
    /// Packet field (`pkt.x`, `meta.t`), state variable, or compiler temporary.
    Var(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn un(op: UnOp, a: Expr) -> Self {
        Expr::Unary(op, Box::new(a))
    }

    pub fn ite(c: Expr, a: Expr, b: Expr) -> Self {
        Expr::Ternary(Box::new(c), Box::new(a), Box::new(b))
    }

    /// Appends every variable read by the expression, in left-to-right order.
    pub fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => out.push(v),
            Expr::Unary(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Ternary(c, a, b) => {
                c.collect_vars(out);
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn vars(&self) -> Vec<&str> {
        let mut v = Vec::new();
        self.collect_vars(&mut v);
        v
    }

    pub fn reads(&self, name: &str) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => v == name,
            Expr::Unary(_, a) => a.reads(name),
            Expr::Binary(_, a, b) => a.reads(name) || b.reads(name),
            Expr::Ternary(c, a, b) => c.reads(name) || a.reads(name) || b.reads(name),
        }
    }

    pub fn rename(&mut self, f: &mut impl FnMut(&str) -> Option<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                if let Some(n) = f(v) {
                    *v = n;
                }
            }
            Expr::Unary(_, a) => a.rename(f),
            Expr::Binary(_, a, b) => {
                a.rename(f);
                b.rename(f);
            }
            Expr::Ternary(c, a, b) => {
                c.rename(f);
                a.rename(f);
                b.rename(f);
            }
        }
    }

    /// Replaces variables by expressions.
    pub fn substitute(&self, f: &impl Fn(&str) -> Option<Expr>) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(v) => f(v).unwrap_or_else(|| Expr::Var(v.clone())),
            Expr::Unary(op, a) => Expr::un(*op, a.substitute(f)),
            Expr::Binary(op, a, b) => Expr::bin(*op, a.substitute(f), b.substitute(f)),
            Expr::Ternary(c, a, b) => Expr::ite(c.substitute(f), a.substitute(f), b.substitute(f)),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.size(),
            Expr::Binary(_, a, b) => 1 + a.size() + b.size(),
            Expr::Ternary(c, a, b) => 1 + c.size() + a.size() + b.size(),
        }
    }

    /// Whether the value is always 0 or 1.
    pub fn is_boolean(&self) -> bool {
        match self {
            Expr::Const(c) => *c <= 1,
            Expr::Unary(UnOp::Not, _) => true,
            Expr::Binary(op, _, _) => op.is_boolean(),
            Expr::Ternary(_, a, b) => a.is_boolean() && b.is_boolean(),
            _ => false,
        }
    }

    pub fn constants(&self, out: &mut Vec<u64>) {
        match self {
            Expr::Const(c) => out.push(*c),
            Expr::Var(_) => {}
            Expr::Unary(_, a) => a.constants(out),
            Expr::Binary(_, a, b) => {
                a.constants(out);
                b.constants(out);
            }
            Expr::Ternary(c, a, b) => {
                c.constants(out);
                a.constants(out);
                b.constants(out);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum StmtKind {
    Assign {
        target: String,
        value: Expr,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    Apply {
        table: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

impl Stmt {
    pub fn assign(target: impl Into<String>, value: Expr) -> Self {
        Stmt {
            kind: StmtKind::Assign {
                target: target.into(),
                value,
            },
            span: Span::default(),
        }
    }

    pub fn apply(table: impl Into<String>) -> Self {
        Stmt {
            kind: StmtKind::Apply {
                table: table.into(),
            },
            span: Span::default(),
        }
    }

    pub fn if_else(cond: Expr, then_body: Vec<Stmt>, else_body: Vec<Stmt>) -> Self {
        Stmt {
            kind: StmtKind::If {
                cond,
                then_body,
                else_body,
            },
            span: Span::default(),
        }
    }

    pub fn with_span(mut self, span: Span) -> Self {
        self.span = span;
        self
    }
}

/// Declared packet field, e.g. `pkt.x` with its bit-width.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FieldDecl {
    pub name: String,
    pub width: u32,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StateDecl {
    pub name: String,
    pub width: u32,
    pub init: u64,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Action {
    pub name: String,
    pub atomic: bool,
    pub body: Vec<Stmt>,
    pub span: Span,
}

/// A constant exact-match entry: one value per key field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Entry {
    pub values: Vec<u64>,
    pub action: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Table {
    pub name: String,
    pub keys: Vec<String>,
    pub actions: Vec<String>,
    /// Maximum number of entries (`size`).
    pub entries: u64,
    pub const_entries: Vec<Entry>,
    pub default_action: Option<String>,
    pub span: Span,
}

impl Table {
    pub fn is_default_table(&self) -> bool {
        self.keys.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Program {
    /// Header and metadata fields, with their full dotted names.
    pub headers: Vec<FieldDecl>,
    pub state_vars: Vec<StateDecl>,
    pub actions: Vec<Action>,
    pub tables: Vec<Table>,
    pub control: Vec<Stmt>,
}

impl Program {
    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.headers.iter().find(|f| f.name == name)
    }

    pub fn state_var(&self, name: &str) -> Option<&StateDecl> {
        self.state_vars.iter().find(|s| s.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&Action> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn table_actions<'a>(&'a self, table: &'a Table) -> impl Iterator<Item = &'a Action> + 'a {
        table.actions.iter().filter_map(move |a| self.action(a))
    }

    /// Declared width of a field or state variable.
    pub fn width_of(&self, name: &str) -> Option<u32> {
        self.field(name)
            .map(|f| f.width)
            .or_else(|| self.state_var(name).map(|s| s.width))
    }

    pub fn is_state(&self, name: &str) -> bool {
        self.state_var(name).is_some()
    }

    /// Names of tables in the order their `apply` statements appear.
    pub fn applied_tables(&self) -> Vec<String> {
        fn walk(stmts: &[Stmt], out: &mut Vec<String>) {
            for s in stmts {
                match &s.kind {
                    StmtKind::Apply { table } => out.push(table.clone()),
                    StmtKind::If {
                        then_body,
                        else_body,
                        ..
                    } => {
                        walk(then_body, out);
                        walk(else_body, out);
                    }
                    StmtKind::Assign { .. } => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.control, &mut out);
        out
    }
}

/// Whether a name lives in the metadata namespace used for temporaries.
pub fn is_metadata(name: &str) -> bool {
    name.starts_with("meta.")
}

/// Fields read and written by a statement list, in first-occurrence order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReadWrite {
    pub reads: Vec<String>,
    pub writes: Vec<String>,
}

impl ReadWrite {
    fn read(&mut self, v: &str) {
        if !self.reads.iter().any(|r| r == v) {
            self.reads.push(v.to_string());
        }
    }

    fn write(&mut self, v: &str) {
        if !self.writes.iter().any(|r| r == v) {
            self.writes.push(v.to_string());
        }
    }

    pub fn of_stmts(stmts: &[Stmt]) -> Self {
        let mut rw = ReadWrite::default();
        rw.add_stmts(stmts);
        rw
    }

    pub fn add_stmts(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            match &s.kind {
                StmtKind::Assign { target, value } => {
                    for v in value.vars() {
                        self.read(v);
                    }
                    self.write(target);
                }
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    for v in cond.vars() {
                        self.read(v);
                    }
                    self.add_stmts(then_body);
                    self.add_stmts(else_body);
                }
                StmtKind::Apply { .. } => {}
            }
        }
    }

    pub fn add_reads<'a>(&mut self, names: impl IntoIterator<Item = &'a str>) {
        for n in names {
            self.read(n);
        }
    }

    pub fn add_writes<'a>(&mut self, names: impl IntoIterator<Item = &'a str>) {
        for n in names {
            self.write(n);
        }
    }
}
