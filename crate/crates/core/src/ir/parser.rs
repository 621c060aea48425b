use super::ast::*;
use super::error::FrontendError;
use super::lexer::{lex, Tok, Token};

type PResult<T> = Result<T, FrontendError>;

/// Parses source text without semantic checks. See [`super::parse`].
pub fn parse_unchecked(src: &str) -> PResult<Program> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    p.program()
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(n) => format!("`{n}`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn error<T>(&self, expected: &str) -> PResult<T> {
        Err(FrontendError::syntax(
            self.span(),
            format!("expected {expected}, found {}", Self::describe(self.peek())),
        ))
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(&format!("`{p}`"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.error(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.error("identifier"),
        }
    }

    fn number(&mut self) -> PResult<u64> {
        match *self.peek() {
            Tok::Num(n) => {
                self.bump();
                Ok(n)
            }
            _ => self.error("number"),
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut prog = Program::default();
        let mut namespaces: Vec<String> = Vec::new();
        let mut seen_control = false;
        loop {
            let span = self.span();
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "header" || kw == "metadata" => {
                    self.bump();
                    let ns = self.ident()?;
                    if namespaces.contains(&ns) {
                        return Err(FrontendError::name(
                            span,
                            format!("namespace `{ns}` declared twice"),
                        ));
                    }
                    namespaces.push(ns.clone());
                    self.expect_punct("{")?;
                    while !self.eat_punct("}") {
                        let fspan = self.span();
                        let width = self.ty()?;
                        let name = self.ident()?;
                        self.expect_punct(";")?;
                        prog.headers.push(FieldDecl {
                            name: format!("{ns}.{name}"),
                            width,
                            span: fspan,
                        });
                    }
                }
                Tok::Ident(kw) if kw == "register" => {
                    self.bump();
                    let width = self.ty()?;
                    let name = self.ident()?;
                    let init = if self.eat_punct("=") {
                        self.number()?
                    } else {
                        0
                    };
                    self.expect_punct(";")?;
                    prog.state_vars.push(StateDecl {
                        name,
                        width,
                        init,
                        span,
                    });
                }
                Tok::Punct("@") => {
                    self.bump();
                    self.expect_kw("atomic")?;
                    let a = self.action(true, span)?;
                    prog.actions.push(a);
                }
                Tok::Ident(kw) if kw == "action" => {
                    let a = self.action(false, span)?;
                    prog.actions.push(a);
                }
                Tok::Ident(kw) if kw == "table" => {
                    let t = self.table()?;
                    prog.tables.push(t);
                }
                Tok::Ident(kw) if kw == "control" => {
                    if seen_control {
                        return Err(FrontendError::syntax(
                            span,
                            "only one control block is allowed",
                        ));
                    }
                    seen_control = true;
                    self.bump();
                    self.ident()?;
                    prog.control = self.block(false)?;
                }
                _ => {
                    return self
                        .error("`header`, `metadata`, `register`, `action`, `table` or `control`")
                }
            }
        }
        Ok(prog)
    }

    fn ty(&mut self) -> PResult<u32> {
        let span = self.span();
        if self.is_kw("int") {
            self.bump();
            return Ok(32);
        }
        self.expect_kw("bit")?;
        self.expect_punct("<")?;
        let w = self.number()?;
        self.expect_punct(">")?;
        if !(1..=32).contains(&w) {
            return Err(FrontendError::ty(
                span,
                format!("bit-width {w} is outside 1..32"),
            ));
        }
        Ok(w as u32)
    }

    fn action(&mut self, atomic: bool, span: Span) -> PResult<Action> {
        self.expect_kw("action")?;
        let name = self.ident()?;
        self.expect_punct("(")?;
        self.expect_punct(")")?;
        let body = self.block(true)?;
        Ok(Action {
            name,
            atomic,
            body,
            span,
        })
    }

    fn action_ref(&mut self) -> PResult<String> {
        let n = self.ident()?;
        if self.eat_punct("(") {
            self.expect_punct(")")?;
        }
        Ok(n)
    }

    fn field_ref(&mut self) -> PResult<String> {
        let ns = self.ident()?;
        self.expect_punct(".")?;
        let f = self.ident()?;
        Ok(format!("{ns}.{f}"))
    }

    fn table(&mut self) -> PResult<Table> {
        let span = self.span();
        self.expect_kw("table")?;
        let name = self.ident()?;
        self.expect_punct("{")?;
        let mut t = Table {
            name,
            keys: Vec::new(),
            actions: Vec::new(),
            entries: 0,
            const_entries: Vec::new(),
            default_action: None,
            span,
        };
        let mut size = None;
        while !self.eat_punct("}") {
            if self.is_kw("key") {
                self.bump();
                self.expect_punct("=")?;
                self.expect_punct("{")?;
                while !self.eat_punct("}") {
                    t.keys.push(self.field_ref()?);
                    if self.eat_punct(":") {
                        self.expect_kw("exact")?;
                    }
                    self.expect_punct(";")?;
                }
            } else if self.is_kw("actions") {
                self.bump();
                self.expect_punct("=")?;
                self.expect_punct("{")?;
                while !self.eat_punct("}") {
                    t.actions.push(self.action_ref()?);
                    self.expect_punct(";")?;
                }
            } else if self.is_kw("size") {
                self.bump();
                self.expect_punct("=")?;
                size = Some(self.number()?);
                self.expect_punct(";")?;
            } else if self.is_kw("default_action") {
                self.bump();
                self.expect_punct("=")?;
                t.default_action = Some(self.action_ref()?);
                self.expect_punct(";")?;
            } else if self.is_kw("const") {
                self.bump();
                self.expect_kw("entries")?;
                self.expect_punct("=")?;
                self.expect_punct("{")?;
                while !self.eat_punct("}") {
                    let mut values = Vec::new();
                    if self.eat_punct("(") {
                        values.push(self.number()?);
                        while self.eat_punct(",") {
                            values.push(self.number()?);
                        }
                        self.expect_punct(")")?;
                    } else {
                        values.push(self.number()?);
                    }
                    self.expect_punct(":")?;
                    let action = self.action_ref()?;
                    self.expect_punct(";")?;
                    t.const_entries.push(Entry { values, action });
                }
            } else {
                return self.error("`key`, `actions`, `size`, `default_action` or `const entries`");
            }
        }
        t.entries = size.unwrap_or((t.const_entries.len() as u64).max(1));
        Ok(t)
    }

    fn block(&mut self, in_action: bool) -> PResult<Vec<Stmt>> {
        self.expect_punct("{")?;
        let mut out = Vec::new();
        while !self.eat_punct("}") {
            if *self.peek() == Tok::Eof {
                return self.error("`}`");
            }
            out.push(self.stmt(in_action)?);
        }
        Ok(out)
    }

    fn body(&mut self, in_action: bool) -> PResult<Vec<Stmt>> {
        if self.is_punct("{") {
            self.block(in_action)
        } else {
            Ok(vec![self.stmt(in_action)?])
        }
    }

    fn stmt(&mut self, in_action: bool) -> PResult<Stmt> {
        let span = self.span();
        if self.is_kw("if") {
            self.bump();
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let then_body = self.body(in_action)?;
            let else_body = if self.is_kw("else") {
                self.bump();
                self.body(in_action)?
            } else {
                Vec::new()
            };
            return Ok(Stmt {
                kind: StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                },
                span,
            });
        }
        let first = self.ident()?;
        if self.eat_punct(".") {
            if self.is_kw("apply") && matches!(self.peek_at(1), Tok::Punct("(")) {
                if in_action {
                    return Err(FrontendError::syntax(
                        span,
                        "tables cannot be applied inside an action",
                    ));
                }
                self.bump();
                self.expect_punct("(")?;
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                return Ok(Stmt {
                    kind: StmtKind::Apply { table: first },
                    span,
                });
            }
            let f = self.ident()?;
            self.expect_punct("=")?;
            let value = self.expr()?;
            self.expect_punct(";")?;
            return Ok(Stmt {
                kind: StmtKind::Assign {
                    target: format!("{first}.{f}"),
                    value,
                },
                span,
            });
        }
        self.expect_punct("=")?;
        let value = self.expr()?;
        self.expect_punct(";")?;
        Ok(Stmt {
            kind: StmtKind::Assign {
                target: first,
                value,
            },
            span,
        })
    }

    fn expr(&mut self) -> PResult<Expr> {
        let c = self.binary(1)?;
        if self.eat_punct("?") {
            let a = self.expr()?;
            self.expect_punct(":")?;
            let b = self.expr()?;
            return Ok(Expr::ite(c, a, b));
        }
        Ok(c)
    }

    fn binop(&self) -> Option<BinOp> {
        match self.peek() {
            Tok::Punct(p) => BinOp::ALL.iter().copied().find(|op| op.symbol() == *p),
            _ => None,
        }
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let op = match self.peek() {
            Tok::Punct("!") => Some(UnOp::Not),
            Tok::Punct("~") => Some(UnOp::BitNot),
            Tok::Punct("-") => Some(UnOp::Neg),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            return Ok(Expr::un(op, self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Expr::Const(n))
            }
            Tok::Ident(_) => {
                let first = self.ident()?;
                if self.eat_punct(".") {
                    let f = self.ident()?;
                    Ok(Expr::Var(format!("{first}.{f}")))
                } else {
                    Ok(Expr::Var(first))
                }
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            _ => self.error("expression"),
        }
    }
}
