use std::fmt::Write;

use super::ast::*;

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

// `ctx` is the minimum precedence the context accepts without parentheses;
// ternaries have precedence 0 and unaries 11.
fn write_expr(out: &mut String, e: &Expr, ctx: u8) {
    match e {
        Expr::Const(c) => write!(out, "{c}").unwrap(),
        Expr::Var(v) => out.push_str(v),
        Expr::Unary(op, a) => {
            out.push_str(op.symbol());
            write_expr(out, a, 11);
        }
        Expr::Binary(op, a, b) => {
            let p = op.precedence();
            let paren = p < ctx;
            if paren {
                out.push('(');
            }
            write_expr(out, a, p);
            write!(out, " {} ", op.symbol()).unwrap();
            write_expr(out, b, p + 1);
            if paren {
                out.push(')');
            }
        }
        Expr::Ternary(c, a, b) => {
            let paren = ctx > 0;
            if paren {
                out.push('(');
            }
            write_expr(out, c, 1);
            out.push_str(" ? ");
            write_expr(out, a, 1);
            out.push_str(" : ");
            write_expr(out, b, 1);
            if paren {
                out.push(')');
            }
        }
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

pub fn write_stmts(out: &mut String, stmts: &[Stmt], depth: usize) {
    for s in stmts {
        indent(out, depth);
        match &s.kind {
            StmtKind::Assign { target, value } => {
                writeln!(out, "{target} = {};", expr_to_string(value)).unwrap();
            }
            StmtKind::Apply { table } => writeln!(out, "{table}.apply();").unwrap(),
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                writeln!(out, "if ({}) {{", expr_to_string(cond)).unwrap();
                write_stmts(out, then_body, depth + 1);
                indent(out, depth);
                if else_body.is_empty() {
                    out.push_str("}\n");
                } else {
                    out.push_str("} else {\n");
                    write_stmts(out, else_body, depth + 1);
                    indent(out, depth);
                    out.push_str("}\n");
                }
            }
        }
    }
}

/// Canonical source form of a program.
pub fn program_to_string(p: &Program) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < p.headers.len() {
        let ns = namespace(&p.headers[i].name);
        let kw = if ns == "meta" { "metadata" } else { "header" };
        writeln!(out, "{kw} {ns} {{").unwrap();
        while i < p.headers.len() && namespace(&p.headers[i].name) == ns {
            let f = &p.headers[i];
            let short = &f.name[ns.len() + 1..];
            writeln!(out, "    bit<{}> {short};", f.width).unwrap();
            i += 1;
        }
        out.push_str("}\n\n");
    }
    for s in &p.state_vars {
        writeln!(out, "register bit<{}> {} = {};", s.width, s.name, s.init).unwrap();
    }
    if !p.state_vars.is_empty() {
        out.push('\n');
    }
    for a in &p.actions {
        if a.atomic {
            out.push_str("@atomic ");
        }
        writeln!(out, "action {}() {{", a.name).unwrap();
        write_stmts(&mut out, &a.body, 1);
        out.push_str("}\n\n");
    }
    for t in &p.tables {
        writeln!(out, "table {} {{", t.name).unwrap();
        if !t.keys.is_empty() {
            out.push_str("    key = {");
            for k in &t.keys {
                write!(out, " {k} : exact;").unwrap();
            }
            out.push_str(" }\n");
        }
        out.push_str("    actions = {");
        for a in &t.actions {
            write!(out, " {a};").unwrap();
        }
        out.push_str(" }\n");
        if !t.const_entries.is_empty() {
            out.push_str("    const entries = {\n");
            for e in &t.const_entries {
                let vals: Vec<String> = e.values.iter().map(|v| v.to_string()).collect();
                writeln!(out, "        ({}) : {};", vals.join(", "), e.action).unwrap();
            }
            out.push_str("    }\n");
        }
        if let Some(d) = &t.default_action {
            writeln!(out, "    default_action = {d};").unwrap();
        }
        writeln!(out, "    size = {};", t.entries).unwrap();
        out.push_str("}\n\n");
    }
    out.push_str("control ingress {\n");
    write_stmts(&mut out, &p.control, 1);
    out.push_str("}\n");
    out
}

fn namespace(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

#[cfg(test)]
mod tests {
    use super::super::parse_unchecked;
    use super::*;

    #[test]
    fn parenthesizes_only_when_needed() {
        let e = Expr::bin(
            BinOp::Mul,
            Expr::bin(BinOp::Add, Expr::var("a"), Expr::Const(1)),
            Expr::var("b"),
        );
        assert_eq!(expr_to_string(&e), "(a + 1) * b");
        let e = Expr::bin(
            BinOp::Sub,
            Expr::var("a"),
            Expr::bin(BinOp::Sub, Expr::var("b"), Expr::var("c")),
        );
        assert_eq!(expr_to_string(&e), "a - (b - c)");
        let e = Expr::un(
            UnOp::Neg,
            Expr::bin(BinOp::Add, Expr::var("a"), Expr::var("b")),
        );
        assert_eq!(expr_to_string(&e), "-(a + b)");
    }

    #[test]
    fn nested_ternary_round_trips() {
        let src = "control c { pkt.x = (a ? b : c) ? (d ? 1 : 2) : e + (f ? 1 : 0); }";
        let p = parse_unchecked(src).unwrap();
        let again = parse_unchecked(&program_to_string(&p)).unwrap();
        assert_eq!(p, again);
    }
}
