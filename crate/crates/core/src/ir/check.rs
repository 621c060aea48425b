use std::collections::HashSet;

use super::ast::*;
use super::error::FrontendError;

/// Inferred width of an expression; `None` for bare constants, which adapt
/// to their context.
pub fn expr_width(e: &Expr, width_of: &impl Fn(&str) -> Option<u32>) -> Option<u32> {
    match e {
        Expr::Const(_) => None,
        Expr::Var(v) => width_of(v),
        Expr::Unary(UnOp::Not, _) => Some(1),
        Expr::Unary(_, a) => expr_width(a, width_of),
        Expr::Binary(op, _, _) if op.is_boolean() => Some(1),
        Expr::Binary(_, a, b) => max_opt(expr_width(a, width_of), expr_width(b, width_of)),
        Expr::Ternary(_, a, b) => max_opt(expr_width(a, width_of), expr_width(b, width_of)),
    }
}

fn max_opt(a: Option<u32>, b: Option<u32>) -> Option<u32> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn fits(value: u64, width: u32) -> bool {
    width >= 64 || value >> width == 0
}

/// Name resolution and width checking.
pub fn check(p: &Program) -> Result<(), FrontendError> {
    let mut names: HashSet<&str> = HashSet::new();
    for f in &p.headers {
        if !names.insert(&f.name) {
            return Err(FrontendError::name(
                f.span,
                format!("`{}` declared twice", f.name),
            ));
        }
    }
    for s in &p.state_vars {
        if !names.insert(&s.name) {
            return Err(FrontendError::name(
                s.span,
                format!("`{}` declared twice", s.name),
            ));
        }
        if !fits(s.init, s.width) {
            return Err(FrontendError::ty(
                s.span,
                format!("initial value {} does not fit in bit<{}>", s.init, s.width),
            ));
        }
    }
    let mut callables: HashSet<&str> = HashSet::new();
    for a in &p.actions {
        if !callables.insert(&a.name) {
            return Err(FrontendError::name(
                a.span,
                format!("action `{}` declared twice", a.name),
            ));
        }
        check_body(p, &a.body, true)?;
    }
    let mut tables: HashSet<&str> = HashSet::new();
    for t in &p.tables {
        if !tables.insert(&t.name) || callables.contains(t.name.as_str()) {
            return Err(FrontendError::name(
                t.span,
                format!("`{}` declared twice", t.name),
            ));
        }
        check_table(p, t)?;
    }
    check_body(p, &p.control, false)?;
    let mut applied = HashSet::new();
    for t in p.applied_tables() {
        if !applied.insert(t.clone()) {
            let span = find_apply_span(&p.control, &t).unwrap_or_default();
            return Err(FrontendError::name(
                span,
                format!("table `{t}` is applied more than once"),
            ));
        }
    }
    Ok(())
}

fn find_apply_span(stmts: &[Stmt], table: &str) -> Option<Span> {
    let mut hits = Vec::new();
    fn walk(stmts: &[Stmt], table: &str, hits: &mut Vec<Span>) {
        for s in stmts {
            match &s.kind {
                StmtKind::Apply { table: t } if t == table => hits.push(s.span),
                StmtKind::If {
                    then_body,
                    else_body,
                    ..
                } => {
                    walk(then_body, table, hits);
                    walk(else_body, table, hits);
                }
                _ => {}
            }
        }
    }
    walk(stmts, table, &mut hits);
    hits.get(1).copied()
}

fn check_table(p: &Program, t: &Table) -> Result<(), FrontendError> {
    if t.entries == 0 {
        return Err(FrontendError::ty(
            t.span,
            format!("table `{}` must have size >= 1", t.name),
        ));
    }
    if t.actions.is_empty() {
        return Err(FrontendError::name(
            t.span,
            format!("table `{}` lists no actions", t.name),
        ));
    }
    if t.keys.is_empty() && t.actions.len() != 1 {
        return Err(FrontendError::ty(
            t.span,
            format!("keyless table `{}` must have exactly one action", t.name),
        ));
    }
    for k in &t.keys {
        if p.field(k).is_none() {
            return Err(FrontendError::name(
                t.span,
                format!("unknown key field `{k}` in table `{}`", t.name),
            ));
        }
    }
    let mut seen = HashSet::new();
    for a in &t.actions {
        if p.action(a).is_none() {
            return Err(FrontendError::name(
                t.span,
                format!("unknown action `{a}` in table `{}`", t.name),
            ));
        }
        if !seen.insert(a) {
            return Err(FrontendError::name(
                t.span,
                format!("action `{a}` listed twice in table `{}`", t.name),
            ));
        }
    }
    if let Some(d) = &t.default_action {
        if !t.actions.contains(d) {
            return Err(FrontendError::name(
                t.span,
                format!("default action `{d}` is not listed in table `{}`", t.name),
            ));
        }
    }
    for e in &t.const_entries {
        if e.values.len() != t.keys.len() {
            return Err(FrontendError::ty(
                t.span,
                format!(
                    "entry has {} values but table `{}` has {} keys",
                    e.values.len(),
                    t.name,
                    t.keys.len()
                ),
            ));
        }
        for (v, k) in e.values.iter().zip(&t.keys) {
            let w = p.width_of(k).unwrap_or(32);
            if !fits(*v, w) {
                return Err(FrontendError::ty(
                    t.span,
                    format!("entry value {v} does not fit key `{k}` of bit<{w}>"),
                ));
            }
        }
        if !t.actions.contains(&e.action) {
            return Err(FrontendError::name(
                t.span,
                format!(
                    "entry action `{}` is not listed in table `{}`",
                    e.action, t.name
                ),
            ));
        }
    }
    if t.const_entries.len() as u64 > t.entries {
        return Err(FrontendError::ty(
            t.span,
            format!("table `{}` has more const entries than its size", t.name),
        ));
    }
    Ok(())
}

fn check_expr(p: &Program, e: &Expr, span: Span, in_action: bool) -> Result<(), FrontendError> {
    for v in e.vars() {
        check_name(p, v, span, in_action)?;
    }
    let mut consts = Vec::new();
    e.constants(&mut consts);
    if let Some(c) = consts.iter().find(|c| !fits(**c, 32)) {
        return Err(FrontendError::ty(
            span,
            format!("constant {c} exceeds 32 bits"),
        ));
    }
    Ok(())
}

fn check_name(p: &Program, v: &str, span: Span, in_action: bool) -> Result<(), FrontendError> {
    if p.field(v).is_some() {
        return Ok(());
    }
    if p.is_state(v) {
        if in_action {
            return Ok(());
        }
        return Err(FrontendError::name(
            span,
            format!("state variable `{v}` can only be used inside an action"),
        ));
    }
    Err(FrontendError::name(
        span,
        format!("undeclared identifier `{v}`"),
    ))
}

fn check_body(p: &Program, body: &[Stmt], in_action: bool) -> Result<(), FrontendError> {
    let width_of = |n: &str| p.width_of(n);
    for s in body {
        match &s.kind {
            StmtKind::Assign { target, value } => {
                check_name(p, target, s.span, in_action)?;
                check_expr(p, value, s.span, in_action)?;
                let tw = p.width_of(target).unwrap_or(32);
                if let Expr::Const(c) = value {
                    if !fits(*c, tw) {
                        return Err(FrontendError::ty(
                            s.span,
                            format!("constant {c} does not fit `{target}` of bit<{tw}>"),
                        ));
                    }
                } else if let Some(w) = expr_width(value, &width_of) {
                    if w > tw {
                        return Err(FrontendError::ty(
                            s.span,
                            format!("cannot assign a bit<{w}> value to `{target}` of bit<{tw}>"),
                        ));
                    }
                }
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                check_expr(p, cond, s.span, in_action)?;
                check_body(p, then_body, in_action)?;
                check_body(p, else_body, in_action)?;
            }
            StmtKind::Apply { table } => {
                if p.table(table).is_none() {
                    return Err(FrontendError::name(
                        s.span,
                        format!("unknown table `{table}`"),
                    ));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    const HDR: &str = "header pkt { bit<8> a; bit<16> b; bit<1> c; } register bit<8> s = 0;";

    #[test]
    fn width_mismatch_is_type_error() {
        let src = format!("{HDR} action x() {{ pkt.a = pkt.b; }}");
        assert!(matches!(parse(&src), Err(FrontendError::Type { .. })));
        let src = format!("{HDR} action x() {{ pkt.c = pkt.a == 3; pkt.b = pkt.a + 1; }}");
        assert!(parse(&src).is_ok());
        let src = format!("{HDR} action x() {{ pkt.a = 256; }}");
        assert!(matches!(parse(&src), Err(FrontendError::Type { .. })));
    }

    #[test]
    fn undeclared_names_are_name_errors() {
        let src = format!("{HDR} action x() {{ pkt.a = pkt.zz; }}");
        assert!(matches!(parse(&src), Err(FrontendError::Name { .. })));
        let src = format!("{HDR} control c {{ pkt.a = s; }}");
        assert!(matches!(parse(&src), Err(FrontendError::Name { .. })));
        let src = format!("{HDR} control c {{ t.apply(); }}");
        assert!(matches!(parse(&src), Err(FrontendError::Name { .. })));
    }

    #[test]
    fn duplicate_declarations_rejected() {
        let src = "header pkt { bit<8> a; bit<8> a; }";
        assert!(matches!(parse(src), Err(FrontendError::Name { .. })));
        let src = "header pkt { bit<8> a; } register bit<8> s; register bit<8> s;";
        assert!(matches!(parse(src), Err(FrontendError::Name { .. })));
    }

    #[test]
    fn keyless_table_needs_single_action() {
        let src =
            format!("{HDR} action x() {{ }} action y() {{ }} table t {{ actions = {{ x; y; }} }}");
        assert!(matches!(parse(&src), Err(FrontendError::Type { .. })));
    }
}
