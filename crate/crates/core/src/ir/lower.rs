use super::ast::*;

pub const DEFAULT_TABLE_PREFIX: &str = "__dflt";

/// Wraps each maximal run of bare control-block assignments into a keyless,
/// single-action default table.
pub fn lower_tables(p: &Program) -> Program {
    let mut out = p.clone();
    let mut next = p
        .tables
        .iter()
        .filter_map(|t| {
            t.name
                .strip_prefix(DEFAULT_TABLE_PREFIX)?
                .parse::<usize>()
                .ok()
        })
        .map(|n| n + 1)
        .max()
        .unwrap_or(0);
    let control = std::mem::take(&mut out.control);
    out.control = lower_stmts(control, &mut out, &mut next);
    out
}

fn lower_stmts(stmts: Vec<Stmt>, p: &mut Program, next: &mut usize) -> Vec<Stmt> {
    let mut out = Vec::new();
    let mut run: Vec<Stmt> = Vec::new();
    for s in stmts {
        match s.kind {
            StmtKind::Assign { .. } => run.push(s),
            StmtKind::Apply { .. } => {
                flush(&mut run, &mut out, p, next);
                out.push(s);
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                flush(&mut run, &mut out, p, next);
                let then_body = lower_stmts(then_body, p, next);
                let else_body = lower_stmts(else_body, p, next);
                out.push(Stmt {
                    kind: StmtKind::If {
                        cond,
                        then_body,
                        else_body,
                    },
                    span: s.span,
                });
            }
        }
    }
    flush(&mut run, &mut out, p, next);
    out
}

fn flush(run: &mut Vec<Stmt>, out: &mut Vec<Stmt>, p: &mut Program, next: &mut usize) {
    if run.is_empty() {
        return;
    }
    let span = run[0].span;
    let name = format!("{DEFAULT_TABLE_PREFIX}{next}");
    let act = format!("{name}_act");
    *next += 1;
    p.actions.push(Action {
        name: act.clone(),
        atomic: false,
        body: std::mem::take(run),
        span,
    });
    p.tables.push(Table {
        name: name.clone(),
        keys: Vec::new(),
        actions: vec![act.clone()],
        entries: 1,
        const_entries: Vec::new(),
        default_action: Some(act),
        span,
    });
    out.push(Stmt {
        kind: StmtKind::Apply { table: name },
        span,
    });
}
