use std::collections::BTreeMap;

use serde::Serialize;

use crate::ir::eval::mask;
use crate::ir::{Action, BinOp, Entry, Expr, Program, Span, Stmt, StmtKind, Table};

use super::cfg::{build_cfg, path_conditions, StmtPath};
use super::deps::{guarded_deps, GuardedDep};
use super::pathcond::{as_literal, Literal, Rel};

pub const REWRITE_TABLE_PREFIX: &str = "__rw";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RewrittenTable {
    pub name: String,
    pub keys: Vec<String>,
    pub entries: usize,
    pub has_default: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RewriteReport {
    pub deps: Vec<GuardedDep>,
    pub tables: Vec<RewrittenTable>,
    /// Regions or whole programs left untouched, with the reason.
    pub skipped: Vec<String>,
}

/// Replaces runs of `if`s on exact-match conditions with match-action tables
/// whose const entries select the guarded assignments.
pub fn rewrite_to_tables(p: &Program) -> (Program, RewriteReport) {
    let g = build_cfg(p);
    let pcs = match path_conditions(&g) {
        Ok(pcs) => pcs,
        Err(e) => {
            let report = RewriteReport {
                skipped: vec![e.to_string()],
                ..Default::default()
            };
            return (p.clone(), report);
        }
    };
    let deps = guarded_deps(p, &g, &pcs);
    let next = p
        .tables
        .iter()
        .filter_map(|t| {
            t.name
                .strip_prefix(REWRITE_TABLE_PREFIX)?
                .parse::<usize>()
                .ok()
        })
        .map(|n| n + 1)
        .max()
        .unwrap_or(0);
    let mut rw = Rewriter {
        p,
        deps: &deps,
        next,
        actions: Vec::new(),
        tables: Vec::new(),
        report: RewriteReport::default(),
    };
    let control = rw.list(&p.control, &Vec::new());
    let mut out = p.clone();
    out.control = control;
    out.actions.extend(rw.actions);
    out.tables.extend(rw.tables);
    let mut report = rw.report;
    report.deps = deps;
    (out, report)
}

struct Leaf {
    lits: Vec<Literal>,
    body: Vec<Stmt>,
    paths: Vec<StmtPath>,
}

struct Rewriter<'a> {
    p: &'a Program,
    deps: &'a [GuardedDep],
    next: usize,
    actions: Vec<Action>,
    tables: Vec<Table>,
    report: RewriteReport,
}

/// `f1 == c1 && f2 == c2 && ...`, or `None` if any conjunct has another form.
fn eq_conjunction(cond: &Expr) -> Option<Vec<Literal>> {
    match cond {
        Expr::Binary(BinOp::And, a, b) => {
            let mut l = eq_conjunction(a)?;
            l.extend(eq_conjunction(b)?);
            Some(l)
        }
        Expr::Binary(BinOp::Eq, _, _) => as_literal(cond)
            .filter(|l| l.rel == Rel::Eq)
            .map(|l| vec![l]),
        _ => None,
    }
}

fn is_leaf_body(stmts: &[Stmt]) -> bool {
    !stmts.is_empty()
        && stmts
            .iter()
            .all(|s| matches!(s.kind, StmtKind::Assign { .. }))
}

fn child_paths(path: &StmtPath, n: usize) -> Vec<StmtPath> {
    (0..n)
        .map(|j| {
            let mut q = path.clone();
            q.extend([0, j]);
            q
        })
        .collect()
}

/// Leaves of a then-only `if`, possibly wrapping a single nested then-only `if`.
fn then_only_leaves(s: &Stmt, path: &StmtPath, outer: &[Literal]) -> Option<Leaf> {
    let StmtKind::If {
        cond,
        then_body,
        else_body,
    } = &s.kind
    else {
        return None;
    };
    if !else_body.is_empty() {
        return None;
    }
    let mut lits = outer.to_vec();
    lits.extend(eq_conjunction(cond)?);
    if is_leaf_body(then_body) {
        return Some(Leaf {
            lits,
            body: then_body.clone(),
            paths: child_paths(path, then_body.len()),
        });
    }
    if then_body.len() == 1 {
        let mut inner = path.clone();
        inner.extend([0, 0]);
        return then_only_leaves(&then_body[0], &inner, &lits);
    }
    None
}

impl Rewriter<'_> {
    fn list(&mut self, stmts: &[Stmt], prefix: &StmtPath) -> Vec<Stmt> {
        let mut out = Vec::new();
        let mut run: Vec<(usize, Leaf)> = Vec::new();
        for (i, s) in stmts.iter().enumerate() {
            let mut path = prefix.clone();
            path.push(i);
            if let Some(leaf) = then_only_leaves(s, &path, &[]) {
                run.push((i, leaf));
                continue;
            }
            self.flush(&mut run, stmts, &mut out, None);
            match &s.kind {
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                } if is_leaf_body(then_body)
                    && is_leaf_body(else_body)
                    && eq_conjunction(cond).is_some() =>
                {
                    let leaf = Leaf {
                        lits: eq_conjunction(cond).unwrap(),
                        body: then_body.clone(),
                        paths: child_paths(&path, then_body.len()),
                    };
                    let mut single = vec![(i, leaf)];
                    self.flush(&mut single, stmts, &mut out, Some(else_body));
                }
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    let mut tp = path.clone();
                    tp.push(0);
                    let mut ep = path.clone();
                    ep.push(1);
                    let t = self.list(then_body, &tp);
                    let e = self.list(else_body, &ep);
                    out.push(Stmt::if_else(cond.clone(), t, e).with_span(s.span));
                }
                _ => out.push(s.clone()),
            }
        }
        self.flush(&mut run, stmts, &mut out, None);
        out
    }

    fn flush(
        &mut self,
        run: &mut Vec<(usize, Leaf)>,
        stmts: &[Stmt],
        out: &mut Vec<Stmt>,
        default: Option<&Vec<Stmt>>,
    ) {
        if run.is_empty() {
            return;
        }
        let region = std::mem::take(run);
        let span = stmts[region[0].0].span;
        match self.build(&region, default, span) {
            Ok(apply) => out.push(apply),
            Err(reason) => {
                self.report
                    .skipped
                    .push(format!("region at {span}: {reason}"));
                out.extend(region.iter().map(|(i, _)| stmts[*i].clone()));
            }
        }
    }

    fn build(
        &mut self,
        region: &[(usize, Leaf)],
        default: Option<&Vec<Stmt>>,
        span: Span,
    ) -> Result<Stmt, String> {
        let mut keys: Vec<String> = Vec::new();
        for (_, leaf) in region {
            for l in &leaf.lits {
                if !keys.contains(&l.field) {
                    keys.push(l.field.clone());
                }
            }
        }
        // Entry values per leaf; contradictory leaves never fire and are dropped.
        let mut entries: Vec<(Vec<u64>, Vec<Stmt>, Vec<StmtPath>)> = Vec::new();
        for (_, leaf) in region {
            let mut vals: BTreeMap<&str, u64> = BTreeMap::new();
            let mut contradictory = false;
            for l in &leaf.lits {
                let w = self.p.width_of(&l.field).unwrap_or(32);
                if l.value > mask(w) || vals.insert(&l.field, l.value).is_some_and(|v| v != l.value)
                {
                    contradictory = true;
                }
            }
            if contradictory {
                continue;
            }
            if keys.iter().any(|k| !vals.contains_key(k.as_str())) {
                return Err("a branch does not constrain every key".into());
            }
            let values: Vec<u64> = keys.iter().map(|k| vals[k.as_str()]).collect();
            match entries.iter_mut().find(|e| e.0 == values) {
                Some(e) => {
                    e.1.extend(leaf.body.iter().cloned());
                    e.2.extend(leaf.paths.iter().cloned());
                }
                None => entries.push((values, leaf.body.clone(), leaf.paths.clone())),
            }
        }
        if entries.is_empty() {
            return Err("every branch is unsatisfiable".into());
        }
        let entry_of = |path: &StmtPath| entries.iter().position(|e| e.2.contains(path));
        for d in self.deps.iter().filter(|d| d.kept) {
            if let (Some(a), Some(b)) = (entry_of(&d.from_path), entry_of(&d.to_path)) {
                if a != b {
                    return Err(format!(
                        "{} dependency on `{}` links two branches",
                        d.kind, d.var
                    ));
                }
            }
        }

        let name = format!("{REWRITE_TABLE_PREFIX}{}", self.next);
        self.next += 1;
        let mut action_names = Vec::new();
        let mut const_entries = Vec::new();
        for (k, (values, body, _)) in entries.iter().enumerate() {
            let a = format!("{name}_a{k}");
            self.actions.push(Action {
                name: a.clone(),
                atomic: false,
                body: body.clone(),
                span,
            });
            const_entries.push(Entry {
                values: values.clone(),
                action: a.clone(),
            });
            action_names.push(a);
        }
        let default_action = default.map(|body| {
            let a = format!("{name}_dflt");
            self.actions.push(Action {
                name: a.clone(),
                atomic: false,
                body: body.clone(),
                span,
            });
            action_names.push(a.clone());
            a
        });
        self.report.tables.push(RewrittenTable {
            name: name.clone(),
            keys: keys.clone(),
            entries: const_entries.len(),
            has_default: default_action.is_some(),
        });
        self.tables.push(Table {
            name: name.clone(),
            keys,
            actions: action_names,
            entries: const_entries.len() as u64,
            const_entries,
            default_action,
            span,
        });
        Ok(Stmt::apply(name).with_span(span))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{check, parse};
    use crate::sim::{all_outcomes, interpret_source, PacketState};

    const ME2: &str = "header pkt { bit<8> f; bit<8> a; } control c { \
        if (pkt.f == 1) { pkt.a = 1; } if (pkt.f == 2) { pkt.a = 2; } if (pkt.f == 3) { pkt.a = 3; } }";

    fn equivalent(src: &str, fields: &[&str]) {
        let p = parse(src).unwrap();
        let (q, _) = rewrite_to_tables(&p);
        check(&q).unwrap();
        for v in 0..64u64 {
            let mut pkt = PacketState::initial(&p);
            for (i, f) in fields.iter().enumerate() {
                pkt.fields.insert(f.to_string(), (v >> (2 * i)) & 3);
            }
            for o in all_outcomes(&p) {
                assert_eq!(
                    interpret_source(&p, &pkt, &o, 8),
                    interpret_source(&q, &pkt, &o, 8)
                );
            }
        }
    }

    #[test]
    fn three_exclusive_ifs_become_one_table() {
        let p = parse(ME2).unwrap();
        let (q, report) = rewrite_to_tables(&p);
        assert_eq!(q.control, vec![Stmt::apply("__rw0")]);
        let t = q.table("__rw0").unwrap();
        assert_eq!(t.keys, vec!["pkt.f"]);
        assert_eq!(t.actions.len(), 3);
        assert_eq!(t.default_action, None);
        assert_eq!(report.deps.iter().filter(|d| !d.kept).count(), 3);
        equivalent(ME2, &["pkt.f"]);
    }

    #[test]
    fn else_arm_becomes_default() {
        let src = "metadata meta { bit<4> rate_class; } header pkt { bit<8> a; } control c { \
                   if (meta.rate_class == 1) { pkt.a = 1; } else { pkt.a = 2; } }";
        let (q, _) = rewrite_to_tables(&parse(src).unwrap());
        let t = q.table("__rw0").unwrap();
        assert_eq!(t.actions.len(), 2);
        assert_eq!(t.const_entries.len(), 1);
        assert_eq!(t.default_action.as_deref(), Some("__rw0_dflt"));
        equivalent(src, &["meta.rate_class"]);
    }

    #[test]
    fn same_key_values_merge() {
        let src = "header pkt { bit<8> f; bit<8> a; bit<8> b; } control c { \
                   if (pkt.f == 1) { pkt.a = 1; } if (pkt.f == 1) { pkt.b = pkt.a; } if (pkt.f == 2) { pkt.a = 2; } }";
        let (q, _) = rewrite_to_tables(&parse(src).unwrap());
        assert_eq!(q.table("__rw0").unwrap().const_entries.len(), 2);
        equivalent(src, &["pkt.f"]);
    }

    #[test]
    fn nested_keys() {
        let src = "header pkt { bit<8> f; bit<8> g; bit<8> a; } control c { \
                   if (pkt.f == 1) { if (pkt.g == 2) { pkt.a = 1; } } if (pkt.g == 1 && pkt.f == 2) { pkt.a = 2; } }";
        let (q, _) = rewrite_to_tables(&parse(src).unwrap());
        assert_eq!(q.table("__rw0").unwrap().keys, vec!["pkt.f", "pkt.g"]);
        equivalent(src, &["pkt.f", "pkt.g"]);
    }

    #[test]
    fn unconstrained_key_is_skipped() {
        let src = "header pkt { bit<8> f; bit<8> g; bit<8> a; } control c { \
                   if (pkt.f == 1) { pkt.a = 1; } if (pkt.g == 2) { pkt.a = 2; } }";
        let (q, report) = rewrite_to_tables(&parse(src).unwrap());
        assert!(q.tables.is_empty());
        assert_eq!(report.skipped.len(), 1);
        equivalent(src, &["pkt.f", "pkt.g"]);
    }

    #[test]
    fn range_conditions_are_left_alone() {
        let src = "header pkt { bit<8> f; bit<8> a; } control c { if (pkt.f > 1) { pkt.a = 1; } }";
        let p = parse(src).unwrap();
        assert_eq!(rewrite_to_tables(&p).0, p);
    }

    #[test]
    fn guard_update_disables_rewrite() {
        let src = "header pkt { bit<8> f; bit<8> a; } control c { \
                   if (pkt.f == 1) { pkt.f = 2; } if (pkt.f == 2) { pkt.a = 2; } }";
        let p = parse(src).unwrap();
        let (q, report) = rewrite_to_tables(&p);
        assert_eq!(q, p);
        assert_eq!(report.skipped.len(), 1);
    }
}
