use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::ir::Program;

use super::cfg::{Cfg, CfgNodeKind, StmtPath};
use super::pathcond::PathCondition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DepKind {
    Raw,
    War,
    Waw,
}

impl fmt::Display for DepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DepKind::Raw => "RAW",
            DepKind::War => "WAR",
            DepKind::Waw => "WAW",
        })
    }
}

/// A dependency between two control statements, qualified by the
/// conjunction of their path conditions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GuardedDep {
    pub from: usize,
    pub to: usize,
    pub from_path: StmtPath,
    pub to_path: StmtPath,
    pub from_label: String,
    pub to_label: String,
    pub kind: DepKind,
    pub var: String,
    pub guard: PathCondition,
    /// False when the guard is unsatisfiable and the dependency was pruned.
    pub kept: bool,
}

impl fmt::Display for GuardedDep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} -> {} on {} [{}] {}",
            self.kind,
            self.from_label,
            self.to_label,
            self.var,
            self.guard,
            if self.kept { "kept" } else { "pruned" }
        )
    }
}

/// All RAW, WAR and WAW dependencies between statements `i` before `j`.
pub fn guarded_deps(p: &Program, g: &Cfg, pcs: &BTreeMap<usize, PathCondition>) -> Vec<GuardedDep> {
    let stmts: Vec<_> = g
        .stmt_nodes()
        .filter_map(|n| match &n.kind {
            CfgNodeKind::Stmt {
                label,
                reads,
                writes,
                path,
            } => Some((n.id, label, reads, writes, path)),
            _ => None,
        })
        .collect();
    let width = |f: &str| p.width_of(f).unwrap_or(32);
    let mut out = Vec::new();
    for (i, a) in stmts.iter().enumerate() {
        for b in &stmts[i + 1..] {
            let mut found: Vec<(DepKind, &String)> = Vec::new();
            for w in a.3 {
                if b.2.contains(w) {
                    found.push((DepKind::Raw, w));
                }
                if b.3.contains(w) {
                    found.push((DepKind::Waw, w));
                }
            }
            for r in a.2 {
                if b.3.contains(r) {
                    found.push((DepKind::War, r));
                }
            }
            if found.is_empty() {
                continue;
            }
            let guard = pcs[&a.0].and(&pcs[&b.0]);
            let kept = guard.satisfiable(&width);
            for (kind, var) in found {
                out.push(GuardedDep {
                    from: a.0,
                    to: b.0,
                    from_path: a.4.clone(),
                    to_path: b.4.clone(),
                    from_label: a.1.clone(),
                    to_label: b.1.clone(),
                    kind,
                    var: var.clone(),
                    guard: guard.clone(),
                    kept,
                });
            }
        }
    }
    out
}
