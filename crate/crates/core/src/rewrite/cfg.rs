use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::ir::{Expr, Program, ReadWrite, Span, Stmt, StmtKind};

use super::pathcond::{literals_of, negated_literals_of, PathCondition};

/// Position of a statement in the control block: top-level index, then
/// alternating arm (0 = then, 1 = else) and index for each enclosing `if`.
pub type StmtPath = Vec<usize>;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum CfgNodeKind {
    Entry,
    Exit,
    /// An assignment or table apply, with its read and write sets.
    Stmt {
        label: String,
        reads: Vec<String>,
        writes: Vec<String>,
        path: StmtPath,
    },
    Branch {
        cond: Expr,
        merge: usize,
    },
    Merge,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CfgNode {
    pub id: usize,
    pub kind: CfgNodeKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CfgEdge {
    pub from: usize,
    pub to: usize,
    /// `Some(true)` for the then edge of a branch, `Some(false)` for else.
    pub arm: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cfg {
    pub nodes: Vec<CfgNode>,
    pub edges: Vec<CfgEdge>,
    pub entry: usize,
    pub exit: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CfgError {
    #[error("unstructured control flow at node {0}")]
    UnstructuredControl(usize),
    #[error("assignment at {span} writes `{var}`, which a branch condition reads")]
    GuardUpdateDetected { var: String, span: Span },
}

impl Cfg {
    pub fn successors(&self, n: usize) -> Vec<(usize, Option<bool>)> {
        self.edges
            .iter()
            .filter(|e| e.from == n)
            .map(|e| (e.to, e.arm))
            .collect()
    }

    /// Statement nodes in program order.
    pub fn stmt_nodes(&self) -> impl Iterator<Item = &CfgNode> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, CfgNodeKind::Stmt { .. }))
    }
}

/// Read and write sets of a control-block statement. Applying a table reads
/// its keys and everything its actions read.
pub fn stmt_read_write(p: &Program, s: &Stmt) -> ReadWrite {
    let mut rw = ReadWrite::default();
    match &s.kind {
        StmtKind::Assign { .. } => rw.add_stmts(std::slice::from_ref(s)),
        StmtKind::Apply { table } => {
            if let Some(t) = p.table(table) {
                rw.add_reads(t.keys.iter().map(String::as_str));
                for a in p.table_actions(t) {
                    rw.add_stmts(&a.body);
                }
            }
        }
        StmtKind::If { .. } => {}
    }
    rw
}

struct Builder<'a> {
    p: &'a Program,
    nodes: Vec<CfgNode>,
    edges: Vec<CfgEdge>,
}

impl Builder<'_> {
    fn add(&mut self, kind: CfgNodeKind, span: Span) -> usize {
        let id = self.nodes.len();
        self.nodes.push(CfgNode { id, kind, span });
        id
    }

    fn edge(&mut self, from: usize, to: usize, arm: Option<bool>) {
        self.edges.push(CfgEdge { from, to, arm });
    }

    /// Appends `stmts` after `prev`; returns the last node and the arm label
    /// for the pending edge out of it.
    fn seq(
        &mut self,
        stmts: &[Stmt],
        mut prev: usize,
        mut arm: Option<bool>,
        path: &StmtPath,
    ) -> (usize, Option<bool>) {
        for (i, s) in stmts.iter().enumerate() {
            let mut here = path.clone();
            here.push(i);
            match &s.kind {
                StmtKind::Assign { target, .. } => {
                    let rw = stmt_read_write(self.p, s);
                    let n = self.add(
                        CfgNodeKind::Stmt {
                            label: format!("{target} = ..."),
                            reads: rw.reads,
                            writes: rw.writes,
                            path: here,
                        },
                        s.span,
                    );
                    self.edge(prev, n, arm);
                    prev = n;
                }
                StmtKind::Apply { table } => {
                    let rw = stmt_read_write(self.p, s);
                    let n = self.add(
                        CfgNodeKind::Stmt {
                            label: format!("{table}.apply()"),
                            reads: rw.reads,
                            writes: rw.writes,
                            path: here,
                        },
                        s.span,
                    );
                    self.edge(prev, n, arm);
                    prev = n;
                }
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    let b = self.add(
                        CfgNodeKind::Branch {
                            cond: cond.clone(),
                            merge: usize::MAX,
                        },
                        s.span,
                    );
                    self.edge(prev, b, arm);
                    let mut tp = here.clone();
                    tp.push(0);
                    let (t_end, t_arm) = self.seq(then_body, b, Some(true), &tp);
                    let mut ep = here.clone();
                    ep.push(1);
                    let (e_end, e_arm) = self.seq(else_body, b, Some(false), &ep);
                    let m = self.add(CfgNodeKind::Merge, s.span);
                    self.edge(t_end, m, t_arm);
                    self.edge(e_end, m, e_arm);
                    if let CfgNodeKind::Branch { merge, .. } = &mut self.nodes[b].kind {
                        *merge = m;
                    }
                    prev = m;
                }
            }
            arm = None;
        }
        (prev, arm)
    }
}

pub fn build_cfg(p: &Program) -> Cfg {
    let mut b = Builder {
        p,
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    let entry = b.add(CfgNodeKind::Entry, Span::default());
    let (last, arm) = b.seq(&p.control, entry, None, &Vec::new());
    let exit = b.add(CfgNodeKind::Exit, Span::default());
    b.edge(last, exit, arm);
    Cfg {
        nodes: b.nodes,
        edges: b.edges,
        entry,
        exit,
    }
}

/// Depth-first traversal pushing branch literals on the way into an arm and
/// popping them at the merge.
pub fn path_conditions(g: &Cfg) -> Result<BTreeMap<usize, PathCondition>, CfgError> {
    let mut cond_vars: Vec<String> = Vec::new();
    for n in &g.nodes {
        if let CfgNodeKind::Branch { cond, .. } = &n.kind {
            cond_vars.extend(cond.vars().into_iter().map(str::to_string));
        }
    }
    for n in g.stmt_nodes() {
        if let CfgNodeKind::Stmt { writes, .. } = &n.kind {
            if let Some(v) = writes.iter().find(|w| cond_vars.contains(w)) {
                return Err(CfgError::GuardUpdateDetected {
                    var: v.clone(),
                    span: n.span,
                });
            }
        }
    }
    let mut out = BTreeMap::new();
    let mut stack = Vec::new();
    let end = walk(g, g.entry, usize::MAX, &mut stack, &mut out)?;
    if end != g.exit {
        return Err(CfgError::UnstructuredControl(end));
    }
    out.insert(g.exit, PathCondition::default());
    Ok(out)
}

fn walk(
    g: &Cfg,
    mut n: usize,
    stop: usize,
    stack: &mut Vec<PathCondition>,
    out: &mut BTreeMap<usize, PathCondition>,
) -> Result<usize, CfgError> {
    loop {
        if n == stop || n == g.exit {
            return Ok(n);
        }
        let current = stack
            .iter()
            .fold(PathCondition::default(), |acc, c| acc.and(c));
        out.insert(n, current);
        let succ = g.successors(n);
        match &g.nodes[n].kind {
            CfgNodeKind::Branch { cond, merge } => {
                let then_to = succ.iter().find(|(_, a)| *a == Some(true)).map(|(t, _)| *t);
                let else_to = succ
                    .iter()
                    .find(|(_, a)| *a == Some(false))
                    .map(|(t, _)| *t);
                let (Some(then_to), Some(else_to)) = (then_to, else_to) else {
                    return Err(CfgError::UnstructuredControl(n));
                };
                for (to, lits) in [
                    (then_to, literals_of(cond)),
                    (else_to, negated_literals_of(cond)),
                ] {
                    stack.push(PathCondition { literals: lits });
                    let reached = walk(g, to, *merge, stack, out)?;
                    stack.pop();
                    if reached != *merge {
                        return Err(CfgError::UnstructuredControl(n));
                    }
                }
                n = *merge;
                let current = stack
                    .iter()
                    .fold(PathCondition::default(), |acc, c| acc.and(c));
                out.insert(n, current);
                let next = g.successors(n);
                if next.len() != 1 {
                    return Err(CfgError::UnstructuredControl(n));
                }
                n = next[0].0;
            }
            _ => {
                if succ.len() != 1 {
                    return Err(CfgError::UnstructuredControl(n));
                }
                n = succ[0].0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse;
    use crate::rewrite::pathcond::{Literal, Rel};

    const HDR: &str = "header pkt { bit<8> f; bit<8> g; bit<8> a; } action x() { pkt.a = 1; } \
                       table t { key = { pkt.f; } actions = { x; } }";

    #[test]
    fn single_apply_is_three_nodes() {
        let p = parse(&format!("{HDR} control c {{ t.apply(); }}")).unwrap();
        let g = build_cfg(&p);
        assert_eq!(g.nodes.len(), 3);
        assert_eq!(g.edges.len(), 2);
    }

    #[test]
    fn branch_literal_and_merge_cancel() {
        let p = parse(&format!(
            "{HDR} control c {{ if (pkt.f == 3) {{ pkt.a = 1; }} pkt.a = 2; }}"
        ))
        .unwrap();
        let g = build_cfg(&p);
        let pc = path_conditions(&g).unwrap();
        let stmts: Vec<usize> = g.stmt_nodes().map(|n| n.id).collect();
        assert_eq!(
            pc[&stmts[0]].literals,
            vec![Literal {
                field: "pkt.f".into(),
                rel: Rel::Eq,
                value: 3
            }]
        );
        assert!(pc[&stmts[1]].literals.is_empty());
    }

    #[test]
    fn nested_if_conjoins() {
        let p = parse(&format!(
            "{HDR} control c {{ if (pkt.f == 3) {{ if (pkt.g > 1) {{ pkt.a = 1; }} }} else {{ pkt.a = 2; }} }}"
        ))
        .unwrap();
        let g = build_cfg(&p);
        let pc = path_conditions(&g).unwrap();
        let stmts: Vec<usize> = g.stmt_nodes().map(|n| n.id).collect();
        assert_eq!(pc[&stmts[0]].literals.len(), 2);
        assert_eq!(
            pc[&stmts[1]].literals,
            vec![Literal {
                field: "pkt.f".into(),
                rel: Rel::Ne,
                value: 3
            }]
        );
    }

    #[test]
    fn guard_update_is_detected() {
        let p = parse(&format!(
            "{HDR} control c {{ if (pkt.f == 3) {{ pkt.f = 1; }} }}"
        ))
        .unwrap();
        let g = build_cfg(&p);
        assert!(matches!(
            path_conditions(&g),
            Err(CfgError::GuardUpdateDetected { .. })
        ));
    }
}
