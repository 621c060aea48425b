use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::ir::{Program, ReadWrite, Stmt, StmtKind};
use crate::synthesis::ResourceGraph;

/// Why one table must be placed after another.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DepKind {
    /// The earlier table writes a field the later one matches on.
    Match,
    /// The earlier table writes a field the later one reads or writes.
    Action,
    /// The later table only runs depending on the earlier one's result.
    Successor,
    /// The earlier table reads a field the later one writes.
    ReverseMatch,
}

impl DepKind {
    /// Whether the later table's ALUs need a strictly later stage.
    pub fn strict(self) -> bool {
        matches!(self, DepKind::Match | DepKind::Action)
    }

    pub fn name(self) -> &'static str {
        match self {
            DepKind::Match => "match",
            DepKind::Action => "action",
            DepKind::Successor => "successor",
            DepKind::ReverseMatch => "reverse_match",
        }
    }
}

impl fmt::Display for DepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The shape of one action's resource graph, as far as placement cares.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ActionGraph {
    pub action: String,
    /// One label per ALU, for reports.
    pub alus: Vec<String>,
    /// Value edges `(producer, consumer)`.
    pub edges: Vec<(usize, usize)>,
    /// `(reader, writer)`: the reader sees a field's old value, so the ALU
    /// overwriting that field may not run in an earlier stage.
    pub anti: Vec<(usize, usize)>,
    pub colocate: Vec<Vec<usize>>,
    /// Packet fields the action writes.
    pub writes: Vec<String>,
}

impl ActionGraph {
    pub fn from_resource_graph(rg: &ResourceGraph) -> Self {
        let alus = rg
            .alus
            .iter()
            .map(|a| {
                let kind = if a.is_stateful() {
                    "stateful"
                } else {
                    "stateless"
                };
                match &a.output {
                    Some(o) => format!("{kind} -> {o}"),
                    None => kind.to_string(),
                }
            })
            .collect();
        let mut anti = BTreeSet::new();
        for (field, name) in &rg.outputs {
            let Some(w) = rg
                .alus
                .iter()
                .find(|a| a.output.as_deref() == Some(name.as_str()))
            else {
                continue;
            };
            for r in &rg.alus {
                if r.id != w.id && r.inputs.iter().any(|i| i == field) {
                    anti.insert((r.id, w.id));
                }
            }
        }
        ActionGraph {
            action: rg.action.clone(),
            alus,
            edges: rg.edges.clone(),
            anti: anti.into_iter().collect(),
            colocate: rg.colocate.clone(),
            writes: rg.outputs.keys().cloned().collect(),
        }
    }

    /// A chain of `n` ALUs.
    pub fn chain(action: &str, n: usize) -> Self {
        ActionGraph {
            action: action.into(),
            alus: (0..n).map(|i| format!("alu{i}")).collect(),
            edges: (1..n).map(|i| (i - 1, i)).collect(),
            ..Default::default()
        }
    }

    pub fn consumers(&self, u: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.0 == u)
            .map(|e| e.1)
            .collect()
    }

    /// Stages the action needs at least: its longest value chain.
    pub fn depth(&self) -> usize {
        let n = self.alus.len();
        let mut d = vec![1usize; n];
        for _ in 0..n {
            for &(u, v) in &self.edges {
                d[v] = d[v].max(d[u] + 1);
            }
        }
        d.into_iter().max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TableSpec {
    pub name: String,
    /// Maximum entry count `e_t`.
    pub entries: u64,
    /// Fields looked up at match time: keys and enclosing branch conditions.
    pub match_fields: Vec<String>,
    pub actions: Vec<ActionGraph>,
}

impl TableSpec {
    pub fn alu_count(&self) -> usize {
        self.actions.iter().map(|a| a.alus.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TableDep {
    pub from: usize,
    pub to: usize,
    pub kind: DepKind,
    pub fields: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AllocationProblem {
    /// Tables in control-block order.
    pub tables: Vec<TableSpec>,
    pub deps: Vec<TableDep>,
}

/// `b_t`: how many single-stage tables hold `entries` exact-match entries.
pub fn partition_count(entries: u64, per_table: u64) -> usize {
    entries.max(1).div_ceil(per_table) as usize
}

/// One single-stage piece `t[i]` of a table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub table: usize,
    pub index: usize,
    pub name: String,
}

/// Splits every table into `ceil(e_t / N_entries)` partitions; each one
/// keeps all of the table's actions.
pub fn partition_tables(ap: &AllocationProblem, n_entries: u64) -> Vec<Partition> {
    let mut out = Vec::new();
    for (t, spec) in ap.tables.iter().enumerate() {
        let b = partition_count(spec.entries, n_entries);
        for i in 0..b {
            let name = if b == 1 {
                spec.name.clone()
            } else {
                format!("{}[{i}]", spec.name)
            };
            out.push(Partition {
                table: t,
                index: i,
                name,
            });
        }
    }
    out
}

/// Applied tables in control order, with the fields tested by branch
/// conditions around each `apply`.
pub fn applied_with_guards(p: &Program) -> Vec<(String, Vec<String>)> {
    fn walk(stmts: &[Stmt], guard: &mut Vec<String>, out: &mut Vec<(String, Vec<String>)>) {
        for s in stmts {
            match &s.kind {
                StmtKind::Apply { table } => out.push((table.clone(), guard.clone())),
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    let n = guard.len();
                    for v in cond.vars() {
                        if !guard.iter().any(|g| g == v) {
                            guard.push(v.to_string());
                        }
                    }
                    walk(then_body, guard, out);
                    walk(else_body, guard, out);
                    guard.truncate(n);
                }
                StmtKind::Assign { .. } => {}
            }
        }
    }
    let mut out = Vec::new();
    walk(&p.control, &mut Vec::new(), &mut out);
    out
}

/// Table-level read/write sets used for dependency analysis.
struct TableRw {
    matched: BTreeSet<String>,
    reads: BTreeSet<String>,
    writes: BTreeSet<String>,
}

fn table_rw(p: &Program, table: &str, guard: &[String]) -> TableRw {
    let mut matched: BTreeSet<String> = guard.iter().cloned().collect();
    let mut rw = ReadWrite::default();
    if let Some(t) = p.table(table) {
        matched.extend(t.keys.iter().cloned());
        for a in p.table_actions(t) {
            rw.add_stmts(&a.body);
        }
    }
    TableRw {
        matched,
        reads: rw.reads.into_iter().collect(),
        writes: rw.writes.into_iter().collect(),
    }
}

fn common(a: &BTreeSet<String>, b: &BTreeSet<String>) -> Vec<String> {
    a.intersection(b).cloned().collect()
}

/// Dependencies between every ordered pair of applied tables. Branch
/// conditions only test packet fields, so successor dependencies never
/// arise from source programs.
pub fn table_deps(p: &Program) -> Vec<TableDep> {
    let applied = applied_with_guards(p);
    let rws: Vec<TableRw> = applied.iter().map(|(t, g)| table_rw(p, t, g)).collect();
    let mut deps = Vec::new();
    for j in 0..rws.len() {
        for i in 0..j {
            let (a, b) = (&rws[i], &rws[j]);
            let m = common(&a.writes, &b.matched);
            if !m.is_empty() {
                deps.push(TableDep {
                    from: i,
                    to: j,
                    kind: DepKind::Match,
                    fields: m,
                });
                continue;
            }
            let used: BTreeSet<String> = b.reads.union(&b.writes).cloned().collect();
            let act = common(&a.writes, &used);
            if !act.is_empty() {
                deps.push(TableDep {
                    from: i,
                    to: j,
                    kind: DepKind::Action,
                    fields: act,
                });
                continue;
            }
            let seen: BTreeSet<String> = a.reads.union(&a.matched).cloned().collect();
            let rev = common(&seen, &b.writes);
            if !rev.is_empty() {
                deps.push(TableDep {
                    from: i,
                    to: j,
                    kind: DepKind::ReverseMatch,
                    fields: rev,
                });
            }
        }
    }
    deps
}

/// Builds the allocation problem for a program whose actions have been
/// synthesized. Actions missing from `graphs` contribute no ALUs.
pub fn problem_from_program(
    p: &Program,
    graphs: &BTreeMap<String, ResourceGraph>,
) -> AllocationProblem {
    let tables = applied_with_guards(p)
        .into_iter()
        .map(|(name, guard)| {
            let t = p.table(&name);
            let mut match_fields: Vec<String> = t.map(|t| t.keys.clone()).unwrap_or_default();
            for g in guard {
                if !match_fields.contains(&g) {
                    match_fields.push(g);
                }
            }
            let actions = t
                .map(|t| {
                    t.actions
                        .iter()
                        .map(|a| match graphs.get(a) {
                            Some(rg) => ActionGraph::from_resource_graph(rg),
                            None => ActionGraph {
                                action: a.clone(),
                                ..Default::default()
                            },
                        })
                        .collect()
                })
                .unwrap_or_default();
            TableSpec {
                entries: t.map_or(1, |t| t.entries),
                name,
                match_fields,
                actions,
            }
        })
        .collect();
    AllocationProblem {
        tables,
        deps: table_deps(p),
    }
}
