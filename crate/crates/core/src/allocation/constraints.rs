use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::problem::{partition_tables, AllocationProblem, DepKind, Partition};
use super::target::TargetSpec;
use super::AllocError;

/// One ALU instance: ALU `local` of action `action` in partition `part`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AluVar {
    pub part: usize,
    pub action: usize,
    pub local: usize,
    pub label: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    /// A value edge inside an action.
    Action,
    /// A field read before the same action overwrites it.
    Anti,
    Table(DepKind),
}

/// `stage[before] < stage[after]`, or `<=` when not strict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Precedence {
    pub before: usize,
    pub after: usize,
    pub strict: bool,
    pub reason: Reason,
}

/// Every constraint of the placement problem over flattened ALU indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConstraintSet {
    pub n_stages: usize,
    pub tables_per_stage: usize,
    /// `n_alu_per_stage - n_header_alus`, or all ALUs without propagation ALUs.
    pub alus_per_stage: usize,
    pub propagation: bool,
    pub parts: Vec<Partition>,
    pub alus: Vec<AluVar>,
    pub precedences: Vec<Precedence>,
    pub same_stage: Vec<Vec<usize>>,
    /// ALUs whose output crosses stages, with the ALUs reading it.
    pub propagate: Vec<(usize, Vec<usize>)>,
}

impl ConstraintSet {
    pub fn alus_of_part(&self, part: usize) -> impl Iterator<Item = usize> + '_ {
        self.alus
            .iter()
            .enumerate()
            .filter(move |(_, a)| a.part == part)
            .map(|(i, _)| i)
    }

    /// Minimal `end_u` given stages, i.e. the last stage reading `u`.
    pub fn end_of(&self, entry: &(usize, Vec<usize>), stage: &[usize]) -> usize {
        entry
            .1
            .iter()
            .map(|&v| stage[v])
            .max()
            .unwrap_or(stage[entry.0])
    }
}

/// Instantiates the constraint families for `ap` on target `t`.
pub fn build_constraints(
    ap: &AllocationProblem,
    t: &TargetSpec,
) -> Result<ConstraintSet, AllocError> {
    for spec in &ap.tables {
        for a in &spec.actions {
            if a.depth() > t.n_stages {
                return Err(AllocError::Infeasible(format!(
                    "action `{}` of table `{}` needs {} stages but the target has {}",
                    a.action,
                    spec.name,
                    a.depth(),
                    t.n_stages
                )));
            }
        }
    }
    let parts = partition_tables(ap, t.n_entries_per_table);
    let mut alus = Vec::new();
    // first flat index of each (part, action)
    let mut base: Vec<Vec<usize>> = Vec::new();
    for (pi, p) in parts.iter().enumerate() {
        let mut row = Vec::new();
        for (ai, a) in ap.tables[p.table].actions.iter().enumerate() {
            row.push(alus.len());
            for (l, label) in a.alus.iter().enumerate() {
                alus.push(AluVar {
                    part: pi,
                    action: ai,
                    local: l,
                    label: format!("{}.{}.{}", p.name, a.action, label),
                });
            }
        }
        base.push(row);
    }

    let mut prec: BTreeSet<Precedence> = BTreeSet::new();
    let mut same_stage = Vec::new();
    let mut propagate = Vec::new();
    for (pi, p) in parts.iter().enumerate() {
        for (ai, a) in ap.tables[p.table].actions.iter().enumerate() {
            let b = base[pi][ai];
            for &(u, v) in &a.edges {
                prec.insert(Precedence {
                    before: b + u,
                    after: b + v,
                    strict: true,
                    reason: Reason::Action,
                });
            }
            for &(r, w) in &a.anti {
                prec.insert(Precedence {
                    before: b + r,
                    after: b + w,
                    strict: false,
                    reason: Reason::Anti,
                });
            }
            for grp in &a.colocate {
                same_stage.push(grp.iter().map(|&l| b + l).collect());
            }
            if t.propagation_alus {
                for u in 0..a.alus.len() {
                    let c = a.consumers(u);
                    if !c.is_empty() {
                        propagate.push((b + u, c.into_iter().map(|v| b + v).collect()));
                    }
                }
            }
        }
    }
    for d in &ap.deps {
        let from: Vec<usize> = (0..alus.len())
            .filter(|&i| parts[alus[i].part].table == d.from)
            .collect();
        let to: Vec<usize> = (0..alus.len())
            .filter(|&i| parts[alus[i].part].table == d.to)
            .collect();
        for &u in &from {
            for &v in &to {
                prec.insert(Precedence {
                    before: u,
                    after: v,
                    strict: d.kind.strict(),
                    reason: Reason::Table(d.kind),
                });
            }
        }
    }
    Ok(ConstraintSet {
        n_stages: t.n_stages,
        tables_per_stage: t.n_tables_per_stage,
        alus_per_stage: t.alu_capacity(),
        propagation: t.propagation_alus,
        parts,
        alus,
        precedences: prec.into_iter().collect(),
        same_stage,
        propagate,
    })
}

impl fmt::Display for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} ALUs in {} table partitions; {} stages, {} tables and {} ALUs per stage",
            self.alus.len(),
            self.parts.len(),
            self.n_stages,
            self.tables_per_stage,
            self.alus_per_stage
        )?;
        for p in &self.precedences {
            let op = if p.strict { "<" } else { "<=" };
            writeln!(
                f,
                "  stage[{}] {op} stage[{}]  ({:?})",
                self.alus[p.before].label, self.alus[p.after].label, p.reason
            )?;
        }
        for g in &self.same_stage {
            let names: Vec<&str> = g.iter().map(|&i| self.alus[i].label.as_str()).collect();
            writeln!(f, "  same stage: {}", names.join(", "))?;
        }
        for (u, r) in &self.propagate {
            let names: Vec<&str> = r.iter().map(|&i| self.alus[i].label.as_str()).collect();
            writeln!(
                f,
                "  {} is read by {}",
                self.alus[*u].label,
                names.join(", ")
            )?;
        }
        Ok(())
    }
}
