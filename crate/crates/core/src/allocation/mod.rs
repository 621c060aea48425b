//! Global placement of table partitions and ALUs onto pipeline stages.

mod bigm;
mod constraints;
mod greedy;
mod problem;
mod solver;
mod target;
mod packing;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use bigm::{build_model, emit_big_m, propagation_rows, to_lp, LpModel, Row, Sense};
pub use constraints::{build_constraints, AluVar, ConstraintSet, Precedence, Reason};
pub use greedy::{greedy_first_fit, GreedyOutcome};
pub use problem::{
    applied_with_guards, partition_count, partition_tables, problem_from_program, table_deps,
    ActionGraph, AllocationProblem, DepKind, Partition, TableDep, TableSpec,
};
pub use solver::{finish, solve, validate, AllocationSolution, Mode};
pub use target::{builtin_target, builtin_target_names, resolve_grammar, TargetError, TargetSpec};
pub use packing::{
    gen_layered_instance, gen_packing_instance, packing_target, random_problem, packing_source,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AllocError {
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error(
        "table `{table}`: action `{action}` spans several stages and writes match field `{field}`"
    )]
    KeyModifiedByAction {
        table: String,
        action: String,
        field: String,
    },
    #[error("placement search gave up after {0} nodes")]
    SearchLimit(u64),
}

/// Checks that every action spread over several stages leaves its table's
/// match fields alone, and puts each partition's entries in every stage
/// holding one of its ALUs.
pub fn duplicate_multistage_matches(
    sol: &AllocationSolution,
    ap: &AllocationProblem,
    cs: &ConstraintSet,
) -> Result<AllocationSolution, AllocError> {
    let mut out = sol.clone();
    for (pi, part) in cs.parts.iter().enumerate() {
        let spec = &ap.tables[part.table];
        for (ai, a) in spec.actions.iter().enumerate() {
            let stages: std::collections::BTreeSet<usize> = cs
                .alus
                .iter()
                .enumerate()
                .filter(|(_, v)| v.part == pi && v.action == ai)
                .map(|(i, _)| sol.stage[i])
                .collect();
            if stages.len() > 1 {
                if let Some(f) = a.writes.iter().find(|w| spec.match_fields.contains(w)) {
                    return Err(AllocError::KeyModifiedByAction {
                        table: spec.name.clone(),
                        action: a.action.clone(),
                        field: f.clone(),
                    });
                }
            }
            out.matches[pi].extend(stages);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StageUsage {
    pub stage: usize,
    pub tables: Vec<String>,
    pub alus: Vec<String>,
    pub propagation: Vec<String>,
}

/// Stage-by-stage placement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AllocationReport {
    pub mode: Mode,
    pub stages_used: usize,
    pub n_stages: usize,
    pub stages: Vec<StageUsage>,
    /// Match entries stored more than once because an action spans stages.
    pub duplicated_entries: u64,
}

impl AllocationReport {
    pub fn new(
        ap: &AllocationProblem,
        cs: &ConstraintSet,
        sol: &AllocationSolution,
        n_entries: u64,
    ) -> Self {
        let stages = (1..=sol.cost)
            .map(|s| StageUsage {
                stage: s,
                tables: sol.tables_in(s).map(|p| cs.parts[p].name.clone()).collect(),
                alus: sol.alus_in(s).map(|u| cs.alus[u].label.clone()).collect(),
                propagation: sol.props_in(s).map(|u| cs.alus[u].label.clone()).collect(),
            })
            .collect();
        let duplicated_entries = cs
            .parts
            .iter()
            .enumerate()
            .map(|(pi, p)| {
                let per_part = ap.tables[p.table].entries.min(n_entries);
                per_part * sol.matches[pi].len().saturating_sub(1) as u64
            })
            .sum();
        AllocationReport {
            mode: sol.mode,
            stages_used: sol.cost,
            n_stages: cs.n_stages,
            stages,
            duplicated_entries,
        }
    }
}

impl fmt::Display for AllocationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} stages used of {} ({} placement)",
            self.stages_used, self.n_stages, self.mode
        )?;
        for s in &self.stages {
            writeln!(f, "stage {}: tables [{}]", s.stage, s.tables.join(", "))?;
            for a in &s.alus {
                writeln!(f, "    {a}")?;
            }
            for p in &s.propagation {
                writeln!(f, "    propagate {p}")?;
            }
        }
        if self.duplicated_entries > 0 {
            writeln!(
                f,
                "{} match entries duplicated for multi-stage actions",
                self.duplicated_entries
            )?;
        }
        Ok(())
    }
}
