use std::collections::{BTreeMap, BTreeSet};

use crate::allocation::{AllocationSolution, ConstraintSet};
use crate::ir::eval::{eval, mask};
use crate::ir::{Expr, Program, Stmt, StmtKind};
use crate::synthesis::{AluKind, RegBinding, ResourceGraph};

use super::{select_action, MatchOutcomes, PacketState, SimError};

/// A placed program: everything needed to run packets stage by stage.
#[derive(Clone, Debug)]
pub struct CompiledPipeline {
    pub program: Program,
    pub graphs: BTreeMap<String, ResourceGraph>,
    pub constraints: ConstraintSet,
    pub solution: AllocationSolution,
    /// Branch conditions around each applied table, in allocation order.
    guards: Vec<Vec<(Expr, bool)>>,
}

impl CompiledPipeline {
    pub fn new(
        program: Program,
        graphs: BTreeMap<String, ResourceGraph>,
        constraints: ConstraintSet,
        solution: AllocationSolution,
    ) -> Self {
        fn walk(stmts: &[Stmt], path: &mut Vec<(Expr, bool)>, out: &mut Vec<Vec<(Expr, bool)>>) {
            for s in stmts {
                match &s.kind {
                    StmtKind::Apply { .. } => out.push(path.clone()),
                    StmtKind::If {
                        cond,
                        then_body,
                        else_body,
                    } => {
                        path.push((cond.clone(), true));
                        walk(then_body, path, out);
                        path.last_mut().unwrap().1 = false;
                        walk(else_body, path, out);
                        path.pop();
                    }
                    StmtKind::Assign { .. } => {}
                }
            }
        }
        let mut guards = Vec::new();
        walk(&program.control, &mut Vec::new(), &mut guards);
        CompiledPipeline {
            program,
            graphs,
            constraints,
            solution,
            guards,
        }
    }

    pub fn stages(&self) -> usize {
        self.solution.cost
    }
}

/// Key of an intermediate PHV slot: table, action and value name.
type Slot = (usize, usize, String);

/// Runs one packet through the placed pipeline. Each stage reads the PHV as
/// it entered the stage; intermediate values reach the next stage only if
/// they were written or propagated in this one. Only partition 0 of a split
/// table executes, since the others hold different entries.
pub fn interpret_pipeline(
    cp: &CompiledPipeline,
    pkt: &PacketState,
    outcomes: &MatchOutcomes,
    bits: u32,
) -> Result<PacketState, SimError> {
    let p = &cp.program;
    let cs = &cp.constraints;
    let sol = &cp.solution;
    let applied = p.applied_tables();
    if applied.len() != cp.guards.len() {
        return Err(SimError::ConfigError("control block changed".into()));
    }
    let widths = |n: &str| p.width_of(n).unwrap_or(32);
    let mut st = pkt.normalized(p, bits);
    let mut inter: BTreeMap<Slot, u64> = BTreeMap::new();

    for s in 1..=sol.cost {
        let fields_in = st.fields.clone();
        let state_in = st.state.clone();
        let mut next: BTreeMap<Slot, u64> = if cs.propagation {
            BTreeMap::new()
        } else {
            inter.clone()
        };
        for &(u, ps) in &sol.props {
            if ps != s {
                continue;
            }
            let a = &cs.alus[u];
            if cs.parts[a.part].index != 0 {
                continue;
            }
            let t = cs.parts[a.part].table;
            let rg = graph_of(cp, &applied[t], a.action)?;
            if let Some(o) = &rg.alus[a.local].output {
                let key = (t, a.action, o.clone());
                if let Some(v) = inter.get(&key) {
                    next.insert(key, *v);
                }
            }
        }

        let here: BTreeSet<usize> = (0..cs.alus.len())
            .filter(|&u| sol.stage[u] == s && cs.parts[cs.alus[u].part].index == 0)
            .collect();
        let tables: BTreeSet<usize> = here
            .iter()
            .map(|&u| cs.parts[cs.alus[u].part].table)
            .collect();
        for t in tables {
            let mut on = true;
            for (c, want) in &cp.guards[t] {
                let v =
                    eval(c, bits, &mut |n| fields_in.get(n).copied()).map_err(SimError::Unbound)?;
                if (v != 0) != *want {
                    on = false;
                    break;
                }
            }
            if !on {
                continue;
            }
            let table = p
                .table(&applied[t])
                .ok_or_else(|| SimError::ConfigError(format!("unknown table `{}`", applied[t])))?;
            let Some(chosen) = select_action(table, &fields_in, outcomes, &widths, bits)? else {
                continue;
            };
            let Some(ai) = table.actions.iter().position(|a| a == chosen) else {
                // a default action outside the action list has no ALUs
                continue;
            };
            let rg = graph_of(cp, &applied[t], ai)?;
            let produced: BTreeSet<&str> =
                rg.alus.iter().filter_map(|a| a.output.as_deref()).collect();
            for &u in &here {
                let a = &cs.alus[u];
                if cs.parts[a.part].table != t || a.action != ai {
                    continue;
                }
                let alu = &rg.alus[a.local];
                let read = |n: &str| -> Result<u64, SimError> {
                    if produced.contains(n) {
                        inter.get(&(t, ai, n.to_string())).copied().ok_or_else(|| {
                            SimError::ConfigError(format!(
                                "`{n}` of action `{}` is not available in stage {s}",
                                rg.action
                            ))
                        })
                    } else {
                        fields_in.get(n).copied().ok_or_else(|| {
                            SimError::ConfigError(format!(
                                "action `{}` reads `{n}`, which is neither a field nor an ALU output",
                                rg.action
                            ))
                        })
                    }
                };
                let mut vals: BTreeMap<&str, u64> = BTreeMap::new();
                for i in &alu.inputs {
                    vals.insert(i, read(i)?);
                }
                let input = |n: &str| vals.get(n).copied().unwrap_or(0);
                let out = match &alu.kind {
                    AluKind::Stateless(c) => Some(c.exec(&input, bits)),
                    AluKind::Stateful(c) => {
                        let regs: Vec<u64> = c
                            .bindings
                            .iter()
                            .map(|b| match b {
                                RegBinding::State(v) => state_in.get(v).copied().unwrap_or(0),
                                RegBinding::Scratch | RegBinding::Unused => 0,
                            })
                            .collect();
                        let (post, out) = c.exec(&input, &regs, bits);
                        for (b, v) in c.bindings.iter().zip(post) {
                            if let RegBinding::State(name) = b {
                                st.state.insert(name.clone(), v);
                            }
                        }
                        out
                    }
                };
                if let (Some(o), Some(v)) = (&alu.output, out) {
                    let w = rg.widths.get(o).copied().unwrap_or(bits).min(bits);
                    let v = v & mask(w);
                    next.insert((t, ai, o.clone()), v);
                    for (f, src) in &rg.outputs {
                        if src == o {
                            let fw = widths(f).min(bits);
                            st.fields.insert(f.clone(), v & mask(fw));
                        }
                    }
                }
            }
        }
        inter = next;
    }
    Ok(st)
}

fn graph_of<'a>(
    cp: &'a CompiledPipeline,
    table: &str,
    action: usize,
) -> Result<&'a ResourceGraph, SimError> {
    let name = cp
        .program
        .table(table)
        .and_then(|t| t.actions.get(action))
        .ok_or_else(|| SimError::ConfigError(format!("table `{table}` has no action {action}")))?;
    cp.graphs
        .get(name)
        .ok_or_else(|| SimError::ConfigError(format!("no resource graph for action `{name}`")))
}

/// Fields a program exposes after the pipeline: everything but metadata,
/// plus all state.
pub fn observable(p: &Program, st: &PacketState) -> PacketState {
    PacketState {
        fields: st
            .fields
            .iter()
            .filter(|(k, _)| !crate::ir::is_metadata(k) && p.field(k).is_some())
            .map(|(k, v)| (k.clone(), *v))
            .collect(),
        state: st.state.clone(),
    }
}
