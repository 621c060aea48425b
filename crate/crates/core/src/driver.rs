//! The whole compiler: rewrite, per-action synthesis and global allocation.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::allocation::{
    build_constraints, duplicate_multistage_matches, problem_from_program, solve, validate,
    AllocError, AllocationProblem, AllocationReport, AllocationSolution, ConstraintSet, Mode,
    TargetError, TargetSpec,
};
use crate::compgraph::ComputationGraph;
use crate::ir::{lower_tables, parse, FrontendError, Program};
use crate::preprocess::{preprocess_action, PreprocessOptions, PreprocessedAction};
use crate::rewrite::{rewrite_to_tables, RewriteReport};
use crate::sim::CompiledPipeline;
use crate::synthesis::{
    synthesize_action, Grammars, ResourceGraph, SynthError, SynthOptions, SynthStats,
};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CompileError {
    /// 1 for bad input, 2 when the program does not fit, 3 for bugs.
    pub fn exit_code(&self) -> i32 {
        match self {
            CompileError::Frontend(_) | CompileError::Target(_) => 1,
            CompileError::Synth(_) | CompileError::Alloc(_) => 2,
            CompileError::Internal(_) => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompileOptions {
    pub rewrite: bool,
    pub fold: bool,
    pub pack: bool,
    pub simplify: bool,
    /// Word width used to verify synthesized ALUs.
    pub bits: u32,
    pub mode: Mode,
    pub max_depth: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            rewrite: true,
            fold: true,
            pack: true,
            simplify: true,
            bits: 4,
            mode: Mode::Optimal,
            max_depth: 4,
        }
    }
}

/// Result of the first phase.
#[derive(Clone, Debug)]
pub struct Front {
    pub source: Program,
    /// Rewritten (if enabled) and with bare assignments wrapped in tables.
    pub program: Program,
    pub rewrite: RewriteReport,
}

pub fn front(src: &str, opts: &CompileOptions) -> Result<Front, CompileError> {
    let source = parse(src)?;
    let (rewritten, rewrite) = if opts.rewrite {
        rewrite_to_tables(&source)
    } else {
        (source.clone(), RewriteReport::default())
    };
    Ok(Front {
        program: lower_tables(&rewritten),
        source,
        rewrite,
    })
}

/// Per-action products of the second phase, keyed by action name.
#[derive(Clone, Debug, Default)]
pub struct Synthesized {
    pub preprocessed: BTreeMap<String, PreprocessedAction>,
    pub compgraphs: BTreeMap<String, ComputationGraph>,
    pub graphs: BTreeMap<String, ResourceGraph>,
    pub stats: BTreeMap<String, SynthStats>,
}

/// Synthesizes every action of every applied table once.
pub fn synthesize_program(
    p: &Program,
    grammars: &Grammars,
    opts: &CompileOptions,
) -> Result<Synthesized, CompileError> {
    let mut out = Synthesized::default();
    let popts = PreprocessOptions {
        simplify: opts.simplify,
        bits: opts.bits,
    };
    let sopts = SynthOptions {
        bits: opts.bits,
        fold: opts.fold,
        pack: opts.pack,
        max_depth: opts.max_depth,
    };
    for t in p.applied_tables() {
        let Some(table) = p.table(&t) else { continue };
        for a in p.table_actions(table) {
            if out.graphs.contains_key(&a.name) {
                continue;
            }
            let pp = preprocess_action(p, a, popts);
            let (rg, cg, stats) = synthesize_action(&pp, grammars, sopts)?;
            out.preprocessed.insert(a.name.clone(), pp);
            out.compgraphs.insert(a.name.clone(), cg);
            out.graphs.insert(a.name.clone(), rg);
            out.stats.insert(a.name.clone(), stats);
        }
    }
    Ok(out)
}

/// Third phase: placement of the synthesized program on `target`.
#[derive(Clone, Debug)]
pub struct Placement {
    pub problem: AllocationProblem,
    pub constraints: ConstraintSet,
    pub solution: AllocationSolution,
}

pub fn allocate_program(
    p: &Program,
    graphs: &BTreeMap<String, ResourceGraph>,
    target: &TargetSpec,
    mode: Mode,
) -> Result<Placement, CompileError> {
    let problem = problem_from_program(p, graphs);
    let constraints = build_constraints(&problem, target)?;
    let sol = solve(&constraints, mode)?;
    let solution = duplicate_multistage_matches(&sol, &problem, &constraints)?;
    validate(&constraints, &solution).map_err(CompileError::Internal)?;
    Ok(Placement {
        problem,
        constraints,
        solution,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionDepth {
    pub action: String,
    pub depth: usize,
    pub stateful_alus: usize,
    pub stateless_alus: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub millis: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompileReport {
    pub target: String,
    pub stages_used: usize,
    pub actions: Vec<ActionDepth>,
    pub allocation: AllocationReport,
    pub rewritten_tables: Vec<String>,
    pub rewrite_skipped: Vec<String>,
    pub pruned_deps: Vec<String>,
    pub timings: Vec<PhaseTiming>,
}

impl fmt::Display for CompileReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "target {}: {} of {} stages used",
            self.target, self.stages_used, self.allocation.n_stages
        )?;
        if !self.rewritten_tables.is_empty() {
            writeln!(f, "rewritten tables: {}", self.rewritten_tables.join(", "))?;
        }
        for s in &self.rewrite_skipped {
            writeln!(f, "rewrite skipped: {s}")?;
        }
        for d in &self.pruned_deps {
            writeln!(f, "pruned: {d}")?;
        }
        writeln!(f, "actions:")?;
        for a in &self.actions {
            writeln!(
                f,
                "  {:<24} depth {} ({} stateful, {} stateless)",
                a.action, a.depth, a.stateful_alus, a.stateless_alus
            )?;
        }
        write!(f, "{}", self.allocation)?;
        let t: Vec<String> = self
            .timings
            .iter()
            .map(|t| format!("{} {:.1} ms", t.phase, t.millis))
            .collect();
        writeln!(f, "timings: {}", t.join(", "))
    }
}

/// Everything the compiler produced for one program.
#[derive(Clone, Debug)]
pub struct Compilation {
    pub front: Front,
    pub synth: Synthesized,
    pub placement: Placement,
    pub report: CompileReport,
}

impl Compilation {
    pub fn pipeline(&self) -> CompiledPipeline {
        CompiledPipeline::new(
            self.front.program.clone(),
            self.synth.graphs.clone(),
            self.placement.constraints.clone(),
            self.placement.solution.clone(),
        )
    }

    pub fn stages(&self) -> usize {
        self.placement.solution.cost
    }
}

// `Instant::now` panics on wasm32-unknown-unknown, so timings read zero there.
#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;

#[cfg(target_arch = "wasm32")]
#[derive(Clone, Copy)]
struct Instant;

#[cfg(target_arch = "wasm32")]
impl Instant {
    fn now() -> Self {
        Instant
    }
}

#[cfg(not(target_arch = "wasm32"))]
fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

#[cfg(target_arch = "wasm32")]
fn ms(_: Instant) -> f64 {
    0.0
}

pub fn compile(
    src: &str,
    target: &TargetSpec,
    grammars: &Grammars,
    opts: &CompileOptions,
) -> Result<Compilation, CompileError> {
    let mut timings = Vec::new();
    let t0 = Instant::now();
    let front = front(src, opts)?;
    timings.push(PhaseTiming {
        phase: "rewrite".into(),
        millis: ms(t0),
    });
    let t1 = Instant::now();
    let synth = synthesize_program(&front.program, grammars, opts)?;
    timings.push(PhaseTiming {
        phase: "synthesis".into(),
        millis: ms(t1),
    });
    let t2 = Instant::now();
    let placement = allocate_program(&front.program, &synth.graphs, target, opts.mode)?;
    timings.push(PhaseTiming {
        phase: "allocation".into(),
        millis: ms(t2),
    });

    let allocation = AllocationReport::new(
        &placement.problem,
        &placement.constraints,
        &placement.solution,
        target.n_entries_per_table,
    );
    let report = CompileReport {
        target: target.name.clone(),
        stages_used: placement.solution.cost,
        actions: synth
            .graphs
            .values()
            .map(|rg| ActionDepth {
                action: rg.action.clone(),
                depth: rg.depth(),
                stateful_alus: rg.stateful_count(),
                stateless_alus: rg.stateless_count(),
            })
            .collect(),
        allocation,
        rewritten_tables: front
            .rewrite
            .tables
            .iter()
            .map(|t| t.name.clone())
            .collect(),
        rewrite_skipped: front.rewrite.skipped.clone(),
        pruned_deps: front
            .rewrite
            .deps
            .iter()
            .filter(|d| !d.kept)
            .map(|d| d.to_string())
            .collect(),
        timings,
    };
    Ok(Compilation {
        front,
        synth,
        placement,
        report,
    })
}
