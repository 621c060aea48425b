//! Turns each preprocessed action into a resource graph of configured ALUs.

mod config;
pub mod grammar;
mod optimize;
mod stateful;
mod stateless;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::compgraph::{build, normalize, ComputationGraph};
use crate::ir::{expr_to_string, Expr};
use crate::preprocess::{Assign, PreprocessedAction};

pub use config::{CStmt, OutputSel, RegBinding, StatefulConfig, StatelessConfig};
pub use grammar::{
    builtin, builtin_names, parse_grammar, AluGrammar, GrammarError, StatefulGrammar,
    StatelessGrammar,
};
pub use optimize::{optimize_fixpoint, try_fold, try_merge, Oracle};
pub use stateful::{query_stateful, StatefulSpec, EXHAUSTIVE_BITS};
pub use stateless::{synth_min_depth, tree_depth, StatelessResult, StatelessSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("action `{action}`: no `{grammar}` configuration implements\n{node}")]
    NoFit {
        action: String,
        grammar: String,
        node: String,
    },
    #[error(
        "action `{action}`: no tree of at most {max_depth} stateless ALUs computes `{output}`"
    )]
    DepthExceeded {
        action: String,
        output: String,
        max_depth: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grammars {
    pub stateful: StatefulGrammar,
    pub stateless: StatelessGrammar,
}

impl Grammars {
    pub fn builtin(stateful: &str, stateless: &str) -> Result<Self, GrammarError> {
        let s = match builtin(stateful)? {
            AluGrammar::Stateful(g) => g,
            AluGrammar::Stateless(g) => {
                return Err(GrammarError::Invalid {
                    name: g.name,
                    msg: "expected a stateful grammar".into(),
                })
            }
        };
        let l = match builtin(stateless)? {
            AluGrammar::Stateless(g) => g,
            AluGrammar::Stateful(g) => {
                return Err(GrammarError::Invalid {
                    name: g.name,
                    msg: "expected a stateless grammar".into(),
                })
            }
        };
        Ok(Grammars {
            stateful: s,
            stateless: l,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthOptions {
    pub bits: u32,
    pub fold: bool,
    pub pack: bool,
    /// Deepest stateless tree tried per output.
    pub max_depth: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            bits: 4,
            fold: true,
            pack: true,
            max_depth: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum AluKind {
    Stateful(StatefulConfig),
    Stateless(StatelessConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AluInstance {
    pub id: usize,
    pub kind: AluKind,
    pub inputs: Vec<String>,
    /// PHV name the ALU writes, if any.
    pub output: Option<String>,
    /// Longest chain of ALUs ending here, counting this one.
    pub depth: usize,
}

impl AluInstance {
    pub fn is_stateful(&self) -> bool {
        matches!(self.kind, AluKind::Stateful(_))
    }

    pub fn state_vars(&self) -> Vec<&str> {
        match &self.kind {
            AluKind::Stateful(c) => c
                .bindings
                .iter()
                .filter_map(|b| match b {
                    RegBinding::State(s) => Some(s.as_str()),
                    _ => None,
                })
                .collect(),
            AluKind::Stateless(_) => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResourceGraph {
    pub action: String,
    pub alus: Vec<AluInstance>,
    pub edges: Vec<(usize, usize)>,
    /// ALUs that must share a stage.
    pub colocate: Vec<Vec<usize>>,
    /// Packet field to the PHV name holding its final value.
    pub outputs: BTreeMap<String, String>,
    pub state_vars: Vec<String>,
    /// Stored width of every PHV name the ALUs read or write.
    pub widths: BTreeMap<String, u32>,
}

impl ResourceGraph {
    pub fn depth(&self) -> usize {
        self.alus.iter().map(|a| a.depth).max().unwrap_or(0)
    }

    pub fn stateful_count(&self) -> usize {
        self.alus.iter().filter(|a| a.is_stateful()).count()
    }

    pub fn stateless_count(&self) -> usize {
        self.alus.len() - self.stateful_count()
    }

    pub fn preds(&self, id: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.1 == id)
            .map(|e| e.0)
            .collect()
    }
}

impl fmt::Display for ResourceGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "resource graph for {} (depth {}):",
            self.action,
            self.depth()
        )?;
        for a in &self.alus {
            let out = a.output.as_deref().unwrap_or("-");
            match &a.kind {
                AluKind::Stateful(c) => {
                    writeln!(f, "  alu {} stateful depth {} -> {out}", a.id, a.depth)?;
                    for line in c.to_string().lines() {
                        writeln!(f, "    {line}")?;
                    }
                }
                AluKind::Stateless(c) => writeln!(
                    f,
                    "  alu {} stateless depth {} {out} = {}",
                    a.id,
                    a.depth,
                    expr_to_string(&c.expr)
                )?,
            }
        }
        for (field, name) in &self.outputs {
            writeln!(f, "  {field} <- {name}")?;
        }
        Ok(())
    }
}

/// Statistics gathered while synthesizing one action.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SynthStats {
    pub graph_nodes: usize,
    pub optimized_nodes: usize,
    pub stateful_queries: usize,
    /// Stateless outputs whose minimum depth was not proven minimal.
    pub incomplete_depths: Vec<String>,
}

/// The full per-action flow: computation graph, normalization, folding and
/// packing, stateful queries and minimum-depth stateless trees.
pub fn synthesize_action(
    pp: &PreprocessedAction,
    grammars: &Grammars,
    opts: SynthOptions,
) -> Result<(ResourceGraph, ComputationGraph, SynthStats), SynthError> {
    let g0 = build(pp);
    let oracle = Oracle::new(pp, &grammars.stateful, opts.bits);
    let g1 = normalize(&g0, grammars.stateful.registers);
    let g = optimize_fixpoint(g1, &oracle, opts.fold, opts.pack);
    let mut stats = SynthStats {
        graph_nodes: g0.nodes.len(),
        optimized_nodes: g.nodes.len(),
        ..Default::default()
    };
    let width = |n: &str| pp.store_width(n, opts.bits);

    let mut configs: BTreeMap<usize, StatefulConfig> = BTreeMap::new();
    for n in g.nodes.iter().filter(|n| n.is_stateful()) {
        let cfg = oracle.query(n).ok_or_else(|| SynthError::NoFit {
            action: pp.action.clone(),
            grammar: grammars.stateful.name.clone(),
            node: n
                .stmts
                .iter()
                .map(|a| format!("    {a}"))
                .collect::<Vec<_>>()
                .join("\n"),
        })?;
        configs.insert(n.id, cfg);
    }
    stats.stateful_queries = oracle.queries();

    // Stateless definitions, by name, with their statement index.
    let mut stateless_def: BTreeMap<&str, (usize, &Assign)> = BTreeMap::new();
    for n in g.nodes.iter().filter(|n| !n.is_stateful()) {
        for (i, a) in n.stmt_ids.iter().zip(&n.stmts) {
            stateless_def.insert(&a.target, (*i, a));
        }
    }
    let mut targets: BTreeSet<&str> = BTreeSet::new();
    for n in g.nodes.iter().filter(|n| n.is_stateful()) {
        for i in &n.inputs {
            if stateless_def.contains_key(i.as_str()) {
                targets.insert(i);
            }
        }
    }
    for v in g.outputs.values() {
        if stateless_def.contains_key(v.as_str()) {
            targets.insert(v);
        }
    }
    let stateful_out: BTreeSet<&str> = g
        .nodes
        .iter()
        .filter(|n| n.is_stateful())
        .flat_map(|n| n.outputs.iter().map(String::as_str))
        .collect();

    let mut alias: BTreeMap<String, String> = BTreeMap::new();
    let mut trees: Vec<(String, Expr)> = Vec::new();
    for t in &targets {
        let mut cone: BTreeMap<usize, Assign> = BTreeMap::new();
        let mut leaves: Vec<String> = Vec::new();
        let mut work = vec![t.to_string()];
        let mut seen = BTreeSet::new();
        while let Some(name) = work.pop() {
            if !seen.insert(name.clone()) {
                continue;
            }
            match stateless_def.get(name.as_str()) {
                Some((i, a)) => {
                    cone.insert(*i, (*a).clone());
                    work.extend(a.value.vars().into_iter().map(str::to_string));
                }
                None => leaves.push(name),
            }
        }
        leaves.sort();
        let stmts: Vec<Assign> = cone.into_values().collect();
        let is_po = g.is_po(t);
        if let [Assign {
            value: Expr::Var(x),
            ..
        }] = stmts.as_slice()
        {
            if (stateful_out.contains(x.as_str()) || !is_po) && width(x) <= width(t) {
                alias.insert(t.to_string(), x.clone());
                continue;
            }
        }
        let spec = StatelessSpec {
            target: t,
            stmts: &stmts,
            leaves: &leaves,
            width: &width,
            bits: opts.bits,
        };
        let r = synth_min_depth(&spec, &grammars.stateless, opts.max_depth).ok_or_else(|| {
            SynthError::DepthExceeded {
                action: pp.action.clone(),
                output: g
                    .outputs
                    .iter()
                    .find(|(_, v)| v == t)
                    .map_or(t.to_string(), |(f, _)| f.clone()),
                max_depth: opts.max_depth,
            }
        })?;
        if !r.complete {
            stats.incomplete_depths.push(t.to_string());
        }
        trees.push((t.to_string(), r.expr));
    }
    let resolve = |n: &str| -> String {
        let mut cur = n.to_string();
        while let Some(next) = alias.get(&cur) {
            cur = next.clone();
        }
        cur
    };

    let mut alus: Vec<AluInstance> = Vec::new();
    let mut node_alu: BTreeMap<usize, usize> = BTreeMap::new();
    for (nid, cfg) in &configs {
        let mut cfg = cfg.clone();
        cfg.rename_inputs(&|n| alias.contains_key(n).then(|| resolve(n)));
        node_alu.insert(*nid, alus.len());
        alus.push(AluInstance {
            id: alus.len(),
            inputs: cfg.inputs.clone(),
            output: g.node(*nid).outputs.first().cloned(),
            kind: AluKind::Stateful(cfg),
            depth: 0,
        });
    }
    let mut fresh = 0usize;
    for (t, e) in &trees {
        emit_tree(
            e,
            Some(t.clone()),
            &grammars.stateless.name,
            &resolve,
            &mut alus,
            &mut fresh,
        );
    }

    let outputs: BTreeMap<String, String> = g
        .outputs
        .iter()
        .map(|(f, v)| (f.clone(), resolve(v)))
        .collect();

    // Drop stateful copies nobody reads when another copy keeps the state.
    loop {
        let used = |name: &str| {
            alus.iter().any(|a| a.inputs.iter().any(|i| i == name))
                || outputs.values().any(|v| v == name)
        };
        let victim = alus.iter().position(|a| {
            a.is_stateful()
                && a.output.as_deref().is_none_or(|o| !used(o))
                && a.state_vars().iter().all(|s| {
                    alus.iter()
                        .any(|b| b.id != a.id && b.state_vars().contains(s))
                })
        });
        let Some(i) = victim else { break };
        alus.remove(i);
        for (_, a) in node_alu.iter_mut() {
            if *a > i {
                *a -= 1;
            } else if *a == i {
                *a = usize::MAX;
            }
        }
        for (j, a) in alus.iter_mut().enumerate() {
            a.id = j;
        }
    }
    let outputs_used: BTreeSet<String> = alus
        .iter()
        .flat_map(|a| a.inputs.iter().cloned())
        .chain(outputs.values().cloned())
        .collect();
    for a in alus.iter_mut() {
        if let (AluKind::Stateful(c), Some(o)) = (&mut a.kind, &a.output) {
            if !outputs_used.contains(o) {
                c.output = None;
                a.output = None;
            }
        }
    }

    let producer: BTreeMap<&str, usize> = alus
        .iter()
        .filter_map(|a| a.output.as_deref().map(|o| (o, a.id)))
        .collect();
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for a in &alus {
        for i in &a.inputs {
            if let Some(&p) = producer.get(i.as_str()) {
                edges.insert((p, a.id));
            }
        }
    }
    let edges: Vec<(usize, usize)> = edges.into_iter().collect();
    let colocate: Vec<Vec<usize>> = g
        .colocate
        .iter()
        .map(|grp| {
            grp.iter()
                .filter_map(|n| node_alu.get(n).copied())
                .filter(|&a| a != usize::MAX)
                .collect::<Vec<_>>()
        })
        .filter(|grp| grp.len() > 1)
        .collect();

    // Longest path, with colocated ALUs lifted to a common depth.
    let mut depth = vec![1usize; alus.len()];
    loop {
        let mut changed = false;
        for &(p, c) in &edges {
            if depth[c] < depth[p] + 1 {
                depth[c] = depth[p] + 1;
                changed = true;
            }
        }
        for grp in &colocate {
            let m = grp.iter().map(|&i| depth[i]).max().unwrap_or(1);
            for &i in grp {
                if depth[i] != m {
                    depth[i] = m;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for (a, d) in alus.iter_mut().zip(depth) {
        a.depth = d;
    }

    let mut widths: BTreeMap<String, u32> = BTreeMap::new();
    for a in &alus {
        for n in a.inputs.iter().chain(a.output.iter()) {
            widths.insert(n.clone(), width(n));
        }
    }
    for (f, v) in &outputs {
        widths.insert(v.clone(), width(v));
        widths.insert(f.clone(), width(f));
    }
    for i in &pp.inputs {
        widths.insert(i.clone(), width(i));
    }
    let rg = ResourceGraph {
        action: pp.action.clone(),
        alus,
        edges,
        colocate,
        outputs,
        state_vars: pp.state_vars.clone(),
        widths,
    };
    Ok((rg, g, stats))
}

/// Adds one stateless ALU per operator of `e`; returns the operand that
/// refers to `e`'s value.
fn emit_tree(
    e: &Expr,
    name: Option<String>,
    grammar: &str,
    resolve: &dyn Fn(&str) -> String,
    alus: &mut Vec<AluInstance>,
    fresh: &mut usize,
) -> Expr {
    let operand = |x: &Expr, alus: &mut Vec<AluInstance>, fresh: &mut usize| -> Expr {
        match x {
            Expr::Const(_) => x.clone(),
            Expr::Var(v) => Expr::var(resolve(v)),
            _ => emit_tree(x, None, grammar, resolve, alus, fresh),
        }
    };
    let body = match e {
        Expr::Const(_) | Expr::Var(_) => return operand(e, alus, fresh),
        Expr::Unary(op, a) => Expr::un(*op, operand(a, alus, fresh)),
        Expr::Binary(op, a, b) => {
            let a = operand(a, alus, fresh);
            Expr::bin(*op, a, operand(b, alus, fresh))
        }
        Expr::Ternary(c, a, b) => {
            let c = operand(c, alus, fresh);
            let a = operand(a, alus, fresh);
            Expr::ite(c, a, operand(b, alus, fresh))
        }
    };
    let out = name.unwrap_or_else(|| {
        *fresh += 1;
        format!("__t{}", *fresh - 1)
    });
    let mut inputs: Vec<String> = Vec::new();
    for v in body.vars() {
        if !inputs.iter().any(|i| i == v) {
            inputs.push(v.to_string());
        }
    }
    alus.push(AluInstance {
        id: alus.len(),
        kind: AluKind::Stateless(StatelessConfig {
            grammar: grammar.to_string(),
            expr: body,
        }),
        inputs,
        output: Some(out.clone()),
        depth: 0,
    });
    Expr::var(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse;
    use crate::preprocess::{preprocess_action, PreprocessOptions};

    fn synth(
        src: &str,
        stateful: &str,
        stateless: &str,
        opts: SynthOptions,
    ) -> Result<ResourceGraph, SynthError> {
        let p = parse(src).unwrap();
        let pp = preprocess_action(
            &p,
            &p.actions[0],
            PreprocessOptions {
                simplify: true,
                bits: opts.bits,
            },
        );
        let g = Grammars::builtin(stateful, stateless).unwrap();
        synthesize_action(&pp, &g, opts).map(|r| r.0)
    }

    fn wrap(body: &str) -> String {
        format!(
            "header pkt {{ bit<8> now; bit<8> nmf; bit<8> a; bit<8> b; bit<1> sample; }} \
             register bit<8> lu = 0; register bit<8> pm = 0; register bit<8> count = 0; \
             action x() {{ {body} }} table t {{ actions = {{ x; }} }} control c {{ t.apply(); }}"
        )
    }

    const BLUE: &str = "pkt.nmf = pkt.now - 10; if (pkt.nmf > lu) { pm = pm - 1; lu = pkt.now; }";
    const SAMPLING: &str = "if (count == 9) { count = 0; pkt.sample = 1; } else { count = count + 1; pkt.sample = 0; }";

    #[test]
    fn copy_is_one_alu() {
        let rg = synth(
            &wrap("pkt.a = pkt.b;"),
            "tofino",
            "tofino-stateless",
            SynthOptions::default(),
        )
        .unwrap();
        assert_eq!(rg.alus.len(), 1);
        assert_eq!(rg.depth(), 1);
    }

    #[test]
    fn blue_is_one_stage_on_tofino() {
        let rg = synth(
            &wrap(BLUE),
            "tofino",
            "tofino-stateless",
            SynthOptions::default(),
        )
        .unwrap();
        assert_eq!(rg.depth(), 1);
        assert_eq!(rg.stateful_count(), 1);
        let no_pack = SynthOptions {
            pack: false,
            ..SynthOptions::default()
        };
        assert_eq!(
            synth(&wrap(BLUE), "tofino", "tofino-stateless", no_pack)
                .unwrap()
                .depth(),
            2
        );
    }

    #[test]
    fn blue_on_banzai_sub() {
        let rg = synth(
            &wrap(BLUE),
            "banzai-sub",
            "banzai-stateless",
            SynthOptions::default(),
        )
        .unwrap();
        assert_eq!(rg.depth(), 4);
    }

    #[test]
    fn sampling_depths() {
        let rg = synth(
            &wrap(SAMPLING),
            "tofino",
            "tofino-stateless",
            SynthOptions::default(),
        )
        .unwrap();
        assert_eq!(rg.depth(), 1);
        let rg = synth(
            &wrap(SAMPLING),
            "banzai-if-else-raw",
            "banzai-stateless",
            SynthOptions::default(),
        )
        .unwrap();
        assert_eq!(rg.depth(), 2);
    }

    #[test]
    fn unfit_state_update_is_reported() {
        let e = synth(
            &wrap("lu = lu * pkt.a;"),
            "banzai-raw",
            "banzai-stateless",
            SynthOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(e, SynthError::NoFit { .. }));
    }
}
