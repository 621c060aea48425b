//! Folding and predecessor packing over a normalized computation graph.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::compgraph::{node_inputs, CgNode, ComputationGraph};
use crate::preprocess::PreprocessedAction;

use super::config::StatefulConfig;
use super::grammar::StatefulGrammar;
use super::stateful::{query_stateful, StatefulSpec};

/// Stateful queries for one action, memoized on the node's code and
/// interface.
pub struct Oracle<'a> {
    pub pp: &'a PreprocessedAction,
    pub grammar: &'a StatefulGrammar,
    pub bits: u32,
    cache: RefCell<HashMap<String, Option<StatefulConfig>>>,
}

impl<'a> Oracle<'a> {
    pub fn new(pp: &'a PreprocessedAction, grammar: &'a StatefulGrammar, bits: u32) -> Self {
        Oracle {
            pp,
            grammar,
            bits,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn width(&self, name: &str) -> u32 {
        self.pp.store_width(name, self.bits)
    }

    pub fn queries(&self) -> usize {
        self.cache.borrow().len()
    }

    pub fn query(&self, n: &CgNode) -> Option<StatefulConfig> {
        if n.outputs.len() > 1 {
            return None;
        }
        let body: Vec<String> = n.stmts.iter().map(|a| a.to_string()).collect();
        let key = format!(
            "{}|{:?}|{:?}|{:?}",
            body.join(" "),
            n.state_vars,
            n.inputs,
            n.outputs
        );
        if let Some(r) = self.cache.borrow().get(&key) {
            return r.clone();
        }
        let width = |name: &str| self.width(name);
        let spec = StatefulSpec {
            stmts: &n.stmts,
            state_vars: &n.state_vars,
            inputs: &n.inputs,
            output: n.outputs.first().map(String::as_str),
            width: &width,
            bits: self.bits,
        };
        let r = query_stateful(&spec, self.grammar);
        self.cache.borrow_mut().insert(key, r.clone());
        r
    }
}

fn union_code(a: &CgNode, b: &CgNode) -> CgNode {
    let mut code: BTreeMap<usize, crate::preprocess::Assign> = BTreeMap::new();
    for n in [a, b] {
        for (i, s) in n.stmt_ids.iter().zip(&n.stmts) {
            code.insert(*i, s.clone());
        }
    }
    let mut state_vars = b.state_vars.clone();
    for s in &a.state_vars {
        if !state_vars.contains(s) {
            state_vars.push(s.clone());
        }
    }
    state_vars.sort();
    let mut n = CgNode {
        id: b.id,
        stmt_ids: code.keys().copied().collect(),
        stmts: code.into_values().collect(),
        state_vars,
        inputs: Vec::new(),
        outputs: b.outputs.clone(),
    };
    n.inputs = node_inputs(&n);
    n
}

/// Rebuilds `g` with some nodes replaced or removed. `alias` sends removed
/// node ids to the node that absorbed them, for colocation.
fn assemble(
    g: &ComputationGraph,
    nodes: Vec<Option<CgNode>>,
    alias: &BTreeMap<usize, usize>,
) -> ComputationGraph {
    let mut idx = vec![usize::MAX; nodes.len()];
    let mut kept = Vec::new();
    for (i, n) in nodes.into_iter().enumerate() {
        if let Some(n) = n {
            idx[i] = kept.len();
            kept.push(n);
        }
    }
    let resolve = |i: usize| alias.get(&i).copied().unwrap_or(i);
    let mut groups: Vec<BTreeSet<usize>> = Vec::new();
    for grp in &g.colocate {
        let mut s: BTreeSet<usize> = grp
            .iter()
            .map(|&i| resolve(i))
            .filter(|&i| idx[i] != usize::MAX)
            .map(|i| idx[i])
            .collect();
        groups.retain(|other| {
            if other.is_disjoint(&s) {
                true
            } else {
                s.extend(other.iter().copied());
                false
            }
        });
        groups.push(s);
    }
    let groups = groups
        .into_iter()
        .map(|s| s.into_iter().collect())
        .collect();
    ComputationGraph::rebuild(g.action.clone(), kept, g.outputs.clone(), groups)
}

/// Inlines stateless `u` into its stateful successor `v` when `u` reads
/// nothing `v` does not already read. `u` survives if anything else needs it.
pub fn try_fold(g: &ComputationGraph, u: usize, v: usize, o: &Oracle) -> Option<ComputationGraph> {
    let (un, vn) = (g.node(u), g.node(v));
    if un.is_stateful() || !vn.is_stateful() || !g.edges.contains(&(u, v)) {
        return None;
    }
    if !un
        .inputs
        .iter()
        .all(|i| vn.inputs.contains(i) && !un.outputs.contains(i))
    {
        return None;
    }
    let merged = union_code(un, vn);
    if merged.inputs.len() > o.grammar.max_inputs {
        return None;
    }
    o.query(&merged)?;
    let still_needed = un.outputs.iter().any(|x| {
        g.is_po(x)
            || g.succs(u)
                .iter()
                .any(|&w| w != v && g.node(w).inputs.contains(x))
    });
    let mut nodes: Vec<Option<CgNode>> = g.nodes.iter().cloned().map(Some).collect();
    nodes[v] = Some(merged);
    if !still_needed {
        nodes[u] = None;
    }
    Some(assemble(g, nodes, &BTreeMap::new()))
}

/// Packs `u` into its only successor `v`; at least one of them is stateful
/// and none of `u`'s outputs leaves the action.
pub fn try_merge(g: &ComputationGraph, u: usize, v: usize, o: &Oracle) -> Option<ComputationGraph> {
    let (un, vn) = (g.node(u), g.node(v));
    if !(un.is_stateful() || vn.is_stateful()) || g.succs(u) != [v] {
        return None;
    }
    if un.outputs.iter().any(|x| g.is_po(x)) {
        return None;
    }
    let merged = union_code(un, vn);
    let scratch = merged.outputs.iter().any(|x| !merged.owns_flank(x)) as usize;
    if merged.state_vars.len() + scratch > o.grammar.registers
        || merged.inputs.len() > o.grammar.max_inputs
        || merged.outputs.len() > 1
    {
        return None;
    }
    o.query(&merged)?;
    let mut nodes: Vec<Option<CgNode>> = g.nodes.iter().cloned().map(Some).collect();
    nodes[v] = Some(merged);
    nodes[u] = None;
    let mut alias = BTreeMap::new();
    alias.insert(u, v);
    Some(assemble(g, nodes, &alias))
}

/// Applies folds, then merges, until neither changes the graph.
pub fn optimize_fixpoint(
    mut g: ComputationGraph,
    o: &Oracle,
    fold: bool,
    pack: bool,
) -> ComputationGraph {
    loop {
        let mut next = None;
        if fold {
            next = g.edges.iter().find_map(|&(u, v)| try_fold(&g, u, v, o));
        }
        if next.is_none() && pack {
            next = g.edges.iter().find_map(|&(u, v)| try_merge(&g, u, v, o));
        }
        match next {
            Some(n) => g = n,
            None => return g,
        }
    }
}
