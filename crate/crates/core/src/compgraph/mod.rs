//! Computation graph over preprocessed code: strongly connected components
//! of the statement dependence graph, one node per component.

mod normalize;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::preprocess::{base_name, post, pre, Assign, PreprocessedAction};

pub use normalize::normalize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CgNode {
    pub id: usize,
    /// Indices into the preprocessed code, ascending.
    pub stmt_ids: Vec<usize>,
    pub stmts: Vec<Assign>,
    /// State variables whose `@post` flank this node defines.
    pub state_vars: Vec<String>,
    pub inputs: Vec<String>,
    /// Values other nodes or the packet need: defined names and, for
    /// stateful nodes, `@pre`/`@post` flanks of their own state.
    pub outputs: Vec<String>,
}

impl CgNode {
    pub fn is_stateful(&self) -> bool {
        !self.state_vars.is_empty()
    }

    pub fn defines(&self, name: &str) -> bool {
        self.stmts.iter().any(|a| a.target == name)
    }

    /// Whether `name` is a flank of one of this node's state variables.
    pub fn owns_flank(&self, name: &str) -> bool {
        name.contains('@') && self.state_vars.iter().any(|s| s == base_name(name))
    }

    fn order_key(&self) -> usize {
        self.stmt_ids.first().copied().unwrap_or(usize::MAX)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComputationGraph {
    pub action: String,
    pub nodes: Vec<CgNode>,
    pub edges: Vec<(usize, usize)>,
    /// Packet field to the SSA name holding its final value.
    pub outputs: BTreeMap<String, String>,
    /// Nodes that must be placed in the same stage: copies of one state
    /// variable's update.
    pub colocate: Vec<Vec<usize>>,
}

impl ComputationGraph {
    pub fn node(&self, id: usize) -> &CgNode {
        &self.nodes[id]
    }

    pub fn preds(&self, id: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.1 == id)
            .map(|e| e.0)
            .collect()
    }

    pub fn succs(&self, id: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.0 == id)
            .map(|e| e.1)
            .collect()
    }

    pub fn is_po(&self, name: &str) -> bool {
        self.outputs.values().any(|v| v == name)
    }

    /// Node producing `name`, if any.
    pub fn producer(&self, name: &str) -> Option<usize> {
        self.nodes
            .iter()
            .find(|n| n.outputs.iter().any(|o| o == name))
            .map(|n| n.id)
    }

    /// Recomputes inputs, edges and topological ids after nodes change.
    /// `colocate` holds groups of indices into `nodes` before renumbering.
    pub(crate) fn rebuild(
        action: String,
        mut nodes: Vec<CgNode>,
        outputs: BTreeMap<String, String>,
        colocate: Vec<Vec<usize>>,
    ) -> Self {
        for n in &mut nodes {
            n.inputs = node_inputs(n);
        }
        let producer: BTreeMap<&str, usize> = nodes
            .iter()
            .enumerate()
            .flat_map(|(i, n)| n.outputs.iter().map(move |o| (o.as_str(), i)))
            .collect();
        let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (j, n) in nodes.iter().enumerate() {
            for i in &n.inputs {
                if let Some(&p) = producer.get(i.as_str()) {
                    if p != j {
                        edges.insert((p, j));
                    }
                }
            }
        }
        // Kahn's algorithm, smallest statement index first.
        let mut indeg = vec![0usize; nodes.len()];
        for &(_, b) in &edges {
            indeg[b] += 1;
        }
        let mut order = Vec::with_capacity(nodes.len());
        let mut ready: BTreeSet<(usize, usize)> = (0..nodes.len())
            .filter(|&i| indeg[i] == 0)
            .map(|i| (nodes[i].order_key(), i))
            .collect();
        while let Some(&(k, i)) = ready.iter().next() {
            ready.remove(&(k, i));
            order.push(i);
            for &(a, b) in &edges {
                if a == i {
                    indeg[b] -= 1;
                    if indeg[b] == 0 {
                        ready.insert((nodes[b].order_key(), b));
                    }
                }
            }
        }
        assert_eq!(order.len(), nodes.len(), "computation graph has a cycle");
        let mut new_id = vec![0usize; nodes.len()];
        for (pos, &old) in order.iter().enumerate() {
            new_id[old] = pos;
        }
        let mut slots: Vec<Option<CgNode>> = nodes.into_iter().map(Some).collect();
        let nodes: Vec<CgNode> = order
            .iter()
            .enumerate()
            .map(|(pos, &old)| {
                let mut n = slots[old].take().unwrap();
                n.id = pos;
                n
            })
            .collect();
        let mut edges: Vec<(usize, usize)> = edges
            .into_iter()
            .map(|(a, b)| (new_id[a], new_id[b]))
            .collect();
        edges.sort_unstable();
        let mut colocate: Vec<Vec<usize>> = colocate
            .into_iter()
            .map(|g| {
                let mut g: Vec<usize> = g.into_iter().map(|i| new_id[i]).collect();
                g.sort_unstable();
                g
            })
            .filter(|g| g.len() > 1)
            .collect();
        colocate.sort();
        ComputationGraph {
            action,
            nodes,
            edges,
            outputs,
            colocate,
        }
    }

    pub fn to_dot(&self) -> String {
        let mut s = format!(
            "digraph \"{}\" {{\n  node [shape=box, fontname=monospace];\n",
            self.action
        );
        for n in &self.nodes {
            let body: Vec<String> = n
                .stmts
                .iter()
                .map(|a| a.to_string().replace('"', "\\\""))
                .collect();
            let style = if n.is_stateful() {
                ", style=filled, fillcolor=lightgrey"
            } else {
                ""
            };
            s.push_str(&format!(
                "  n{} [label=\"{}\\l\"{}];\n",
                n.id,
                body.join("\\l"),
                style
            ));
        }
        for (a, b) in &self.edges {
            s.push_str(&format!("  n{a} -> n{b};\n"));
        }
        for g in &self.colocate {
            let ids: Vec<String> = g.iter().map(|i| format!("n{i}")).collect();
            s.push_str(&format!("  {{ rank=same; {} }}\n", ids.join("; ")));
        }
        s.push_str("}\n");
        s
    }
}

impl fmt::Display for ComputationGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "computation graph for {}:", self.action)?;
        for n in &self.nodes {
            let kind = if n.is_stateful() {
                format!("stateful [{}]", n.state_vars.join(", "))
            } else {
                "stateless".into()
            };
            writeln!(f, "  node {} {kind}", n.id)?;
            for a in &n.stmts {
                writeln!(f, "    {a}")?;
            }
            writeln!(
                f,
                "    in: {}  out: {}",
                n.inputs.join(", "),
                n.outputs.join(", ")
            )?;
        }
        let edges: Vec<String> = self
            .edges
            .iter()
            .map(|(a, b)| format!("{a}->{b}"))
            .collect();
        writeln!(f, "  edges: {}", edges.join(" "))?;
        for g in &self.colocate {
            writeln!(f, "  same stage: {g:?}")?;
        }
        Ok(())
    }
}

pub(crate) fn node_inputs(n: &CgNode) -> Vec<String> {
    let mut inputs: Vec<String> = Vec::new();
    for a in &n.stmts {
        for v in a.value.vars() {
            if !n.defines(v) && !n.owns_flank(v) && !inputs.iter().any(|i| i == v) {
                inputs.push(v.to_string());
            }
        }
    }
    inputs
}

/// Builds the graph: one node per strongly connected component of the
/// statement graph, where a statement defining `s@post` also feeds every
/// reader of `s@pre`.
pub fn build(pp: &PreprocessedAction) -> ComputationGraph {
    let code = &pp.code;
    let mut g: DiGraph<usize, ()> = DiGraph::new();
    let idx: Vec<_> = (0..code.len()).map(|i| g.add_node(i)).collect();
    let def: BTreeMap<&str, usize> = code
        .iter()
        .enumerate()
        .map(|(i, a)| (a.target.as_str(), i))
        .collect();
    for (j, a) in code.iter().enumerate() {
        for v in a.value.vars() {
            if let Some(&i) = def.get(v) {
                g.update_edge(idx[i], idx[j], ());
            }
            if let Some(s) = v.strip_suffix("@pre") {
                if let Some(&i) = def.get(post(s).as_str()) {
                    g.update_edge(idx[i], idx[j], ());
                }
            }
        }
    }
    let mut nodes: Vec<CgNode> = tarjan_scc(&g)
        .into_iter()
        .map(|comp| {
            let mut ids: Vec<usize> = comp.into_iter().map(|n| g[n]).collect();
            ids.sort_unstable();
            let stmts: Vec<Assign> = ids.iter().map(|&i| code[i].clone()).collect();
            let state_vars = stmts
                .iter()
                .filter_map(|a| a.target.strip_suffix("@post").map(str::to_string))
                .collect();
            CgNode {
                id: 0,
                stmt_ids: ids,
                stmts,
                state_vars,
                inputs: Vec::new(),
                outputs: Vec::new(),
            }
        })
        .collect();

    let pos: BTreeSet<&str> = pp.outputs.values().map(String::as_str).collect();
    let readers: Vec<Vec<&str>> = nodes
        .iter()
        .map(|n| n.stmts.iter().flat_map(|a| a.value.vars()).collect())
        .collect();
    let mut outs: Vec<Vec<String>> = Vec::new();
    for (i, n) in nodes.iter().enumerate() {
        let read_elsewhere = |name: &str| {
            readers
                .iter()
                .enumerate()
                .any(|(j, r)| j != i && r.contains(&name))
        };
        let mut o: Vec<String> = Vec::new();
        for a in &n.stmts {
            if a.target.contains('@') {
                continue;
            }
            if pos.contains(a.target.as_str()) || read_elsewhere(&a.target) {
                o.push(a.target.clone());
            }
        }
        for s in &n.state_vars {
            for flank in [pre(s), post(s)] {
                if read_elsewhere(&flank) {
                    o.push(flank);
                }
            }
        }
        outs.push(o);
    }
    for (n, o) in nodes.iter_mut().zip(outs) {
        n.outputs = o;
    }
    ComputationGraph::rebuild(pp.action.clone(), nodes, pp.outputs.clone(), Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse;
    use crate::preprocess::{preprocess_action, PreprocessOptions};

    pub(crate) fn graph(body: &str) -> ComputationGraph {
        let p = parse(&format!(
            "header pkt {{ bit<8> now; bit<8> nmf; bit<1> sample; }} \
             register bit<8> lu = 0; register bit<8> pm = 0; \
             action x() {{ {body} }} table t {{ actions = {{ x; }} }} control c {{ t.apply(); }}"
        ))
        .unwrap();
        build(&preprocess_action(
            &p,
            &p.actions[0],
            PreprocessOptions::default(),
        ))
    }

    pub(crate) const BLUE: &str =
        "pkt.nmf = pkt.now - 10; if (pkt.nmf > lu) { pm = pm - 1; lu = pkt.now; }";

    #[test]
    fn blue_components() {
        let g = graph(BLUE);
        assert_eq!(g.nodes.len(), 3);
        let kinds: Vec<(bool, usize)> = g
            .nodes
            .iter()
            .map(|n| (n.is_stateful(), n.stmts.len()))
            .collect();
        assert_eq!(kinds, vec![(false, 1), (true, 2), (true, 1)]);
        assert_eq!(g.nodes[0].outputs, vec!["pkt.nmf#1"]);
        assert_eq!(g.nodes[1].state_vars, vec!["lu"]);
        assert_eq!(g.nodes[1].outputs, vec!["__br0#1"]);
        assert_eq!(g.nodes[1].inputs, vec!["pkt.nmf#1", "pkt.now"]);
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn state_read_outside_is_flank_output() {
        let g = graph("lu = lu + 1; pkt.nmf = lu;");
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.nodes[0].outputs, vec!["lu@post"]);
        assert_eq!(g.nodes[1].inputs, vec!["lu@post"]);
    }

    #[test]
    fn dot_mentions_every_node() {
        let g = graph(BLUE);
        let dot = g.to_dot();
        assert!(dot.contains("n0 -> n1") && dot.contains("n2 ["));
    }
}
