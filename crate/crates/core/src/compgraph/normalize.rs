use std::collections::BTreeSet;

use super::{CgNode, ComputationGraph};

/// Splits stateful nodes so each has at most one output.
///
/// With fewer state variables than the `k` registers of the stateful ALU,
/// every output gets its own copy of the node and a stateless output can
/// leave through a spare register. Otherwise only flank outputs can leave a
/// copy; the statements computing each stateless output are moved into
/// stateless nodes that read the flanks they need from further copies.
/// Copies of one node must share a stage.
pub fn normalize(g: &ComputationGraph, k: usize) -> ComputationGraph {
    let mut nodes: Vec<CgNode> = Vec::new();
    let mut copies_of: Vec<Vec<usize>> = Vec::new();
    for n in &g.nodes {
        let start = nodes.len();
        if !n.is_stateful() {
            nodes.push(n.clone());
            copies_of.push(vec![start]);
            continue;
        }
        let flank_outs: Vec<&String> = n.outputs.iter().filter(|o| o.contains('@')).collect();
        let plain_outs: Vec<&String> = n.outputs.iter().filter(|o| !o.contains('@')).collect();
        let m = n.state_vars.len();
        let copy = |out: Option<&String>| CgNode {
            outputs: out.into_iter().cloned().collect(),
            ..n.clone()
        };

        if n.outputs.len() <= 1 && (plain_outs.is_empty() || m < k) {
            nodes.push(n.clone());
        } else if m < k {
            for o in &n.outputs {
                nodes.push(copy(Some(o)));
            }
        } else {
            let mut flanks: Vec<String> = flank_outs.iter().map(|s| s.to_string()).collect();
            let mut cone: BTreeSet<usize> = BTreeSet::new();
            let mut work: Vec<String> = plain_outs.iter().map(|s| s.to_string()).collect();
            while let Some(name) = work.pop() {
                if n.owns_flank(&name) {
                    if !flanks.contains(&name) {
                        flanks.push(name);
                    }
                    continue;
                }
                if let Some(pos) = n.stmts.iter().position(|a| a.target == name) {
                    if cone.insert(pos) {
                        work.extend(n.stmts[pos].value.vars().into_iter().map(str::to_string));
                    }
                }
            }
            if flanks.is_empty() {
                nodes.push(copy(None));
            }
            for f in &flanks {
                nodes.push(copy(Some(f)));
            }
            let cone_reads: Vec<&str> =
                cone.iter().flat_map(|&i| n.stmts[i].value.vars()).collect();
            let cone_nodes: Vec<CgNode> = cone
                .iter()
                .map(|&i| {
                    let a = &n.stmts[i];
                    let exported =
                        plain_outs.contains(&&a.target) || cone_reads.contains(&a.target.as_str());
                    CgNode {
                        id: 0,
                        stmt_ids: vec![n.stmt_ids[i]],
                        stmts: vec![a.clone()],
                        state_vars: Vec::new(),
                        inputs: Vec::new(),
                        outputs: if exported {
                            vec![a.target.clone()]
                        } else {
                            Vec::new()
                        },
                    }
                })
                .collect();
            let copies: Vec<usize> = (start..nodes.len()).collect();
            nodes.extend(cone_nodes);
            copies_of.push(copies);
            continue;
        }
        copies_of.push((start..nodes.len()).collect());
    }

    let mut colocate: Vec<Vec<usize>> = copies_of.iter().filter(|c| c.len() > 1).cloned().collect();
    for group in &g.colocate {
        let merged: Vec<usize> = group
            .iter()
            .flat_map(|&old| copies_of[old].iter().copied())
            .collect();
        colocate.retain(|c| !c.iter().any(|i| merged.contains(i)));
        colocate.push(merged);
    }
    ComputationGraph::rebuild(g.action.clone(), nodes, g.outputs.clone(), colocate)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{graph, BLUE};
    use super::*;

    #[test]
    fn one_register_extracts_branch_condition() {
        let g = normalize(&graph(BLUE), 1);
        // nmf, lu copy exposing lu@pre, extracted condition, pm update
        assert_eq!(g.nodes.len(), 4);
        let lu = g.nodes.iter().find(|n| n.state_vars == ["lu"]).unwrap();
        assert_eq!(lu.outputs, vec!["lu@pre"]);
        let cond = g
            .nodes
            .iter()
            .find(|n| !n.is_stateful() && n.outputs == ["__br0#1"])
            .unwrap();
        assert_eq!(cond.inputs, vec!["pkt.nmf#1", "lu@pre"]);
        assert!(g
            .nodes
            .iter()
            .all(|n| !n.is_stateful() || n.outputs.len() <= 1));
    }

    #[test]
    fn two_registers_keep_node_whole() {
        let g0 = graph(BLUE);
        assert_eq!(normalize(&g0, 2), g0);
    }

    #[test]
    fn copies_share_a_stage() {
        let g = normalize(
            &graph("lu = lu + 1; pkt.nmf = lu; pkt.now = lu + pkt.now;"),
            2,
        );
        assert_eq!(g.nodes.len(), 3);
        assert!(g.colocate.is_empty());
        let g = normalize(
            &graph("if (lu == 3) { lu = 0; } pkt.nmf = lu; pkt.sample = lu == 2;"),
            1,
        );
        assert!(g
            .nodes
            .iter()
            .all(|n| !n.is_stateful() || n.outputs.len() <= 1));
    }

    #[test]
    fn flank_and_plain_outputs_split_into_copies() {
        let g = normalize(
            &graph("pkt.nmf = lu; lu = pkt.nmf + pkt.now; pkt.now = lu; "),
            2,
        );
        let copies: Vec<&CgNode> = g.nodes.iter().filter(|n| n.is_stateful()).collect();
        assert!(copies.iter().all(|n| n.outputs.len() <= 1));
        if copies.len() > 1 {
            assert_eq!(g.colocate.len(), 1);
        }
    }
}
