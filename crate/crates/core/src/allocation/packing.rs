//! Instance generators: layered table chains that fit by construction, the
//! adversarial packing chain, and random problems for testing the allocator.

use std::fmt::Write;

use rand::Rng;

use super::problem::{ActionGraph, AllocationProblem, DepKind, TableDep, TableSpec};
use super::target::TargetSpec;

fn one_alu_table(name: String) -> TableSpec {
    TableSpec {
        name,
        entries: 1,
        match_fields: vec![],
        actions: vec![ActionGraph::chain("a", 1)],
    }
}

/// A `2n`-stage target with `w` tables per stage and enough ALUs that only
/// table slots matter.
pub fn packing_target(n: usize, w: usize) -> TargetSpec {
    let mut t = TargetSpec::new(2 * n, 2 * w + 2, 1, w, 1024);
    t.name = format!("packing-{n}x{w}");
    t
}

/// `w` chains of `n` tables followed by one chain of `n + 1`. The optimum
/// is `n + 1` stages; filling the first `n` stages with the short chains
/// leaves too few stages for the long one.
pub fn gen_packing_instance(n: usize, w: usize) -> (AllocationProblem, TargetSpec) {
    assert!(w > 2 * n, "the construction needs w > 2n");
    let mut tables = Vec::new();
    let mut deps = Vec::new();
    for i in 0..=w {
        let len = if i < w { n } else { n + 1 };
        for j in 0..len {
            if j > 0 {
                deps.push(TableDep {
                    from: tables.len() - 1,
                    to: tables.len(),
                    kind: DepKind::Action,
                    fields: vec![],
                });
            }
            tables.push(one_alu_table(format!("t_{i}_{j}")));
        }
    }
    (AllocationProblem { tables, deps }, packing_target(n, w))
}

/// Source text of the same construction; each table increments the field
/// its chain predecessor wrote.
pub fn packing_source(n: usize, w: usize) -> String {
    let mut s = String::from("header pkt {\n");
    for i in 0..=w {
        let len = if i < w { n } else { n + 1 };
        for j in 0..=len {
            let _ = writeln!(s, "    bit<8> g{i}_{j};");
        }
    }
    s.push_str("}\n\n");
    let mut control = String::new();
    for i in 0..=w {
        let len = if i < w { n } else { n + 1 };
        for j in 0..len {
            let _ = writeln!(
                s,
                "action a_{i}_{j}() {{ pkt.g{i}_{} = pkt.g{i}_{j} + 1; }}",
                j + 1
            );
            let _ = writeln!(s, "table t_{i}_{j} {{ actions = {{ a_{i}_{j}; }} }}");
            let _ = writeln!(control, "    t_{i}_{j}.apply();");
        }
    }
    let _ = write!(s, "\ncontrol ingress {{\n{control}}}\n");
    s
}

/// Tables spread over `m <= n` layers with at most `w` per layer and
/// dependencies only from lower to higher layers, so `m` stages suffice.
/// Returns the problem, a `2n`-stage target and each table's layer
/// (counted from 1), which is an `m`-stage placement.
pub fn gen_layered_instance(
    rng: &mut impl Rng,
    n: usize,
    w: usize,
) -> (AllocationProblem, TargetSpec, Vec<usize>) {
    assert!(w > 2 * n);
    let m = rng.gen_range(1..=n);
    let mut layer_of = Vec::new();
    for l in 0..m {
        let k = rng.gen_range(1..=w);
        layer_of.extend(std::iter::repeat_n(l, k));
    }
    // declaration order need not follow layers
    for i in (1..layer_of.len()).rev() {
        let j = rng.gen_range(0..=i);
        layer_of.swap(i, j);
    }
    let tables: Vec<TableSpec> = (0..layer_of.len())
        .map(|i| one_alu_table(format!("t{i}")))
        .collect();
    let mut deps = Vec::new();
    for a in 0..tables.len() {
        for b in 0..tables.len() {
            if layer_of[a] < layer_of[b] && rng.gen_bool(0.3) {
                let kind = if rng.gen_bool(0.8) {
                    DepKind::Action
                } else {
                    DepKind::ReverseMatch
                };
                deps.push(TableDep {
                    from: a,
                    to: b,
                    kind,
                    fields: vec![],
                });
            }
        }
    }
    let layers = layer_of.iter().map(|l| l + 1).collect();
    (
        AllocationProblem { tables, deps },
        packing_target(n, w),
        layers,
    )
}

/// Small random instance for cross-checking against exhaustive search:
/// up to `max_tables` tables, 3 actions each, `max_alus` ALUs in total
/// after partitioning, on a target with at most `max_stages` stages.
pub fn random_problem(
    rng: &mut impl Rng,
    max_tables: usize,
    max_stages: usize,
    max_alus: usize,
) -> (AllocationProblem, TargetSpec) {
    loop {
        let n_entries = 16;
        let nt = rng.gen_range(1..=max_tables);
        let mut tables = Vec::new();
        let mut total = 0;
        for t in 0..nt {
            let entries = if rng.gen_bool(0.15) {
                rng.gen_range(17..=32)
            } else {
                rng.gen_range(1..=16)
            };
            let mut actions = Vec::new();
            for a in 0..rng.gen_range(1..=3) {
                let k = rng.gen_range(0..=2);
                let mut g = ActionGraph::chain(&format!("a{a}"), k);
                if k == 2 && rng.gen_bool(0.3) {
                    g.edges.clear();
                    if rng.gen_bool(0.5) {
                        g.colocate.push(vec![0, 1]);
                    }
                }
                if k == 2 && rng.gen_bool(0.2) {
                    // a reader of an old value and the ALU replacing it
                    g.anti.push((1, 0));
                    g.edges.clear();
                }
                actions.push(g);
            }
            let spec = TableSpec {
                name: format!("t{t}"),
                entries,
                match_fields: vec![],
                actions,
            };
            total += spec.alu_count() * super::partition_count(entries, n_entries);
            tables.push(spec);
        }
        if total > max_alus {
            continue;
        }
        let kinds = [
            DepKind::Match,
            DepKind::Action,
            DepKind::Successor,
            DepKind::ReverseMatch,
        ];
        let mut deps = Vec::new();
        for b in 0..nt {
            for a in 0..b {
                if rng.gen_bool(0.3) {
                    deps.push(TableDep {
                        from: a,
                        to: b,
                        kind: kinds[rng.gen_range(0..4)],
                        fields: vec![],
                    });
                }
            }
        }
        let stages = rng.gen_range(2..=max_stages);
        let n_alu = rng.gen_range(2..=5);
        let mut t = TargetSpec::new(stages, n_alu, 1, rng.gen_range(1..=3), n_entries as u64);
        t.propagation_alus = rng.gen_bool(0.8);
        return (AllocationProblem { tables, deps }, t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse;

    #[test]
    fn packing_shape() {
        let (ap, t) = gen_packing_instance(2, 5);
        assert_eq!(ap.tables.len(), 5 * 2 + 3);
        assert_eq!(t.n_stages, 4);
        assert_eq!(t.n_tables_per_stage, 5);
    }

    #[test]
    fn packing_source_parses() {
        let p = parse(&packing_source(2, 5)).unwrap();
        assert_eq!(p.applied_tables().len(), 13);
    }
}
