//! Branch and bound over stage assignments.
//!
//! ALUs that must share a stage are merged into groups. Groups are assigned
//! in a topological order that prefers long remaining chains, each trying
//! the lowest stage first. Optimal mode raises a stage limit from a lower
//! bound until a placement fits, so the first placement found is minimal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use super::constraints::ConstraintSet;
use super::AllocError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Optimal,
    Feasible,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "optimal" => Ok(Mode::Optimal),
            "feasible" => Ok(Mode::Feasible),
            _ => Err(format!("unknown mode `{s}` (expected optimal or feasible)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Optimal => "optimal",
            Mode::Feasible => "feasible",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AllocationSolution {
    /// Stage of every ALU, counted from 1.
    pub stage: Vec<usize>,
    /// Stages holding each table partition's match entries.
    pub matches: Vec<BTreeSet<usize>>,
    /// `(alu, stage)`: a propagation ALU forwards `alu`'s output in `stage`.
    pub props: Vec<(usize, usize)>,
    /// Last used stage; 0 for an empty program.
    pub cost: usize,
    pub mode: Mode,
}

impl AllocationSolution {
    pub fn alus_in(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.stage
            .iter()
            .enumerate()
            .filter(move |(_, &x)| x == s)
            .map(|(i, _)| i)
    }

    pub fn props_in(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.props.iter().filter(move |p| p.1 == s).map(|p| p.0)
    }

    pub fn tables_in(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.matches
            .iter()
            .enumerate()
            .filter(move |(_, m)| m.contains(&s))
            .map(|(i, _)| i)
    }
}

const NODE_LIMIT: u64 = 50_000_000;

struct Group {
    members: Vec<usize>,
    parts: Vec<usize>,
    /// `(group, strict)` that must come first.
    preds: Vec<(usize, bool)>,
    succs: Vec<(usize, bool)>,
    /// Longest strict chain below this group.
    tail: usize,
    head: usize,
}

struct Search<'a> {
    cs: &'a ConstraintSet,
    groups: Vec<Group>,
    order: Vec<usize>,
    /// For each ALU, the propagating producers it reads.
    producers_of: Vec<Vec<usize>>,
    limit: usize,
    stage: Vec<usize>,
    alu_used: Vec<usize>,
    prop_used: Vec<usize>,
    part_count: Vec<BTreeMap<usize, usize>>,
    end: Vec<usize>,
    beg: Vec<usize>,
    nodes: u64,
}

fn build_groups(cs: &ConstraintSet) -> Result<Vec<Group>, AllocError> {
    let n = cs.alus.len();
    let mut rep: Vec<usize> = (0..n).collect();
    fn find(rep: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while rep[r] != r {
            r = rep[r];
        }
        rep[x] = r;
        r
    }
    for grp in &cs.same_stage {
        for w in grp.windows(2) {
            let (a, b) = (find(&mut rep, w[0]), find(&mut rep, w[1]));
            rep[a] = b;
        }
    }
    // Merge cycles of non-strict precedences; a strict edge on a cycle has
    // no solution.
    loop {
        let mut g: DiGraph<(), bool> = DiGraph::new();
        let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
        for p in &cs.precedences {
            let (a, b) = (find(&mut rep, p.before), find(&mut rep, p.after));
            if a == b {
                if p.strict {
                    return Err(AllocError::Infeasible(format!(
                        "`{}` must precede `{}`, which shares its stage",
                        cs.alus[p.before].label, cs.alus[p.after].label
                    )));
                }
                continue;
            }
            g.add_edge(nodes[a], nodes[b], p.strict);
        }
        let mut merged = false;
        for scc in tarjan_scc(&g) {
            if scc.len() > 1 {
                let first = scc[0].index();
                for x in &scc[1..] {
                    let (a, b) = (find(&mut rep, x.index()), find(&mut rep, first));
                    rep[a] = b;
                }
                merged = true;
            }
        }
        if !merged {
            break;
        }
    }
    let mut index: BTreeMap<usize, usize> = BTreeMap::new();
    let mut groups: Vec<Group> = Vec::new();
    let mut group_of = vec![0; n];
    for i in 0..n {
        let r = find(&mut rep, i);
        let gi = *index.entry(r).or_insert_with(|| {
            groups.push(Group {
                members: Vec::new(),
                parts: Vec::new(),
                preds: Vec::new(),
                succs: Vec::new(),
                tail: 0,
                head: 0,
            });
            groups.len() - 1
        });
        group_of[i] = gi;
        groups[gi].members.push(i);
        if !groups[gi].parts.contains(&cs.alus[i].part) {
            groups[gi].parts.push(cs.alus[i].part);
        }
    }
    let mut edges: BTreeMap<(usize, usize), bool> = BTreeMap::new();
    for p in &cs.precedences {
        let (a, b) = (group_of[p.before], group_of[p.after]);
        if a != b {
            *edges.entry((a, b)).or_insert(false) |= p.strict;
        }
    }
    for (&(a, b), &s) in &edges {
        groups[a].succs.push((b, s));
        groups[b].preds.push((a, s));
    }
    Ok(groups)
}

/// Kahn's algorithm preferring groups with the longest chain below them.
fn order_groups(groups: &mut [Group]) -> Vec<usize> {
    let n = groups.len();
    let mut indeg: Vec<usize> = groups.iter().map(|g| g.preds.len()).collect();
    let mut topo = Vec::with_capacity(n);
    let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    while let Some(i) = ready.pop() {
        topo.push(i);
        for k in 0..groups[i].succs.len() {
            let s = groups[i].succs[k].0;
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.push(s);
            }
        }
    }
    for &i in topo.iter().rev() {
        groups[i].tail = groups[i]
            .succs
            .iter()
            .map(|&(s, st)| groups[s].tail + st as usize)
            .max()
            .unwrap_or(0);
    }
    for &i in &topo {
        groups[i].head = groups[i]
            .preds
            .iter()
            .map(|&(p, st)| groups[p].head + st as usize)
            .max()
            .unwrap_or(0);
    }
    let mut indeg: Vec<usize> = groups.iter().map(|g| g.preds.len()).collect();
    let mut ready: BTreeSet<(std::cmp::Reverse<usize>, usize)> = (0..n)
        .filter(|&i| indeg[i] == 0)
        .map(|i| (std::cmp::Reverse(groups[i].tail), i))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&first) = ready.iter().next() {
        ready.remove(&first);
        let i = first.1;
        order.push(i);
        for &(s, _) in &groups[i].succs {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.insert((std::cmp::Reverse(groups[s].tail), s));
            }
        }
    }
    order
}

enum Undo {
    Prop(usize, usize, usize),
}

impl Search<'_> {
    fn cap_ok(&self, s: usize) -> bool {
        self.alu_used[s] + self.prop_used[s] <= self.cs.alus_per_stage
    }

    /// Places group `g` at stage `s`, or explains nothing and returns `None`
    /// if a capacity is exceeded. The returned trail undoes the placement.
    fn place(&mut self, g: usize, s: usize) -> Option<Vec<Undo>> {
        let grp = &self.groups[g];
        let new_parts = grp
            .parts
            .iter()
            .filter(|p| !self.part_count[s].contains_key(p))
            .count();
        if self.part_count[s].len() + new_parts > self.cs.tables_per_stage {
            return None;
        }
        if self.alu_used[s] + self.prop_used[s] + grp.members.len() > self.cs.alus_per_stage {
            return None;
        }
        let members = grp.members.clone();
        let parts = grp.parts.clone();
        let mut trail = Vec::new();
        let mut ok = true;
        for &v in &members {
            for k in 0..self.producers_of[v].len() {
                let u = self.producers_of[v][k];
                let (beg, old) = (self.beg[u], self.end[u]);
                if s > old {
                    for x in old.max(beg + 1)..s {
                        self.prop_used[x] += 1;
                        if !self.cap_ok(x) {
                            ok = false;
                        }
                    }
                    trail.push(Undo::Prop(u, old, s));
                    self.end[u] = s;
                }
            }
        }
        for &v in &members {
            self.stage[v] = s;
            self.beg[v] = s;
            self.end[v] = s;
        }
        self.alu_used[s] += members.len();
        for p in parts {
            *self.part_count[s].entry(p).or_insert(0) += 1;
        }
        if !ok || !self.cap_ok(s) {
            self.unplace(g, s, trail);
            return None;
        }
        Some(trail)
    }

    fn unplace(&mut self, g: usize, s: usize, trail: Vec<Undo>) {
        for u in trail.into_iter().rev() {
            let Undo::Prop(u, old, new) = u;
            for x in old.max(self.beg[u] + 1)..new {
                self.prop_used[x] -= 1;
            }
            self.end[u] = old;
        }
        let grp = &self.groups[g];
        for &v in &grp.members {
            self.stage[v] = 0;
        }
        self.alu_used[s] -= grp.members.len();
        for p in &grp.parts {
            let c = self.part_count[s].get_mut(p).unwrap();
            *c -= 1;
            if *c == 0 {
                self.part_count[s].remove(p);
            }
        }
    }

    fn earliest(&self, g: usize, est: &[usize]) -> usize {
        self.groups[g]
            .preds
            .iter()
            .map(|&(p, st)| {
                let base = if self.stage[self.groups[p].members[0]] > 0 {
                    self.stage[self.groups[p].members[0]]
                } else {
                    est[p]
                };
                base + st as usize
            })
            .max()
            .unwrap_or(1)
            .max(1)
    }

    /// Cheap necessary conditions on the groups not yet placed.
    fn prune(&self, depth: usize) -> bool {
        let mut est = vec![0usize; self.groups.len()];
        let l = self.limit;
        let mut late = vec![0usize; l + 2];
        let mut early = vec![0usize; l + 2];
        for &g in &self.order[depth..] {
            est[g] = self.earliest(g, &est);
            let lst = l - self.groups[g].tail.min(l);
            if est[g] > lst {
                return true;
            }
            late[lst] += self.groups[g].members.len();
            early[est[g]] += self.groups[g].members.len();
        }
        let free = |s: usize| {
            self.cs
                .alus_per_stage
                .saturating_sub(self.alu_used[s] + self.prop_used[s])
        };
        let mut demand = 0;
        let mut supply = 0;
        for k in 1..=l {
            demand += late[k];
            supply += free(k);
            if demand > supply {
                return true;
            }
        }
        let (mut demand, mut supply) = (0, 0);
        for k in (1..=l).rev() {
            demand += early[k];
            supply += free(k);
            if demand > supply {
                return true;
            }
        }
        false
    }

    fn run(&mut self, depth: usize) -> Result<bool, AllocError> {
        if depth == self.order.len() {
            return Ok(true);
        }
        self.nodes += 1;
        if self.nodes > NODE_LIMIT {
            return Err(AllocError::SearchLimit(NODE_LIMIT));
        }
        if self.prune(depth) {
            return Ok(false);
        }
        let g = self.order[depth];
        let lo = self.earliest(g, &[]);
        let hi = self.limit - self.groups[g].tail.min(self.limit);
        for s in lo..=hi {
            if let Some(trail) = self.place(g, s) {
                if self.run(depth + 1)? {
                    return Ok(true);
                }
                self.unplace(g, s, trail);
            }
        }
        Ok(false)
    }
}

/// Lower bound on the number of stages: longest chain and total ALUs.
fn lower_bound(cs: &ConstraintSet, groups: &[Group]) -> usize {
    if cs.alus.is_empty() {
        return 0;
    }
    let chain = groups
        .iter()
        .map(|g| g.head + g.tail + 1)
        .max()
        .unwrap_or(1);
    let alus = cs.alus.len().div_ceil(cs.alus_per_stage.max(1));
    let tables = cs
        .parts
        .iter()
        .enumerate()
        .filter(|(i, _)| cs.alus_of_part(*i).next().is_some())
        .count();
    chain
        .max(alus)
        .max(tables.div_ceil(cs.tables_per_stage.max(1)))
}

/// Places every ALU. Optimal mode minimizes the last used stage.
pub fn solve(cs: &ConstraintSet, mode: Mode) -> Result<AllocationSolution, AllocError> {
    let n = cs.alus.len();
    if n == 0 {
        return Ok(AllocationSolution {
            stage: vec![],
            matches: vec![BTreeSet::new(); cs.parts.len()],
            props: vec![],
            cost: 0,
            mode,
        });
    }
    let mut groups = build_groups(cs)?;
    let order = order_groups(&mut groups);
    let mut producers_of = vec![Vec::new(); n];
    for (u, readers) in &cs.propagate {
        for &v in readers {
            producers_of[v].push(*u);
        }
    }
    let lb = lower_bound(cs, &groups);
    if lb > cs.n_stages {
        return Err(AllocError::Infeasible(format!(
            "at least {lb} stages are needed but the target has {}",
            cs.n_stages
        )));
    }
    let limits: Vec<usize> = match mode {
        Mode::Optimal => (lb..=cs.n_stages).collect(),
        Mode::Feasible => vec![cs.n_stages],
    };
    for limit in limits {
        let mut s = Search {
            cs,
            groups: std::mem::take(&mut groups),
            order: order.clone(),
            producers_of: producers_of.clone(),
            limit,
            stage: vec![0; n],
            alu_used: vec![0; limit + 2],
            prop_used: vec![0; limit + 2],
            part_count: vec![BTreeMap::new(); limit + 2],
            end: vec![0; n],
            beg: vec![0; n],
            nodes: 0,
        };
        let found = s.run(0)?;
        groups = std::mem::take(&mut s.groups);
        if found {
            return Ok(finish(cs, s.stage, mode));
        }
    }
    Err(AllocError::Infeasible(format!(
        "no placement fits in {} stages",
        cs.n_stages
    )))
}

/// Derives match placements and propagation ALUs from a stage vector.
pub fn finish(cs: &ConstraintSet, stage: Vec<usize>, mode: Mode) -> AllocationSolution {
    let mut matches = vec![BTreeSet::new(); cs.parts.len()];
    for (i, a) in cs.alus.iter().enumerate() {
        matches[a.part].insert(stage[i]);
    }
    let mut props = Vec::new();
    for e in &cs.propagate {
        let beg = stage[e.0];
        for s in beg + 1..cs.end_of(e, &stage) {
            props.push((e.0, s));
        }
    }
    props.sort_unstable_by_key(|p| (p.1, p.0));
    let cost = stage.iter().copied().max().unwrap_or(0);
    AllocationSolution {
        stage,
        matches,
        props,
        cost,
        mode,
    }
}

/// Re-checks every constraint family on a solution; returns the first
/// violation found.
pub fn validate(cs: &ConstraintSet, sol: &AllocationSolution) -> Result<(), String> {
    let st = &sol.stage;
    if st.len() != cs.alus.len() || sol.matches.len() != cs.parts.len() {
        return Err("solution has the wrong shape".into());
    }
    for (u, &s) in st.iter().enumerate() {
        if s < 1 || s > cs.n_stages {
            return Err(format!("ALU {u} in stage {s}, outside 1..={}", cs.n_stages));
        }
        if !sol.matches[cs.alus[u].part].contains(&s) {
            return Err(format!("ALU {u} in stage {s} without its match table"));
        }
    }
    for p in &cs.precedences {
        let ok = if p.strict {
            st[p.before] < st[p.after]
        } else {
            st[p.before] <= st[p.after]
        };
        if !ok {
            return Err(format!(
                "precedence {} -> {} ({:?}) violated",
                p.before, p.after, p.reason
            ));
        }
    }
    for g in &cs.same_stage {
        if g.iter().any(|&u| st[u] != st[g[0]]) {
            return Err(format!("ALUs {g:?} are not in one stage"));
        }
    }
    let props: BTreeSet<(usize, usize)> = sol.props.iter().copied().collect();
    if props.len() != sol.props.len() {
        return Err("duplicate propagation ALU".into());
    }
    let mut expected = 0;
    for (u, readers) in &cs.propagate {
        let beg = st[*u];
        let end = readers.iter().map(|&v| st[v]).max().unwrap_or(beg);
        if beg >= end || end > cs.n_stages {
            return Err(format!("ALU {u}: need beg < end <= N_S, got {beg}, {end}"));
        }
        for s in 1..=cs.n_stages {
            let want = beg < s && s < end;
            if want != props.contains(&(*u, s)) {
                return Err(format!(
                    "propagation of ALU {u} in stage {s} should be {want}"
                ));
            }
            expected += want as usize;
        }
    }
    if expected != props.len() {
        return Err("propagation ALU for a value that does not cross stages".into());
    }
    for s in 1..=cs.n_stages {
        let tables = sol.matches.iter().filter(|m| m.contains(&s)).count();
        if tables > cs.tables_per_stage {
            return Err(format!(
                "stage {s} holds {tables} tables, limit {}",
                cs.tables_per_stage
            ));
        }
        let alus =
            st.iter().filter(|&&x| x == s).count() + sol.props.iter().filter(|p| p.1 == s).count();
        if alus > cs.alus_per_stage {
            return Err(format!(
                "stage {s} uses {alus} ALUs, limit {}",
                cs.alus_per_stage
            ));
        }
    }
    if sol.cost != st.iter().copied().max().unwrap_or(0) {
        return Err("cost is not the last used stage".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::problem::{
        ActionGraph, AllocationProblem, DepKind, TableDep, TableSpec,
    };
    use crate::allocation::{build_constraints, TargetSpec};

    fn table(name: &str, alus: usize) -> TableSpec {
        TableSpec {
            name: name.into(),
            entries: 1,
            match_fields: vec![],
            actions: vec![ActionGraph::chain("a", alus)],
        }
    }

    fn dep(from: usize, to: usize) -> TableDep {
        TableDep {
            from,
            to,
            kind: DepKind::Action,
            fields: vec![],
        }
    }

    #[test]
    fn single_alu() {
        let ap = AllocationProblem {
            tables: vec![table("t", 1)],
            deps: vec![],
        };
        let cs = build_constraints(&ap, &TargetSpec::new(4, 4, 1, 1, 16)).unwrap();
        let sol = solve(&cs, Mode::Optimal).unwrap();
        assert_eq!(sol.stage, vec![1]);
        validate(&cs, &sol).unwrap();
    }

    #[test]
    fn empty_program_uses_no_stage() {
        let cs = build_constraints(
            &AllocationProblem::default(),
            &TargetSpec::new(4, 4, 1, 1, 16),
        )
        .unwrap();
        assert_eq!(solve(&cs, Mode::Optimal).unwrap().cost, 0);
    }

    #[test]
    fn long_chain_is_infeasible() {
        let ap = AllocationProblem {
            tables: (0..5).map(|i| table(&format!("t{i}"), 1)).collect(),
            deps: (1..5).map(|i| dep(i - 1, i)).collect(),
        };
        let t = TargetSpec::new(4, 4, 1, 4, 16);
        let cs = build_constraints(&ap, &t).unwrap();
        assert!(matches!(
            solve(&cs, Mode::Optimal),
            Err(AllocError::Infeasible(_))
        ));
    }

    #[test]
    fn gap_forces_propagation() {
        // a two-ALU chain split across stages 1 and 3
        let mut a = ActionGraph::chain("a", 2);
        a.alus.push("x".into());
        let ap = AllocationProblem {
            tables: vec![TableSpec {
                name: "t0".into(),
                entries: 1,
                match_fields: vec![],
                actions: vec![a],
            }],
            deps: vec![],
        };
        let t = TargetSpec::new(3, 3, 1, 1, 16);
        let cs = build_constraints(&ap, &t).unwrap();
        let sol = finish(&cs, vec![1, 3, 1], Mode::Feasible);
        assert_eq!(sol.props, vec![(0, 2)]);
        validate(&cs, &sol).unwrap();
        let mut bad = sol.clone();
        bad.props.clear();
        assert!(validate(&cs, &bad).is_err());
    }

    #[test]
    fn table_capacity_spreads_tables() {
        let ap = AllocationProblem {
            tables: (0..3).map(|i| table(&format!("t{i}"), 1)).collect(),
            deps: vec![],
        };
        let cs = build_constraints(&ap, &TargetSpec::new(4, 8, 1, 2, 16)).unwrap();
        let sol = solve(&cs, Mode::Optimal).unwrap();
        assert_eq!(sol.cost, 2);
        validate(&cs, &sol).unwrap();
    }

    #[test]
    fn reverse_match_allows_same_stage() {
        let ap = AllocationProblem {
            tables: vec![table("a", 1), table("b", 1)],
            deps: vec![TableDep {
                from: 0,
                to: 1,
                kind: DepKind::ReverseMatch,
                fields: vec![],
            }],
        };
        let cs = build_constraints(&ap, &TargetSpec::new(4, 8, 1, 2, 16)).unwrap();
        assert_eq!(solve(&cs, Mode::Optimal).unwrap().cost, 1);
    }

    #[test]
    fn feasible_mode_returns_valid_placement() {
        let ap = AllocationProblem {
            tables: (0..4).map(|i| table(&format!("t{i}"), 2)).collect(),
            deps: vec![dep(0, 1), dep(2, 3)],
        };
        let cs = build_constraints(&ap, &TargetSpec::new(8, 4, 1, 2, 16)).unwrap();
        let sol = solve(&cs, Mode::Feasible).unwrap();
        validate(&cs, &sol).unwrap();
        assert_eq!(sol.mode, Mode::Feasible);
    }

    #[test]
    fn mode_parses() {
        assert_eq!("feasible".parse::<Mode>(), Ok(Mode::Feasible));
        assert!("best".parse::<Mode>().is_err());
    }
}
