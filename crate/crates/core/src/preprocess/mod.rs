//! Lowers each action body to straight-line SSA code over packet fields,
//! state flanks (`s@pre`, `s@post`) and compiler temporaries (`__*`).

mod branches;
mod flanks;
mod simplify;
mod ssa;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::ir::eval::{eval, mask};
use crate::ir::{expr_to_string, is_metadata, Action, Expr, Program, StmtKind};

pub use branches::remove_branches;
pub use flanks::{base_name, insert_flanks, post, pre};
pub use simplify::simplify;
pub use ssa::to_ssa;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Assign {
    pub target: String,
    pub value: Expr,
}

impl fmt::Display for Assign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {};", self.target, expr_to_string(&self.value))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PreprocessOptions {
    pub simplify: bool,
    pub bits: u32,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            simplify: true,
            bits: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreprocessedAction {
    pub action: String,
    pub code: Vec<Assign>,
    /// Names read before any definition: packet fields and `s@pre` flanks.
    pub inputs: Vec<String>,
    /// Packet outputs: field to the SSA name holding its final value.
    pub outputs: BTreeMap<String, String>,
    pub state_vars: Vec<String>,
    widths: BTreeMap<String, u32>,
}

impl PreprocessedAction {
    /// Declared width behind an SSA or flank name; `None` for temporaries.
    pub fn width_of(&self, name: &str) -> Option<u32> {
        self.widths.get(base_name(name)).copied()
    }

    pub fn store_width(&self, name: &str, bits: u32) -> u32 {
        self.width_of(name).map_or(bits, |w| w.min(bits))
    }

    pub fn is_output(&self, name: &str) -> bool {
        name.contains('@') || self.outputs.values().any(|v| v == name)
    }

    /// Runs the code on the given fields and state; returns the updated
    /// packet outputs and state.
    pub fn run(
        &self,
        fields: &BTreeMap<String, u64>,
        state: &BTreeMap<String, u64>,
        bits: u32,
    ) -> Result<(BTreeMap<String, u64>, BTreeMap<String, u64>), String> {
        let mut env: BTreeMap<String, u64> = BTreeMap::new();
        for i in &self.inputs {
            let v = match i.strip_suffix("@pre") {
                Some(s) => state.get(s).copied(),
                None => fields.get(i).copied(),
            }
            .ok_or_else(|| i.clone())?;
            env.insert(i.clone(), v & mask(self.store_width(i, bits)));
        }
        for a in &self.code {
            let v = eval(&a.value, bits, &mut |n| env.get(n).copied())?;
            env.insert(
                a.target.clone(),
                v & mask(self.store_width(&a.target, bits)),
            );
        }
        let out_fields = self
            .outputs
            .iter()
            .map(|(f, v)| (f.clone(), env[v]))
            .collect();
        let out_state = self
            .state_vars
            .iter()
            .map(|s| (s.clone(), env[&post(s)]))
            .collect();
        Ok((out_fields, out_state))
    }
}

impl fmt::Display for PreprocessedAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "action {} {{", self.action)?;
        for a in &self.code {
            writeln!(f, "    {a}")?;
        }
        write!(f, "}}")
    }
}

/// Metadata fields read somewhere other than `action`: in a key, a control
/// condition, or another action.
fn live_out_metadata(p: &Program, action: &str) -> BTreeSet<String> {
    let mut reads: BTreeSet<String> = BTreeSet::new();
    for t in &p.tables {
        reads.extend(t.keys.iter().cloned());
    }
    fn cond_reads(stmts: &[crate::ir::Stmt], out: &mut BTreeSet<String>) {
        for s in stmts {
            if let StmtKind::If {
                cond,
                then_body,
                else_body,
            } = &s.kind
            {
                out.extend(cond.vars().into_iter().map(str::to_string));
                cond_reads(then_body, out);
                cond_reads(else_body, out);
            }
        }
    }
    cond_reads(&p.control, &mut reads);
    let control_rw = crate::ir::ReadWrite::of_stmts(&p.control);
    reads.extend(control_rw.reads);
    for a in p.actions.iter().filter(|a| a.name != action) {
        reads.extend(crate::ir::ReadWrite::of_stmts(&a.body).reads);
    }
    reads.into_iter().filter(|r| is_metadata(r)).collect()
}

pub fn preprocess_action(
    p: &Program,
    action: &Action,
    opts: PreprocessOptions,
) -> PreprocessedAction {
    let rw = crate::ir::ReadWrite::of_stmts(&action.body);
    let state_vars: Vec<String> = p
        .state_vars
        .iter()
        .filter(|s| rw.reads.contains(&s.name) || rw.writes.contains(&s.name))
        .map(|s| s.name.clone())
        .collect();
    let live_meta = live_out_metadata(p, &action.name);

    let flat = remove_branches(&action.body);
    let flanked = insert_flanks(&flat, &state_vars);
    let (mut code, finals) = to_ssa(&flanked);

    let outputs: BTreeMap<String, String> = finals
        .iter()
        .filter(|(f, _)| p.field(f).is_some() && (!is_metadata(f) || live_meta.contains(*f)))
        .map(|(f, v)| (f.clone(), v.clone()))
        .collect();

    let widths: BTreeMap<String, u32> = p
        .headers
        .iter()
        .map(|f| (f.name.clone(), f.width))
        .chain(p.state_vars.iter().map(|s| (s.name.clone(), s.width)))
        .collect();

    if opts.simplify {
        let keep: BTreeSet<String> = outputs.values().cloned().collect();
        let width_of = |n: &str| widths.get(base_name(n)).copied();
        code = simplify(&code, &keep, &width_of, opts.bits);
    }

    let mut defined: BTreeSet<&str> = BTreeSet::new();
    let mut inputs: Vec<String> = Vec::new();
    for a in &code {
        for v in a.value.vars() {
            if !defined.contains(v) && !inputs.iter().any(|i| i == v) {
                inputs.push(v.to_string());
            }
        }
        defined.insert(&a.target);
    }

    PreprocessedAction {
        action: action.name.clone(),
        code,
        inputs,
        outputs,
        state_vars,
        widths,
    }
}

/// Preprocesses every action of every applied table, in table order.
pub fn preprocess_program(p: &Program, opts: PreprocessOptions) -> Vec<PreprocessedAction> {
    let mut out = Vec::new();
    for t in p.applied_tables() {
        let Some(table) = p.table(&t) else { continue };
        for a in p.table_actions(table) {
            if !out.iter().any(|x: &PreprocessedAction| x.action == a.name) {
                out.push(preprocess_action(p, a, opts));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse;
    use crate::sim::{interpret_source, MatchOutcomes, PacketState};

    fn program(body: &str) -> Program {
        parse(&format!(
            "header pkt {{ bit<4> a; bit<4> b; bit<1> f; }} metadata meta {{ bit<4> m; }} \
             register bit<4> s = 0; register bit<4> r = 0; \
             action x() {{ {body} }} table t {{ actions = {{ x; }} }} control c {{ t.apply(); }}"
        ))
        .unwrap()
    }

    /// Exhaustive comparison against the source interpreter at 4 bits.
    fn check_equivalent(body: &str, simplify: bool) {
        let p = program(body);
        let pp = preprocess_action(&p, &p.actions[0], PreprocessOptions { simplify, bits: 4 });
        for v in 0..(1u64 << 14) {
            let mut pkt = PacketState::initial(&p);
            pkt.fields.insert("pkt.a".into(), v & 15);
            pkt.fields.insert("pkt.b".into(), (v >> 4) & 15);
            pkt.fields.insert("pkt.f".into(), (v >> 8) & 1);
            pkt.state.insert("s".into(), (v >> 9) & 15);
            pkt.state.insert("r".into(), (v >> 13) & 1);
            let want = interpret_source(&p, &pkt, &MatchOutcomes::new(), 4).unwrap();
            let (fields, state) = pp.run(&pkt.fields, &pkt.state, 4).unwrap();
            for (f, val) in fields {
                assert_eq!(want.fields[&f], val, "{body}: field {f} at {v}\n{pp}");
            }
            for (s, val) in state {
                assert_eq!(want.state[&s], val, "{body}: state {s} at {v}\n{pp}");
            }
        }
    }

    const BODIES: &[&str] = &[
        "if (pkt.a > s) { s = s - 1; r = pkt.a; }",
        "if (s == 9) { s = 0; pkt.f = 1; } else { s = s + 1; pkt.f = 0; }",
        "if (r == 0) { if (s == 9) { r = 1; } s = s + 1; }",
        "if (pkt.a < s || pkt.b == r) { s = pkt.a; r = pkt.b; }",
        "if (pkt.f == 1) { pkt.a = pkt.b; pkt.b = pkt.a; }",
        "meta.m = pkt.a + 3; s = s + meta.m; pkt.b = s; s = s * 2; pkt.a = s;",
        "pkt.a = pkt.a * 0 + pkt.b; if (pkt.f) { pkt.f = 0; s = r; } else { r = s; }",
    ];

    #[test]
    fn preprocessing_preserves_semantics() {
        for b in BODIES {
            check_equivalent(b, true);
            check_equivalent(b, false);
        }
    }

    #[test]
    fn dead_metadata_is_removed() {
        let p = program("meta.m = pkt.a; pkt.b = meta.m + 1;");
        let pp = preprocess_action(&p, &p.actions[0], PreprocessOptions::default());
        assert!(!pp.outputs.contains_key("meta.m"));
        assert_eq!(pp.code.len(), 1);
    }

    #[test]
    fn blue_shape() {
        let p = program("pkt.b = pkt.a - 10; if (pkt.b > s) { r = r - 1; s = pkt.a; }");
        let pp = preprocess_action(&p, &p.actions[0], PreprocessOptions::default());
        let text: Vec<String> = pp.code.iter().map(|a| a.to_string()).collect();
        assert_eq!(
            text,
            vec![
                "pkt.b#1 = pkt.a - 10;",
                "__br0#1 = pkt.b#1 > s@pre;",
                "r@post = __br0#1 ? r@pre - 1 : r@pre;",
                "s@post = __br0#1 ? pkt.a : s@pre;",
            ]
        );
        assert_eq!(pp.inputs, vec!["pkt.a", "s@pre", "r@pre"]);
    }

    #[test]
    fn preprocessing_is_idempotent_on_ssa() {
        let p = program(BODIES[2]);
        let pp = preprocess_action(&p, &p.actions[0], PreprocessOptions::default());
        assert_eq!(to_ssa(&pp.code).0, pp.code);
        let keep = pp.outputs.values().cloned().collect();
        let w = |n: &str| pp.width_of(n);
        assert_eq!(simplify(&pp.code, &keep, &w, 4), pp.code);
    }
}
