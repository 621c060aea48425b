use crate::ir::eval::{eval, mask};
use crate::ir::{Program, Stmt, StmtKind};

use super::{select_action, MatchOutcomes, PacketState, SimError};

/// Runs the control block with transactional action semantics.
///
/// Values are computed on `bits`-wide words and stored masked to
/// `min(declared width, bits)`.
pub fn interpret_source(
    p: &Program,
    pkt: &PacketState,
    outcomes: &MatchOutcomes,
    bits: u32,
) -> Result<PacketState, SimError> {
    let mut st = pkt.normalized(p, bits);
    let mut interp = Interp { p, bits, outcomes };
    interp.run(&p.control, &mut st)?;
    Ok(st)
}

struct Interp<'a> {
    p: &'a Program,
    bits: u32,
    outcomes: &'a MatchOutcomes,
}

impl Interp<'_> {
    fn width(&self, name: &str) -> u32 {
        self.p.width_of(name).unwrap_or(32).min(self.bits)
    }

    fn eval(&self, e: &crate::ir::Expr, st: &PacketState) -> Result<u64, SimError> {
        eval(e, self.bits, &mut |v| {
            st.fields.get(v).or_else(|| st.state.get(v)).copied()
        })
        .map_err(SimError::Unbound)
    }

    fn run(&mut self, stmts: &[Stmt], st: &mut PacketState) -> Result<(), SimError> {
        for s in stmts {
            match &s.kind {
                StmtKind::Assign { target, value } => {
                    let v = self.eval(value, st)? & mask(self.width(target));
                    if self.p.is_state(target) {
                        st.state.insert(target.clone(), v);
                    } else {
                        st.fields.insert(target.clone(), v);
                    }
                }
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    if self.eval(cond, st)? != 0 {
                        self.run(then_body, st)?;
                    } else {
                        self.run(else_body, st)?;
                    }
                }
                StmtKind::Apply { table } => {
                    let t = self
                        .p
                        .table(table)
                        .ok_or_else(|| SimError::ConfigError(format!("unknown table `{table}`")))?;
                    let widths = |n: &str| self.p.width_of(n).unwrap_or(32);
                    let chosen = select_action(t, &st.fields, self.outcomes, &widths, self.bits)?;
                    if let Some(a) = chosen {
                        let action = self.p.action(a).ok_or_else(|| {
                            SimError::ConfigError(format!("unknown action `{a}`"))
                        })?;
                        let body = action.body.clone();
                        self.run(&body, st)?;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse;

    fn run(
        src: &str,
        fields: &[(&str, u64)],
        state: &[(&str, u64)],
        outcomes: &[(&str, usize)],
    ) -> PacketState {
        let p = parse(src).unwrap();
        let pkt = PacketState {
            fields: fields.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            state: state.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        };
        let o = outcomes.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        interpret_source(&p, &pkt, &o, 32).unwrap()
    }

    #[test]
    fn increments_field() {
        let src = "header pkt { bit<8> a; } control c { pkt.a = pkt.a + 1; }";
        assert_eq!(run(src, &[("pkt.a", 3)], &[], &[]).fields["pkt.a"], 4);
    }

    #[test]
    fn empty_control_is_identity() {
        let src = "header pkt { bit<8> a; } register bit<8> s = 5; control c { }";
        let out = run(src, &[("pkt.a", 9)], &[], &[]);
        assert_eq!(out.fields["pkt.a"], 9);
        assert_eq!(out.state["s"], 5);
    }

    #[test]
    fn table_runs_chosen_action_and_masks() {
        let src = "header pkt { bit<4> a; } register bit<4> s = 0; \
                   action inc() { s = s + 15; pkt.a = s; } action nop() { } \
                   table t { key = { pkt.a; } actions = { inc; nop; } size = 8; } \
                   control c { t.apply(); }";
        let out = run(src, &[("pkt.a", 1)], &[("s", 3)], &[("t", 0)]);
        assert_eq!(out.state["s"], 2);
        assert_eq!(out.fields["pkt.a"], 2);
        let out = run(src, &[("pkt.a", 1)], &[("s", 3)], &[("t", 1)]);
        assert_eq!(out.state["s"], 3);
    }

    #[test]
    fn missing_outcome_is_an_error() {
        let p = parse(
            "header pkt { bit<4> a; } action x() { } \
             table t { key = { pkt.a; } actions = { x; } } control c { t.apply(); }",
        )
        .unwrap();
        let r = interpret_source(&p, &PacketState::default(), &MatchOutcomes::new(), 8);
        assert_eq!(r, Err(SimError::UnmatchedTable("t".into())));
    }

    #[test]
    fn const_entries_match_on_packet() {
        let src = "header pkt { bit<8> f; bit<8> a; } action a1() { pkt.a = 1; } action a2() { pkt.a = 2; } \
                   table t { key = { pkt.f; } actions = { a1; a2; } const entries = { 5 : a1; } default_action = a2; } \
                   control c { t.apply(); }";
        assert_eq!(run(src, &[("pkt.f", 5)], &[], &[]).fields["pkt.a"], 1);
        assert_eq!(run(src, &[("pkt.f", 6)], &[], &[]).fields["pkt.a"], 2);
    }
}
