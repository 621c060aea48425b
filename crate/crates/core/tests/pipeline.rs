use pipecat::allocation::builtin_target;
use pipecat::benchmarks::benchmark;
use pipecat::driver::{compile, Compilation, CompileOptions};
use pipecat::sim::{
    interpret_pipeline, interpret_source, observable, MatchOutcomes, PacketState, SimError,
};

fn compile_on(src: &str, target: &str) -> Compilation {
    let t = builtin_target(target).unwrap();
    let g = t.grammars(None).unwrap();
    compile(src, &t, &g, &CompileOptions::default()).unwrap()
}

fn packet(fields: &[(&str, u64)], state: &[(&str, u64)]) -> PacketState {
    PacketState {
        fields: fields.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        state: state.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    }
}

#[test]
fn copy_pipeline_runs_in_one_stage() {
    let c = compile_on(
        "header pkt { bit<8> a; bit<8> b; } action cp() { pkt.b = pkt.a; } \
         table t { actions = { cp; } } control ingress { t.apply(); }",
        "tofino",
    );
    assert_eq!(c.stages(), 1);
    let pkt = packet(&[("pkt.a", 9), ("pkt.b", 3)], &[]);
    let out = interpret_pipeline(&c.pipeline(), &pkt, &MatchOutcomes::new(), 4).unwrap();
    assert_eq!(out.fields["pkt.a"], 9);
    assert_eq!(out.fields["pkt.b"], 9);
}

#[test]
fn empty_program_is_identity() {
    let c = compile_on(
        "header pkt { bit<8> a; } register bit<8> s = 2; control ingress { }",
        "tofino",
    );
    assert_eq!(c.stages(), 0);
    let pkt = packet(&[("pkt.a", 5)], &[("s", 7)]);
    let out = interpret_pipeline(&c.pipeline(), &pkt, &MatchOutcomes::new(), 4).unwrap();
    assert_eq!(out, pkt);
}

#[test]
fn blue_decrease_on_a_crafted_packet() {
    let c = compile_on(benchmark("blue_decrease").unwrap().source, "tofino");
    // 4-bit words: elapsed = 12 - 10 = 2 > 1, so the mark drops and the
    // timestamp moves to now.
    let pkt = packet(&[("pkt.now", 12)], &[("last_update", 1), ("p_mark", 0)]);
    let o = MatchOutcomes::new();
    let src = interpret_source(&c.front.source, &pkt, &o, 4).unwrap();
    let pipe = interpret_pipeline(&c.pipeline(), &pkt, &o, 4).unwrap();
    assert_eq!(src.state["p_mark"], 15);
    assert_eq!(src.state["last_update"], 12);
    assert_eq!(
        observable(&c.front.source, &src),
        observable(&c.front.source, &pipe)
    );
    // not idle long enough: nothing changes
    let pkt = packet(&[("pkt.now", 11)], &[("last_update", 1), ("p_mark", 4)]);
    let pipe = interpret_pipeline(&c.pipeline(), &pkt, &o, 4).unwrap();
    assert_eq!(pipe.state["p_mark"], 4);
    assert_eq!(pipe.state["last_update"], 1);
}

const GAP: &str = "header pkt { bit<8> a; bit<8> b; bit<8> c; bit<8> o; } \
    action mix() { pkt.o = (pkt.a + 1) + ((pkt.b + 2) ^ pkt.c); } \
    table t { actions = { mix; } } control ingress { t.apply(); }";

#[test]
fn propagated_value_reaches_a_later_stage() {
    let c = compile_on(GAP, "tofino");
    assert_eq!(c.stages(), 3);
    let sol = &c.placement.solution;
    assert!(!sol.props.is_empty(), "expected a propagation ALU");
    let pkt = packet(&[("pkt.a", 3), ("pkt.b", 5), ("pkt.c", 6)], &[]);
    let o = MatchOutcomes::new();
    let out = interpret_pipeline(&c.pipeline(), &pkt, &o, 4).unwrap();
    // (3 + 1) + ((5 + 2) ^ 6) = 4 + 1
    assert_eq!(out.fields["pkt.o"], 5);

    let mut cp = c.pipeline();
    cp.solution.props.clear();
    assert!(matches!(
        interpret_pipeline(&cp, &pkt, &o, 4),
        Err(SimError::ConfigError(_))
    ));
}

#[test]
fn same_packet_twice_gives_the_same_result() {
    let c = compile_on(benchmark("conga").unwrap().source, "tofino");
    let cp = c.pipeline();
    let pkt = packet(
        &[("pkt.util", 3), ("pkt.path_id", 7)],
        &[("best_util", 9), ("best_path", 2)],
    );
    let o = MatchOutcomes::new();
    let a = interpret_pipeline(&cp, &pkt, &o, 4).unwrap();
    let b = interpret_pipeline(&cp, &pkt, &o, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.state["best_util"], 3);
    assert_eq!(a.state["best_path"], 7);
}

#[test]
fn missing_outcome_is_reported() {
    let c = compile_on(benchmark("motivating_v1").unwrap().source, "motivating");
    let pkt = packet(&[], &[]);
    assert!(matches!(
        interpret_pipeline(&c.pipeline(), &pkt, &MatchOutcomes::new(), 4),
        Err(SimError::UnmatchedTable(_))
    ));
}
