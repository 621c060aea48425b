use std::path::PathBuf;
use std::process::{Command, Output};

fn pipecat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pipecat"))
        .args(args)
        .env_remove("PIPECAT_TARGET")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tmp(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pipecat-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

fn bench(name: &str) -> PathBuf {
    let o = pipecat(&["gen-bench", name]);
    assert!(o.status.success());
    tmp(&format!("{name}.pcat"), &stdout(&o))
}

fn s(p: &PathBuf) -> &str {
    p.to_str().unwrap()
}

#[test]
fn rewrite_collapses_me2_into_one_stage() {
    let p = bench("me2");
    let o = pipecat(&["compile", s(&p)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("target tofino: 1 of 12 stages used"));
    let o = pipecat(&["compile", "--no-rewrite", s(&p)]);
    assert!(stdout(&o).starts_with("target tofino: 3 of 12 stages used"));
}

#[test]
fn json_report_and_deps() {
    let p = bench("me2");
    let o = pipecat(&["compile", "--format", "json", s(&p)]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["stages_used"], 1);
    let o = pipecat(&["emit", "--emit=deps", "--format=json", s(&p)]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let deps = v["deps"].as_array().unwrap();
    assert_eq!(deps.len(), 3);
    for d in deps {
        assert_eq!(d["kind"], "WAW");
        assert_eq!(d["variable"], "pkt.x");
        assert_eq!(d["status"], "pruned");
        assert_eq!(d["sites"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn compgraph_is_dot() {
    let p = bench("blue_decrease");
    let o = pipecat(&["emit", "--emit=compgraph", s(&p)]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("digraph \"blue_dec\" {"));
}

#[test]
fn lp_has_objective() {
    let p = bench("blue_decrease");
    let o = pipecat(&["emit", "--emit=lp", s(&p)]);
    assert!(o.status.success());
    let t = stdout(&o);
    assert!(t.contains("Minimize") && t.contains("Subject To") && t.trim_end().ends_with("End"));
}

#[test]
fn exit_codes() {
    assert_eq!(
        pipecat(&["compile", "/definitely/missing.pcat"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(pipecat(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(pipecat(&["--help"]).status.code(), Some(0));
    let bad = tmp("bad.pcat", "header {");
    assert_eq!(pipecat(&["compile", s(&bad)]).status.code(), Some(1));
    let m = bench("blue_decrease_mutant");
    assert_eq!(pipecat(&["compile", s(&m)]).status.code(), Some(0));
    let o = pipecat(&["compile", "--no-simplify", s(&m)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no `tofino` configuration"));
}

#[test]
fn target_from_environment() {
    let p = bench("blue_decrease");
    let o = Command::new(env!("CARGO_BIN_EXE_pipecat"))
        .args(["compile", "--alu-grammar", "banzai-sub", s(&p)])
        .env("PIPECAT_TARGET", "banzai")
        .output()
        .unwrap();
    assert!(
        stdout(&o).starts_with("target banzai: 4 of 12 stages used"),
        "{}",
        stdout(&o)
    );
    let o = Command::new(env!("CARGO_BIN_EXE_pipecat"))
        .args(["compile", s(&p)])
        .env("PIPECAT_TARGET", "no-such-target")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn packing_with_its_target() {
    let t = std::env::temp_dir().join(format!("pipecat-t2-{}.toml", std::process::id()));
    let o = pipecat(&["gen-bench", "packing", "--n", "2", "--target-out", s(&t)]);
    assert!(o.status.success());
    let p = tmp("t2.pcat", &stdout(&o));
    let o = pipecat(&["compile", "--target", s(&t), s(&p)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("3 of 4 stages used"));
    assert_eq!(
        pipecat(&["gen-bench", "packing", "--n", "2", "--w", "3"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn simulate_carries_state_between_packets() {
    let p = bench("blue_decrease");
    let pk = tmp(
        "pk.txt",
        "pkt.now=14 last_update=2 p_mark=5\n# idle\npkt.now=15\n",
    );
    let o = pipecat(&["simulate", "--packets", s(&pk), s(&p)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "packet 1: pkt.now=14 | last_update=14 p_mark=4\n\
         packet 3: pkt.now=15 | last_update=14 p_mark=4\n"
    );
    let o = pipecat(&["simulate", "--format=json", "--packets", s(&pk), s(&p)]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["state"]["p_mark"], 4);
    let bad = tmp("bad.txt", "pkt.later=1\n");
    assert_eq!(
        pipecat(&["simulate", "--packets", s(&bad), s(&p)])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn keyed_tables_need_an_outcome() {
    let p = bench("motivating_v1");
    let pk = tmp("none.txt", "pkt.a=1\n");
    let o = pipecat(&["simulate", "--packets", s(&pk), s(&p)]);
    assert_eq!(o.status.code(), Some(1));
    let pk = tmp("some.txt", "pkt.a=1 table:D=0 table:E=1\n");
    let o = pipecat(&["simulate", "--packets", s(&pk), s(&p)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn compile_with_emit_is_one_json_document() {
    let p = bench("me2");
    let o = pipecat(&["compile", "--format=json", "--emit=rewritten,alloc", s(&p)]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["stages_used"], 1);
    assert!(v["rewritten"].as_str().unwrap().contains("table __rw0"));
    assert_eq!(v["alloc"]["stages_used"], 1);
}
