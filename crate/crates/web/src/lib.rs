//! Browser bindings. Every export takes and returns plain strings; results
//! are JSON objects with an `ok` flag so the page never has to catch.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use pipecat::allocation::{builtin_target, builtin_target_names, emit_big_m, propagation_rows};
use pipecat::benchmarks::BENCHMARKS;
use pipecat::driver::{compile as run_compile, Compilation, CompileError, CompileOptions};

fn failure(e: &CompileError) -> Value {
    json!({"ok": false, "exit_code": e.exit_code(), "error": e.to_string()})
}

fn build(source: &str, target: &str, opts: &CompileOptions) -> Result<Compilation, Value> {
    let t = builtin_target(target).ok_or_else(
        || json!({"ok": false, "exit_code": 1, "error": format!("unknown target `{target}`")}),
    )?;
    let g = t
        .grammars(None)
        .map_err(|e| json!({"ok": false, "exit_code": 1, "error": e.to_string()}))?;
    run_compile(source, &t, &g, opts).map_err(|e| failure(&e))
}

/// Shipped benchmark programs as `[{name, source}]`.
#[wasm_bindgen]
pub fn benchmarks() -> String {
    let v: Vec<Value> = BENCHMARKS
        .iter()
        .map(|b| json!({"name": b.name, "source": b.source}))
        .collect();
    Value::Array(v).to_string()
}

#[wasm_bindgen]
pub fn targets() -> String {
    json!(builtin_target_names()).to_string()
}

/// Full compile. `report` is the structured report, `text` the CLI rendering.
#[wasm_bindgen]
pub fn compile(source: &str, target: &str, rewrite: bool, bits: u32) -> String {
    let opts = CompileOptions {
        rewrite,
        bits: bits.clamp(1, 8),
        ..CompileOptions::default()
    };
    match build(source, target, &opts) {
        Ok(c) => json!({
            "ok": true,
            "exit_code": 0,
            "stages_used": c.stages(),
            "report": c.report,
            "text": c.report.to_string(),
        }),
        Err(v) => v,
    }
    .to_string()
}

/// Placement only, in `optimal` or `feasible` mode, with the LP it solves.
#[wasm_bindgen]
pub fn allocate(source: &str, target: &str, mode: &str) -> String {
    let mode = match mode.parse() {
        Ok(m) => m,
        Err(e) => return json!({"ok": false, "exit_code": 1, "error": e}).to_string(),
    };
    let opts = CompileOptions {
        mode,
        ..CompileOptions::default()
    };
    match build(source, target, &opts) {
        Ok(c) => json!({
            "ok": true,
            "exit_code": 0,
            "allocation": c.report.allocation,
            "lp": emit_big_m(&c.placement.constraints),
        }),
        Err(v) => v,
    }
    .to_string()
}

/// For each `m` in `1..=m_max`: the number of `(beg, end, s)` cases on an
/// `n_stages` pipeline where the linearized rows admit a `prop` other than
/// `beg < s < end`, or admit none at all.
pub fn sweep(n_stages: usize, m_max: i64) -> Vec<(i64, usize)> {
    let n = n_stages as i64;
    (1..=m_max)
        .map(|m| {
            let mut bad = 0;
            for s in 1..=n_stages {
                let rows = propagation_rows("u", s, m);
                for beg in 1..=n {
                    for end in beg..=n {
                        let truth = beg < s as i64 && (s as i64) < end;
                        let mut admitted = [false; 2];
                        for lo in 0..2 {
                            for hi in 0..2 {
                                for prop in 0..2 {
                                    let val = |v: &str| match v.split('_').next() {
                                        Some("beg") => beg,
                                        Some("end") => end,
                                        Some("lo") => lo,
                                        Some("hi") => hi,
                                        _ => prop,
                                    };
                                    if rows.iter().all(|r| r.holds(&val)) {
                                        admitted[prop as usize] = true;
                                    }
                                }
                            }
                        }
                        if admitted != [!truth, truth] {
                            bad += 1;
                        }
                    }
                }
            }
            (m, bad)
        })
        .collect()
}

#[wasm_bindgen]
pub fn big_m_sweep(n_stages: usize, m_max: i32) -> String {
    let n_stages = n_stages.clamp(1, 32);
    let m_max = i64::from(m_max.clamp(1, 64));
    let rows: Vec<Value> = sweep(n_stages, m_max)
        .into_iter()
        .map(|(m, bad)| json!({"m": m, "violations": bad, "exact": bad == 0}))
        .collect();
    json!({"ok": true, "n_stages": n_stages, "sweep": rows}).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_m_is_exact_and_small_m_is_not() {
        let r = sweep(6, 11);
        assert!(r[0].1 > 0);
        assert_eq!(r.last().unwrap().1, 0);
        // once exact, larger M stays exact
        let first = r.iter().position(|&(_, b)| b == 0).unwrap();
        assert!(r[first..].iter().all(|&(_, b)| b == 0));
    }

    #[test]
    fn compile_reports_stages() {
        let src = BENCHMARKS.iter().find(|b| b.name == "me2").unwrap().source;
        let v: Value = serde_json::from_str(&compile(src, "tofino", true, 4)).unwrap();
        assert_eq!(v["ok"], true);
        assert_eq!(v["stages_used"], 1);
        let v: Value = serde_json::from_str(&compile(src, "tofino", false, 4)).unwrap();
        assert_eq!(v["stages_used"], 3);
    }

    #[test]
    fn allocate_returns_lp_and_errors_are_values() {
        let src = BENCHMARKS.iter().find(|b| b.name == "me2").unwrap().source;
        let v: Value = serde_json::from_str(&allocate(src, "tofino", "feasible")).unwrap();
        assert_eq!(v["ok"], true);
        assert!(v["lp"].as_str().unwrap().contains("Minimize"));
        let v: Value = serde_json::from_str(&allocate("header {", "tofino", "optimal")).unwrap();
        assert_eq!(v["ok"], false);
        assert_eq!(v["exit_code"], 1);
        let v: Value = serde_json::from_str(&allocate(src, "tofino", "best")).unwrap();
        assert_eq!(v["exit_code"], 1);
    }
}
