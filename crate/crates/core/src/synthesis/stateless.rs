//! Minimum-depth trees of stateless ALUs.
//!
//! Level `d` holds every distinct value vector (over the samples) computable
//! by a tree of depth exactly `d`: one ALU whose operands come from lower
//! levels, at least one from level `d - 1`. The first level containing the
//! target is the minimum depth on the samples; the candidate is then checked
//! on the whole bounded domain and counterexamples restart the search.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::ir::eval::{apply_bin, eval, mask};
use crate::ir::Expr;
use crate::preprocess::Assign;

use super::grammar::StatelessGrammar;
use super::stateful::for_domain;

const INITIAL_SAMPLES: usize = 24;
const MAX_SAMPLES: usize = 160;
const LEVEL_CAP: usize = 300_000;
/// Operator applications tried per level before giving up on completeness.
const LEVEL_WORK: usize = 6_000_000;

/// A stateless output: `stmts` compute `target` from `leaves`, in order.
pub struct StatelessSpec<'a> {
    pub target: &'a str,
    pub stmts: &'a [Assign],
    pub leaves: &'a [String],
    pub width: &'a dyn Fn(&str) -> u32,
    pub bits: u32,
}

impl StatelessSpec<'_> {
    pub fn eval(&self, leaves: &[u64]) -> u64 {
        let mut env: HashMap<&str, u64> = self
            .leaves
            .iter()
            .map(String::as_str)
            .zip(leaves.iter().copied())
            .collect();
        for a in self.stmts {
            let v = eval(&a.value, self.bits, &mut |n| env.get(n).copied()).unwrap_or(0);
            env.insert(&a.target, v & mask((self.width)(&a.target)));
        }
        env.get(self.target).copied().unwrap_or(0)
    }

    fn constants(&self) -> Vec<u64> {
        let mut c = vec![0, 1];
        for a in self.stmts {
            a.value.constants(&mut c);
        }
        let mut out = Vec::new();
        for v in c {
            let v = v & mask(self.bits);
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatelessResult {
    /// Tree over leaves and constants; each operator node is one ALU.
    pub expr: Expr,
    pub depth: usize,
    /// False when a level was truncated, so a shallower tree might exist.
    pub complete: bool,
}

#[derive(Clone)]
struct Cand {
    vals: Rc<[u64]>,
    expr: Expr,
}

/// Searches depths `1..=max_depth`; `None` if no tree is found.
pub fn synth_min_depth(
    spec: &StatelessSpec,
    g: &StatelessGrammar,
    max_depth: usize,
) -> Option<StatelessResult> {
    let consts = spec.constants();
    let widths: Vec<u32> = spec.leaves.iter().map(|l| (spec.width)(l)).collect();
    let mut rng = StdRng::seed_from_u64(0x5eed_0b1e);
    let mut samples: Vec<Vec<u64>> = Vec::new();
    for i in 0..INITIAL_SAMPLES {
        samples.push(
            widths
                .iter()
                .map(|w| match i {
                    0 => 0,
                    1 => mask(*w),
                    _ => rng.gen::<u64>() & mask(*w),
                })
                .collect(),
        );
    }
    let tmask = mask((spec.width)(spec.target));
    loop {
        let found = search(spec, g, &consts, &samples, tmask, max_depth)?;
        let cex = for_domain(&widths, &mut rng, &mut |vals| {
            let want = spec.eval(vals);
            let got = eval(&found.expr, spec.bits, &mut |n| {
                spec.leaves.iter().position(|l| l == n).map(|p| vals[p])
            })
            .unwrap_or(0);
            (got & tmask != want).then(|| vals.to_vec())
        });
        match cex {
            None => return Some(found),
            Some(c) => {
                samples.push(c);
                if samples.len() > MAX_SAMPLES {
                    return None;
                }
            }
        }
    }
}

fn search(
    spec: &StatelessSpec,
    g: &StatelessGrammar,
    consts: &[u64],
    samples: &[Vec<u64>],
    tmask: u64,
    max_depth: usize,
) -> Option<StatelessResult> {
    let bits = spec.bits;
    let n = samples.len();
    let target: Vec<u64> = samples.iter().map(|s| spec.eval(s)).collect();
    let hits = |vals: &[u64]| vals.iter().zip(&target).all(|(v, t)| v & tmask == *t);

    let mut seen: HashSet<Rc<[u64]>> = HashSet::new();
    let leaves: Vec<Cand> = spec
        .leaves
        .iter()
        .enumerate()
        .map(|(i, l)| Cand {
            vals: samples.iter().map(|s| s[i]).collect(),
            expr: Expr::var(l.clone()),
        })
        .filter(|c| seen.insert(c.vals.clone()))
        .collect();
    let imms: Vec<Cand> = consts
        .iter()
        .map(|c| Cand {
            vals: vec![*c; n].into(),
            expr: Expr::Const(*c),
        })
        .collect();
    for c in &imms {
        seen.insert(c.vals.clone());
    }
    // levels[d] holds PHV values of depth exactly d
    let mut levels: Vec<Vec<Cand>> = vec![leaves];
    let mut complete = true;
    for d in 1..=max_depth {
        // Beyond depth 2 the non-newest operand is restricted to shallow
        // values to keep levels tractable.
        let shallow = if d <= 2 { levels.len() } else { 2 };
        if d > 2 {
            complete = false;
        }
        // (candidate, whether it is from level d - 1)
        let mut lower: Vec<(&Cand, bool)> = Vec::new();
        for (l, level) in levels[..shallow].iter().enumerate() {
            lower.extend(level.iter().map(|c| (c, d == 1 || l == d - 1)));
        }
        lower.extend(imms.iter().map(|c| (c, d == 1)));
        let newest: Vec<&Cand> = if d == 1 {
            lower.iter().map(|c| c.0).collect()
        } else {
            levels[d - 1].iter().collect()
        };
        let phv: Vec<(&Cand, bool)> = levels
            .iter()
            .enumerate()
            .flat_map(|(l, lv)| lv.iter().map(move |c| (c, d == 1 || l == d - 1)))
            .collect();
        let mut next: Vec<Cand> = Vec::new();
        let mut work = 0usize;
        let mut push = |vals: Rc<[u64]>, expr: Expr, next: &mut Vec<Cand>| -> Option<Expr> {
            if hits(&vals) {
                return Some(expr);
            }
            if next.len() < LEVEL_CAP && seen.insert(vals.clone()) {
                next.push(Cand { vals, expr });
            }
            None
        };
        'ops: for op in &g.ops {
            for x in &newest {
                work += 2 * lower.len();
                if work > LEVEL_WORK {
                    complete = false;
                    break 'ops;
                }
                for (y, _) in &lower {
                    for (a, b) in [(x, y), (y, x)] {
                        let vals: Rc<[u64]> = a
                            .vals
                            .iter()
                            .zip(b.vals.iter())
                            .map(|(p, q)| apply_bin(*op, *p, *q, bits))
                            .collect();
                        if let Some(expr) = push(
                            vals,
                            Expr::bin(*op, a.expr.clone(), b.expr.clone()),
                            &mut next,
                        ) {
                            return Some(StatelessResult {
                                expr,
                                depth: d,
                                complete,
                            });
                        }
                    }
                }
            }
        }
        if g.select {
            // `in ? mux : mux`; the condition must be a PHV value
            'sel: for (c, fc) in &phv {
                for (x, fx) in &lower {
                    work += lower.len();
                    if work > 2 * LEVEL_WORK {
                        complete = false;
                        break 'sel;
                    }
                    for (y, fy) in &lower {
                        if !(*fc || *fx || *fy) {
                            continue;
                        }
                        let vals: Rc<[u64]> = (0..n)
                            .map(|s| if c.vals[s] != 0 { x.vals[s] } else { y.vals[s] })
                            .collect();
                        if let Some(expr) = push(
                            vals,
                            Expr::ite(c.expr.clone(), x.expr.clone(), y.expr.clone()),
                            &mut next,
                        ) {
                            return Some(StatelessResult {
                                expr,
                                depth: d,
                                complete,
                            });
                        }
                    }
                }
            }
        }
        if next.len() >= LEVEL_CAP {
            complete = false;
        }
        levels.push(next);
    }
    None
}

/// Operator nodes of a tree, the depth of the tree rooted at `e`.
pub fn tree_depth(e: &Expr) -> usize {
    match e {
        Expr::Const(_) | Expr::Var(_) => 0,
        Expr::Unary(_, a) => 1 + tree_depth(a),
        Expr::Binary(_, a, b) => 1 + tree_depth(a).max(tree_depth(b)),
        Expr::Ternary(c, a, b) => 1 + tree_depth(c).max(tree_depth(a)).max(tree_depth(b)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::BinOp::*;
    use crate::synthesis::grammar::{builtin, AluGrammar};

    fn grammar(name: &str) -> StatelessGrammar {
        match builtin(name).unwrap() {
            AluGrammar::Stateless(g) => g,
            _ => panic!(),
        }
    }

    fn run(stmts: &[Assign], target: &str, leaves: &[&str], g: &str) -> Option<StatelessResult> {
        let leaves: Vec<String> = leaves.iter().map(|s| s.to_string()).collect();
        let w = |_: &str| 4;
        let spec = StatelessSpec {
            target,
            stmts,
            leaves: &leaves,
            width: &w,
            bits: 4,
        };
        synth_min_depth(&spec, &grammar(g), 4)
    }

    fn a(t: &str, e: Expr) -> Assign {
        Assign {
            target: t.into(),
            value: e,
        }
    }

    #[test]
    fn add_is_depth_one() {
        let s = [a("o", Expr::bin(Add, Expr::var("a"), Expr::var("b")))];
        assert_eq!(
            run(&s, "o", &["a", "b"], "tofino-stateless").unwrap().depth,
            1
        );
    }

    #[test]
    fn three_operands_need_two_levels() {
        let s = [a(
            "o",
            Expr::bin(
                Add,
                Expr::bin(Add, Expr::var("a"), Expr::var("b")),
                Expr::var("c"),
            ),
        )];
        let r = run(&s, "o", &["a", "b", "c"], "tofino-stateless").unwrap();
        assert_eq!(r.depth, 2);
        assert_eq!(tree_depth(&r.expr), 2);
    }

    #[test]
    fn comparison_needs_capable_grammar() {
        let s = [a("o", Expr::bin(Eq, Expr::var("a"), Expr::Const(9)))];
        assert_eq!(run(&s, "o", &["a"], "banzai-stateless").unwrap().depth, 1);
        let r = run(&s, "o", &["a"], "tofino-stateless");
        assert!(r.is_none_or(|r| r.depth > 1));
    }

    #[test]
    fn select_collapses_branch() {
        let s = [a(
            "o",
            Expr::ite(Expr::var("c"), Expr::var("a"), Expr::Const(3)),
        )];
        assert_eq!(
            run(&s, "o", &["c", "a"], "banzai-stateless").unwrap().depth,
            1
        );
    }
}
