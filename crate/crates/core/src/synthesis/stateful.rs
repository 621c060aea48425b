//! Fitting one computation-graph node into one stateful ALU.
//!
//! Counterexample-guided enumeration: holes are filled against a growing set
//! of sample valuations, then the candidate is checked on the whole bounded
//! domain. On samples, every hole's candidates are deduplicated by their
//! value vectors, and each candidate is summarized by the set of samples on
//! which it produces the wanted register value. A template expression fits a
//! set of samples `D` if one candidate's agreement set covers `D`; a select
//! splits `D` by the condition's truth set.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::ir::eval::{apply_bin, apply_un, eval, mask};
use crate::ir::{BinOp, Expr, UnOp};
use crate::preprocess::{post, pre, Assign};

use super::config::{CStmt, OutputSel, RegBinding, StatefulConfig};
use super::grammar::{StatefulGrammar, TExpr, TKind, TStmt};

/// Largest domain, in bits, verified exhaustively; wider domains are sampled.
pub const EXHAUSTIVE_BITS: u32 = 22;
const RANDOM_CHECKS: usize = 1 << 18;
const INITIAL_SAMPLES: usize = 20;
const MAX_SAMPLES: usize = 128;
const MAX_CANDIDATES: usize = 400_000;
const SEARCH_BUDGET: u64 = 200_000_000;

/// The statements of a node with the names it reads and the output it must
/// produce. `width` gives the stored width of any name.
pub struct StatefulSpec<'a> {
    pub stmts: &'a [Assign],
    pub state_vars: &'a [String],
    pub inputs: &'a [String],
    pub output: Option<&'a str>,
    pub width: &'a dyn Fn(&str) -> u32,
    pub bits: u32,
}

impl StatefulSpec<'_> {
    /// New state values and the output for one valuation.
    pub fn eval(&self, inputs: &[u64], state: &[u64]) -> (Vec<u64>, Option<u64>) {
        let mut env: HashMap<String, u64> = HashMap::new();
        for (n, v) in self.inputs.iter().zip(inputs) {
            env.insert(n.clone(), *v);
        }
        for (s, v) in self.state_vars.iter().zip(state) {
            env.insert(pre(s), *v);
        }
        for a in self.stmts {
            let v = eval(&a.value, self.bits, &mut |n| env.get(n).copied()).unwrap_or(0);
            env.insert(a.target.clone(), v & mask((self.width)(&a.target)));
        }
        let posts = self
            .state_vars
            .iter()
            .zip(state)
            .map(|(s, v)| env.get(&post(s)).copied().unwrap_or(*v))
            .collect();
        (posts, self.output.map(|o| env.get(o).copied().unwrap_or(0)))
    }

    fn constants(&self) -> Vec<u64> {
        let mut c = vec![0, 1];
        for a in self.stmts {
            a.value.constants(&mut c);
        }
        let mut out: Vec<u64> = Vec::new();
        for v in c {
            let v = v & mask(self.bits);
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
struct Sample {
    inputs: Vec<u64>,
    state: Vec<u64>,
    /// Values of registers not holding state.
    free: Vec<u64>,
    posts: Vec<u64>,
    out: Option<u64>,
}

/// Finds a configuration of `g` implementing `spec`, or `None` if the
/// search proves there is none (on the sampled valuations).
pub fn query_stateful(spec: &StatefulSpec, g: &StatefulGrammar) -> Option<StatefulConfig> {
    let m = spec.state_vars.len();
    let k = g.registers;
    if m > k || spec.inputs.len() > g.max_inputs {
        return None;
    }
    let consts = spec.constants();
    let mut rng = StdRng::seed_from_u64(0x5eed_ca75);
    let mut samples: Vec<Sample> = Vec::new();
    let in_w: Vec<u32> = spec.inputs.iter().map(|i| (spec.width)(i)).collect();
    let st_w: Vec<u32> = spec
        .state_vars
        .iter()
        .map(|s| (spec.width)(&pre(s)))
        .collect();
    for i in 0..INITIAL_SAMPLES {
        let mut draw = |w: u32| {
            if i == 0 {
                0
            } else if i == 1 {
                mask(w)
            } else {
                rng.gen::<u64>() & mask(w)
            }
        };
        let inputs = in_w.iter().map(|w| draw(*w)).collect();
        let state = st_w.iter().map(|w| draw(*w)).collect();
        let free = (0..k).map(|_| draw(spec.bits)).collect();
        samples.push(complete(spec, inputs, state, free));
    }

    let out_flank = spec.output.and_then(|o| {
        let (base, rest) = o.split_once('@')?;
        let j = spec.state_vars.iter().position(|s| s == base)?;
        Some((j, rest == "post"))
    });

    for binding in injections(m, k) {
        // binding[j] = register of state j
        let mut sels: Vec<(Option<OutputSel>, Option<usize>)> = Vec::new();
        match (spec.output, out_flank) {
            (None, _) => sels.push((None, None)),
            (Some(_), Some((j, true))) => sels.push((Some(OutputSel::Post(binding[j])), None)),
            (Some(_), Some((j, false))) => sels.push((Some(OutputSel::Pre(binding[j])), None)),
            (Some(_), None) => {
                for &r in &binding {
                    sels.push((Some(OutputSel::Post(r)), None));
                    sels.push((Some(OutputSel::Pre(r)), None));
                }
                for r in (0..k).filter(|r| !binding.contains(r)) {
                    sels.push((Some(OutputSel::Post(r)), Some(r)));
                }
            }
        }
        for (sel, scratch) in sels {
            let mut bindings = vec![RegBinding::Unused; k];
            let mut reg_widths = vec![spec.bits; k];
            for (j, &r) in binding.iter().enumerate() {
                bindings[r] = RegBinding::State(spec.state_vars[j].clone());
                reg_widths[r] = st_w[j];
            }
            if let Some(r) = scratch {
                bindings[r] = RegBinding::Scratch;
                reg_widths[r] = (spec.width)(spec.output.unwrap());
            }
            loop {
                if !selector_holds(&samples, &binding, sel, scratch) {
                    break;
                }
                let mut search =
                    Search::new(g, spec, &samples, &binding, scratch, &reg_widths, &consts);
                let Some(body) = search.solve() else { break };
                let cfg = StatefulConfig {
                    grammar: g.name.clone(),
                    body,
                    bindings: bindings.clone(),
                    reg_widths: reg_widths.clone(),
                    inputs: spec.inputs.to_vec(),
                    output: sel,
                };
                match verify(spec, &cfg, &mut rng) {
                    None => return Some(cfg),
                    Some(cex) => {
                        samples.push(cex);
                        if samples.len() >= MAX_SAMPLES {
                            break;
                        }
                    }
                }
            }
        }
    }
    None
}

fn complete(spec: &StatefulSpec, inputs: Vec<u64>, state: Vec<u64>, free: Vec<u64>) -> Sample {
    let (posts, out) = spec.eval(&inputs, &state);
    Sample {
        inputs,
        state,
        free,
        posts,
        out,
    }
}

/// All injective maps from `m` items into `k` slots.
fn injections(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    fn go(m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for r in 0..k {
            if !cur.contains(&r) {
                cur.push(r);
                go(m, k, cur, out);
                cur.pop();
            }
        }
    }
    go(m, k, &mut Vec::new(), &mut out);
    out
}

fn selector_holds(
    samples: &[Sample],
    binding: &[usize],
    sel: Option<OutputSel>,
    scratch: Option<usize>,
) -> bool {
    let Some(sel) = sel else { return true };
    if scratch.is_some() {
        return true;
    }
    samples.iter().all(|s| {
        let out = s.out.unwrap_or(0);
        match sel {
            OutputSel::Pre(r) => binding
                .iter()
                .position(|&x| x == r)
                .is_some_and(|j| s.state[j] == out),
            OutputSel::Post(r) => binding
                .iter()
                .position(|&x| x == r)
                .is_some_and(|j| s.posts[j] == out),
        }
    })
}

/// Checks `cfg` against the spec on the bounded domain; returns a
/// counterexample if one exists.
fn verify(spec: &StatefulSpec, cfg: &StatefulConfig, rng: &mut StdRng) -> Option<Sample> {
    let k = cfg.bindings.len();
    let state_reg: Vec<usize> = spec
        .state_vars
        .iter()
        .map(|s| cfg.register_of(s).unwrap())
        .collect();
    let free_regs: Vec<usize> = (0..k).filter(|r| !state_reg.contains(r)).collect();
    let mut widths: Vec<u32> = spec.inputs.iter().map(|i| (spec.width)(i)).collect();
    widths.extend(spec.state_vars.iter().map(|s| (spec.width)(&pre(s))));
    widths.extend(free_regs.iter().map(|&r| cfg.reg_widths[r]));
    let n_in = spec.inputs.len();
    let n_st = spec.state_vars.len();
    let out_mask = spec.output.map_or(0, |o| mask((spec.width)(o)));

    let mut check = |vals: &[u64]| -> Option<Sample> {
        let inputs = &vals[..n_in];
        let state = &vals[n_in..n_in + n_st];
        let mut regs = vec![0u64; k];
        for (j, &r) in state_reg.iter().enumerate() {
            regs[r] = state[j];
        }
        for (i, &r) in free_regs.iter().enumerate() {
            regs[r] = vals[n_in + n_st + i];
        }
        let lookup = |name: &str| {
            spec.inputs
                .iter()
                .position(|i| i == name)
                .map_or(0, |p| inputs[p])
        };
        let (got_post, got_out) = cfg.exec(&lookup, &regs, spec.bits);
        let (want_post, want_out) = spec.eval(inputs, state);
        let ok = state_reg
            .iter()
            .zip(&want_post)
            .all(|(&r, w)| got_post[r] == *w)
            && want_out.is_none_or(|w| got_out.map(|g| g & out_mask) == Some(w));
        if ok {
            return None;
        }
        let mut free = vec![0u64; k];
        for (i, &r) in free_regs.iter().enumerate() {
            free[r] = vals[n_in + n_st + i];
        }
        Some(complete(spec, inputs.to_vec(), state.to_vec(), free))
    };
    for_domain(&widths, rng, &mut check)
}

/// Calls `f` on every valuation of variables with the given widths, or on
/// random ones if the domain is too large; stops at the first `Some`.
pub(crate) fn for_domain<T>(
    widths: &[u32],
    rng: &mut StdRng,
    f: &mut dyn FnMut(&[u64]) -> Option<T>,
) -> Option<T> {
    let total: u32 = widths.iter().sum();
    let mut vals = vec![0u64; widths.len()];
    if total <= EXHAUSTIVE_BITS {
        for code in 0u64..(1u64 << total) {
            let mut c = code;
            for (v, w) in vals.iter_mut().zip(widths) {
                *v = c & mask(*w);
                c >>= w;
            }
            if let Some(t) = f(&vals) {
                return Some(t);
            }
        }
        None
    } else {
        for _ in 0..RANDOM_CHECKS {
            for (v, w) in vals.iter_mut().zip(widths) {
                *v = rng.gen::<u64>() & mask(*w);
            }
            if let Some(t) = f(&vals) {
                return Some(t);
            }
        }
        None
    }
}

#[derive(Clone)]
struct Cand {
    vals: Rc<[u64]>,
    expr: Expr,
}

#[derive(Clone)]
struct LetVal {
    mask: u128,
    cand: Cand,
}

/// Condition masks `lo ⊆ c` and `c ∩ d ⊆ hi` under which a select with
/// arms `x`, `y` fits.
struct Interval {
    lo: u128,
    hi: u128,
    x: Expr,
    y: Expr,
}

const ARITH: &[BinOp] = &[BinOp::Add, BinOp::Sub];
const REL: &[BinOp] = &[
    BinOp::Eq,
    BinOp::Ne,
    BinOp::Lt,
    BinOp::Le,
    BinOp::Gt,
    BinOp::Ge,
];
const ALL_OPS: &[BinOp] = &[
    BinOp::Add,
    BinOp::Sub,
    BinOp::Mul,
    BinOp::BitAnd,
    BinOp::BitOr,
    BinOp::BitXor,
    BinOp::Shl,
    BinOp::Shr,
    BinOp::Eq,
    BinOp::Ne,
    BinOp::Lt,
    BinOp::Le,
    BinOp::Gt,
    BinOp::Ge,
    BinOp::And,
    BinOp::Or,
];

fn pred_masks(a: u128, b: u128, full: u128) -> [u128; 9] {
    [
        a,
        full & !a,
        b,
        full & !b,
        a & b,
        a | b,
        a & !b,
        !a & b & full,
        full,
    ]
}

fn pred_expr(form: usize, a: Expr, b: Expr) -> Expr {
    let not = |e: Expr| Expr::un(UnOp::Not, e);
    match form {
        0 => a,
        1 => not(a),
        2 => b,
        3 => not(b),
        4 => Expr::bin(BinOp::And, a, b),
        5 => Expr::bin(BinOp::Or, a, b),
        6 => Expr::bin(BinOp::And, a, not(b)),
        7 => Expr::bin(BinOp::And, not(a), b),
        _ => Expr::Const(1),
    }
}

struct Search<'a> {
    g: &'a StatefulGrammar,
    bits: u32,
    n: usize,
    full: u128,
    inputs: Vec<(String, Rc<[u64]>)>,
    regs: Vec<Rc<[u64]>>,
    consts: Vec<u64>,
    targets: Vec<Option<Vec<u64>>>,
    reg_mask: Vec<u64>,
    pre_agree: Vec<u128>,
    lets: HashMap<String, LetVal>,
    cands_cache: HashMap<usize, Rc<Vec<Cand>>>,
    cond_cache: HashMap<usize, Rc<Vec<(u128, Expr)>>>,
    anti_cache: HashMap<(usize, usize), Rc<Vec<(u128, Expr)>>>,
    interval_cache: HashMap<(usize, usize, u128), Rc<Vec<Interval>>>,
    if_memo: HashMap<(usize, u128), Option<Vec<CStmt>>>,
    budget: u64,
}

impl<'a> Search<'a> {
    fn new(
        g: &'a StatefulGrammar,
        spec: &StatefulSpec,
        samples: &[Sample],
        binding: &[usize],
        scratch: Option<usize>,
        reg_widths: &[u32],
        consts: &[u64],
    ) -> Self {
        let n = samples.len();
        let full: u128 = if n >= 128 {
            u128::MAX
        } else {
            (1u128 << n) - 1
        };
        let k = g.registers;
        let inputs = spec
            .inputs
            .iter()
            .enumerate()
            .map(|(i, name)| {
                (
                    name.clone(),
                    samples.iter().map(|s| s.inputs[i]).collect::<Rc<[u64]>>(),
                )
            })
            .collect();
        let mut regs = Vec::new();
        let mut targets: Vec<Option<Vec<u64>>> = vec![None; k];
        let reg_mask: Vec<u64> = reg_widths.iter().map(|w| mask(*w)).collect();
        for r in 0..k {
            let j = binding.iter().position(|&x| x == r);
            let col: Rc<[u64]> = samples
                .iter()
                .map(|s| match j {
                    Some(j) => s.state[j],
                    None => s.free[r] & reg_mask[r],
                })
                .collect();
            regs.push(col);
            if let Some(j) = j {
                targets[r] = Some(samples.iter().map(|s| s.posts[j]).collect());
            } else if scratch == Some(r) {
                targets[r] = Some(samples.iter().map(|s| s.out.unwrap_or(0)).collect());
            }
        }
        let pre_agree = (0..k)
            .map(|r| match &targets[r] {
                Some(t) => agreement(&regs[r], t, reg_mask[r]),
                None => full,
            })
            .collect();
        Search {
            g,
            bits: spec.bits,
            n,
            full,
            inputs,
            regs,
            consts: consts.to_vec(),
            targets,
            reg_mask,
            pre_agree,
            lets: HashMap::new(),
            cands_cache: HashMap::new(),
            cond_cache: HashMap::new(),
            anti_cache: HashMap::new(),
            interval_cache: HashMap::new(),
            if_memo: HashMap::new(),
            budget: SEARCH_BUDGET,
        }
    }

    fn solve(&mut self) -> Option<Vec<CStmt>> {
        let lets = self.g.lets.clone();
        let symmetric =
            lets.len() == 2 && lets[0].1.shape() == lets[1].1.shape() && lets_symmetric(self.g);
        let mut chosen = Vec::new();
        self.enum_lets(&lets, 0, symmetric, 0, &mut chosen)
    }

    fn enum_lets(
        &mut self,
        lets: &[(String, TExpr)],
        i: usize,
        symmetric: bool,
        prev: usize,
        chosen: &mut Vec<CStmt>,
    ) -> Option<Vec<CStmt>> {
        if i == lets.len() {
            self.if_memo.clear();
            if self.budget == 0 {
                return None;
            }
            self.budget -= 1;
            let body = self.feas_block(&self.g.body, self.full)?;
            let mut out = chosen.clone();
            out.extend(body);
            return Some(out);
        }
        let (name, e) = &lets[i];
        let cands = self.cands(e);
        let boolean = let_is_boolean(self.g, name);
        let mut seen: HashSet<u128> = HashSet::new();
        let mut list: Vec<LetVal> = Vec::new();
        for c in cands.iter() {
            let m = self.truth(&c.vals);
            if boolean && !seen.insert(m) {
                continue;
            }
            list.push(LetVal {
                mask: m,
                cand: c.clone(),
            });
        }
        let start = if symmetric && i == 1 { prev } else { 0 };
        for (j, lv) in list.into_iter().enumerate().skip(start) {
            chosen.push(CStmt::Let(name.clone(), lv.cand.expr.clone()));
            self.lets.insert(name.clone(), lv);
            let r = self.enum_lets(lets, i + 1, symmetric, j, chosen);
            chosen.pop();
            if r.is_some() {
                return r;
            }
            if self.budget == 0 {
                return None;
            }
        }
        None
    }

    fn truth(&self, vals: &[u64]) -> u128 {
        vals.iter().enumerate().fold(
            0u128,
            |m, (s, v)| if *v != 0 { m | (1u128 << s) } else { m },
        )
    }

    fn combine(&self, ops: &[BinOp], a: &[Cand], b: &[Cand], out: &mut Vec<Cand>) {
        for op in ops {
            for x in a {
                for y in b {
                    let vals: Rc<[u64]> = x
                        .vals
                        .iter()
                        .zip(y.vals.iter())
                        .map(|(p, q)| apply_bin(*op, *p, *q, self.bits))
                        .collect();
                    out.push(Cand {
                        vals,
                        expr: Expr::bin(*op, x.expr.clone(), y.expr.clone()),
                    });
                    if out.len() > MAX_CANDIDATES {
                        return;
                    }
                }
            }
        }
    }

    fn konst(&self, c: u64) -> Cand {
        let c = c & mask(self.bits);
        Cand {
            vals: vec![c; self.n].into(),
            expr: Expr::Const(c),
        }
    }

    fn cands(&mut self, e: &TExpr) -> Rc<Vec<Cand>> {
        let dynamic = e.uses_let();
        if !dynamic {
            if let Some(c) = self.cands_cache.get(&e.id) {
                return c.clone();
            }
        }
        let mut out: Vec<Cand> = Vec::new();
        let ins = |s: &Self, out: &mut Vec<Cand>| {
            for (n, v) in &s.inputs {
                out.push(Cand {
                    vals: v.clone(),
                    expr: Expr::var(n.clone()),
                });
            }
        };
        let imms = |s: &Self, out: &mut Vec<Cand>| {
            for c in &s.consts {
                out.push(s.konst(*c));
            }
        };
        let regs = |s: &Self, out: &mut Vec<Cand>| {
            for (r, v) in s.regs.iter().enumerate() {
                out.push(Cand {
                    vals: v.clone(),
                    expr: Expr::var(format!("reg{r}")),
                });
            }
        };
        match &e.kind {
            TKind::In => ins(self, &mut out),
            TKind::Imm => imms(self, &mut out),
            TKind::Mux => {
                ins(self, &mut out);
                imms(self, &mut out);
            }
            TKind::Regs => regs(self, &mut out),
            TKind::Any => {
                regs(self, &mut out);
                ins(self, &mut out);
                imms(self, &mut out);
            }
            TKind::Reg(r) => out.push(Cand {
                vals: self.regs[*r].clone(),
                expr: Expr::var(format!("reg{r}")),
            }),
            TKind::Num(c) => out.push(self.konst(*c)),
            TKind::Let(n) => {
                if let Some(lv) = self.lets.get(n) {
                    out.push(lv.cand.clone());
                }
            }
            TKind::Opt(a) => {
                out.extend(self.cands(a).iter().cloned());
                out.push(self.konst(0));
            }
            TKind::Arith(a, b) | TKind::Rel(a, b) | TKind::Bin(a, b) | TKind::Op(_, a, b) => {
                let ops: &[BinOp] = match &e.kind {
                    TKind::Arith(..) => ARITH,
                    TKind::Rel(..) => REL,
                    TKind::Bin(..) => ALL_OPS,
                    TKind::Op(op, ..) => std::slice::from_ref(op),
                    _ => unreachable!(),
                };
                let (ca, cb) = (self.cands(a), self.cands(b));
                self.combine(ops, &ca, &cb, &mut out);
            }
            TKind::Not(a) => {
                for c in self.cands(a).iter() {
                    let vals = c
                        .vals
                        .iter()
                        .map(|v| apply_un(UnOp::Not, *v, self.bits))
                        .collect();
                    out.push(Cand {
                        vals,
                        expr: Expr::un(UnOp::Not, c.expr.clone()),
                    });
                }
            }
            TKind::Pred(a, b) => {
                let (ca, cb) = (self.cands(a), self.cands(b));
                for x in ca.iter() {
                    for y in cb.iter() {
                        let (ma, mb) = (self.truth(&x.vals), self.truth(&y.vals));
                        for (f, m) in pred_masks(ma, mb, self.full).into_iter().enumerate() {
                            let vals = (0..self.n).map(|s| ((m >> s) & 1) as u64).collect();
                            out.push(Cand {
                                vals,
                                expr: pred_expr(f, x.expr.clone(), y.expr.clone()),
                            });
                        }
                    }
                }
            }
            TKind::Ternary(c, a, b) => {
                let (cc, ca, cb) = (self.cands(c), self.cands(a), self.cands(b));
                'outer: for z in cc.iter() {
                    for x in ca.iter() {
                        for y in cb.iter() {
                            let vals = (0..self.n)
                                .map(|s| if z.vals[s] != 0 { x.vals[s] } else { y.vals[s] })
                                .collect();
                            out.push(Cand {
                                vals,
                                expr: Expr::ite(z.expr.clone(), x.expr.clone(), y.expr.clone()),
                            });
                            if out.len() > MAX_CANDIDATES {
                                break 'outer;
                            }
                        }
                    }
                }
            }
        }
        let mut seen: HashSet<Rc<[u64]>> = HashSet::new();
        out.retain(|c| seen.insert(c.vals.clone()));
        let out = Rc::new(out);
        if !dynamic {
            self.cands_cache.insert(e.id, out.clone());
        }
        out
    }

    /// Distinct truth sets of a condition.
    fn conds(&mut self, e: &TExpr) -> Rc<Vec<(u128, Expr)>> {
        let dynamic = e.uses_let();
        if !dynamic {
            if let Some(c) = self.cond_cache.get(&e.id) {
                return c.clone();
            }
        }
        if let TKind::Pred(a, b) = &e.kind {
            if let (TKind::Let(na), TKind::Let(nb)) = (&a.kind, &b.kind) {
                let (la, lb) = (&self.lets[na], &self.lets[nb]);
                let list = pred_masks(la.mask, lb.mask, self.full)
                    .into_iter()
                    .enumerate()
                    .map(|(f, m)| (m, pred_expr(f, la.cand.expr.clone(), lb.cand.expr.clone())))
                    .collect();
                return Rc::new(list);
            }
        }
        let mut seen = HashSet::new();
        let list: Vec<(u128, Expr)> = self
            .cands(e)
            .iter()
            .filter_map(|c| {
                let m = self.truth(&c.vals);
                seen.insert(m).then(|| (m, c.expr.clone()))
            })
            .collect();
        let list = Rc::new(list);
        if !dynamic {
            self.cond_cache.insert(e.id, list.clone());
        }
        list
    }

    /// Maximal agreement sets of `e`'s candidates with register `r`'s target.
    fn antichain(&mut self, e: &TExpr, r: usize) -> Rc<Vec<(u128, Expr)>> {
        let dynamic = e.uses_let();
        if !dynamic {
            if let Some(a) = self.anti_cache.get(&(e.id, r)) {
                return a.clone();
            }
        }
        let target = self.targets[r].clone().unwrap_or_default();
        let cands = self.cands(e);
        let mut masks: Vec<(u128, usize)> = cands
            .iter()
            .enumerate()
            .map(|(i, c)| (agreement(&c.vals, &target, self.reg_mask[r]), i))
            .collect();
        masks.sort_by_key(|(m, _)| std::cmp::Reverse(m.count_ones()));
        let mut keep: Vec<(u128, Expr)> = Vec::new();
        for (m, i) in masks {
            if !keep.iter().any(|(k, _)| m & !k == 0) {
                keep.push((m, cands[i].expr.clone()));
            }
        }
        let keep = Rc::new(keep);
        if !dynamic {
            self.anti_cache.insert((e.id, r), keep.clone());
        }
        keep
    }

    fn intervals(
        &mut self,
        id: usize,
        x: &TExpr,
        y: &TExpr,
        r: usize,
        d: u128,
    ) -> Rc<Vec<Interval>> {
        if let Some(v) = self.interval_cache.get(&(id, r, d)) {
            return v.clone();
        }
        let (ax, ay) = (self.antichain(x, r), self.antichain(y, r));
        let mut raw: Vec<(u128, u128, usize, usize)> = Vec::new();
        for (i, (a, _)) in ax.iter().enumerate() {
            for (j, (b, _)) in ay.iter().enumerate() {
                raw.push((d & !b, d & a, i, j));
            }
        }
        raw.sort_by_key(|(lo, hi, _, _)| (lo.count_ones(), std::cmp::Reverse(hi.count_ones())));
        let mut keep: Vec<(u128, u128, usize, usize)> = Vec::new();
        for iv in raw {
            // lo must fit under hi once restricted to d
            if iv.0 & !iv.1 != 0 {
                continue;
            }
            if !keep.iter().any(|k| k.0 & !iv.0 == 0 && iv.1 & !k.1 == 0) {
                keep.push(iv);
            }
        }
        let out: Vec<Interval> = keep
            .into_iter()
            .map(|(lo, hi, i, j)| Interval {
                lo,
                hi,
                x: ax[i].1.clone(),
                y: ay[j].1.clone(),
            })
            .collect();
        let out = Rc::new(out);
        self.interval_cache.insert((id, r, d), out.clone());
        out
    }

    fn default_expr(&mut self, e: &TExpr) -> Option<Expr> {
        match &e.kind {
            TKind::Ternary(c, a, b) => Some(Expr::ite(
                self.default_expr(c)?,
                self.default_expr(a)?,
                self.default_expr(b)?,
            )),
            _ => self.cands(e).first().map(|c| c.expr.clone()),
        }
    }

    fn feas_expr(&mut self, e: &TExpr, r: usize, d: u128) -> Option<Expr> {
        if d == 0 {
            return self.default_expr(e);
        }
        if let TKind::Ternary(c, x, y) = &e.kind {
            if !x.uses_let() && !y.uses_let() {
                let ivs = self.intervals(e.id, x, y, r, d);
                if ivs.is_empty() {
                    return None;
                }
                for (m, ce) in self.conds(c).iter() {
                    let md = m & d;
                    if let Some(iv) = ivs
                        .iter()
                        .find(|iv| md & iv.lo == iv.lo && md & !iv.hi == 0)
                    {
                        return Some(Expr::ite(ce.clone(), iv.x.clone(), iv.y.clone()));
                    }
                }
                return None;
            }
            for (m, ce) in self.conds(c).iter() {
                let Some(a) = self.feas_expr(x, r, d & m) else {
                    continue;
                };
                let Some(b) = self.feas_expr(y, r, d & !m) else {
                    continue;
                };
                return Some(Expr::ite(ce.clone(), a, b));
            }
            return None;
        }
        self.antichain(e, r)
            .iter()
            .find(|(a, _)| d & !a == 0)
            .map(|(_, x)| x.clone())
    }

    fn feas_block(&mut self, b: &[TStmt], d: u128) -> Option<Vec<CStmt>> {
        if let [TStmt::If(c, t, e)] = b {
            if let Some(r) = self.if_memo.get(&(c.id, d)) {
                return r.clone();
            }
            let mut res = None;
            let mut seen: HashSet<u128> = HashSet::new();
            for (m, ce) in self.conds(c).iter() {
                if self.budget == 0 {
                    break;
                }
                self.budget -= 1;
                if !seen.insert(d & m) {
                    continue;
                }
                let Some(tt) = self.feas_block(t, d & m) else {
                    continue;
                };
                let Some(ee) = self.feas_block(e, d & !m) else {
                    continue;
                };
                res = Some(vec![CStmt::If(ce.clone(), tt, ee)]);
                break;
            }
            self.if_memo.insert((c.id, d), res.clone());
            return res;
        }
        let mut out = Vec::new();
        for r in 0..self.g.registers {
            if self.targets[r].is_none() {
                continue;
            }
            let assign = b.iter().find_map(|s| match s {
                TStmt::Assign(x, e) if *x == r => Some(e),
                _ => None,
            });
            match assign {
                None if d & !self.pre_agree[r] != 0 => return None,
                None => {}
                Some(e) => out.push(CStmt::Assign(r, self.feas_expr(e, r, d)?)),
            }
        }
        Some(out)
    }
}

fn agreement(vals: &[u64], target: &[u64], m: u64) -> u128 {
    vals.iter()
        .zip(target)
        .enumerate()
        .fold(
            0u128,
            |acc, (s, (v, t))| if v & m == *t { acc | (1u128 << s) } else { acc },
        )
}

fn let_uses<'e>(
    e: &'e TExpr,
    boolean_ctx: bool,
    out: &mut Vec<(&'e str, bool, Option<(&'e str, &'e str)>)>,
) {
    match &e.kind {
        TKind::Let(n) => out.push((n, boolean_ctx, None)),
        TKind::Pred(a, b) => {
            if let (TKind::Let(x), TKind::Let(y)) = (&a.kind, &b.kind) {
                out.push((x, true, Some((x, y))));
                out.push((y, true, Some((x, y))));
            } else {
                let_uses(a, true, out);
                let_uses(b, true, out);
            }
        }
        TKind::Not(a) => let_uses(a, true, out),
        TKind::Op(op, a, b) if matches!(op, BinOp::And | BinOp::Or) => {
            let_uses(a, true, out);
            let_uses(b, true, out);
        }
        TKind::Ternary(c, a, b) => {
            let_uses(c, true, out);
            let_uses(a, false, out);
            let_uses(b, false, out);
        }
        _ => {
            for c in e.children() {
                let_uses(c, false, out);
            }
        }
    }
}

fn all_let_uses(g: &StatefulGrammar) -> Vec<(&str, bool, Option<(&str, &str)>)> {
    fn block<'g>(b: &'g [TStmt], out: &mut Vec<(&'g str, bool, Option<(&'g str, &'g str)>)>) {
        for s in b {
            match s {
                TStmt::Let(_, e) | TStmt::Assign(_, e) => let_uses(e, false, out),
                TStmt::If(c, t, e) => {
                    let_uses(c, true, out);
                    block(t, out);
                    block(e, out);
                }
            }
        }
    }
    let mut out = Vec::new();
    for (_, e) in &g.lets {
        let_uses(e, false, &mut out);
    }
    block(&g.body, &mut out);
    out
}

/// Whether only the truth value of a let matters.
fn let_is_boolean(g: &StatefulGrammar, name: &str) -> bool {
    all_let_uses(g).iter().filter(|u| u.0 == name).all(|u| u.1)
}

/// Whether the two lets are only ever used together as `pred(a, b)`, whose
/// forms are closed under swapping the arguments.
fn lets_symmetric(g: &StatefulGrammar) -> bool {
    let (a, b) = (g.lets[0].0.as_str(), g.lets[1].0.as_str());
    all_let_uses(g)
        .iter()
        .all(|u| matches!(u.2, Some((x, y)) if (x == a && y == b) || (x == b && y == a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::BinOp::*;
    use crate::synthesis::grammar::{builtin, AluGrammar};

    fn grammar(name: &str) -> StatefulGrammar {
        match builtin(name).unwrap() {
            AluGrammar::Stateful(g) => g,
            _ => panic!(),
        }
    }

    fn a(t: &str, e: Expr) -> Assign {
        Assign {
            target: t.into(),
            value: e,
        }
    }

    fn v(n: &str) -> Expr {
        Expr::var(n)
    }

    fn c(x: u64) -> Expr {
        Expr::Const(x)
    }

    fn query(
        stmts: &[Assign],
        state: &[&str],
        inputs: &[&str],
        output: Option<&str>,
        g: &str,
    ) -> Option<StatefulConfig> {
        let state: Vec<String> = state.iter().map(|s| s.to_string()).collect();
        let inputs: Vec<String> = inputs.iter().map(|s| s.to_string()).collect();
        let width = |_: &str| 4;
        let spec = StatefulSpec {
            stmts,
            state_vars: &state,
            inputs: &inputs,
            output,
            width: &width,
            bits: 4,
        };
        query_stateful(&spec, &grammar(g))
    }

    #[test]
    fn raw_accumulates() {
        let s = [a("s@post", Expr::bin(Add, v("s@pre"), v("pkt.x")))];
        assert!(query(&s, &["s"], &["pkt.x"], None, "banzai-raw").is_some());
    }

    #[test]
    fn raw_cannot_branch() {
        let s = [a(
            "s@post",
            Expr::ite(v("pkt.c"), Expr::bin(Add, v("s@pre"), c(1)), v("s@pre")),
        )];
        assert!(query(&s, &["s"], &["pkt.c"], None, "banzai-raw").is_none());
        assert!(query(&s, &["s"], &["pkt.c"], None, "banzai-if-else-raw").is_some());
    }

    #[test]
    fn sub_cannot_multiply() {
        let s = [a(
            "s@post",
            Expr::ite(
                v("pkt.c"),
                Expr::bin(Add, v("s@pre"), c(1)),
                Expr::bin(Mul, v("s@pre"), c(3)),
            ),
        )];
        assert!(query(&s, &["s"], &["pkt.c"], None, "banzai-sub").is_none());
    }

    #[test]
    fn blue_merged_fits_tofino() {
        let s = [
            a(
                "__br0#1",
                Expr::bin(Gt, Expr::bin(Sub, v("pkt.now"), c(10)), v("lu@pre")),
            ),
            a(
                "pm@post",
                Expr::ite(v("__br0#1"), Expr::bin(Sub, v("pm@pre"), c(1)), v("pm@pre")),
            ),
            a(
                "lu@post",
                Expr::ite(v("__br0#1"), v("pkt.now"), v("lu@pre")),
            ),
        ];
        let cfg = query(&s, &["lu", "pm"], &["pkt.now"], None, "tofino").expect("fits");
        assert_eq!(
            cfg.bindings
                .iter()
                .filter(|b| matches!(b, RegBinding::State(_)))
                .count(),
            2
        );
    }

    #[test]
    fn plain_output_uses_scratch_register() {
        let s = [
            a("__br0#1", Expr::bin(Eq, v("s@pre"), c(9))),
            a(
                "s@post",
                Expr::ite(v("__br0#1"), c(0), Expr::bin(Add, v("s@pre"), c(1))),
            ),
            a("pkt.f#1", v("__br0#1")),
        ];
        let cfg = query(&s, &["s"], &[], Some("pkt.f#1"), "tofino").expect("fits");
        assert!(cfg.bindings.contains(&RegBinding::Scratch));
        assert!(query(&s, &["s"], &[], Some("pkt.f#1"), "banzai-if-else-raw").is_none());
    }

    #[test]
    fn flank_output_selects_register() {
        let s = [a("s@post", Expr::bin(Add, v("s@pre"), v("pkt.x")))];
        let cfg = query(&s, &["s"], &["pkt.x"], Some("s@pre"), "banzai-raw").unwrap();
        assert_eq!(cfg.output, Some(OutputSel::Pre(0)));
    }

    #[test]
    fn too_many_inputs_is_rejected_early() {
        let s = [a(
            "s@post",
            Expr::bin(Add, Expr::bin(Add, v("pkt.a"), v("pkt.b")), v("pkt.c")),
        )];
        assert!(query(&s, &["s"], &["pkt.a", "pkt.b", "pkt.c"], None, "tofino").is_none());
    }
}
