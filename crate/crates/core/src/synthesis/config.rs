use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::ir::eval::{eval, mask};
use crate::ir::{expr_to_string, Expr};

/// A filled-in stateful template. Expressions read registers as `reg0`,
/// `reg1`, ..., let names, and the ALU's input names. Every read sees the
/// values from before the packet; a register without an update keeps its
/// value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum CStmt {
    Let(String, Expr),
    Assign(usize, Expr),
    If(Expr, Vec<CStmt>, Vec<CStmt>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum RegBinding {
    State(String),
    /// Holds a computed output that is not a state value.
    Scratch,
    Unused,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OutputSel {
    Pre(usize),
    Post(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatefulConfig {
    pub grammar: String,
    pub body: Vec<CStmt>,
    pub bindings: Vec<RegBinding>,
    pub reg_widths: Vec<u32>,
    pub inputs: Vec<String>,
    pub output: Option<OutputSel>,
}

impl StatefulConfig {
    /// Runs the ALU: returns the new register values and the output.
    pub fn exec(
        &self,
        input: &dyn Fn(&str) -> u64,
        regs: &[u64],
        bits: u32,
    ) -> (Vec<u64>, Option<u64>) {
        let mut lets: BTreeMap<&str, u64> = BTreeMap::new();
        let mut post: Vec<u64> = regs.to_vec();
        exec_block(&self.body, input, regs, &mut lets, &mut post, bits);
        for (p, w) in post.iter_mut().zip(&self.reg_widths) {
            *p &= mask(*w);
        }
        let out = self.output.map(|o| match o {
            OutputSel::Pre(r) => regs[r],
            OutputSel::Post(r) => post[r],
        });
        (post, out)
    }

    pub fn rename_inputs(&mut self, f: &dyn Fn(&str) -> Option<String>) {
        for i in &mut self.inputs {
            if let Some(n) = f(i) {
                *i = n;
            }
        }
        fn walk(b: &mut [CStmt], f: &dyn Fn(&str) -> Option<String>) {
            for s in b {
                match s {
                    CStmt::Let(_, e) | CStmt::Assign(_, e) => e.rename(&mut |v| f(v)),
                    CStmt::If(c, t, e) => {
                        c.rename(&mut |v| f(v));
                        walk(t, f);
                        walk(e, f);
                    }
                }
            }
        }
        walk(&mut self.body, f);
    }

    pub fn register_of(&self, state: &str) -> Option<usize> {
        self.bindings
            .iter()
            .position(|b| matches!(b, RegBinding::State(s) if s == state))
    }
}

fn exec_block<'a>(
    b: &'a [CStmt],
    input: &dyn Fn(&str) -> u64,
    regs: &[u64],
    lets: &mut BTreeMap<&'a str, u64>,
    post: &mut [u64],
    bits: u32,
) {
    for s in b {
        let read = |e: &Expr, lets: &BTreeMap<&str, u64>| {
            eval(e, bits, &mut |v| {
                if let Some(x) = lets.get(v) {
                    return Some(*x);
                }
                match v.strip_prefix("reg").and_then(|n| n.parse::<usize>().ok()) {
                    Some(r) if !v.contains('.') => regs.get(r).copied(),
                    _ => Some(input(v)),
                }
            })
            .unwrap_or(0)
        };
        match s {
            CStmt::Let(n, e) => {
                let v = read(e, lets);
                lets.insert(n, v);
            }
            CStmt::Assign(r, e) => post[*r] = read(e, lets),
            CStmt::If(c, t, e) => {
                if read(c, lets) != 0 {
                    exec_block(t, input, regs, lets, post, bits)
                } else {
                    exec_block(e, input, regs, lets, post, bits)
                }
            }
        }
    }
}

fn fmt_block(f: &mut fmt::Formatter<'_>, b: &[CStmt], indent: usize) -> fmt::Result {
    let pad = "    ".repeat(indent);
    for s in b {
        match s {
            CStmt::Let(n, e) => writeln!(f, "{pad}let {n} = {};", expr_to_string(e))?,
            CStmt::Assign(r, e) => writeln!(f, "{pad}reg{r} = {};", expr_to_string(e))?,
            CStmt::If(c, t, e) => {
                writeln!(f, "{pad}if ({}) {{", expr_to_string(c))?;
                fmt_block(f, t, indent + 1)?;
                if e.is_empty() {
                    writeln!(f, "{pad}}}")?;
                } else {
                    writeln!(f, "{pad}}} else {{")?;
                    fmt_block(f, e, indent + 1)?;
                    writeln!(f, "{pad}}}")?;
                }
            }
        }
    }
    Ok(())
}

impl fmt::Display for StatefulConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let regs: Vec<String> = self
            .bindings
            .iter()
            .enumerate()
            .map(|(i, b)| match b {
                RegBinding::State(s) => format!("reg{i}={s}"),
                RegBinding::Scratch => format!("reg{i}=scratch"),
                RegBinding::Unused => format!("reg{i}=unused"),
            })
            .collect();
        writeln!(
            f,
            "{} [{}] in ({})",
            self.grammar,
            regs.join(", "),
            self.inputs.join(", ")
        )?;
        fmt_block(f, &self.body, 1)?;
        match self.output {
            Some(OutputSel::Pre(r)) => write!(f, "    out = reg{r} (before update)"),
            Some(OutputSel::Post(r)) => write!(f, "    out = reg{r} (after update)"),
            None => write!(f, "    no output"),
        }
    }
}

/// One stateless ALU: a single operation over input names and constants.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatelessConfig {
    pub grammar: String,
    pub expr: Expr,
}

impl StatelessConfig {
    pub fn exec(&self, input: &dyn Fn(&str) -> u64, bits: u32) -> u64 {
        eval(&self.expr, bits, &mut |v| Some(input(v))).unwrap_or(0)
    }
}

impl fmt::Display for StatelessConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.grammar, expr_to_string(&self.expr))
    }
}
