use crate::ir::{Expr, Stmt, StmtKind};

use super::Assign;

/// Ordered symbolic environment: variable to its value in terms of the
/// names visible before the enclosing top-level `if`.
#[derive(Clone, Default)]
struct Env(Vec<(String, Expr)>);

impl Env {
    fn get(&self, v: &str) -> Option<&Expr> {
        self.0.iter().find(|(n, _)| n == v).map(|(_, e)| e)
    }

    fn set(&mut self, v: &str, e: Expr) {
        match self.0.iter_mut().find(|(n, _)| n == v) {
            Some(slot) => slot.1 = e,
            None => self.0.push((v.to_string(), e)),
        }
    }

    fn subst(&self, e: &Expr) -> Expr {
        e.substitute(&|v| self.get(v).cloned())
    }
}

fn assigned_vars(stmts: &[Stmt], out: &mut Vec<String>) {
    for s in stmts {
        match &s.kind {
            StmtKind::Assign { target, .. } => {
                if !out.contains(target) {
                    out.push(target.clone());
                }
            }
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                assigned_vars(then_body, out);
                assigned_vars(else_body, out);
            }
            StmtKind::Apply { .. } => {}
        }
    }
}

/// Flattens an action body into straight-line assignments with conditional
/// expressions.
pub fn remove_branches(body: &[Stmt]) -> Vec<Assign> {
    let mut r = Remover::default();
    r.seq(body);
    r.out
}

#[derive(Default)]
struct Remover {
    out: Vec<Assign>,
    next_br: usize,
    next_old: usize,
}

impl Remover {
    fn emit(&mut self, target: String, value: Expr) {
        self.out.push(Assign { target, value });
    }

    fn fresh_br(&mut self, cond: Expr) -> Expr {
        let name = format!("__br{}", self.next_br);
        self.next_br += 1;
        self.emit(name.clone(), cond);
        Expr::Var(name)
    }

    fn seq(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            match &s.kind {
                StmtKind::Assign { target, value } => self.emit(target.clone(), value.clone()),
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                } => self.top_if(cond, then_body, else_body),
                StmtKind::Apply { .. } => {}
            }
        }
    }

    fn top_if(&mut self, cond: &Expr, then_body: &[Stmt], else_body: &[Stmt]) {
        let mut assigned = Vec::new();
        assigned_vars(then_body, &mut assigned);
        assigned_vars(else_body, &mut assigned);
        let c = match cond {
            Expr::Var(v) if !assigned.contains(v) => cond.clone(),
            _ => self.fresh_br(cond.clone()),
        };
        let mut env_t = Env::default();
        self.sym(then_body, &mut env_t);
        let mut env_e = Env::default();
        self.sym(else_body, &mut env_e);

        let mut merged: Vec<(String, Expr)> = Vec::new();
        for (x, _) in env_t.0.iter().chain(env_e.0.iter()) {
            if merged.iter().any(|(n, _)| n == x) {
                continue;
            }
            let pick = |env: &Env| env.get(x).cloned().unwrap_or_else(|| Expr::var(x.clone()));
            merged.push((x.clone(), Expr::ite(c.clone(), pick(&env_t), pick(&env_e))));
        }
        // A merged value that reads a variable assigned by an earlier merge
        // must see the value from before the `if`.
        for i in 0..merged.len() {
            let x = merged[i].0.clone();
            if merged[i + 1..].iter().any(|(_, e)| e.reads(&x)) {
                let old = format!("__old{}", self.next_old);
                self.next_old += 1;
                self.emit(old.clone(), Expr::var(x.clone()));
                for (_, e) in &mut merged[i + 1..] {
                    e.rename(&mut |v| (v == x).then(|| old.clone()));
                }
            }
        }
        for (x, e) in merged {
            self.emit(x, e);
        }
    }

    fn sym(&mut self, stmts: &[Stmt], env: &mut Env) {
        for s in stmts {
            match &s.kind {
                StmtKind::Assign { target, value } => {
                    let v = env.subst(value);
                    env.set(target, v);
                }
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    let c = self.fresh_br(env.subst(cond));
                    let mut env_t = env.clone();
                    self.sym(then_body, &mut env_t);
                    let mut env_e = env.clone();
                    self.sym(else_body, &mut env_e);
                    let mut names: Vec<String> = Vec::new();
                    for (x, _) in env_t.0.iter().chain(env_e.0.iter()) {
                        if !names.contains(x) {
                            names.push(x.clone());
                        }
                    }
                    for x in names {
                        let pick =
                            |e: &Env| e.get(&x).cloned().unwrap_or_else(|| Expr::var(x.clone()));
                        let (a, b) = (pick(&env_t), pick(&env_e));
                        env.set(
                            &x,
                            if a == b {
                                a
                            } else {
                                Expr::ite(c.clone(), a, b)
                            },
                        );
                    }
                }
                StmtKind::Apply { .. } => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse;

    fn flat(body: &str) -> Vec<String> {
        let src = format!(
            "header pkt {{ bit<8> a; bit<8> b; bit<8> c; }} register bit<8> s = 0; \
             action x() {{ {body} }} table t {{ actions = {{ x; }} }} control c {{ t.apply(); }}"
        );
        let p = parse(&src).unwrap();
        remove_branches(&p.actions[0].body)
            .iter()
            .map(|a| a.to_string())
            .collect()
    }

    #[test]
    fn single_if_merges_at_join() {
        assert_eq!(
            flat("if (pkt.a > 1) { s = s + 1; pkt.b = 2; }"),
            vec![
                "__br0 = pkt.a > 1;",
                "s = __br0 ? s + 1 : s;",
                "pkt.b = __br0 ? 2 : pkt.b;"
            ]
        );
    }

    #[test]
    fn swap_snapshots_old_value() {
        assert_eq!(
            flat("if (pkt.c == 1) { pkt.a = 1; } else { pkt.b = pkt.a; }"),
            vec![
                "__br0 = pkt.c == 1;",
                "__old0 = pkt.a;",
                "pkt.a = __br0 ? 1 : pkt.a;",
                "pkt.b = __br0 ? pkt.b : __old0;",
            ]
        );
    }

    #[test]
    fn nested_if_gets_its_own_temp() {
        assert_eq!(
            flat("if (pkt.a == 0) { if (pkt.b == 9) { s = 1; } pkt.c = s; }"),
            vec![
                "__br0 = pkt.a == 0;",
                "__br1 = pkt.b == 9;",
                "__old0 = s;",
                "s = __br0 ? (__br1 ? 1 : s) : s;",
                "pkt.c = __br0 ? (__br1 ? 1 : __old0) : pkt.c;",
            ]
        );
    }
}
