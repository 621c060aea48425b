use crate::ir::Expr;

use super::Assign;

pub fn pre(s: &str) -> String {
    format!("{s}@pre")
}

pub fn post(s: &str) -> String {
    format!("{s}@post")
}

/// Base name of an SSA or flank name: `s@pre` and `x#3` map to `s` and `x`.
pub fn base_name(n: &str) -> &str {
    let n = n.split('@').next().unwrap_or(n);
    n.split('#').next().unwrap_or(n)
}

/// Rewrites state accesses into read and write flanks. Reads before the first
/// write see `s@pre`, the last write defines `s@post`, and a state variable
/// that is only read gets `s@post = s@pre` appended.
pub fn insert_flanks(code: &[Assign], state_vars: &[String]) -> Vec<Assign> {
    let mut out: Vec<Assign> = code.to_vec();
    for s in state_vars {
        let first_write = code.iter().position(|a| &a.target == s);
        let last_write = code.iter().rposition(|a| &a.target == s);
        let touched = first_write.is_some() || code.iter().any(|a| a.value.reads(s));
        if !touched {
            continue;
        }
        for (i, a) in out.iter_mut().enumerate() {
            let read_name = match (first_write, last_write) {
                (Some(f), _) if i <= f => pre(s),
                (Some(_), Some(l)) if i > l => post(s),
                (None, _) => pre(s),
                _ => s.clone(),
            };
            a.value.rename(&mut |v| (v == s).then(|| read_name.clone()));
            if Some(i) == last_write {
                a.target = post(s);
            }
        }
        if first_write.is_none() {
            out.push(Assign {
                target: post(s),
                value: Expr::var(pre(s)),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::BinOp;

    fn a(t: &str, e: Expr) -> Assign {
        Assign {
            target: t.into(),
            value: e,
        }
    }

    #[test]
    fn three_flank_positions() {
        let s = || Expr::var("s");
        let code = vec![
            a("s", Expr::bin(BinOp::Add, s(), Expr::Const(1))),
            a("pkt.x", s()),
            a("s", Expr::bin(BinOp::Mul, s(), Expr::Const(2))),
            a("pkt.y", s()),
        ];
        let out: Vec<String> = insert_flanks(&code, &["s".into()])
            .iter()
            .map(|x| x.to_string())
            .collect();
        assert_eq!(
            out,
            vec![
                "s = s@pre + 1;",
                "pkt.x = s;",
                "s@post = s * 2;",
                "pkt.y = s@post;"
            ]
        );
    }

    #[test]
    fn read_only_state_is_carried() {
        let out = insert_flanks(&[a("pkt.x", Expr::var("s"))], &["s".into()]);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].value, Expr::var("s@pre"));
        assert_eq!(out[1].to_string(), "s@post = s@pre;");
    }

    #[test]
    fn base_names() {
        assert_eq!(base_name("s@pre"), "s");
        assert_eq!(base_name("pkt.a#2"), "pkt.a");
        assert_eq!(base_name("__br0"), "__br0");
    }
}
