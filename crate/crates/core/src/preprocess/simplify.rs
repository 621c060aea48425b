use std::collections::BTreeSet;

use crate::ir::eval::{apply_bin, apply_un, mask};
use crate::ir::{BinOp, Expr, UnOp};

use super::Assign;

/// Folding that gives the same result at every word width of at least `bits`.
fn fold_bin(op: BinOp, a: u64, b: u64, bits: u32) -> Option<u64> {
    use BinOp::*;
    match op {
        Add | Sub | Mul | BitAnd | BitOr | BitXor => Some(apply_bin(op, a, b, 32)),
        _ if a <= mask(bits) && b <= mask(bits) => Some(apply_bin(op, a, b, bits)),
        _ => None,
    }
}

fn simplify_expr(e: &Expr, bits: u32, boolean: &dyn Fn(&Expr) -> bool) -> Expr {
    use BinOp::*;
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Unary(op, a) => {
            let a = simplify_expr(a, bits, boolean);
            match (op, &a) {
                (UnOp::BitNot | UnOp::Neg, Expr::Const(c)) => Expr::Const(apply_un(*op, *c, 32)),
                (UnOp::Not, Expr::Const(c)) if *c <= mask(bits) => {
                    Expr::Const(apply_un(*op, *c, bits))
                }
                _ => Expr::un(*op, a),
            }
        }
        Expr::Binary(op, a, b) => {
            let a = simplify_expr(a, bits, boolean);
            let b = simplify_expr(b, bits, boolean);
            if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
                if let Some(v) = fold_bin(*op, *x, *y, bits) {
                    return Expr::Const(v);
                }
            }
            match (op, &a, &b) {
                (Add | BitOr | BitXor, x, Expr::Const(0))
                | (Add | BitOr | BitXor, Expr::Const(0), x) => x.clone(),
                (Sub | Shl | Shr, x, Expr::Const(0)) => x.clone(),
                (Mul, x, Expr::Const(1)) | (Mul, Expr::Const(1), x) => x.clone(),
                (Mul | BitAnd, _, Expr::Const(0)) | (Mul | BitAnd, Expr::Const(0), _) => {
                    Expr::Const(0)
                }
                _ => Expr::bin(*op, a, b),
            }
        }
        Expr::Ternary(c, x, y) => {
            let c = simplify_expr(c, bits, boolean);
            let x = simplify_expr(x, bits, boolean);
            let y = simplify_expr(y, bits, boolean);
            match (&c, &x, &y) {
                (Expr::Const(k), _, _) if *k <= mask(bits) => {
                    if *k != 0 {
                        x
                    } else {
                        y
                    }
                }
                _ if x == y => x,
                (b, Expr::Const(1), Expr::Const(0)) if boolean(b) => c,
                (b, Expr::Const(0), Expr::Const(1)) if boolean(b) => Expr::un(UnOp::Not, c),
                _ => Expr::ite(c, x, y),
            }
        }
    }
}

/// Constant folding, algebraic identities, copy propagation and dead code
/// elimination, repeated until nothing changes. `keep` names outputs that
/// must survive; flanks (`@` names) always do.
pub fn simplify(
    code: &[Assign],
    keep: &BTreeSet<String>,
    width_of: &dyn Fn(&str) -> Option<u32>,
    bits: u32,
) -> Vec<Assign> {
    let mut code = code.to_vec();
    loop {
        let before = code.clone();

        let mut boolean_names: BTreeSet<String> = BTreeSet::new();
        for a in code.iter_mut() {
            let is_bool = |e: &Expr| match e {
                Expr::Var(v) => boolean_names.contains(v) || width_of(v) == Some(1),
                other => other.is_boolean(),
            };
            a.value = simplify_expr(&a.value, bits, &is_bool);
            if is_bool(&a.value) {
                boolean_names.insert(a.target.clone());
            }
        }

        // Copy propagation: `x = y` lets later reads of x use y when storing
        // into x cannot truncate y.
        let width = |n: &str| -> u32 {
            match width_of(n) {
                Some(w) => w.min(bits),
                None if boolean_names.contains(n) => 1,
                None => bits,
            }
        };
        let mut i = 0;
        while i < code.len() {
            if let Expr::Var(y) = &code[i].value {
                let x = code[i].target.clone();
                let y = y.clone();
                if !keep.contains(&x) && !x.contains('@') && width(&y) <= width(&x) {
                    for a in &mut code[i + 1..] {
                        a.value.rename(&mut |v| (v == x).then(|| y.clone()));
                    }
                }
            }
            i += 1;
        }

        let mut live: BTreeSet<String> = BTreeSet::new();
        let mut kept: Vec<Assign> = Vec::new();
        for a in code.iter().rev() {
            if keep.contains(&a.target) || a.target.contains('@') || live.contains(&a.target) {
                live.extend(a.value.vars().into_iter().map(str::to_string));
                kept.push(a.clone());
            }
        }
        kept.reverse();
        code = kept;

        if code == before {
            return code;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(code: Vec<Assign>, keep: &[&str]) -> Vec<String> {
        let keep = keep.iter().map(|s| s.to_string()).collect();
        let widths = |n: &str| if n.starts_with("pkt.") { Some(8) } else { None };
        simplify(&code, &keep, &widths, 4)
            .iter()
            .map(|a| a.to_string())
            .collect()
    }

    fn a(t: &str, e: Expr) -> Assign {
        Assign {
            target: t.into(),
            value: e,
        }
    }

    #[test]
    fn folds_and_removes_dead_code() {
        let code = vec![
            a(
                "__t#1",
                Expr::bin(BinOp::Add, Expr::Const(2), Expr::Const(3)),
            ),
            a("__u#1", Expr::var("pkt.a")),
            a(
                "pkt.b#1",
                Expr::bin(BinOp::Mul, Expr::var("__u#1"), Expr::var("__t#1")),
            ),
        ];
        assert_eq!(
            run(code, &["pkt.b#1"]),
            vec!["__t#1 = 5;", "pkt.b#1 = pkt.a * __t#1;"]
        );
    }

    #[test]
    fn comparison_folding_respects_width() {
        let code = vec![
            a(
                "pkt.a#1",
                Expr::bin(BinOp::Gt, Expr::Const(3), Expr::Const(2)),
            ),
            a(
                "pkt.b#1",
                Expr::bin(BinOp::Gt, Expr::Const(17), Expr::Const(2)),
            ),
        ];
        assert_eq!(
            run(code, &["pkt.a#1", "pkt.b#1"]),
            vec!["pkt.a#1 = 1;", "pkt.b#1 = 17 > 2;"]
        );
    }

    #[test]
    fn boolean_select_collapses() {
        let code = vec![
            a(
                "__br0#1",
                Expr::bin(BinOp::Eq, Expr::var("s@pre"), Expr::Const(9)),
            ),
            a(
                "pkt.x#1",
                Expr::ite(Expr::var("__br0#1"), Expr::Const(1), Expr::Const(0)),
            ),
            a(
                "pkt.y#1",
                Expr::ite(Expr::var("__br0#1"), Expr::Const(0), Expr::Const(1)),
            ),
            a(
                "s@post",
                Expr::ite(Expr::var("__br0#1"), Expr::var("s@pre"), Expr::var("s@pre")),
            ),
        ];
        assert_eq!(
            run(code, &["pkt.x#1", "pkt.y#1"]),
            vec![
                "__br0#1 = s@pre == 9;",
                "pkt.x#1 = __br0#1;",
                "pkt.y#1 = !__br0#1;",
                "s@post = s@pre;"
            ]
        );
    }

    #[test]
    fn identities() {
        let x = || Expr::var("pkt.a");
        let code = vec![
            a(
                "pkt.b#1",
                Expr::bin(BinOp::Add, Expr::bin(BinOp::Mul, x(), Expr::Const(0)), x()),
            ),
            a("pkt.c#1", Expr::bin(BinOp::BitAnd, x(), Expr::Const(0))),
        ];
        assert_eq!(
            run(code, &["pkt.b#1", "pkt.c#1"]),
            vec!["pkt.b#1 = pkt.a;", "pkt.c#1 = 0;"]
        );
    }
}
