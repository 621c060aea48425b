//! Word-level semantics shared by every interpreter in the crate.
//!
//! All arithmetic happens on unsigned words of `bits` width and wraps.
//! Comparisons and logical operators produce 0 or 1. Stores are masked to
//! the destination's declared width by the caller.

use super::ast::{BinOp, Expr, UnOp};

pub fn mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

pub fn apply_bin(op: BinOp, a: u64, b: u64, bits: u32) -> u64 {
    let m = mask(bits);
    let (a, b) = (a & m, b & m);
    let r = match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::BitAnd => a & b,
        BinOp::BitOr => a | b,
        BinOp::BitXor => a ^ b,
        BinOp::Shl => {
            if b >= bits as u64 {
                0
            } else {
                a << b
            }
        }
        BinOp::Shr => {
            if b >= bits as u64 {
                0
            } else {
                a >> b
            }
        }
        BinOp::Eq => (a == b) as u64,
        BinOp::Ne => (a != b) as u64,
        BinOp::Lt => (a < b) as u64,
        BinOp::Le => (a <= b) as u64,
        BinOp::Gt => (a > b) as u64,
        BinOp::Ge => (a >= b) as u64,
        BinOp::And => (a != 0 && b != 0) as u64,
        BinOp::Or => (a != 0 || b != 0) as u64,
    };
    r & m
}

pub fn apply_un(op: UnOp, a: u64, bits: u32) -> u64 {
    let m = mask(bits);
    match op {
        UnOp::Not => (a & m == 0) as u64,
        UnOp::BitNot => !a & m,
        UnOp::Neg => a.wrapping_neg() & m,
    }
}

/// Evaluates `e`, returning the name of the first unbound variable on failure.
pub fn eval<F>(e: &Expr, bits: u32, lookup: &mut F) -> Result<u64, String>
where
    F: FnMut(&str) -> Option<u64>,
{
    Ok(match e {
        Expr::Const(c) => c & mask(bits),
        Expr::Var(v) => lookup(v).ok_or_else(|| v.clone())? & mask(bits),
        Expr::Unary(op, a) => apply_un(*op, eval(a, bits, lookup)?, bits),
        Expr::Binary(op, a, b) => {
            let x = eval(a, bits, lookup)?;
            let y = eval(b, bits, lookup)?;
            apply_bin(*op, x, y, bits)
        }
        Expr::Ternary(c, a, b) => {
            if eval(c, bits, lookup)? != 0 {
                eval(a, bits, lookup)?
            } else {
                eval(b, bits, lookup)?
            }
        }
    })
}
