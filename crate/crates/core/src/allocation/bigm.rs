//! Integer program for the placement problem, with the propagation
//! biconditional linearized by the big-M method, written in LP file format.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::constraints::ConstraintSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// `sum(coef * var) sense rhs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(i64, String)>,
    pub sense: Sense,
    pub rhs: i64,
}

impl Row {
    fn new(name: impl Into<String>, terms: Vec<(i64, String)>, sense: Sense, rhs: i64) -> Self {
        Row {
            name: name.into(),
            terms,
            sense,
            rhs,
        }
    }

    pub fn holds(&self, val: &dyn Fn(&str) -> i64) -> bool {
        let lhs: i64 = self.terms.iter().map(|(c, v)| c * val(v)).sum();
        match self.sense {
            Sense::Le => lhs <= self.rhs,
            Sense::Ge => lhs >= self.rhs,
            Sense::Eq => lhs == self.rhs,
        }
    }
}

/// The six rows tying `lo`, `hi` and `prop` for ALU `u` at stage `s`.
/// Strict inequalities are tightened by one since every term is integral.
pub fn propagation_rows(u: &str, s: usize, m: i64) -> Vec<Row> {
    let s = s as i64;
    let beg = format!("beg_{u}");
    let end = format!("end_{u}");
    let lo = format!("lo_{u}_{s}");
    let hi = format!("hi_{u}_{s}");
    let prop = format!("prop_{u}_{s}");
    vec![
        // s - beg <= M lo
        Row::new(
            format!("lo1_{u}_{s}"),
            vec![(-1, beg.clone()), (-m, lo.clone())],
            Sense::Le,
            -s,
        ),
        // s - beg > -M (1 - lo)
        Row::new(
            format!("lo2_{u}_{s}"),
            vec![(-1, beg), (-m, lo.clone())],
            Sense::Ge,
            1 - m - s,
        ),
        // s - end < M (1 - hi)
        Row::new(
            format!("hi1_{u}_{s}"),
            vec![(-1, end.clone()), (m, hi.clone())],
            Sense::Le,
            m - 1 - s,
        ),
        // s - end >= -M hi
        Row::new(
            format!("hi2_{u}_{s}"),
            vec![(-1, end), (m, hi.clone())],
            Sense::Ge,
            -s,
        ),
        // lo + hi - 2 < M prop
        Row::new(
            format!("pr1_{u}_{s}"),
            vec![(1, lo.clone()), (1, hi.clone()), (-m, prop.clone())],
            Sense::Le,
            1,
        ),
        // lo + hi - 2 >= -M (1 - prop)
        Row::new(
            format!("pr2_{u}_{s}"),
            vec![(1, lo), (1, hi), (-m, prop)],
            Sense::Ge,
            2 - m,
        ),
    ]
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LpModel {
    pub rows: Vec<Row>,
    /// Variable name to inclusive bounds.
    pub bounds: BTreeMap<String, (i64, i64)>,
    pub binaries: Vec<String>,
    pub integers: Vec<String>,
}

impl LpModel {
    fn binary(&mut self, v: String) -> String {
        self.bounds.insert(v.clone(), (0, 1));
        self.binaries.push(v.clone());
        v
    }

    fn integer(&mut self, v: String, lo: i64, hi: i64) -> String {
        self.bounds.insert(v.clone(), (lo, hi));
        self.integers.push(v.clone());
        v
    }

    pub fn holds(&self, val: &dyn Fn(&str) -> i64) -> bool {
        self.bounds
            .iter()
            .all(|(v, (lo, hi))| (*lo..=*hi).contains(&val(v)))
            && self.rows.iter().all(|r| r.holds(val))
    }
}

/// The whole model: objective `min cost` over stage, match, propagation and
/// big-M indicator variables.
pub fn build_model(cs: &ConstraintSet) -> LpModel {
    let ns = cs.n_stages as i64;
    let m = ns + 5;
    let mut lp = LpModel::default();
    lp.integer("cost".into(), 0, ns);
    let stage = |u: usize| format!("stage_{u}");
    for u in 0..cs.alus.len() {
        let su = lp.integer(stage(u), 1, ns);
        let mut link = vec![(1, su.clone())];
        let mut one = Vec::new();
        for s in 1..=cs.n_stages {
            let b = lp.binary(format!("stage_{u}_{s}"));
            link.push((-(s as i64), b.clone()));
            one.push((1, b.clone()));
            let mts = format!("m_{}_{s}", cs.alus[u].part);
            lp.rows.push(Row::new(
                format!("pair_{u}_{s}"),
                vec![(1, b), (-1, mts)],
                Sense::Le,
                0,
            ));
        }
        lp.rows
            .push(Row::new(format!("link_{u}"), link, Sense::Eq, 0));
        lp.rows
            .push(Row::new(format!("one_{u}"), one, Sense::Eq, 1));
        lp.rows.push(Row::new(
            format!("cost_{u}"),
            vec![(1, "cost".into()), (-1, su)],
            Sense::Ge,
            0,
        ));
    }
    for p in 0..cs.parts.len() {
        for s in 1..=cs.n_stages {
            lp.binary(format!("m_{p}_{s}"));
        }
    }
    for s in 1..=cs.n_stages {
        let terms = (0..cs.parts.len())
            .map(|p| (1, format!("m_{p}_{s}")))
            .collect();
        lp.rows.push(Row::new(
            format!("tables_{s}"),
            terms,
            Sense::Le,
            cs.tables_per_stage as i64,
        ));
    }
    for (k, p) in cs.precedences.iter().enumerate() {
        let rhs = if p.strict { -1 } else { 0 };
        lp.rows.push(Row::new(
            format!("dep_{k}"),
            vec![(1, stage(p.before)), (-1, stage(p.after))],
            Sense::Le,
            rhs,
        ));
    }
    for (k, g) in cs.same_stage.iter().enumerate() {
        for w in g.windows(2) {
            lp.rows.push(Row::new(
                format!("same_{k}_{}", w[1]),
                vec![(1, stage(w[0])), (-1, stage(w[1]))],
                Sense::Eq,
                0,
            ));
        }
    }
    for (u, readers) in &cs.propagate {
        let beg = lp.integer(format!("beg_{u}"), 1, ns);
        let end = lp.integer(format!("end_{u}"), 1, ns);
        lp.rows.push(Row::new(
            format!("beg_{u}"),
            vec![(1, beg.clone()), (-1, stage(*u))],
            Sense::Eq,
            0,
        ));
        lp.rows.push(Row::new(
            format!("order_{u}"),
            vec![(1, beg), (-1, end.clone())],
            Sense::Le,
            -1,
        ));
        for &v in readers {
            lp.rows.push(Row::new(
                format!("end_{u}_{v}"),
                vec![(1, end.clone()), (-1, stage(v))],
                Sense::Ge,
                0,
            ));
        }
        for s in 1..=cs.n_stages {
            lp.binary(format!("lo_{u}_{s}"));
            lp.binary(format!("hi_{u}_{s}"));
            lp.binary(format!("prop_{u}_{s}"));
            lp.rows.extend(propagation_rows(&u.to_string(), s, m));
        }
    }
    for s in 1..=cs.n_stages {
        let mut terms: Vec<(i64, String)> = (0..cs.alus.len())
            .map(|u| (1, format!("stage_{u}_{s}")))
            .collect();
        terms.extend(
            cs.propagate
                .iter()
                .map(|(u, _)| (1, format!("prop_{u}_{s}"))),
        );
        lp.rows.push(Row::new(
            format!("alus_{s}"),
            terms,
            Sense::Le,
            cs.alus_per_stage as i64,
        ));
    }
    lp
}

fn write_row(out: &mut String, r: &Row) {
    let _ = write!(out, " {}:", r.name);
    for (i, (c, v)) in r.terms.iter().enumerate() {
        let mag = c.unsigned_abs();
        let coef = if mag == 1 {
            String::new()
        } else {
            format!("{mag} ")
        };
        match (i, *c < 0) {
            (0, false) => {
                let _ = write!(out, " {coef}{v}");
            }
            (_, true) => {
                let _ = write!(out, " - {coef}{v}");
            }
            (_, false) => {
                let _ = write!(out, " + {coef}{v}");
            }
        }
    }
    let op = match r.sense {
        Sense::Le => "<=",
        Sense::Ge => ">=",
        Sense::Eq => "=",
    };
    let _ = writeln!(out, " {op} {}", r.rhs);
}

/// LP file text for the model.
pub fn to_lp(lp: &LpModel) -> String {
    let mut out = String::from(
        "\\ stage allocation, big-M propagation encoding\nMinimize\n obj: cost\nSubject To\n",
    );
    for r in &lp.rows {
        write_row(&mut out, r);
    }
    out.push_str("Bounds\n");
    for (v, (lo, hi)) in &lp.bounds {
        let _ = writeln!(out, " {lo} <= {v} <= {hi}");
    }
    if !lp.integers.is_empty() {
        out.push_str("General\n");
        for v in &lp.integers {
            let _ = writeln!(out, " {v}");
        }
    }
    if !lp.binaries.is_empty() {
        out.push_str("Binary\n");
        for v in &lp.binaries {
            let _ = writeln!(out, " {v}");
        }
    }
    out.push_str("End\n");
    out
}

pub fn emit_big_m(cs: &ConstraintSet) -> String {
    to_lp(&build_model(cs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feasible(beg: i64, end: i64, s: usize, prop: i64) -> bool {
        let rows = propagation_rows("u", s, 13);
        (0..4).any(|bits| {
            let val = |v: &str| match v {
                "beg_u" => beg,
                "end_u" => end,
                _ if v.starts_with("lo") => bits & 1,
                _ if v.starts_with("hi") => bits >> 1,
                _ => prop,
            };
            rows.iter().all(|r| r.holds(&val))
        })
    }

    #[test]
    fn interior_stage_forces_prop() {
        assert!(feasible(1, 3, 2, 1));
        assert!(!feasible(1, 3, 2, 0));
    }

    #[test]
    fn first_stage_has_no_prop() {
        assert!(feasible(1, 3, 1, 0));
        assert!(!feasible(1, 3, 1, 1));
    }

    #[test]
    fn lp_text_has_sections() {
        let r = Row::new("r", vec![(1, "a".into()), (-3, "b".into())], Sense::Le, 4);
        let mut s = String::new();
        write_row(&mut s, &r);
        assert_eq!(s, " r: a - 3 b <= 4\n");
    }
}
