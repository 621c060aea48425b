use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use pipecat::allocation::{
    build_constraints, build_model, emit_big_m, finish, random_problem, solve, validate,
    AllocationProblem, ConstraintSet, Mode, TableDep,
};

/// Completes a stage vector into a full model assignment, choosing the
/// smallest `end_u` so propagation is minimal.
fn assignment(cs: &ConstraintSet, stage: &[usize]) -> BTreeMap<String, i64> {
    let sol = finish(cs, stage.to_vec(), Mode::Optimal);
    let mut v = BTreeMap::new();
    v.insert("cost".to_string(), sol.cost as i64);
    for (u, &s) in stage.iter().enumerate() {
        v.insert(format!("stage_{u}"), s as i64);
        for k in 1..=cs.n_stages {
            v.insert(format!("stage_{u}_{k}"), i64::from(k == s));
        }
    }
    for (p, m) in sol.matches.iter().enumerate() {
        for k in 1..=cs.n_stages {
            v.insert(format!("m_{p}_{k}"), i64::from(m.contains(&k)));
        }
    }
    for e in &cs.propagate {
        let beg = stage[e.0];
        let end = cs.end_of(e, stage);
        v.insert(format!("beg_{}", e.0), beg as i64);
        v.insert(format!("end_{}", e.0), end as i64);
        for k in 1..=cs.n_stages {
            v.insert(format!("lo_{}_{k}", e.0), i64::from(beg < k));
            v.insert(format!("hi_{}_{k}", e.0), i64::from(k < end));
            v.insert(format!("prop_{}_{k}", e.0), i64::from(beg < k && k < end));
        }
    }
    v
}

fn model_holds(cs: &ConstraintSet, stage: &[usize]) -> bool {
    let lp = build_model(cs);
    let a = assignment(cs, stage);
    lp.holds(&|n| *a.get(n).unwrap_or_else(|| panic!("no value for {n}")))
}

#[test]
fn big_m_model_agrees_with_the_constraint_checker() {
    let mut rng = StdRng::seed_from_u64(11);
    let mut checked = 0;
    for _ in 0..60 {
        let (ap, t) = random_problem(&mut rng, 4, 4, 5);
        let Ok(cs) = build_constraints(&ap, &t) else {
            continue;
        };
        let n = cs.alus.len();
        if n == 0 {
            continue;
        }
        let mut st = vec![1usize; n];
        'all: loop {
            let direct = validate(&cs, &finish(&cs, st.clone(), Mode::Optimal)).is_ok();
            assert_eq!(direct, model_holds(&cs, &st), "stages {st:?}");
            checked += 1;
            let mut k = 0;
            loop {
                if k == n {
                    break 'all;
                }
                st[k] += 1;
                if st[k] <= cs.n_stages {
                    break;
                }
                st[k] = 1;
                k += 1;
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn lp_file_has_every_section() {
    let mut rng = StdRng::seed_from_u64(3);
    let (ap, t) = random_problem(&mut rng, 3, 3, 4);
    let lp = emit_big_m(&build_constraints(&ap, &t).unwrap());
    for section in ["Minimize", "Subject To", "Bounds", "Binary", "End"] {
        assert!(lp.contains(section), "missing {section}");
    }
}

fn permuted(ap: &AllocationProblem, perm: &[usize]) -> AllocationProblem {
    // perm[new] = old
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    AllocationProblem {
        tables: perm.iter().map(|&o| ap.tables[o].clone()).collect(),
        deps: ap
            .deps
            .iter()
            .map(|d| TableDep {
                from: inv[d.from],
                to: inv[d.to],
                ..d.clone()
            })
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimum_ignores_declaration_order(seed in any::<u64>(), shuffle in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let (ap, t) = random_problem(&mut rng, 6, 5, 8);
        let mut perm: Vec<usize> = (0..ap.tables.len()).collect();
        let mut r = StdRng::seed_from_u64(shuffle);
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut r);
        let cost = |ap: &AllocationProblem| {
            build_constraints(ap, &t).ok().and_then(|cs| solve(&cs, Mode::Optimal).ok().map(|s| s.cost))
        };
        prop_assert_eq!(cost(&ap), cost(&permuted(&ap, &perm)));
    }

    #[test]
    fn feasible_mode_never_beats_optimal(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let (ap, t) = random_problem(&mut rng, 6, 5, 8);
        if let Ok(cs) = build_constraints(&ap, &t) {
            let opt = solve(&cs, Mode::Optimal);
            let feas = solve(&cs, Mode::Feasible);
            prop_assert_eq!(opt.is_ok(), feas.is_ok());
            if let (Ok(o), Ok(f)) = (opt, feas) {
                prop_assert!(o.cost <= f.cost);
                prop_assert!(validate(&cs, &f).is_ok());
            }
        }
    }
}
