//! A naive allocator: tables in declaration order, each at the first stage
//! with a free table slot after everything it depends on. Tables are not
//! partitioned and each table takes one slot in every stage its ALUs use.

use super::problem::AllocationProblem;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GreedyOutcome {
    /// First stage of each table (0 for tables without ALUs), and the last
    /// stage used.
    Placed {
        first_stage: Vec<usize>,
        cost: usize,
    },
    /// The first table that did not fit.
    Rejected { table: String },
}

pub fn greedy_first_fit(
    ap: &AllocationProblem,
    n_stages: usize,
    tables_per_stage: usize,
) -> GreedyOutcome {
    let n = ap.tables.len();
    let mut used = vec![0usize; n_stages + 2];
    let mut first = vec![0usize; n];
    let mut last = vec![0usize; n];
    for t in 0..n {
        let span = ap.tables[t]
            .actions
            .iter()
            .map(|a| a.depth())
            .max()
            .unwrap_or(0);
        let mut lo = 1;
        for d in ap.deps.iter().filter(|d| d.to == t && last[d.from] > 0) {
            lo = lo.max(last[d.from] + d.kind.strict() as usize);
        }
        if span == 0 {
            continue;
        }
        let fits = |s: usize, used: &[usize]| {
            s + span - 1 <= n_stages && (s..s + span).all(|x| used[x] < tables_per_stage)
        };
        let Some(s) = (lo..=n_stages).find(|&s| fits(s, &used)) else {
            return GreedyOutcome::Rejected {
                table: ap.tables[t].name.clone(),
            };
        };
        for x in s..s + span {
            used[x] += 1;
        }
        first[t] = s;
        last[t] = s + span - 1;
    }
    let cost = last.iter().copied().max().unwrap_or(0);
    GreedyOutcome::Placed {
        first_stage: first,
        cost,
    }
}
