//! Reference interpreters: transactional source semantics and stage-by-stage
//! execution of a compiled pipeline.

mod pipeline;
mod source;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::eval::mask;
use crate::ir::{Program, Table};

pub use pipeline::{interpret_pipeline, observable, CompiledPipeline};
pub use source::interpret_source;

/// Packet header vector plus switch state.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketState {
    pub fields: BTreeMap<String, u64>,
    pub state: BTreeMap<String, u64>,
}

impl PacketState {
    /// All declared fields zeroed and state at its initial values.
    pub fn initial(p: &Program) -> Self {
        PacketState {
            fields: p.headers.iter().map(|f| (f.name.clone(), 0)).collect(),
            state: p
                .state_vars
                .iter()
                .map(|s| (s.name.clone(), s.init))
                .collect(),
        }
    }

    /// Fills in missing fields and state, then masks every value to its width.
    pub fn normalized(&self, p: &Program, bits: u32) -> Self {
        let mut out = PacketState::initial(p);
        for (k, v) in &self.fields {
            out.fields.insert(k.clone(), *v);
        }
        for (k, v) in &self.state {
            out.state.insert(k.clone(), *v);
        }
        for f in &p.headers {
            let v = out.fields.get_mut(&f.name).unwrap();
            *v &= mask(f.width.min(bits));
        }
        for s in &p.state_vars {
            let v = out.state.get_mut(&s.name).unwrap();
            *v &= mask(s.width.min(bits));
        }
        out
    }
}

/// Chosen action index per table. An index equal to the action count means a
/// miss, which runs the default action if there is one.
pub type MatchOutcomes = BTreeMap<String, usize>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("no match outcome supplied for table `{0}`")]
    UnmatchedTable(String),
    #[error("match outcome {index} is out of range for table `{table}`")]
    BadOutcome { table: String, index: usize },
    #[error("pipeline configuration error: {0}")]
    ConfigError(String),
    #[error("unbound variable `{0}`")]
    Unbound(String),
}

/// Action a table runs for this packet, or `None` on a miss without default.
pub(crate) fn select_action<'a>(
    t: &'a Table,
    fields: &BTreeMap<String, u64>,
    outcomes: &MatchOutcomes,
    widths: &dyn Fn(&str) -> u32,
    bits: u32,
) -> Result<Option<&'a str>, SimError> {
    if t.keys.is_empty() {
        return Ok(Some(t.actions[0].as_str()));
    }
    if !t.const_entries.is_empty() {
        let key: Vec<u64> = t
            .keys
            .iter()
            .map(|k| fields.get(k).copied().unwrap_or(0))
            .collect();
        for e in &t.const_entries {
            let hit = e
                .values
                .iter()
                .zip(&key)
                .zip(&t.keys)
                .all(|((v, k), name)| v & mask(widths(name).min(bits)) == *k);
            if hit {
                return Ok(Some(e.action.as_str()));
            }
        }
        return Ok(t.default_action.as_deref());
    }
    let idx = *outcomes
        .get(&t.name)
        .ok_or_else(|| SimError::UnmatchedTable(t.name.clone()))?;
    if idx < t.actions.len() {
        Ok(Some(t.actions[idx].as_str()))
    } else if idx == t.actions.len() {
        Ok(t.default_action.as_deref())
    } else {
        Err(SimError::BadOutcome {
            table: t.name.clone(),
            index: idx,
        })
    }
}

/// Every combination of match outcomes for the tables that take one.
pub fn all_outcomes(p: &Program) -> Vec<MatchOutcomes> {
    let choosers: Vec<&Table> = p
        .tables
        .iter()
        .filter(|t| !t.keys.is_empty() && t.const_entries.is_empty())
        .collect();
    let mut out = vec![MatchOutcomes::new()];
    for t in choosers {
        let n = t.actions.len() + usize::from(t.default_action.is_none());
        let mut next = Vec::with_capacity(out.len() * n);
        for o in &out {
            for k in 0..n {
                let mut o = o.clone();
                // Without a default action the extra choice is a miss.
                let idx = if k < t.actions.len() {
                    k
                } else {
                    t.actions.len()
                };
                o.insert(t.name.clone(), idx);
                next.push(o);
            }
        }
        out = next;
    }
    out
}
