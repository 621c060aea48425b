use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synthesis::{builtin, parse_grammar, AluGrammar, GrammarError, Grammars};

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("cannot read `{path}`: {msg}")]
    Io { path: String, msg: String },
    #[error("target file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid target: {0}")]
    Invalid(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

/// Pipeline constants plus the ALU grammars used for code generation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub n_stages: usize,
    pub n_alu_per_stage: usize,
    #[serde(default)]
    pub n_header_alus: usize,
    pub n_tables_per_stage: usize,
    pub n_entries_per_table: u64,
    /// Whether intermediate values need ALUs to cross a stage. Without them
    /// header ALUs and propagation constraints are dropped.
    #[serde(default = "yes")]
    pub propagation_alus: bool,
    /// Builtin grammar name or a path relative to the target file.
    pub stateful_grammar: String,
    pub stateless_grammar: String,
}

fn default_name() -> String {
    "target".into()
}

fn yes() -> bool {
    true
}

impl TargetSpec {
    /// A target with the given constants and the Tofino-like grammars.
    pub fn new(
        n_stages: usize,
        n_alu: usize,
        n_header: usize,
        n_tables: usize,
        n_entries: u64,
    ) -> Self {
        TargetSpec {
            name: default_name(),
            n_stages,
            n_alu_per_stage: n_alu,
            n_header_alus: n_header,
            n_tables_per_stage: n_tables,
            n_entries_per_table: n_entries,
            propagation_alus: true,
            stateful_grammar: "tofino".into(),
            stateless_grammar: "tofino-stateless".into(),
        }
    }

    pub fn parse(src: &str) -> Result<Self, TargetError> {
        let t: TargetSpec = toml::from_str(src)?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, TargetError> {
        let src = std::fs::read_to_string(path).map_err(|e| TargetError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse(&src)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("target serializes")
    }

    pub fn validate(&self) -> Result<(), TargetError> {
        if self.n_stages == 0
            || self.n_alu_per_stage == 0
            || self.n_tables_per_stage == 0
            || self.n_entries_per_table == 0
        {
            return Err(TargetError::Invalid(
                "all constants must be positive".into(),
            ));
        }
        if self.n_header_alus >= self.n_alu_per_stage {
            return Err(TargetError::Invalid(format!(
                "n_header_alus ({}) must be below n_alu_per_stage ({})",
                self.n_header_alus, self.n_alu_per_stage
            )));
        }
        Ok(())
    }

    /// ALUs per stage left for computation and propagation.
    pub fn alu_capacity(&self) -> usize {
        if self.propagation_alus {
            self.n_alu_per_stage - self.n_header_alus
        } else {
            self.n_alu_per_stage
        }
    }

    /// Resolves the grammar references; relative paths are taken from `dir`.
    pub fn grammars(&self, dir: Option<&Path>) -> Result<Grammars, TargetError> {
        let stateful = match resolve_grammar(&self.stateful_grammar, dir)? {
            AluGrammar::Stateful(g) => g,
            AluGrammar::Stateless(g) => {
                return Err(TargetError::Invalid(format!(
                    "`{}` is not a stateful grammar",
                    g.name
                )))
            }
        };
        let stateless = match resolve_grammar(&self.stateless_grammar, dir)? {
            AluGrammar::Stateless(g) => g,
            AluGrammar::Stateful(g) => {
                return Err(TargetError::Invalid(format!(
                    "`{}` is not a stateless grammar",
                    g.name
                )))
            }
        };
        Ok(Grammars {
            stateful,
            stateless,
        })
    }
}

/// A builtin name, or else a grammar file.
pub fn resolve_grammar(reference: &str, dir: Option<&Path>) -> Result<AluGrammar, TargetError> {
    if let Ok(g) = builtin(reference) {
        return Ok(g);
    }
    let path = match dir {
        Some(d) => d.join(reference),
        None => Path::new(reference).to_path_buf(),
    };
    let src = std::fs::read_to_string(&path).map_err(|e| TargetError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    Ok(parse_grammar(&src)?)
}

const BUILTIN_TARGETS: &[(&str, &str)] = &[
    ("tofino", include_str!("../../targets/tofino.toml")),
    ("banzai", include_str!("../../targets/banzai.toml")),
    ("motivating", include_str!("../../targets/motivating.toml")),
];

pub fn builtin_target_names() -> Vec<&'static str> {
    BUILTIN_TARGETS.iter().map(|t| t.0).collect()
}

pub fn builtin_target(name: &str) -> Option<TargetSpec> {
    BUILTIN_TARGETS
        .iter()
        .find(|t| t.0 == name)
        .map(|t| TargetSpec::parse(t.1).expect("builtin target"))
}
