//! Guarded dependency analysis and the branch-to-table rewrite.

pub mod cfg;
pub mod deps;
pub mod pathcond;
mod tables;

pub use cfg::{build_cfg, path_conditions, Cfg, CfgError};
pub use deps::{guarded_deps, DepKind, GuardedDep};
pub use pathcond::{Literal, PathCondition, Rel};
pub use tables::{rewrite_to_tables, RewriteReport, RewrittenTable, REWRITE_TABLE_PREFIX};
