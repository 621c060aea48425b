//! Front end for the `.pcat` language: lexing, parsing, name and width
//! checks, canonical printing and default-table lowering.

pub mod ast;
mod check;
mod error;
pub mod eval;
mod lexer;
mod lower;
mod parser;
pub mod pretty;

pub use ast::*;
pub use check::{check, expr_width};
pub use error::FrontendError;
pub use lower::{lower_tables, DEFAULT_TABLE_PREFIX};
pub use parser::parse_unchecked;
pub use pretty::{expr_to_string, program_to_string};

/// Parses and checks a program.
pub fn parse(src: &str) -> Result<Program, FrontendError> {
    let p = parse_unchecked(src)?;
    check(&p)?;
    Ok(p)
}
