//! C-subset frontend: source text to loop-nest IR and back.

pub mod affine;
pub mod emit;
pub mod ir;
pub mod lexer;
pub mod parser;
pub mod pragma;

pub use affine::{AffineExpr, Monomial};
pub use emit::Edit;
pub use ir::*;
pub use pragma::OmpPragma;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

impl FrontendError {
    pub fn syntax(text: &str, offset: usize, message: impl Into<String>) -> Self {
        let (line, column) = line_col(text, offset);
        FrontendError::Syntax { line, column, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmitError {
    #[error("edit anchor {start}..{end} does not match any node")]
    Anchor { start: usize, end: usize },
    #[error("edits overlap at {start}..{end}")]
    Overlap { start: usize, end: usize },
}

/// Parses a translation unit.
pub fn parse(path: &str, text: &str) -> Result<SourceUnit, FrontendError> {
    parser::parse_unit(path, text)
}

pub fn parse_file(path: &std::path::Path) -> Result<SourceUnit, FrontendError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FrontendError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse(&path.display().to_string(), &text)
}

/// Re-emits `unit` with `edits` applied.
pub fn emit(unit: &SourceUnit, edits: &[Edit]) -> Result<String, EmitError> {
    emit::apply(unit, edits)
}

#[cfg(test)]
mod tests;
