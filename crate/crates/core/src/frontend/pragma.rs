use super::ir::Span;
use crate::omp::ParallelForClauses;

/// A `#pragma omp parallel for` line that immediately precedes a loop.
#[derive(Debug, Clone, PartialEq)]
pub struct OmpPragma {
    pub span: Span,
    pub text: String,
    pub clauses: ParallelForClauses,
}

impl OmpPragma {
    pub fn from_directive(text: &str, span: Span) -> Option<OmpPragma> {
        ParallelForClauses::parse(text).map(|clauses| OmpPragma { span, text: text.to_string(), clauses })
    }
}
