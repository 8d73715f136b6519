//! Span-preserving re-emission with local edits.
//!
//! Text outside edited regions is copied byte for byte, so an empty edit
//! list reproduces the input exactly.

use std::collections::BTreeSet;

use super::ir::{SourceUnit, Span, Stmt, StmtKind};
use super::EmitError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Edit {
    /// Lines inserted above the anchored statement, at its indentation.
    InsertBefore { anchor: Span, text: String },
    /// Lines inserted below the anchored statement, at its indentation.
    InsertAfter { anchor: Span, text: String },
    /// Replaces the anchored node's text.
    Replace { anchor: Span, text: String },
}

impl Edit {
    pub fn anchor(&self) -> Span {
        match self {
            Edit::InsertBefore { anchor, .. } | Edit::InsertAfter { anchor, .. } | Edit::Replace { anchor, .. } => *anchor,
        }
    }
}

/// Spans an edit may be anchored to: statements, expressions, loop headers,
/// and attached pragmas.
pub fn anchor_spans(unit: &SourceUnit) -> BTreeSet<Span> {
    let mut out = BTreeSet::new();
    fn stmt_spans(s: &Stmt, out: &mut BTreeSet<Span>) {
        s.walk(&mut |s| {
            out.insert(s.span);
            let mut add = |e: &super::Expr| e.walk(&mut |e| {
                out.insert(e.span);
            });
            match &s.kind {
                StmtKind::For(l) => {
                    add(&l.lower_expr);
                    add(&l.upper_expr);
                    out.insert(l.header_span);
                    // The loop without its pragma, so a pragma can be placed
                    // directly above the `for` keyword.
                    out.insert(Span::new(l.header_span.start, s.span.end));
                    if let Some(p) = &l.pragma {
                        out.insert(p.span);
                    }
                }
                StmtKind::Assign { target, value } | StmtKind::CompoundAssign { target, value, .. } => {
                    add(target);
                    add(value);
                }
                StmtKind::Decl(ds) => {
                    for d in ds {
                        d.dims.iter().for_each(&mut add);
                        if let Some(i) = &d.init {
                            add(i);
                        }
                    }
                }
                StmtKind::If { cond, .. } => add(cond),
                _ => {}
            }
        });
    }
    for f in &unit.functions {
        out.insert(f.span);
        for s in &f.body {
            stmt_spans(s, &mut out);
        }
    }
    out
}

fn indent_lines(text: &str, indent: &str) -> String {
    text.lines().map(|l| if l.is_empty() { String::new() } else { format!("{indent}{l}") }).collect::<Vec<_>>().join("\n")
}

pub fn apply(unit: &SourceUnit, edits: &[Edit]) -> Result<String, EmitError> {
    let anchors = anchor_spans(unit);
    let src = unit.text.as_str();
    // (position, order, replaced_end, text)
    let mut ops: Vec<(usize, usize, usize, String)> = Vec::new();
    let mut replaced: Vec<Span> = Vec::new();
    for (order, e) in edits.iter().enumerate() {
        let a = e.anchor();
        if !anchors.contains(&a) {
            return Err(EmitError::Anchor { start: a.start, end: a.end });
        }
        let indent = unit.indent_at(a.start).to_string();
        let line_start = src[..a.start].rfind('\n').map_or(0, |p| p + 1);
        let at_line_start = src[line_start..a.start].trim().is_empty();
        match e {
            Edit::InsertBefore { text, .. } => {
                if at_line_start {
                    ops.push((line_start, order, line_start, format!("{}\n", indent_lines(text, &indent))));
                } else {
                    ops.push((a.start, order, a.start, format!("\n{}\n{indent}", indent_lines(text, &indent))));
                }
            }
            Edit::InsertAfter { text, .. } => {
                ops.push((a.end, order, a.end, format!("\n{}", indent_lines(text, &indent))));
            }
            Edit::Replace { text, .. } => {
                if replaced.iter().any(|r| r.overlaps(&a)) {
                    return Err(EmitError::Overlap { start: a.start, end: a.end });
                }
                replaced.push(a);
                ops.push((a.start, order, a.end, text.clone()));
            }
        }
    }
    for (pos, _, end, _) in &ops {
        if pos == end && replaced.iter().any(|r| r.start < *pos && *pos < r.end) {
            return Err(EmitError::Overlap { start: *pos, end: *end });
        }
    }
    // Replacements sort after insertions at the same offset so that an
    // insert-before lands in front of the replaced text.
    ops.sort_by_key(|(pos, order, end, _)| (*pos, end > pos, *order));
    let mut out = String::with_capacity(src.len() + 256);
    let mut cursor = 0;
    for (pos, _, end, text) in ops {
        out.push_str(&src[cursor..pos]);
        out.push_str(&text);
        cursor = end.max(pos);
    }
    out.push_str(&src[cursor..]);
    Ok(out)
}
