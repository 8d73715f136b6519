//! Applies an accepted plan: pragma insertion and accumulator scalarization.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::depanalysis::scalars::{reduction_op, written_scalars, Target};
use crate::depanalysis::{analyze, AnalysisReport};
use crate::frontend::{
    emit, parse, AffineExpr, Edit, EmitError, Expr, ExprKind, ForLoop, FunctionDecl, LoopId, ScalarType, SourceUnit,
    Span, Stmt, StmtKind, SymbolId,
};
use crate::omp::{ParallelForClauses, ReductionOp, ScheduleKind};
use crate::plan::{LoopDirective, ParallelizationPlan, ValidationVerdict};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodegenError {
    #[error("plan was rejected by validation")]
    Rejected,
    #[error("directives for {0} and {1} target overlapping code")]
    RewriteConflict(LoopId, LoopId),
    #[error("cannot scalarize {cell} in {loop_id}: {reason}")]
    NotScalarizable { loop_id: LoopId, cell: String, reason: String },
    #[error("plan references loop {0}, which the source does not contain")]
    UnknownLoop(LoopId),
    #[error(transparent)]
    Emit(#[from] EmitError),
    #[error("generated code does not parse: {0}")]
    Reparse(String),
}

/// Edits that hoist one accumulator cell into a local.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalarization {
    pub loop_id: LoopId,
    pub cell: String,
    pub local: String,
    pub operator: ReductionOp,
    pub element_type: ScalarType,
    /// The store in front of the loop became the local's initializer.
    pub folded_init: bool,
    pub edits: Vec<Edit>,
}

fn squash(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Outermost array references (`a[i][j]`, not its `a[i]` prefix) in `s`.
fn array_refs<'a>(s: &'a Stmt, out: &mut Vec<&'a Expr>) {
    fn expr<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
        if e.as_array_ref().is_some() {
            out.push(e);
            let mut cur = e;
            while let ExprKind::Index { base, index } = &cur.kind {
                expr(index, out);
                cur = base;
            }
            return;
        }
        match &e.kind {
            ExprKind::Index { base, index } => {
                expr(base, out);
                expr(index, out);
            }
            ExprKind::Unary { operand, .. } => expr(operand, out),
            ExprKind::Binary { lhs, rhs, .. } => {
                expr(lhs, out);
                expr(rhs, out);
            }
            ExprKind::Ternary { cond, then_expr, else_expr } => {
                expr(cond, out);
                expr(then_expr, out);
                expr(else_expr, out);
            }
            ExprKind::Call { args, .. } => args.iter().for_each(|a| expr(a, out)),
            ExprKind::Cast { expr: inner, .. } => expr(inner, out),
            _ => {}
        }
    }
    s.walk(&mut |s| match &s.kind {
        StmtKind::For(l) => {
            expr(&l.lower_expr, out);
            expr(&l.upper_expr, out);
        }
        StmtKind::Assign { target, value } | StmtKind::CompoundAssign { target, value, .. } => {
            expr(target, out);
            expr(value, out);
        }
        StmtKind::Decl(ds) => {
            for d in ds {
                d.dims.iter().for_each(|x| expr(x, out));
                if let Some(i) = &d.init {
                    expr(i, out);
                }
            }
        }
        StmtKind::If { cond, .. } => expr(cond, out),
        _ => {}
    });
}

fn subscripts(e: &Expr, func: &FunctionDecl) -> Option<(SymbolId, Vec<AffineExpr>)> {
    let (sym, idx) = e.as_array_ref()?;
    let subs = idx.iter().map(|x| AffineExpr::from_expr(x, func)).collect::<Option<Vec<_>>>()?;
    Some((sym, subs))
}

/// The statement holding loop `id` and the statement list it sits in.
fn loop_site(stmts: &[Stmt], id: LoopId) -> Option<(&[Stmt], usize)> {
    for (i, s) in stmts.iter().enumerate() {
        if matches!(&s.kind, StmtKind::For(l) if l.id == id) {
            return Some((stmts, i));
        }
        let found = match &s.kind {
            StmtKind::For(l) => loop_site(l.body.as_list(), id),
            StmtKind::Block(b) => loop_site(b, id),
            StmtKind::If { then_branch, else_branch, .. } => loop_site(then_branch.as_list(), id)
                .or_else(|| else_branch.as_ref().and_then(|e| loop_site(e.as_list(), id))),
            _ => None,
        };
        if found.is_some() {
            return found;
        }
    }
    None
}

fn loop_stmt(func: &FunctionDecl, id: LoopId) -> Option<&Stmt> {
    loop_site(&func.body, id).map(|(list, i)| &list[i])
}

fn write_back(op: ReductionOp, cell: &str, local: &str) -> String {
    match op {
        ReductionOp::Min => format!("{cell} = {local} < {cell} ? {local} : {cell};"),
        ReductionOp::Max => format!("{cell} = {local} > {cell} ? {local} : {cell};"),
        _ => format!("{cell} {}= {local};", op.symbol()),
    }
}

/// Hoists the array cell `cell` (source text, e.g. `C[i*n + j]`) out of loop
/// `loop_id` into a local named `local`, written back once after the loop.
///
/// A plain store to the cell right before the loop becomes the initializer.
/// Otherwise floating-point locals start from the cell, keeping sequential
/// results bit-exact, and integer locals start from the operator identity
/// and are combined into the cell afterwards.
pub fn scalarize_accumulator(
    unit: &SourceUnit,
    loop_id: LoopId,
    cell: &str,
    local: &str,
) -> Result<Scalarization, CodegenError> {
    let fail = |reason: &str| CodegenError::NotScalarizable { loop_id, cell: cell.to_string(), reason: reason.to_string() };
    let (func, l) = unit.find_loop(loop_id).ok_or(CodegenError::UnknownLoop(loop_id))?;
    let mut refs = Vec::new();
    array_refs(&l.body, &mut refs);
    let want = squash(cell);
    let first = refs
        .iter()
        .find(|e| squash(e.span.slice(&unit.text)) == want)
        .ok_or_else(|| fail("the cell does not occur in the loop"))?;
    let (sym, subs) = subscripts(first, func).ok_or_else(|| fail("subscripts are not affine"))?;
    let mine: Vec<&Expr> = refs.iter().copied().filter(|e| e.as_array_ref().is_some_and(|(s, _)| s == sym)).collect();
    if mine.iter().any(|e| subscripts(e, func).as_ref().map(|x| &x.1) != Some(&subs)) {
        return Err(fail("the loop accesses other cells of the same array"));
    }
    let mut varying: BTreeSet<SymbolId> = BTreeSet::new();
    varying.insert(l.induction);
    written_scalars(&l.body, &mut varying);
    l.body.walk(&mut |s| {
        if let StmtKind::For(inner) = &s.kind {
            varying.insert(inner.induction);
        }
    });
    for key in subs.iter().flat_map(|s| s.vars()) {
        match func.symbol_by_key(key) {
            Some(v) if !varying.contains(&v) => {}
            Some(_) => return Err(fail("the cell subscript varies within the loop")),
            None => return Err(fail("the cell subscript uses an unknown name")),
        }
    }
    let is = |e: &Expr| subscripts(e, func).is_some_and(|(s, x)| s == sym && x == subs);
    let mentioned_in = |e: &Expr| e.mentions(sym);
    let op = reduction_op(&Target { is: &is, mentioned_in: &mentioned_in }, &l.body)
        .ok_or_else(|| fail("writes to the cell are not one accumulation operator"))?;
    let ty = func.symbol(sym).elem_type().ok_or_else(|| fail("unknown element type"))?;
    if op.integer_only() && ty.is_float() {
        return Err(fail("bitwise accumulation on a floating-point cell"));
    }
    if func.symbols.iter().any(|s| s.name == local) {
        return Err(fail(&format!("the name {local} is already in use")));
    }

    let (site, idx) = loop_site(&func.body, loop_id).ok_or(CodegenError::UnknownLoop(loop_id))?;
    let stmt = &site[idx];
    let cell_text = first.span.slice(&unit.text).to_string();
    let mut edits: Vec<Edit> = Vec::new();
    let init_store = idx.checked_sub(1).map(|i| &site[i]).and_then(|prev| match &prev.kind {
        StmtKind::Assign { target, value } if is(target) && !value.mentions(sym) => Some((prev, value)),
        _ => None,
    });
    let folded_init = init_store.is_some();
    let c = ty.c_name();
    let after = match init_store {
        Some((prev, value)) => {
            let v = value.span.slice(&unit.text);
            edits.push(Edit::Replace { anchor: prev.span, text: format!("{c} {local} = {v};") });
            format!("{cell_text} = {local};")
        }
        None if ty.is_float() => {
            edits.push(Edit::InsertBefore { anchor: stmt.span, text: format!("{c} {local} = {cell_text};") });
            format!("{cell_text} = {local};")
        }
        None => {
            let id = op.identity_literal(ty);
            edits.push(Edit::InsertBefore { anchor: stmt.span, text: format!("{c} {local} = {id};") });
            write_back(op, &cell_text, local)
        }
    };
    for e in &mine {
        edits.push(Edit::Replace { anchor: e.span, text: local.to_string() });
    }
    edits.push(Edit::InsertAfter { anchor: stmt.span, text: after });
    Ok(Scalarization { loop_id, cell: cell_text, local: local.to_string(), operator: op, element_type: ty, folded_init, edits })
}

/// The loops a directive covers, outermost first.
fn covered(report: &AnalysisReport, d: &LoopDirective) -> Vec<LoopId> {
    let mut out = vec![d.loop_id];
    while out.len() < d.collapse.max(1) as usize {
        match report.get(*out.last().expect("non-empty")).and_then(|l| l.perfectly_nested_child) {
            Some(c) => out.push(c),
            None => break,
        }
    }
    out
}

fn inside(func: &FunctionDecl, inner: LoopId, outer: LoopId) -> bool {
    func.loop_chain(inner).is_some_and(|c| c.iter().any(|l| l.id == outer))
}

/// The clauses rendered for `d`. Variables declared inside the covered loops
/// are private by scoping, so no clause is rendered for them.
pub fn clauses_for(d: &LoopDirective, body_locals: &BTreeSet<String>) -> ParallelForClauses {
    ParallelForClauses {
        collapse: (d.collapse > 1).then_some(d.collapse as u32),
        schedule: d
            .schedule
            .as_deref()
            .and_then(|s| s.parse::<ScheduleKind>().ok())
            .map(|k| (k, d.chunk.map(|c| c as u32))),
        reductions: d.reductions.iter().map(|r| (r.operator, r.variable.clone())).collect(),
        privates: d.privates.iter().filter(|p| !body_locals.contains(*p)).cloned().collect(),
        num_threads: None,
        other: vec![],
    }
}

/// Produces the parallel source for an accepted plan.
pub fn generate(
    unit: &SourceUnit,
    plan: &ParallelizationPlan,
    verdict: &ValidationVerdict,
) -> Result<String, CodegenError> {
    if !verdict.accepted {
        return Err(CodegenError::Rejected);
    }
    let directives: Vec<&LoopDirective> = plan.directives.iter().filter(|d| d.parallelize).collect();
    if directives.is_empty() {
        return Ok(emit(unit, &[])?);
    }
    let report = analyze(unit);
    let mut spans: Vec<(LoopId, Span)> = Vec::new();
    for d in &directives {
        let (func, _) = unit.find_loop(d.loop_id).ok_or(CodegenError::UnknownLoop(d.loop_id))?;
        let s = loop_stmt(func, d.loop_id).ok_or(CodegenError::UnknownLoop(d.loop_id))?;
        if let Some((other, _)) = spans.iter().find(|(_, x)| x.overlaps(&s.span)) {
            return Err(CodegenError::RewriteConflict(*other, d.loop_id));
        }
        spans.push((d.loop_id, s.span));
    }

    let mut edits = Vec::new();
    let mut hoisted: Vec<Scalarization> = Vec::new();
    for lr in &report.loops {
        for acc in &lr.accumulators {
            let named = directives.iter().any(|d| {
                d.privates.contains(&acc.local) || d.reductions.iter().any(|r| r.variable == acc.local)
            });
            if named {
                let s = scalarize_accumulator(unit, lr.loop_id, &acc.cell, &acc.local)?;
                edits.extend(s.edits.iter().cloned());
                hoisted.push(s);
            }
        }
    }
    for d in &directives {
        let (func, l) = unit.find_loop(d.loop_id).ok_or(CodegenError::UnknownLoop(d.loop_id))?;
        let mut body_locals: BTreeSet<String> = BTreeSet::new();
        for id in covered(&report, d) {
            if let Some(r) = report.get(id) {
                body_locals.extend(r.local_decls.iter().cloned());
            }
        }
        for s in &hoisted {
            if s.loop_id != d.loop_id && inside(func, s.loop_id, d.loop_id) {
                body_locals.insert(s.local.clone());
            }
        }
        let text = clauses_for(d, &body_locals).render();
        edits.push(pragma_edit(unit, func, l, text)?);
    }
    let out = emit(unit, &edits)?;
    parse(&unit.path, &out).map_err(|e| CodegenError::Reparse(e.to_string()))?;
    Ok(out)
}

fn pragma_edit(unit: &SourceUnit, func: &FunctionDecl, l: &ForLoop, text: String) -> Result<Edit, CodegenError> {
    if let Some(p) = &l.pragma {
        return Ok(Edit::Replace { anchor: p.span, text });
    }
    let s = loop_stmt(func, l.id).ok_or(CodegenError::UnknownLoop(l.id))?;
    debug_assert_eq!(s.span.start, l.header_span.start, "{}", unit.path);
    Ok(Edit::InsertBefore { anchor: Span::new(l.header_span.start, s.span.end), text })
}
