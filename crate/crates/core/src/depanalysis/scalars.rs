//! Scalar recurrences: reductions, privatization, and liveness.

use std::collections::BTreeSet;

use crate::frontend::{BinOp, Expr, ExprKind, ForLoop, FunctionDecl, LoopId, Stmt, StmtKind, SymbolId, SymbolKind};
use crate::omp::ReductionOp;

/// Predicates identifying the reduction target: a scalar, or one array cell.
pub struct Target<'a> {
    pub is: &'a dyn Fn(&Expr) -> bool,
    pub mentioned_in: &'a dyn Fn(&Expr) -> bool,
}

impl Target<'_> {
    fn bare(&self, e: &Expr) -> bool {
        (self.is)(e)
    }

    fn free(&self, e: &Expr) -> bool {
        !(self.mentioned_in)(e)
    }
}

fn binop_reduction(op: BinOp) -> Option<ReductionOp> {
    match op {
        BinOp::Add | BinOp::Sub => Some(ReductionOp::Add),
        BinOp::Mul => Some(ReductionOp::Mul),
        BinOp::BitAnd => Some(ReductionOp::BitAnd),
        BinOp::BitOr => Some(ReductionOp::BitOr),
        BinOp::BitXor => Some(ReductionOp::BitXor),
        _ => None,
    }
}

/// Operator of `value` when it has the shape `t op e`, `e op t`, `fmax(t, e)`
/// or a min/max ternary over `t` and `e`.
fn update_op(t: &Target<'_>, value: &Expr) -> Option<ReductionOp> {
    match &value.kind {
        ExprKind::Binary { op, lhs, rhs } => {
            let r = binop_reduction(*op)?;
            if (t.bare(lhs) && t.free(rhs)) || (t.bare(rhs) && t.free(lhs) && *op != BinOp::Sub) {
                Some(r)
            } else {
                None
            }
        }
        ExprKind::Call { name, args } if args.len() == 2 => {
            let op = match name.as_str() {
                "fmax" | "fmaxf" => ReductionOp::Max,
                "fmin" | "fminf" => ReductionOp::Min,
                _ => return None,
            };
            let ok = (t.bare(&args[0]) && t.free(&args[1])) || (t.bare(&args[1]) && t.free(&args[0]));
            ok.then_some(op)
        }
        ExprKind::Ternary { cond, then_expr, else_expr } => {
            let ExprKind::Binary { op, lhs, rhs } = &cond.kind else { return None };
            let (then_is_lhs, then_is_rhs) = (then_expr.same_as(lhs), then_expr.same_as(rhs));
            let (else_is_lhs, else_is_rhs) = (else_expr.same_as(lhs), else_expr.same_as(rhs));
            let shape_ok = ((t.bare(lhs) && t.free(rhs)) || (t.bare(rhs) && t.free(lhs)))
                && ((then_is_lhs && else_is_rhs) || (then_is_rhs && else_is_lhs));
            if !shape_ok {
                return None;
            }
            // `lhs > rhs ? lhs : rhs` is max; swapping branches flips it.
            let picks_larger = match op {
                BinOp::Gt | BinOp::Ge => then_is_lhs,
                BinOp::Lt | BinOp::Le => then_is_rhs,
                _ => return None,
            };
            Some(if picks_larger { ReductionOp::Max } else { ReductionOp::Min })
        }
        _ => None,
    }
}

/// Operator when `s` as a whole is one reduction update of the target.
pub fn pattern_op(t: &Target<'_>, s: &Stmt) -> Option<ReductionOp> {
    match &s.kind {
        StmtKind::CompoundAssign { target, op, value } if t.bare(target) && t.free(value) => binop_reduction(*op),
        StmtKind::Assign { target, value } if t.bare(target) => update_op(t, value),
        StmtKind::If { cond, then_branch, else_branch: None } => {
            let assign = match then_branch.as_list() {
                [one] => one,
                _ => return None,
            };
            let StmtKind::Assign { target, value } = &assign.kind else { return None };
            if !t.bare(target) || !t.free(value) {
                return None;
            }
            let ExprKind::Binary { op, lhs, rhs } = &cond.kind else { return None };
            // `if (e > t) t = e;` is max, `if (t > e) t = e;` is min.
            let e_on_left = lhs.same_as(value) && t.bare(rhs);
            let e_on_right = rhs.same_as(value) && t.bare(lhs);
            if !(e_on_left || e_on_right) {
                return None;
            }
            let e_greater = match op {
                BinOp::Gt | BinOp::Ge => e_on_left,
                BinOp::Lt | BinOp::Le => e_on_right,
                _ => return None,
            };
            Some(if e_greater { ReductionOp::Max } else { ReductionOp::Min })
        }
        _ => None,
    }
}

/// Single operator through which the target is updated everywhere in
/// `body`, if the target appears nowhere else.
pub fn reduction_op(t: &Target<'_>, body: &Stmt) -> Option<ReductionOp> {
    let mut ops = BTreeSet::new();
    if !collect_ops(t, body, &mut ops) || ops.len() != 1 {
        return None;
    }
    ops.into_iter().next()
}

fn collect_ops(t: &Target<'_>, s: &Stmt, ops: &mut BTreeSet<ReductionOp>) -> bool {
    if let Some(op) = pattern_op(t, s) {
        ops.insert(op);
        return true;
    }
    match &s.kind {
        StmtKind::For(l) => t.free(&l.lower_expr) && t.free(&l.upper_expr) && collect_ops(t, &l.body, ops),
        StmtKind::If { cond, then_branch, else_branch } => {
            t.free(cond)
                && collect_ops(t, then_branch, ops)
                && else_branch.as_deref().is_none_or(|e| collect_ops(t, e, ops))
        }
        StmtKind::Block(b) => b.iter().all(|x| collect_ops(t, x, ops)),
        StmtKind::Assign { target, value } | StmtKind::CompoundAssign { target, value, .. } => {
            t.free(target) && t.free(value)
        }
        StmtKind::Decl(ds) => ds.iter().all(|d| d.init.as_ref().is_none_or(|e| t.free(e)) && d.dims.iter().all(|e| t.free(e))),
        // Opaque statements never reach here: their loops are unknown.
        StmtKind::Opaque { .. } => false,
    }
}

pub fn scalar_reduction(func: &FunctionDecl, body: &Stmt, v: SymbolId) -> Option<ReductionOp> {
    let sym = func.symbol(v);
    let ty = sym.ty.filter(|t| !t.is_pointer() && sym.array_dims.is_empty())?;
    let is = |e: &Expr| e.as_var() == Some(v);
    let mentioned_in = |e: &Expr| e.mentions(v);
    let op = reduction_op(&Target { is: &is, mentioned_in: &mentioned_in }, body)?;
    if op.integer_only() && ty.base.is_float() {
        return None;
    }
    Some(op)
}

// ---- def/use ------------------------------------------------------------

/// Scalars possibly written anywhere inside `s`, including inner loop
/// induction variables and anything an opaque statement mentions.
pub fn written_scalars(s: &Stmt, out: &mut BTreeSet<SymbolId>) {
    s.walk(&mut |s| match &s.kind {
        StmtKind::Assign { target, .. } | StmtKind::CompoundAssign { target, .. } => {
            if let Some(v) = target.as_var() {
                out.insert(v);
            }
        }
        StmtKind::Decl(ds) => out.extend(ds.iter().map(|d| d.sym)),
        StmtKind::For(l) => {
            out.insert(l.induction);
        }
        StmtKind::Opaque { mentions, .. } => out.extend(mentions.iter().copied()),
        _ => {}
    });
}

/// Symbols whose declaration lies inside `s`.
pub fn declared_within(func: &FunctionDecl, s: &Stmt) -> BTreeSet<SymbolId> {
    let mut ids = BTreeSet::new();
    s.walk(&mut |x| {
        ids.insert(x.id);
    });
    let mut out = BTreeSet::new();
    s.walk(&mut |x| match &x.kind {
        StmtKind::Decl(ds) => out.extend(ds.iter().map(|d| d.sym)),
        StmtKind::For(l) if l.declares_induction => {
            out.insert(l.induction);
        }
        _ => {}
    });
    for (i, sym) in func.symbols.iter().enumerate() {
        if sym.decl.is_some_and(|d| ids.contains(&d)) {
            out.insert(SymbolId(i as u32));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    /// Read before any guaranteed write.
    Exposed,
    /// Guaranteed written before any read.
    Killed,
    Neither,
}

/// Walks `stmts` tracking whether `v` is definitely assigned.
pub fn scan(stmts: &[Stmt], v: SymbolId) -> Flow {
    let mut defined = false;
    for s in stmts {
        if step(s, v, &mut defined) {
            return Flow::Exposed;
        }
    }
    if defined {
        Flow::Killed
    } else {
        Flow::Neither
    }
}

/// Returns true on an exposed read; updates `defined`.
fn step(s: &Stmt, v: SymbolId, defined: &mut bool) -> bool {
    let read = |e: &Expr, defined: bool| !defined && e.mentions(v);
    match &s.kind {
        StmtKind::Assign { target, value } => {
            if read(value, *defined) {
                return true;
            }
            if target.as_var() == Some(v) {
                *defined = true;
            } else if read(target, *defined) {
                return true;
            }
            false
        }
        StmtKind::CompoundAssign { target, value, .. } => read(value, *defined) || read(target, *defined),
        StmtKind::Decl(ds) => {
            for d in ds {
                if d.dims.iter().any(|e| read(e, *defined)) || d.init.as_ref().is_some_and(|e| read(e, *defined)) {
                    return true;
                }
                if d.sym == v {
                    *defined = d.init.is_some();
                }
            }
            false
        }
        StmtKind::If { cond, then_branch, else_branch } => {
            if read(cond, *defined) {
                return true;
            }
            let mut d1 = *defined;
            if step(then_branch, v, &mut d1) {
                return true;
            }
            let mut d2 = *defined;
            if let Some(e) = else_branch {
                if step(e, v, &mut d2) {
                    return true;
                }
            }
            *defined = d1 && d2;
            false
        }
        StmtKind::Block(b) => b.iter().any(|x| step(x, v, defined)),
        StmtKind::For(l) => {
            if read(&l.lower_expr, *defined) {
                return true;
            }
            if l.induction == v {
                *defined = true;
            }
            if read(&l.upper_expr, *defined) {
                return true;
            }
            // The body may run zero times, so it cannot define `v` for what follows.
            let mut inner = *defined;
            step(&l.body, v, &mut inner)
        }
        StmtKind::Opaque { mentions, .. } => !*defined && mentions.contains(&v),
    }
}

/// Whether `v` may be read after `loop_id` finishes, before being
/// overwritten.
pub fn live_after(func: &FunctionDecl, loop_id: LoopId, v: SymbolId) -> bool {
    enum Container<'a> {
        Function,
        Loop(&'a ForLoop),
        Other,
    }
    fn find<'a>(stmts: &'a [Stmt], id: LoopId, c: Container<'a>, path: &mut Vec<(&'a [Stmt], usize, Container<'a>)>) -> bool {
        for (i, s) in stmts.iter().enumerate() {
            let hit = match &s.kind {
                StmtKind::For(l) if l.id == id => true,
                StmtKind::For(l) => find(l.body.as_list(), id, Container::Loop(l), path),
                StmtKind::Block(b) => find(b, id, Container::Other, path),
                StmtKind::If { then_branch, else_branch, .. } => {
                    find(then_branch.as_list(), id, Container::Other, path)
                        || else_branch.as_deref().is_some_and(|e| find(e.as_list(), id, Container::Other, path))
                }
                _ => false,
            };
            if hit {
                path.push((stmts, i, c));
                return true;
            }
        }
        false
    }
    let mut path = Vec::new();
    if !find(&func.body, loop_id, Container::Function, &mut path) {
        return true;
    }
    // `path` runs innermost first.
    for (stmts, idx, container) in path {
        match scan(&stmts[idx + 1..], v) {
            Flow::Exposed => return true,
            Flow::Killed => return false,
            Flow::Neither => {}
        }
        match container {
            Container::Loop(p) => {
                if scan(p.body.as_list(), v) == Flow::Exposed {
                    return true;
                }
            }
            Container::Function => {
                return func.symbol(v).kind == SymbolKind::Global;
            }
            Container::Other => {}
        }
    }
    func.symbol(v).kind == SymbolKind::Global
}

/// Written-before-read on every path through one iteration, and dead once
/// the loop exits.
pub fn is_privatizable(func: &FunctionDecl, l: &ForLoop, v: SymbolId) -> bool {
    scan(l.body.as_list(), v) == Flow::Killed && !live_after(func, l.id, v)
}

/// Whether some read of `v` in one iteration may see a value from before it.
pub fn has_exposed_read(l: &ForLoop, v: SymbolId) -> bool {
    scan(l.body.as_list(), v) == Flow::Exposed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    fn setup(src: &str) -> FunctionDecl {
        parse("t.c", src).unwrap().functions.remove(0)
    }

    fn sym(f: &FunctionDecl, name: &str) -> SymbolId {
        f.symbol_by_key(name).unwrap()
    }

    fn red(src: &str, var: &str) -> Option<ReductionOp> {
        let f = setup(src);
        let l = f.loops()[0].clone();
        scalar_reduction(&f, &l.body, sym(&f, var))
    }

    #[test]
    fn compound_and_expanded_sums() {
        assert_eq!(red("float f(float* a, int n){ float s = 0; for(int i=0;i<n;i++) s += a[i]; return s; }", "s"), Some(ReductionOp::Add));
        assert_eq!(red("int f(int* a, int n){ int s = 0; for(int i=0;i<n;i++) s = a[i] + s; return s; }", "s"), Some(ReductionOp::Add));
        assert_eq!(red("int f(int* a, int n){ int s = 0; for(int i=0;i<n;i++) s -= a[i]; return s; }", "s"), Some(ReductionOp::Add));
        assert_eq!(red("int f(int* a, int n){ int s = 0; for(int i=0;i<n;i++) s = a[i] - s; return s; }", "s"), None);
    }

    #[test]
    fn two_operators_disqualify() {
        assert_eq!(red("int f(int* a, int n){ int s = 0; for(int i=0;i<n;i++){ s += a[i]; s *= 2; } return s; }", "s"), None);
    }

    #[test]
    fn other_uses_disqualify() {
        assert_eq!(red("int f(int* a, int n){ int s = 0; for(int i=0;i<n;i++){ s += a[i]; a[i] = s; } return s; }", "s"), None);
    }

    #[test]
    fn min_max_forms() {
        assert_eq!(red("float f(float* a, int n){ float m = a[0]; for(int i=0;i<n;i++) if (a[i] > m) m = a[i]; return m; }", "m"), Some(ReductionOp::Max));
        assert_eq!(red("float f(float* a, int n){ float m = a[0]; for(int i=0;i<n;i++) if (m > a[i]) m = a[i]; return m; }", "m"), Some(ReductionOp::Min));
        assert_eq!(red("float f(float* a, int n){ float m = a[0]; for(int i=0;i<n;i++) m = fmaxf(m, a[i]); return m; }", "m"), Some(ReductionOp::Max));
        assert_eq!(red("float f(float* a, int n){ float m = a[0]; for(int i=0;i<n;i++) m = a[i] < m ? a[i] : m; return m; }", "m"), Some(ReductionOp::Min));
        assert_eq!(red("int f(int* a, int n){ int m = 0; for(int i=0;i<n;i++) m = m > a[i] ? m : a[i]; return m; }", "m"), Some(ReductionOp::Max));
    }

    #[test]
    fn bitwise_needs_integers() {
        assert_eq!(red("int f(int* a, int n){ int m = 0; for(int i=0;i<n;i++) m ^= a[i]; return m; }", "m"), Some(ReductionOp::BitXor));
    }

    #[test]
    fn temporary_written_first_is_privatizable() {
        let f = setup("void f(float* a, float* b, int n){ float t; for(int i=0;i<n;i++){ t = a[i] * 2; b[i] = t; } }");
        let l = f.loops()[0].clone();
        assert!(is_privatizable(&f, &l, sym(&f, "t")));
    }

    #[test]
    fn read_before_write_is_not_privatizable() {
        let f = setup("void f(float* a, float* b, int n){ float t = 0; for(int i=0;i<n;i++){ b[i] = t; t = a[i]; } }");
        let l = f.loops()[0].clone();
        assert!(!is_privatizable(&f, &l, sym(&f, "t")));
    }

    #[test]
    fn conditional_write_is_not_a_kill() {
        let f = setup("void f(float* a, float* b, int n){ float t = 0; for(int i=0;i<n;i++){ if (a[i] > 0) t = a[i]; b[i] = t; } }");
        let l = f.loops()[0].clone();
        assert!(!is_privatizable(&f, &l, sym(&f, "t")));
    }

    #[test]
    fn value_used_after_loop_is_live() {
        let f = setup("float f(float* a, int n){ float t = 0; for(int i=0;i<n;i++){ t = a[i]; a[i] = t + 1; } return t; }");
        let l = f.loops()[0].clone();
        assert!(live_after(&f, l.id, sym(&f, "t")));
        assert!(!is_privatizable(&f, &l, sym(&f, "t")));
    }

    #[test]
    fn inner_induction_declared_outside_is_privatizable_at_outer_level() {
        let f = setup("void f(float* a, int n){ int j; for(int i=0;i<n;i++) for(j=0;j<n;j++) a[i*n+j] = 0; }");
        let l = f.loops()[0].clone();
        assert!(is_privatizable(&f, &l, sym(&f, "j")));
    }

    #[test]
    fn next_iteration_of_enclosing_loop_counts_as_use() {
        let f = setup("void f(float* a, int n){ float t = 0; for(int i=0;i<n;i++){ a[i] = t; for(int j=0;j<n;j++) t = a[j]; } }");
        let inner = f.loops()[1].clone();
        assert!(live_after(&f, inner.id, sym(&f, "t")));
    }
}
