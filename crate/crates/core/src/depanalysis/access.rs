//! Array access collection.

use serde::Serialize;

use crate::frontend::{AffineExpr, Expr, ExprKind, FunctionDecl, LoopId, Span, Stmt, StmtId, StmtKind, SymbolId, SymbolKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessMode {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayAccess {
    /// Symbol key of the array.
    pub array: String,
    pub sym: SymbolId,
    /// `None` marks the conservative unknown region: a non-affine subscript,
    /// or a base that may alias.
    pub subscripts: Option<Vec<AffineExpr>>,
    pub mode: AccessMode,
    /// Enclosing loops, outermost first.
    pub loop_context: Vec<LoopId>,
    pub span: Span,
    pub stmt: StmtId,
    /// Evaluation order within the function.
    pub order: usize,
}

impl ArrayAccess {
    pub fn is_unknown(&self) -> bool {
        self.subscripts.is_none()
    }
}

/// Whether `sym` may be treated as its own memory region: a pointer
/// parameter (distinct parameters are assumed not to alias) or a local array.
pub fn is_tracked_array(func: &FunctionDecl, sym: SymbolId) -> bool {
    let s = func.symbol(sym);
    match s.kind {
        SymbolKind::Param => s.ty.is_some_and(|t| t.is_pointer()),
        SymbolKind::Local => s.ty.is_some() && !s.array_dims.is_empty(),
        SymbolKind::Global => false,
    }
}

pub struct Collector<'a> {
    func: &'a FunctionDecl,
    pub accesses: Vec<ArrayAccess>,
    ctx: Vec<LoopId>,
    order: usize,
}

impl<'a> Collector<'a> {
    pub fn new(func: &'a FunctionDecl) -> Self {
        Collector { func, accesses: Vec::new(), ctx: Vec::new(), order: 0 }
    }

    pub fn collect(mut self) -> Vec<ArrayAccess> {
        for s in &self.func.body {
            self.stmt(s);
        }
        self.accesses
    }

    fn push(&mut self, e: &Expr, mode: AccessMode, stmt: StmtId) {
        let Some((sym, subs)) = e.as_array_ref() else { return };
        let tracked = is_tracked_array(self.func, sym);
        let subscripts = if tracked {
            subs.iter().map(|s| AffineExpr::from_expr(s, self.func)).collect::<Option<Vec<_>>>()
        } else {
            None
        };
        let mode = if subscripts.is_none() { AccessMode::Write } else { mode };
        self.order += 1;
        self.accesses.push(ArrayAccess {
            array: self.func.symbol(sym).key.clone(),
            sym,
            subscripts,
            mode,
            loop_context: self.ctx.clone(),
            span: e.span,
            stmt,
            order: self.order,
        });
    }

    /// Records every array read in `e`, innermost subscripts first.
    fn reads(&mut self, e: &Expr, stmt: StmtId) {
        match &e.kind {
            ExprKind::Index { .. } => {
                if let Some((_, subs)) = e.as_array_ref() {
                    for s in subs {
                        self.reads(s, stmt);
                    }
                    self.push(e, AccessMode::Read, stmt);
                }
            }
            ExprKind::Unary { operand, .. } => self.reads(operand, stmt),
            ExprKind::Binary { lhs, rhs, .. } => {
                self.reads(lhs, stmt);
                self.reads(rhs, stmt);
            }
            ExprKind::Ternary { cond, then_expr, else_expr } => {
                self.reads(cond, stmt);
                self.reads(then_expr, stmt);
                self.reads(else_expr, stmt);
            }
            ExprKind::Call { args, .. } => args.iter().for_each(|a| self.reads(a, stmt)),
            ExprKind::Cast { expr, .. } => self.reads(expr, stmt),
            _ => {}
        }
    }

    fn target(&mut self, target: &Expr, compound: bool, stmt: StmtId) {
        if let Some((_, subs)) = target.as_array_ref() {
            for s in subs {
                self.reads(s, stmt);
            }
            if compound {
                self.push(target, AccessMode::Read, stmt);
            }
            self.push(target, AccessMode::Write, stmt);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::For(l) => {
                self.reads(&l.lower_expr, s.id);
                self.reads(&l.upper_expr, s.id);
                self.ctx.push(l.id);
                self.stmt(&l.body);
                self.ctx.pop();
            }
            StmtKind::Assign { target, value } => {
                self.reads(value, s.id);
                self.target(target, false, s.id);
            }
            StmtKind::CompoundAssign { target, value, .. } => {
                self.reads(value, s.id);
                self.target(target, true, s.id);
            }
            StmtKind::Decl(ds) => {
                for d in ds {
                    d.dims.iter().for_each(|e| self.reads(e, s.id));
                    if let Some(init) = &d.init {
                        self.reads(init, s.id);
                    }
                }
            }
            StmtKind::If { cond, then_branch, else_branch } => {
                self.reads(cond, s.id);
                self.stmt(then_branch);
                if let Some(e) = else_branch {
                    self.stmt(e);
                }
            }
            StmtKind::Block(b) => b.iter().for_each(|x| self.stmt(x)),
            StmtKind::Opaque { .. } => {}
        }
    }
}
