//! Loop-nest intermediate representation.
//!
//! Every node keeps the byte span of the text it was parsed from, so the
//! original source can be re-emitted unchanged or patched locally.

use serde::{Deserialize, Serialize};
use std::fmt;

use super::affine::AffineExpr;
use super::pragma::OmpPragma;

/// Half-open byte range `[start, end)` into [`SourceUnit::text`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn to(self, other: Span) -> Span {
        Span::new(self.start, other.end)
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SymbolId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StmtId(pub u32);

/// Loop identifier, unique within a [`SourceUnit`]; assigned in source order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LoopId(pub u32);

impl fmt::Display for LoopId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

impl std::str::FromStr for LoopId {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        s.strip_prefix('L').and_then(|n| n.parse().ok()).map(LoopId).ok_or(())
    }
}

impl Serialize for LoopId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LoopId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|_| serde::de::Error::custom(format!("invalid loop id {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarType {
    Int,
    Long,
    Float,
    Double,
}

impl ScalarType {
    pub fn is_float(self) -> bool {
        matches!(self, ScalarType::Float | ScalarType::Double)
    }

    pub fn c_name(self) -> &'static str {
        match self {
            ScalarType::Int => "int",
            ScalarType::Long => "long",
            ScalarType::Float => "float",
            ScalarType::Double => "double",
        }
    }

    pub fn from_keyword(word: &str) -> Option<ScalarType> {
        match word {
            "int" => Some(ScalarType::Int),
            "long" => Some(ScalarType::Long),
            "float" => Some(ScalarType::Float),
            "double" => Some(ScalarType::Double),
            _ => None,
        }
    }
}

/// A base scalar type plus pointer depth (0 or 1 in the subset).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CType {
    pub base: ScalarType,
    pub pointer: u8,
}

impl CType {
    pub fn scalar(base: ScalarType) -> Self {
        CType { base, pointer: 0 }
    }

    pub fn is_pointer(&self) -> bool {
        self.pointer > 0
    }
}

impl fmt::Display for CType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.base.c_name(), "*".repeat(self.pointer as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolKind {
    Param,
    Local,
    /// Referenced but never declared in the function (file-scope object).
    Global,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Symbol {
    pub name: String,
    /// Unique within the function; equal to `name` unless the name is shadowed.
    pub key: String,
    pub ty: Option<CType>,
    pub kind: SymbolKind,
    /// Extents of a local array declaration (`float buf[16][4]`).
    pub array_dims: Vec<Expr>,
    /// Statement that declares a local (`None` for params and globals).
    pub decl: Option<StmtId>,
}

impl Symbol {
    pub fn is_array(&self) -> bool {
        !self.array_dims.is_empty() || self.ty.is_some_and(|t| t.is_pointer())
    }

    pub fn elem_type(&self) -> Option<ScalarType> {
        self.ty.map(|t| t.base)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub sym: SymbolId,
    pub ty: CType,
    pub is_const: bool,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDecl {
    pub name: String,
    /// `None` for `void`.
    pub return_type: Option<ScalarType>,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    pub symbols: Vec<Symbol>,
    pub span: Span,
    pub body_span: Span,
}

impl FunctionDecl {
    pub fn symbol(&self, id: SymbolId) -> &Symbol {
        &self.symbols[id.0 as usize]
    }

    pub fn symbol_by_key(&self, key: &str) -> Option<SymbolId> {
        self.symbols.iter().position(|s| s.key == key).map(|i| SymbolId(i as u32))
    }

    /// Visits every statement in pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        for s in &self.body {
            s.walk(f);
        }
    }

    pub fn loops(&self) -> Vec<&ForLoop> {
        let mut out = Vec::new();
        self.walk(&mut |s| {
            if let StmtKind::For(l) = &s.kind {
                out.push(l);
            }
        });
        out
    }

    pub fn find_loop(&self, id: LoopId) -> Option<&ForLoop> {
        self.loops().into_iter().find(|l| l.id == id)
    }

    /// Chain of loops from the outermost down to and including `id`.
    pub fn loop_chain(&self, id: LoopId) -> Option<Vec<&ForLoop>> {
        fn go<'a>(stmts: &'a [Stmt], id: LoopId, chain: &mut Vec<&'a ForLoop>) -> bool {
            for s in stmts {
                if let StmtKind::For(l) = &s.kind {
                    chain.push(l);
                    if l.id == id || go(std::slice::from_ref(&l.body), id, chain) {
                        return true;
                    }
                    chain.pop();
                } else if go_children(s, id, chain) {
                    return true;
                }
            }
            false
        }
        fn go_children<'a>(s: &'a Stmt, id: LoopId, chain: &mut Vec<&'a ForLoop>) -> bool {
            match &s.kind {
                StmtKind::Block(b) => go(b, id, chain),
                StmtKind::If { then_branch, else_branch, .. } => {
                    go(std::slice::from_ref(then_branch), id, chain)
                        || else_branch.as_deref().is_some_and(|e| go(std::slice::from_ref(e), id, chain))
                }
                _ => false,
            }
        }
        let mut chain = Vec::new();
        go(&self.body, id, &mut chain).then_some(chain)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceUnit {
    pub path: String,
    pub text: String,
    pub functions: Vec<FunctionDecl>,
    /// Top-level text outside any function definition that the subset does
    /// not model (directives, globals, prototypes).
    pub opaque_items: Vec<Span>,
}

impl SourceUnit {
    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// All loops across all functions, with the function that owns them.
    pub fn loops(&self) -> Vec<(&FunctionDecl, &ForLoop)> {
        self.functions.iter().flat_map(|f| f.loops().into_iter().map(move |l| (f, l))).collect()
    }

    pub fn find_loop(&self, id: LoopId) -> Option<(&FunctionDecl, &ForLoop)> {
        self.loops().into_iter().find(|(_, l)| l.id == id)
    }

    /// 1-based line number of a byte offset.
    pub fn line_of(&self, offset: usize) -> usize {
        line_col(&self.text, offset).0
    }

    /// Leading whitespace of the line containing `offset`.
    pub fn indent_at(&self, offset: usize) -> &str {
        let line_start = self.text[..offset].rfind('\n').map_or(0, |p| p + 1);
        let line = &self.text[line_start..];
        let width = line.len() - line.trim_start_matches([' ', '\t']).len();
        &line[..width]
    }
}

/// 1-based (line, column) of a byte offset.
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub id: StmtId,
    pub span: Span,
    pub kind: StmtKind,
}

impl Stmt {
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        match &self.kind {
            StmtKind::For(l) => l.body.walk(f),
            StmtKind::Block(b) => b.iter().for_each(|s| s.walk(f)),
            StmtKind::If { then_branch, else_branch, .. } => {
                then_branch.walk(f);
                if let Some(e) = else_branch {
                    e.walk(f);
                }
            }
            _ => {}
        }
    }

    /// Statements of a block, or the statement itself as a one-element list.
    pub fn as_list(&self) -> &[Stmt] {
        match &self.kind {
            StmtKind::Block(b) => b,
            _ => std::slice::from_ref(self),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            StmtKind::For(_) => "ForLoop",
            StmtKind::Assign { .. } => "Assign",
            StmtKind::CompoundAssign { .. } => "CompoundAssign",
            StmtKind::Decl(_) => "Decl",
            StmtKind::If { .. } => "If",
            StmtKind::Block(_) => "Block",
            StmtKind::Opaque { .. } => "OpaqueStmt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    For(ForLoop),
    Assign { target: Expr, value: Expr },
    /// `target op= value`; `x++` is recorded as `x += 1`.
    CompoundAssign { target: Expr, op: BinOp, value: Expr },
    Decl(Vec<Declarator>),
    If { cond: Expr, then_branch: Box<Stmt>, else_branch: Option<Box<Stmt>> },
    Block(Vec<Stmt>),
    /// Anything outside the subset. `mentions` lists every resolved
    /// identifier inside it so liveness stays conservative.
    Opaque { reason: String, mentions: Vec<SymbolId> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Declarator {
    pub name: String,
    pub sym: SymbolId,
    pub ty: CType,
    pub dims: Vec<Expr>,
    pub init: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForLoop {
    pub id: LoopId,
    pub induction: SymbolId,
    pub induction_name: String,
    /// `for (int i = ...)` as opposed to `for (i = ...)`.
    pub declares_induction: bool,
    pub lower_expr: Expr,
    pub upper_expr: Expr,
    /// Lower bound, when affine.
    pub lower: Option<AffineExpr>,
    /// Exclusive upper bound, when affine (`i <= e` is stored as `e + 1`).
    pub upper: Option<AffineExpr>,
    pub step: i64,
    pub body: Box<Stmt>,
    /// From the `for` keyword to the closing parenthesis of the header.
    pub header_span: Span,
    pub pragma: Option<OmpPragma>,
}

impl ForLoop {
    /// Unit-step loop with affine bounds.
    pub fn is_canonical(&self) -> bool {
        self.step == 1 && self.lower.is_some() && self.upper.is_some()
    }

    /// Constant trip count when both bounds are constants.
    pub fn const_trip_count(&self) -> Option<i64> {
        let lo = self.lower.as_ref()?.as_constant()?;
        let hi = self.upper.as_ref()?.as_constant()?;
        Some((hi - lo).max(0))
    }

    pub fn body_stmts(&self) -> &[Stmt] {
        self.body.as_list()
    }

    /// The single nested loop when this loop's body is exactly one `for`.
    pub fn perfectly_nested_child(&self) -> Option<&ForLoop> {
        match self.body_stmts() {
            [Stmt { kind: StmtKind::For(inner), .. }] => Some(inner),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Shl,
    Shr,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
    BitAnd,
    BitOr,
    BitXor,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::BitAnd => "&",
            BinOp::BitOr => "|",
            BinOp::BitXor => "^",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge | BinOp::Eq | BinOp::Ne)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
    BitNot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub span: Span,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Float { value: f64, single: bool },
    Var { name: String, sym: SymbolId },
    Index { base: Box<Expr>, index: Box<Expr> },
    Unary { op: UnOp, operand: Box<Expr> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Ternary { cond: Box<Expr>, then_expr: Box<Expr>, else_expr: Box<Expr> },
    /// Call to a side-effect-free math routine.
    Call { name: String, args: Vec<Expr> },
    Cast { ty: CType, expr: Box<Expr> },
}

impl Expr {
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Index { base, index } => {
                base.walk(f);
                index.walk(f);
            }
            ExprKind::Unary { operand, .. } => operand.walk(f),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            ExprKind::Ternary { cond, then_expr, else_expr } => {
                cond.walk(f);
                then_expr.walk(f);
                else_expr.walk(f);
            }
            ExprKind::Call { args, .. } => args.iter().for_each(|a| a.walk(f)),
            ExprKind::Cast { expr, .. } => expr.walk(f),
            _ => {}
        }
    }

    pub fn as_var(&self) -> Option<SymbolId> {
        match &self.kind {
            ExprKind::Var { sym, .. } => Some(*sym),
            _ => None,
        }
    }

    /// For `a[e1][e2]`, returns the base symbol and subscripts outermost first.
    pub fn as_array_ref(&self) -> Option<(SymbolId, Vec<&Expr>)> {
        let mut subs = Vec::new();
        let mut cur = self;
        while let ExprKind::Index { base, index } = &cur.kind {
            subs.push(index.as_ref());
            cur = base;
        }
        if subs.is_empty() {
            return None;
        }
        subs.reverse();
        cur.as_var().map(|s| (s, subs))
    }

    /// Whether any sub-expression reads `sym` (as a scalar or array base).
    pub fn mentions(&self, sym: SymbolId) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if e.as_var() == Some(sym) {
                found = true;
            }
        });
        found
    }

    /// Structural equality ignoring spans.
    pub fn same_as(&self, other: &Expr) -> bool {
        use ExprKind::*;
        match (&self.kind, &other.kind) {
            (Int(a), Int(b)) => a == b,
            (Float { value: a, single: x }, Float { value: b, single: y }) => a == b && x == y,
            (Var { sym: a, .. }, Var { sym: b, .. }) => a == b,
            (Index { base: b1, index: i1 }, Index { base: b2, index: i2 }) => {
                b1.same_as(b2) && i1.same_as(i2)
            }
            (Unary { op: o1, operand: a }, Unary { op: o2, operand: b }) => o1 == o2 && a.same_as(b),
            (Binary { op: o1, lhs: l1, rhs: r1 }, Binary { op: o2, lhs: l2, rhs: r2 }) => {
                o1 == o2 && l1.same_as(l2) && r1.same_as(r2)
            }
            (
                Ternary { cond: c1, then_expr: t1, else_expr: e1 },
                Ternary { cond: c2, then_expr: t2, else_expr: e2 },
            ) => c1.same_as(c2) && t1.same_as(t2) && e1.same_as(e2),
            (Call { name: n1, args: a1 }, Call { name: n2, args: a2 }) => {
                n1 == n2 && a1.len() == a2.len() && a1.iter().zip(a2).all(|(x, y)| x.same_as(y))
            }
            (Cast { ty: t1, expr: e1 }, Cast { ty: t2, expr: e2 }) => t1 == t2 && e1.same_as(e2),
            _ => false,
        }
    }
}
