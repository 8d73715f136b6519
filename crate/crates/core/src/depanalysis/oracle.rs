//! Brute-force order oracle: runs a loop sequentially and under permuted
//! iteration orders on small concrete inputs and compares final states.
//!
//! Iterations execute atomically, so the oracle checks that every
//! serialization of the iterations agrees with the sequential one. Clause
//! semantics follow OpenMP: a private starts undefined in every iteration,
//! a reduction starts each iteration at its identity and the partials are
//! folded into the original value afterwards.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::frontend::{BinOp, Expr, ExprKind, ForLoop, FunctionDecl, ScalarType, Stmt, StmtKind, SymbolId, UnOp};
use crate::omp::{ParallelForClauses, ReductionOp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("oracle state space exceeded: {0}")]
    Overflow(String),
    #[error("oracle cannot interpret: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleVerdict {
    ParallelSafe { orders_checked: usize },
    /// `order` lists iteration indices (sequential numbering) in the
    /// execution order that diverged.
    OrderSensitive { order: Vec<usize>, detail: String },
}

impl OracleVerdict {
    pub fn is_safe(&self) -> bool {
        matches!(self, OracleVerdict::ParallelSafe { .. })
    }
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    /// Values for integer scalars by name (loop bounds such as `n`).
    pub params: BTreeMap<String, i64>,
    /// Value of integer scalars not listed in `params`.
    pub default_int: i64,
    /// Distinct cells one array may touch.
    pub max_cells: usize,
    pub max_iterations: usize,
    /// Statement executions per run.
    pub max_steps: u64,
    /// Enumerate every permutation up to this many iterations.
    pub exhaustive_limit: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            params: BTreeMap::new(),
            default_int: 4,
            max_cells: 64,
            max_iterations: 64,
            max_steps: 200_000,
            exhaustive_limit: 6,
            samples: 1000,
            seed: 0x5eed,
        }
    }
}

impl OracleConfig {
    pub fn with_param(mut self, name: &str, value: i64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Val {
    I(i64),
    F(f64),
    /// Value of a private before its first write in the iteration.
    Poison,
}

impl Val {
    fn as_f64(self) -> Option<f64> {
        match self {
            Val::I(v) => Some(v as f64),
            Val::F(v) => Some(v),
            Val::Poison => None,
        }
    }

    fn truthy(self) -> Result<bool, Stop> {
        match self {
            Val::I(v) => Ok(v != 0),
            Val::F(v) => Ok(v != 0.0),
            Val::Poison => Err(Stop::Poison),
        }
    }

    fn matches(self, other: Val) -> bool {
        match (self, other) {
            (Val::F(a), Val::F(b)) => a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0),
            (a, b) => a == b,
        }
    }
}

fn convert(v: Val, ty: ScalarType) -> Val {
    match (v, ty) {
        (Val::Poison, _) => Val::Poison,
        (Val::I(x), ScalarType::Int) => Val::I(x as i32 as i64),
        (Val::I(x), ScalarType::Long) => Val::I(x),
        (Val::F(x), ScalarType::Int) => Val::I(x as i32 as i64),
        (Val::F(x), ScalarType::Long) => Val::I(x as i64),
        (v, ScalarType::Float) => Val::F(v.as_f64().unwrap_or_default() as f32 as f64),
        (v, ScalarType::Double) => Val::F(v.as_f64().unwrap_or_default()),
    }
}

fn identity(op: ReductionOp, ty: ScalarType) -> Val {
    use ReductionOp::*;
    if ty.is_float() {
        let big = if ty == ScalarType::Float { f32::MAX as f64 } else { f64::MAX };
        return Val::F(match op {
            Add | BitOr | BitXor => 0.0,
            Mul => 1.0,
            Min => big,
            Max => -big,
            BitAnd => f64::NAN,
        });
    }
    let (min, max) = if ty == ScalarType::Int { (i32::MIN as i64, i32::MAX as i64) } else { (i64::MIN, i64::MAX) };
    Val::I(match op {
        Add | BitOr | BitXor => 0,
        Mul => 1,
        BitAnd => -1,
        Min => max,
        Max => min,
    })
}

fn combine(op: ReductionOp, a: Val, b: Val) -> Result<Val, Stop> {
    use ReductionOp::*;
    match op {
        Add => arith(BinOp::Add, a, b),
        Mul => arith(BinOp::Mul, a, b),
        BitAnd => arith(BinOp::BitAnd, a, b),
        BitOr => arith(BinOp::BitOr, a, b),
        BitXor => arith(BinOp::BitXor, a, b),
        Min | Max => {
            let less = arith(BinOp::Lt, a, b)?.truthy()?;
            Ok(if less == (op == Min) { a } else { b })
        }
    }
}

#[derive(Debug)]
enum Stop {
    /// Control flow or an address depends on an undefined private.
    Poison,
    Error(OracleError),
}

impl From<OracleError> for Stop {
    fn from(e: OracleError) -> Self {
        Stop::Error(e)
    }
}

fn unsupported(msg: impl Into<String>) -> Stop {
    Stop::Error(OracleError::Unsupported(msg.into()))
}

fn arith(op: BinOp, a: Val, b: Val) -> Result<Val, Stop> {
    use BinOp::*;
    if a == Val::Poison || b == Val::Poison {
        return match op {
            And | Or => Err(Stop::Poison),
            _ => Ok(Val::Poison),
        };
    }
    let bool_val = |c: bool| Val::I(c as i64);
    match (a, b) {
        (Val::I(x), Val::I(y)) => Ok(match op {
            Add => Val::I(x.wrapping_add(y)),
            Sub => Val::I(x.wrapping_sub(y)),
            Mul => Val::I(x.wrapping_mul(y)),
            Div | Rem if y == 0 => return Err(unsupported("integer division by zero")),
            Div => Val::I(x.wrapping_div(y)),
            Rem => Val::I(x.wrapping_rem(y)),
            Shl => Val::I(x.wrapping_shl(y as u32)),
            Shr => Val::I(x.wrapping_shr(y as u32)),
            Lt => bool_val(x < y),
            Gt => bool_val(x > y),
            Le => bool_val(x <= y),
            Ge => bool_val(x >= y),
            Eq => bool_val(x == y),
            Ne => bool_val(x != y),
            BitAnd => Val::I(x & y),
            BitOr => Val::I(x | y),
            BitXor => Val::I(x ^ y),
            And => bool_val(x != 0 && y != 0),
            Or => bool_val(x != 0 || y != 0),
        }),
        _ => {
            let (x, y) = (a.as_f64().unwrap_or_default(), b.as_f64().unwrap_or_default());
            Ok(match op {
                Add => Val::F(x + y),
                Sub => Val::F(x - y),
                Mul => Val::F(x * y),
                Div => Val::F(x / y),
                Lt => bool_val(x < y),
                Gt => bool_val(x > y),
                Le => bool_val(x <= y),
                Ge => bool_val(x >= y),
                Eq => bool_val(x == y),
                Ne => bool_val(x != y),
                And => bool_val(x != 0.0 && y != 0.0),
                Or => bool_val(x != 0.0 || y != 0.0),
                _ => return Err(unsupported(format!("operator `{}` on floating-point values", op.symbol()))),
            })
        }
    }
}

fn hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for p in parts {
        for b in p.iter() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, Clone, Default, PartialEq)]
struct State {
    scalars: BTreeMap<SymbolId, Val>,
    arrays: BTreeMap<SymbolId, BTreeMap<Vec<i64>, Val>>,
}

struct Interp<'a> {
    func: &'a FunctionDecl,
    cfg: &'a OracleConfig,
    state: State,
    /// Cells touched (read or written) per array.
    touched: HashMap<SymbolId, BTreeSet<Vec<i64>>>,
    steps: u64,
}

impl<'a> Interp<'a> {
    fn new(func: &'a FunctionDecl, cfg: &'a OracleConfig) -> Self {
        Interp { func, cfg, state: State::default(), touched: HashMap::new(), steps: 0 }
    }

    fn scalar_type(&self, sym: SymbolId) -> Result<ScalarType, Stop> {
        let s = self.func.symbol(sym);
        match s.ty {
            Some(t) => Ok(t.base),
            None => Err(unsupported(format!("`{}` has no known type", s.name))),
        }
    }

    fn initial_scalar(&self, sym: SymbolId) -> Result<Val, Stop> {
        let s = self.func.symbol(sym);
        let ty = self.scalar_type(sym)?;
        if ty.is_float() {
            Ok(Val::F((hash(&[s.key.as_bytes()]) % 5) as f64 + 1.0))
        } else {
            Ok(Val::I(self.cfg.params.get(&s.name).copied().unwrap_or(self.cfg.default_int)))
        }
    }

    fn initial_cell(&self, sym: SymbolId, idx: &[i64]) -> Result<Val, Stop> {
        let s = self.func.symbol(sym);
        let bytes: Vec<u8> = idx.iter().flat_map(|i| i.to_le_bytes()).collect();
        let v = (hash(&[s.key.as_bytes(), &bytes]) % 9) as i64 - 3;
        Ok(if self.scalar_type(sym)?.is_float() { Val::F(v as f64) } else { Val::I(v) })
    }

    fn read_scalar(&mut self, sym: SymbolId) -> Result<Val, Stop> {
        if let Some(v) = self.state.scalars.get(&sym) {
            return Ok(*v);
        }
        let v = self.initial_scalar(sym)?;
        self.state.scalars.insert(sym, v);
        Ok(v)
    }

    fn write_scalar(&mut self, sym: SymbolId, v: Val) -> Result<(), Stop> {
        let ty = self.scalar_type(sym)?;
        self.state.scalars.insert(sym, convert(v, ty));
        Ok(())
    }

    fn touch(&mut self, sym: SymbolId, idx: &[i64]) -> Result<(), Stop> {
        let set = self.touched.entry(sym).or_default();
        if set.insert(idx.to_vec()) && set.len() > self.cfg.max_cells {
            return Err(Stop::Error(OracleError::Overflow(format!(
                "array `{}` touches more than {} cells",
                self.func.symbol(sym).name,
                self.cfg.max_cells
            ))));
        }
        Ok(())
    }

    fn cell(&mut self, e: &Expr) -> Result<(SymbolId, Vec<i64>), Stop> {
        let (sym, subs) = e.as_array_ref().ok_or_else(|| unsupported("unsupported lvalue"))?;
        let mut idx = Vec::with_capacity(subs.len());
        for s in subs {
            match self.eval(s)? {
                Val::I(v) => idx.push(v),
                Val::Poison => return Err(Stop::Poison),
                Val::F(_) => return Err(unsupported("floating-point subscript")),
            }
        }
        self.touch(sym, &idx)?;
        Ok((sym, idx))
    }

    fn read_cell(&mut self, sym: SymbolId, idx: &[i64]) -> Result<Val, Stop> {
        if let Some(v) = self.state.arrays.get(&sym).and_then(|m| m.get(idx)) {
            return Ok(*v);
        }
        self.initial_cell(sym, idx)
    }

    fn eval(&mut self, e: &Expr) -> Result<Val, Stop> {
        match &e.kind {
            ExprKind::Int(v) => Ok(Val::I(*v)),
            ExprKind::Float { value, single } => Ok(Val::F(if *single { *value as f32 as f64 } else { *value })),
            ExprKind::Var { sym, .. } => self.read_scalar(*sym),
            ExprKind::Index { .. } => {
                let (sym, idx) = self.cell(e)?;
                self.read_cell(sym, &idx)
            }
            ExprKind::Unary { op, operand } => {
                let v = self.eval(operand)?;
                match (op, v) {
                    (_, Val::Poison) => Ok(Val::Poison),
                    (UnOp::Neg, Val::I(x)) => Ok(Val::I(x.wrapping_neg())),
                    (UnOp::Neg, Val::F(x)) => Ok(Val::F(-x)),
                    (UnOp::Not, v) => Ok(Val::I(!v.truthy()? as i64)),
                    (UnOp::BitNot, Val::I(x)) => Ok(Val::I(!x)),
                    (UnOp::BitNot, Val::F(_)) => Err(unsupported("`~` on a floating-point value")),
                }
            }
            ExprKind::Binary { op: BinOp::And, lhs, rhs } => {
                if !self.eval(lhs)?.truthy()? {
                    return Ok(Val::I(0));
                }
                Ok(Val::I(self.eval(rhs)?.truthy()? as i64))
            }
            ExprKind::Binary { op: BinOp::Or, lhs, rhs } => {
                if self.eval(lhs)?.truthy()? {
                    return Ok(Val::I(1));
                }
                Ok(Val::I(self.eval(rhs)?.truthy()? as i64))
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let (a, b) = (self.eval(lhs)?, self.eval(rhs)?);
                arith(*op, a, b)
            }
            ExprKind::Ternary { cond, then_expr, else_expr } => {
                if self.eval(cond)?.truthy()? {
                    self.eval(then_expr)
                } else {
                    self.eval(else_expr)
                }
            }
            ExprKind::Call { name, args } => {
                let vals = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
                if vals.contains(&Val::Poison) {
                    return Ok(Val::Poison);
                }
                let f = |i: usize| vals.get(i).and_then(|v| v.as_f64()).unwrap_or_default();
                let single = name.ends_with('f') && name != "fabs";
                let out = match name.as_str() {
                    "abs" => return Ok(Val::I(f(0).abs() as i64)),
                    "fabs" | "fabsf" => f(0).abs(),
                    "fmax" | "fmaxf" => f(0).max(f(1)),
                    "fmin" | "fminf" => f(0).min(f(1)),
                    "sqrt" | "sqrtf" => f(0).sqrt(),
                    "exp" | "expf" => f(0).exp(),
                    other => return Err(unsupported(format!("call to `{other}`"))),
                };
                Ok(Val::F(if single { out as f32 as f64 } else { out }))
            }
            ExprKind::Cast { ty, expr } => {
                let v = self.eval(expr)?;
                if ty.is_pointer() {
                    return Err(unsupported("pointer cast"));
                }
                Ok(convert(v, ty.base))
            }
        }
    }

    fn store(&mut self, target: &Expr, v: Val) -> Result<(), Stop> {
        if let Some(sym) = target.as_var() {
            return self.write_scalar(sym, v);
        }
        let (sym, idx) = self.cell(target)?;
        let ty = self.scalar_type(sym)?;
        self.state.arrays.entry(sym).or_default().insert(idx, convert(v, ty));
        Ok(())
    }

    fn step(&mut self) -> Result<(), Stop> {
        self.steps += 1;
        if self.steps > self.cfg.max_steps {
            return Err(Stop::Error(OracleError::Overflow(format!("more than {} statements executed", self.cfg.max_steps))));
        }
        Ok(())
    }

    fn exec(&mut self, s: &Stmt) -> Result<(), Stop> {
        self.step()?;
        match &s.kind {
            StmtKind::Assign { target, value } => {
                let v = self.eval(value)?;
                self.store(target, v)
            }
            StmtKind::CompoundAssign { target, op, value } => {
                let v = self.eval(value)?;
                let old = self.eval(target)?;
                let new = arith(*op, old, v)?;
                self.store(target, new)
            }
            StmtKind::Decl(ds) => {
                for d in ds {
                    if !d.dims.is_empty() {
                        // Fresh array: drop any contents from an earlier iteration.
                        self.state.arrays.remove(&d.sym);
                        continue;
                    }
                    let v = match &d.init {
                        Some(e) => self.eval(e)?,
                        None => Val::Poison,
                    };
                    self.write_scalar(d.sym, v)?;
                }
                Ok(())
            }
            StmtKind::If { cond, then_branch, else_branch } => {
                if self.eval(cond)?.truthy()? {
                    self.exec(then_branch)
                } else if let Some(e) = else_branch {
                    self.exec(e)
                } else {
                    Ok(())
                }
            }
            StmtKind::Block(b) => b.iter().try_for_each(|x| self.exec(x)),
            StmtKind::For(l) => self.run_loop(l),
            StmtKind::Opaque { reason, .. } => Err(unsupported(format!("opaque statement ({reason})"))),
        }
    }

    fn bound(&mut self, e: &Option<crate::frontend::AffineExpr>) -> Result<i64, Stop> {
        let e = e.as_ref().ok_or_else(|| unsupported("non-affine loop bound"))?;
        let mut vals = HashMap::new();
        for k in e.vars() {
            let sym = self.func.symbol_by_key(k).ok_or_else(|| unsupported(format!("unknown variable `{k}`")))?;
            match self.read_scalar(sym)? {
                Val::I(v) => vals.insert(k.to_string(), v),
                Val::Poison => return Err(Stop::Poison),
                Val::F(_) => return Err(unsupported("floating-point loop bound")),
            };
        }
        e.eval(&|k| vals.get(k).copied()).ok_or_else(|| unsupported("loop bound"))
    }

    fn in_range(&mut self, l: &ForLoop, v: i64) -> Result<bool, Stop> {
        Ok(if l.step > 0 { v < self.bound(&l.upper)? } else { v >= self.bound(&l.lower)? })
    }

    fn start(&mut self, l: &ForLoop) -> Result<i64, Stop> {
        match self.eval(&l.lower_expr)? {
            Val::I(v) => Ok(v),
            Val::Poison => Err(Stop::Poison),
            Val::F(_) => Err(unsupported("floating-point loop start")),
        }
    }

    fn run_loop(&mut self, l: &ForLoop) -> Result<(), Stop> {
        let mut v = self.start(l)?;
        self.write_scalar(l.induction, Val::I(v))?;
        while self.in_range(l, v)? {
            self.exec(&l.body)?;
            v = match self.read_scalar(l.induction)? {
                Val::I(x) => x + l.step,
                _ => return Err(Stop::Poison),
            };
            self.write_scalar(l.induction, Val::I(v))?;
            self.step()?;
        }
        Ok(())
    }
}

/// The perfectly nested loops covered by `collapse`, outermost first.
fn collapsed(l: &ForLoop, depth: usize) -> Result<Vec<&ForLoop>, OracleError> {
    let mut out = vec![l];
    while out.len() < depth {
        let inner = out.last().and_then(|x| x.perfectly_nested_child()).ok_or_else(|| {
            OracleError::Unsupported(format!("collapse({depth}) over a nest that is not perfectly nested"))
        })?;
        out.push(inner);
    }
    Ok(out)
}

/// Iteration tuples of the collapsed nest in sequential order.
fn units(interp: &mut Interp<'_>, nest: &[&ForLoop], prefix: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) -> Result<(), Stop> {
    let Some((l, rest)) = nest.split_first() else {
        out.push(prefix.clone());
        if out.len() > interp.cfg.max_iterations {
            return Err(Stop::Error(OracleError::Overflow(format!("more than {} iterations", interp.cfg.max_iterations))));
        }
        return Ok(());
    };
    let mut v = interp.start(l)?;
    loop {
        interp.write_scalar(l.induction, Val::I(v))?;
        if !interp.in_range(l, v)? {
            break;
        }
        prefix.push(v);
        units(interp, rest, prefix, out)?;
        prefix.pop();
        v += l.step;
    }
    Ok(())
}

fn resolve(func: &FunctionDecl, name: &str) -> Result<SymbolId, OracleError> {
    let mut found = None;
    for (i, s) in func.symbols.iter().enumerate() {
        if s.name == name && (found.is_none() || s.key == name) {
            found = Some(SymbolId(i as u32));
        }
    }
    found.ok_or_else(|| OracleError::Unsupported(format!("clause names unknown variable `{name}`")))
}

fn to_error(stop: Stop, what: &str) -> OracleError {
    match stop {
        Stop::Error(e) => e,
        Stop::Poison => OracleError::Unsupported(format!("{what} depends on an uninitialized value")),
    }
}

/// Decides whether the iterations of `l` may run in any order under the
/// given clauses.
pub fn brute_force_oracle(
    func: &FunctionDecl,
    l: &ForLoop,
    clauses: &ParallelForClauses,
    cfg: &OracleConfig,
) -> Result<OracleVerdict, OracleError> {
    let nest = collapsed(l, clauses.collapse.unwrap_or(1).max(1) as usize)?;
    let reductions: Vec<(ReductionOp, SymbolId)> =
        clauses.reductions.iter().map(|(op, v)| Ok((*op, resolve(func, v)?))).collect::<Result<_, OracleError>>()?;
    let privates: Vec<SymbolId> = clauses.privates.iter().map(|v| resolve(func, v)).collect::<Result<_, _>>()?;

    // Symbols with no meaning after the loop.
    let mut excluded: BTreeSet<SymbolId> = nest.iter().map(|x| x.induction).collect();
    excluded.extend(super::scalars::declared_within(func, &l.body));
    excluded.extend(privates.iter().copied());

    let mut seq = Interp::new(func, cfg);
    let mut list = Vec::new();
    units(&mut seq, &nest, &mut Vec::new(), &mut list).map_err(|s| to_error(s, "loop bounds"))?;
    let initial = seq.state.clone();
    for u in &list {
        run_unit(&mut seq, &nest, u, &[], &[]).map_err(|s| to_error(s, "sequential execution"))?;
    }
    let expected = seq.state;

    let n = list.len();
    let mut orders: Vec<Vec<usize>> = Vec::new();
    if n <= cfg.exhaustive_limit {
        permutations(n, &mut orders);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        orders.push((0..n).rev().collect());
        for _ in 0..cfg.samples {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            orders.push(p);
        }
    }

    for order in &orders {
        let mut par = Interp::new(func, cfg);
        par.state = initial.clone();
        let originals: Vec<Val> = reductions.iter().map(|(_, v)| par.read_scalar(*v)).collect::<Result<_, _>>().map_err(|s| to_error(s, "reduction variable"))?;
        let mut partials: Vec<Vec<Val>> = vec![Vec::new(); reductions.len()];
        let mut sensitive = None;
        for &k in order {
            match run_unit(&mut par, &nest, &list[k], &reductions, &privates) {
                Ok(p) => p.into_iter().enumerate().for_each(|(i, v)| partials[i].push(v)),
                Err(Stop::Poison) => {
                    sensitive = Some("control flow or a subscript reads a private before writing it".to_string());
                    break;
                }
                Err(Stop::Error(e)) => return Err(e),
            }
        }
        if sensitive.is_none() {
            for (i, (op, v)) in reductions.iter().enumerate() {
                let mut acc = originals[i];
                for p in &partials[i] {
                    acc = combine(*op, acc, *p).map_err(|s| to_error(s, "reduction combine"))?;
                }
                par.write_scalar(*v, acc).map_err(|s| to_error(s, "reduction"))?;
            }
            sensitive = diff(func, &expected, &par.state, &excluded, &par);
        }
        if let Some(detail) = sensitive {
            return Ok(OracleVerdict::OrderSensitive { order: order.clone(), detail });
        }
    }
    Ok(OracleVerdict::ParallelSafe { orders_checked: orders.len() })
}

/// Runs one iteration of the collapsed nest and returns the reduction partials.
fn run_unit(
    interp: &mut Interp<'_>,
    nest: &[&ForLoop],
    values: &[i64],
    reductions: &[(ReductionOp, SymbolId)],
    privates: &[SymbolId],
) -> Result<Vec<Val>, Stop> {
    for p in privates {
        interp.state.scalars.insert(*p, Val::Poison);
    }
    for (op, v) in reductions {
        let ty = interp.scalar_type(*v)?;
        interp.state.scalars.insert(*v, identity(*op, ty));
    }
    for (l, v) in nest.iter().zip(values) {
        interp.write_scalar(l.induction, Val::I(*v))?;
    }
    let body = &nest.last().expect("nest is non-empty").body;
    interp.exec(body)?;
    reductions.iter().map(|(_, v)| interp.read_scalar(*v)).collect()
}

fn diff(func: &FunctionDecl, want: &State, got: &State, excluded: &BTreeSet<SymbolId>, interp: &Interp<'_>) -> Option<String> {
    let keys: BTreeSet<SymbolId> = want.scalars.keys().chain(got.scalars.keys()).copied().collect();
    for k in keys {
        if excluded.contains(&k) {
            continue;
        }
        let a = want.scalars.get(&k).copied().or_else(|| interp.initial_scalar(k).ok());
        let b = got.scalars.get(&k).copied().or_else(|| interp.initial_scalar(k).ok());
        if !matches!((a, b), (Some(x), Some(y)) if x.matches(y)) {
            return Some(format!("`{}`: sequential {:?}, permuted {:?}", func.symbol(k).name, a, b));
        }
    }
    let arrays: BTreeSet<SymbolId> = want.arrays.keys().chain(got.arrays.keys()).copied().collect();
    let empty = BTreeMap::new();
    for sym in arrays {
        if excluded.contains(&sym) {
            continue;
        }
        let (wa, ga) = (want.arrays.get(&sym).unwrap_or(&empty), got.arrays.get(&sym).unwrap_or(&empty));
        let cells: BTreeSet<&Vec<i64>> = wa.keys().chain(ga.keys()).collect();
        for idx in cells {
            let a = wa.get(idx).copied().or_else(|| interp.initial_cell(sym, idx).ok());
            let b = ga.get(idx).copied().or_else(|| interp.initial_cell(sym, idx).ok());
            if !matches!((a, b), (Some(x), Some(y)) if x.matches(y)) {
                return Some(format!("`{}{:?}`: sequential {:?}, permuted {:?}", func.symbol(sym).name, idx, a, b));
            }
        }
    }
    None
}

/// All permutations of `0..n` in lexicographic order.
fn permutations(n: usize, out: &mut Vec<Vec<usize>>) {
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else { return };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    fn check(src: &str, clauses: &str, cfg: OracleConfig) -> Result<OracleVerdict, OracleError> {
        let unit = parse("t.c", src).unwrap();
        let f = &unit.functions[0];
        let l = f.loops()[0];
        let c = if clauses.is_empty() {
            ParallelForClauses::default()
        } else {
            ParallelForClauses::parse(&format!("#pragma omp parallel for {clauses}")).unwrap()
        };
        brute_force_oracle(f, l, &c, &cfg)
    }

    fn safe(src: &str, clauses: &str) -> bool {
        check(src, clauses, OracleConfig::default().with_param("n", 5)).unwrap().is_safe()
    }

    #[test]
    fn permutation_count() {
        let mut out = Vec::new();
        permutations(4, &mut out);
        assert_eq!(out.len(), 24);
        let set: BTreeSet<_> = out.iter().collect();
        assert_eq!(set.len(), 24);
    }

    #[test]
    fn vector_add_is_safe() {
        assert!(safe("void f(float* a, float* b, float* c, int n) { for (int i = 0; i < n; i++) c[i] = a[i] + b[i]; }", ""));
    }

    #[test]
    fn recurrence_is_order_sensitive() {
        let v = check(
            "void f(int* a, int n) { for (int i = 1; i < n; i++) a[i] = a[i-1] + 1; }",
            "",
            OracleConfig::default().with_param("n", 5),
        )
        .unwrap();
        assert!(matches!(v, OracleVerdict::OrderSensitive { .. }), "{v:?}");
    }

    #[test]
    fn integer_sum_needs_no_clause() {
        let src = "void f(int* a, int n, int* out) { int s = 0; for (int i = 0; i < n; i++) s += a[i]; out[0] = s; }";
        assert!(safe(src, ""));
        assert!(safe(src, "reduction(+:s)"));
    }

    #[test]
    fn wrong_reduction_operator_is_caught() {
        let src = "void f(int* a, int n) { int s = 1; for (int i = 0; i < n; i++) s += a[i]; }";
        assert!(!safe(src, "reduction(*:s)"));
    }

    #[test]
    fn shared_temporary_differs_but_private_is_fine() {
        let src = "void f(int* a, int* b, int n) { int t; for (int i = 0; i < n; i++) { t = a[i]; b[i] = t * 2; } }";
        assert!(!safe(src, ""));
        assert!(safe(src, "private(t)"));
    }

    #[test]
    fn false_private_is_caught() {
        let src = "void f(int* a, int* b, int n) { int t = 2; for (int i = 0; i < n; i++) { b[i] = t; t = a[i]; } }";
        assert!(!safe(src, "private(t)"));
    }

    #[test]
    fn max_reduction() {
        let src = "void f(int* a, int n) { int m = -100; for (int i = 0; i < n; i++) if (a[i] > m) m = a[i]; }";
        assert!(safe(src, "reduction(max:m)"));
    }

    #[test]
    fn collapsed_matmul() {
        let src = "void matmul(float* A, float* B, float* C, int n) {
  for (int i = 0; i < n; i++)
    for (int j = 0; j < n; j++) {
      float sum = 0.0f;
      for (int k = 0; k < n; k++)
        sum += A[i*n + k] * B[k*n + j];
      C[i*n + j] = sum;
    }
}";
        let v = check(src, "collapse(2)", OracleConfig::default().with_param("n", 3)).unwrap();
        assert!(v.is_safe(), "{v:?}");
        assert!(matches!(v, OracleVerdict::ParallelSafe { orders_checked } if orders_checked == 1001));
    }

    #[test]
    fn overflow_when_arrays_are_large() {
        let src = "void f(int* a, int n) { for (int i = 0; i < n; i++) a[i] = 0; }";
        let mut cfg = OracleConfig::default().with_param("n", 100);
        cfg.max_iterations = 1000;
        assert!(matches!(check(src, "", cfg), Err(OracleError::Overflow(_))));
    }

    #[test]
    fn opaque_body_is_unsupported() {
        let src = "void f(int* a, int n) { for (int i = 0; i < n; i++) { printf(\"%d\", a[i]); } }";
        assert!(matches!(check(src, "", OracleConfig::default().with_param("n", 3)), Err(OracleError::Unsupported(_))));
    }
}
