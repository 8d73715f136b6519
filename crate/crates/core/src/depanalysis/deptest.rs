//! Subscript dependence tests: ZIV, strong SIV, and GCD.
//!
//! Strong SIV accepts a symbolic coefficient (the `n` in `i*n + j`). When the
//! residual after removing the tested variable is bounded strictly inside
//! `(-|c|, |c|)` over the iteration space, no two distinct iterations can
//! meet. That is what proves linearized row-major subscripts independent
//! without de-linearizing them.

use std::collections::HashMap;

use crate::frontend::AffineExpr;

/// Bounds of one induction variable, keyed by symbol key.
#[derive(Debug, Clone)]
pub struct LoopVarInfo {
    pub lower: Option<AffineExpr>,
    /// Exclusive.
    pub upper: Option<AffineExpr>,
}

pub type LoopVars = HashMap<String, LoopVarInfo>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepTest {
    Independent,
    /// `distance` is `sink - source` in the tested variable, signed from the
    /// first access to the second; `None` when not a single constant.
    Dependent { distance: Option<i64> },
}

impl DepTest {
    pub fn is_independent(&self) -> bool {
        matches!(self, DepTest::Independent)
    }
}

const SIDE_A: &str = "#a";
const SIDE_B: &str = "#b";

fn base_key(k: &str) -> &str {
    k.strip_suffix(SIDE_A).or_else(|| k.strip_suffix(SIDE_B)).unwrap_or(k)
}

/// Renames induction variables at positions `>= split` of `ctx` with a side
/// suffix, so the two accesses get independent copies of them.
fn rename(e: &AffineExpr, ctx: &[String], split: usize, suffix: &str) -> Option<AffineExpr> {
    let mut out = e.clone();
    for key in ctx.iter().skip(split) {
        if out.mentions(key) {
            out = out.substitute(key, &AffineExpr::var(&format!("{key}{suffix}")))?;
        }
    }
    Some(out)
}

struct Env<'a> {
    vars: &'a LoopVars,
    /// Proven lower bounds of loop-invariant parameters.
    facts: HashMap<String, i64>,
}

impl Env<'_> {
    fn new<'a>(vars: &'a LoopVars, ctx_a: &[String], ctx_b: &[String]) -> Env<'a> {
        let mut facts: HashMap<String, i64> = HashMap::new();
        for key in ctx_a.iter().chain(ctx_b) {
            let Some(info) = vars.get(key) else { continue };
            let (Some(lo), Some(hi)) = (&info.lower, &info.upper) else { continue };
            let Some(c0) = lo.as_constant() else { continue };
            // `hi = p + c1` with `p` a parameter: the loop body runs only if
            // p + c1 >= c0 + 1.
            if hi.terms.len() == 1 {
                let (m, coeff) = hi.terms.iter().next().unwrap();
                if *coeff == 1 && m.vars().len() == 1 && !vars.contains_key(&m.vars()[0]) {
                    let p = m.vars()[0].clone();
                    let lb = c0 + 1 - hi.constant;
                    let entry = facts.entry(p).or_insert(lb);
                    *entry = (*entry).max(lb);
                }
            }
        }
        Env { vars, facts }
    }

    fn is_loop_var(&self, key: &str) -> bool {
        self.vars.contains_key(base_key(key))
    }

    fn has_loop_vars(&self, e: &AffineExpr) -> bool {
        e.vars().iter().any(|v| self.is_loop_var(v))
    }

    /// True when `e >= 0` for every parameter valuation consistent with the
    /// known lower bounds.
    fn prove_nonneg(&self, e: &AffineExpr) -> bool {
        let mut cur = e.clone();
        for v in e.vars() {
            if self.is_loop_var(v) {
                return false;
            }
            let Some(lb) = self.facts.get(v) else { return false };
            let shifted = AffineExpr::var(v).add(&AffineExpr::constant(*lb));
            match cur.substitute(v, &shifted) {
                Some(next) => cur = next,
                None => return false,
            }
        }
        cur.constant >= 0 && cur.terms.values().all(|c| *c >= 0)
    }

    fn param_product_nonneg(&self, vars: &[String]) -> bool {
        vars.iter().all(|v| self.facts.get(v).is_some_and(|lb| *lb >= 0))
    }

    /// Symbolic `[lo, hi]` of `e` over the iteration space.
    fn interval(&self, e: &AffineExpr) -> Option<(AffineExpr, AffineExpr)> {
        let mut lo = AffineExpr::constant(e.constant);
        let mut hi = AffineExpr::constant(e.constant);
        for (m, c) in &e.terms {
            let loop_vars: Vec<&String> = m.vars().iter().filter(|v| self.is_loop_var(v)).collect();
            let params: Vec<String> = m.vars().iter().filter(|v| !self.is_loop_var(v)).cloned().collect();
            match loop_vars.as_slice() {
                [] => {
                    let t = monomial_expr(m.vars(), *c)?;
                    lo = lo.add(&t);
                    hi = hi.add(&t);
                }
                [v] => {
                    if !self.param_product_nonneg(&params) {
                        return None;
                    }
                    let info = self.vars.get(base_key(v))?;
                    let lv = info.lower.clone()?;
                    let uv = info.upper.as_ref()?.sub(&AffineExpr::constant(1));
                    if self.has_loop_vars(&lv) || self.has_loop_vars(&uv) {
                        return None;
                    }
                    let coeff = monomial_expr(&params, *c)?;
                    let (a, b) = (coeff.mul(&lv)?, coeff.mul(&uv)?);
                    if *c > 0 {
                        lo = lo.add(&a);
                        hi = hi.add(&b);
                    } else {
                        lo = lo.add(&b);
                        hi = hi.add(&a);
                    }
                }
                _ => return None,
            }
        }
        Some((lo, hi))
    }

    fn trip_count(&self, key: &str) -> Option<i64> {
        let info = self.vars.get(base_key(key))?;
        let lo = info.lower.as_ref()?.as_constant()?;
        let hi = info.upper.as_ref()?.as_constant()?;
        Some((hi - lo).max(0))
    }

    /// GCD test over linear terms with constant coefficients. Anything
    /// symbolic is inconclusive.
    fn gcd_independent(&self, e: &AffineExpr) -> bool {
        let mut g = 0i64;
        for (m, c) in &e.terms {
            if m.vars().len() != 1 || !self.is_loop_var(&m.vars()[0]) {
                return false;
            }
            g = gcd(g, c.abs());
        }
        g != 0 && e.constant % g != 0
    }

    /// Interval reasoning: `e` can never be zero.
    fn never_zero(&self, e: &AffineExpr) -> bool {
        match self.interval(e) {
            Some((lo, hi)) => {
                self.prove_nonneg(&lo.sub(&AffineExpr::constant(1))) || self.prove_nonneg(&hi.scale(-1).sub(&AffineExpr::constant(1)))
            }
            None => false,
        }
    }
}

fn monomial_expr(vars: &[String], c: i64) -> Option<AffineExpr> {
    let mut e = AffineExpr::constant(c);
    for v in vars {
        e = e.mul(&AffineExpr::var(v))?;
    }
    Some(e)
}

pub fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Tests whether two distinct iterations of the loop at `level` (0-based
/// position in the common nest) can touch the same element, with every
/// enclosing loop at the same iteration.
///
/// `ctx_a`/`ctx_b` are the induction keys of the loops enclosing each
/// access, outermost first; `level < common depth`.
pub fn test_carried(
    a: &[AffineExpr],
    ctx_a: &[String],
    b: &[AffineExpr],
    ctx_b: &[String],
    level: usize,
    vars: &LoopVars,
) -> DepTest {
    let env = Env::new(vars, ctx_a, ctx_b);
    let x = &ctx_a[level];
    let (xa, xb) = (format!("{x}{SIDE_A}"), format!("{x}{SIDE_B}"));
    combine_dims(a, b, |da, db| {
        let ra = rename(da, ctx_a, level, SIDE_A)?;
        let rb = rename(db, ctx_b, level, SIDE_B)?;
        Some(test_dim(&env, &ra.sub(&rb), Some((&xa, &xb))))
    })
}

/// Tests whether the accesses can touch the same element within one
/// iteration of all `common` shared loops.
pub fn test_same_iteration(
    a: &[AffineExpr],
    ctx_a: &[String],
    b: &[AffineExpr],
    ctx_b: &[String],
    common: usize,
    vars: &LoopVars,
) -> DepTest {
    let env = Env::new(vars, ctx_a, ctx_b);
    combine_dims(a, b, |da, db| {
        let ra = rename(da, ctx_a, common, SIDE_A)?;
        let rb = rename(db, ctx_b, common, SIDE_B)?;
        Some(test_dim(&env, &ra.sub(&rb), None))
    })
    .same_iteration()
}

impl DepTest {
    fn same_iteration(self) -> DepTest {
        match self {
            DepTest::Independent => DepTest::Independent,
            DepTest::Dependent { .. } => DepTest::Dependent { distance: Some(0) },
        }
    }
}

fn combine_dims(
    a: &[AffineExpr],
    b: &[AffineExpr],
    mut f: impl FnMut(&AffineExpr, &AffineExpr) -> Option<DepTest>,
) -> DepTest {
    if a.len() != b.len() {
        return DepTest::Dependent { distance: None };
    }
    let mut distance: Option<Option<i64>> = None;
    for (da, db) in a.iter().zip(b) {
        match f(da, db) {
            Some(DepTest::Independent) => return DepTest::Independent,
            Some(DepTest::Dependent { distance: Some(d) }) => match distance {
                Some(Some(prev)) if prev != d => return DepTest::Independent,
                _ => distance = Some(Some(d)),
            },
            Some(DepTest::Dependent { distance: None }) | None => {
                if distance.is_none() {
                    distance = Some(None);
                }
            }
        }
    }
    DepTest::Dependent { distance: distance.flatten() }
}

fn test_dim(env: &Env<'_>, d: &AffineExpr, level_vars: Option<(&str, &str)>) -> DepTest {
    let unknown = DepTest::Dependent { distance: None };
    let Some((xa, xb)) = level_vars else {
        return ziv_or_gcd(env, d);
    };
    let Some((ca, rest)) = d.split_var(xa) else { return unknown };
    let Some((cb, r)) = rest.split_var(xb) else { return unknown };
    if ca.is_zero() && cb.is_zero() {
        return ziv_or_gcd(env, &r);
    }
    if ca == cb.scale(-1) {
        let (mut c, mut r) = (ca, r);
        if let (Some(cv), Some(rv)) = (c.as_constant(), r.as_constant()) {
            // c*xa - c*xb + r = 0  =>  xb - xa = r / c
            if rv % cv != 0 {
                return DepTest::Independent;
            }
            let delta = rv / cv;
            if delta == 0 {
                return DepTest::Independent;
            }
            if env.trip_count(xa).is_some_and(|t| delta.abs() >= t) {
                return DepTest::Independent;
            }
            return DepTest::Dependent { distance: Some(delta) };
        }
        if !env.prove_nonneg(&c.sub(&AffineExpr::constant(1))) {
            c = c.scale(-1);
            r = r.scale(-1);
        }
        if env.prove_nonneg(&c.sub(&AffineExpr::constant(1))) {
            if let Some((lo, hi)) = env.interval(&r) {
                let one = AffineExpr::constant(1);
                if env.prove_nonneg(&c.sub(&one).sub(&hi)) && env.prove_nonneg(&lo.add(&c).sub(&one)) {
                    return DepTest::Independent;
                }
            }
        }
    }
    if env.gcd_independent(d) {
        return DepTest::Independent;
    }
    unknown
}

fn ziv_or_gcd(env: &Env<'_>, d: &AffineExpr) -> DepTest {
    if let Some(c) = d.as_constant() {
        return if c == 0 { DepTest::Dependent { distance: None } } else { DepTest::Independent };
    }
    if !env.has_loop_vars(d) {
        let one = AffineExpr::constant(1);
        if env.prove_nonneg(&d.sub(&one)) || env.prove_nonneg(&d.scale(-1).sub(&one)) {
            return DepTest::Independent;
        }
        return DepTest::Dependent { distance: None };
    }
    if env.gcd_independent(d) || env.never_zero(d) {
        return DepTest::Independent;
    }
    DepTest::Dependent { distance: None }
}
