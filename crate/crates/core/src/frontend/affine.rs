//! Canonical integer polynomials used for subscripts and loop bounds.
//!
//! A term is a monomial (a product of symbol keys) with an integer
//! coefficient. Linearized subscripts such as `i*n + j` stay in this form:
//! the term `i*n` is linear in the induction variable `i` with the symbolic
//! coefficient `n`.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::ir::{BinOp, ExprKind, FunctionDecl, ScalarType, Symbol, UnOp};
use super::Expr;

/// Sorted product of symbol keys. The empty monomial is never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial(Vec<String>);

impl Monomial {
    pub fn var(name: &str) -> Self {
        Monomial(vec![name.to_string()])
    }

    pub fn vars(&self) -> &[String] {
        &self.0
    }

    pub fn degree_in(&self, var: &str) -> usize {
        self.0.iter().filter(|v| *v == var).count()
    }

    fn times(&self, other: &Monomial) -> Monomial {
        let mut v = self.0.clone();
        v.extend(other.0.iter().cloned());
        v.sort();
        Monomial(v)
    }

    fn without_one(&self, var: &str) -> Monomial {
        let mut v = self.0.clone();
        if let Some(p) = v.iter().position(|x| x == var) {
            v.remove(p);
        }
        Monomial(v)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("*"))
    }
}

impl Serialize for Monomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Monomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut v: Vec<String> = s.split('*').map(str::to_string).collect();
        v.sort();
        Ok(Monomial(v))
    }
}

const MAX_DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct AffineExpr {
    pub constant: i64,
    pub terms: BTreeMap<Monomial, i64>,
}

impl AffineExpr {
    pub fn constant(c: i64) -> Self {
        AffineExpr { constant: c, terms: BTreeMap::new() }
    }

    pub fn var(name: &str) -> Self {
        Self::term(Monomial::var(name), 1)
    }

    pub fn term(m: Monomial, coeff: i64) -> Self {
        let mut e = AffineExpr::default();
        if m.0.is_empty() {
            e.constant = coeff;
        } else if coeff != 0 {
            e.terms.insert(m, coeff);
        }
        e
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<i64> {
        self.is_constant().then_some(self.constant)
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0 && self.terms.is_empty()
    }

    /// Every symbol key that appears in some term.
    pub fn vars(&self) -> BTreeSet<&str> {
        self.terms.keys().flat_map(|m| m.0.iter().map(String::as_str)).collect()
    }

    pub fn mentions(&self, var: &str) -> bool {
        self.terms.keys().any(|m| m.degree_in(var) > 0)
    }

    fn add_term(&mut self, m: Monomial, c: i64) {
        if m.0.is_empty() {
            self.constant = self.constant.wrapping_add(c);
            return;
        }
        let entry = self.terms.entry(m.clone()).or_insert(0);
        *entry = entry.wrapping_add(c);
        if *entry == 0 {
            self.terms.remove(&m);
        }
    }

    pub fn add(&self, other: &AffineExpr) -> AffineExpr {
        let mut out = self.clone();
        out.constant = out.constant.wrapping_add(other.constant);
        for (m, c) in &other.terms {
            out.add_term(m.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &AffineExpr) -> AffineExpr {
        self.add(&other.scale(-1))
    }

    pub fn scale(&self, k: i64) -> AffineExpr {
        if k == 0 {
            return AffineExpr::default();
        }
        AffineExpr {
            constant: self.constant.wrapping_mul(k),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c.wrapping_mul(k))).collect(),
        }
    }

    /// Polynomial product; `None` when a resulting monomial would exceed the
    /// supported degree.
    pub fn mul(&self, other: &AffineExpr) -> Option<AffineExpr> {
        let mut out = AffineExpr::constant(self.constant.wrapping_mul(other.constant));
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c.wrapping_mul(other.constant));
        }
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.wrapping_mul(self.constant));
        }
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                let m = m1.times(m2);
                if m.0.len() > MAX_DEGREE {
                    return None;
                }
                out.add_term(m, c1.wrapping_mul(*c2));
            }
        }
        Some(out)
    }

    /// Splits `self` as `coeff * var + rest`. Returns `None` when `var`
    /// occurs with degree above one in some term.
    pub fn split_var(&self, var: &str) -> Option<(AffineExpr, AffineExpr)> {
        let mut coeff = AffineExpr::default();
        let mut rest = AffineExpr::constant(self.constant);
        for (m, c) in &self.terms {
            match m.degree_in(var) {
                0 => rest.add_term(m.clone(), *c),
                1 => coeff.add_term(m.without_one(var), *c),
                _ => return None,
            }
        }
        Some((coeff, rest))
    }

    /// Replaces `var` by `value` and re-canonicalizes.
    pub fn substitute(&self, var: &str, value: &AffineExpr) -> Option<AffineExpr> {
        let mut out = AffineExpr::constant(self.constant);
        for (m, c) in &self.terms {
            let mut factor = AffineExpr::constant(*c);
            for v in &m.0 {
                let next = if v == var { value.clone() } else { AffineExpr::var(v) };
                factor = factor.mul(&next)?;
            }
            out = out.add(&factor);
        }
        Some(out)
    }

    /// Evaluates with the given bindings; `None` if some variable is unbound.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<i64>) -> Option<i64> {
        let mut total = self.constant;
        for (m, c) in &self.terms {
            let mut prod = *c;
            for v in &m.0 {
                prod = prod.wrapping_mul(lookup(v)?);
            }
            total = total.wrapping_add(prod);
        }
        Some(total)
    }

    /// Converts an integer-typed subset expression. `None` for anything
    /// non-polynomial (division, array reads, float operands).
    pub fn from_expr(expr: &Expr, func: &FunctionDecl) -> Option<AffineExpr> {
        Self::from_expr_in(expr, &func.symbols)
    }

    pub fn from_expr_in(expr: &Expr, symbols: &[Symbol]) -> Option<AffineExpr> {
        let func = symbols;
        match &expr.kind {
            ExprKind::Int(v) => Some(AffineExpr::constant(*v)),
            ExprKind::Var { sym, .. } => {
                let s = func.get(sym.0 as usize)?;
                match s.ty {
                    Some(t) if !t.is_pointer() && !t.base.is_float() && s.array_dims.is_empty() => {
                        Some(AffineExpr::var(&s.key))
                    }
                    _ => None,
                }
            }
            ExprKind::Unary { op: UnOp::Neg, operand } => Some(Self::from_expr_in(operand, func)?.scale(-1)),
            ExprKind::Binary { op, lhs, rhs } => {
                let l = Self::from_expr_in(lhs, func)?;
                let r = Self::from_expr_in(rhs, func)?;
                match op {
                    BinOp::Add => Some(l.add(&r)),
                    BinOp::Sub => Some(l.sub(&r)),
                    BinOp::Mul => l.mul(&r),
                    BinOp::Shl => {
                        let k = r.as_constant()?;
                        (0..31).contains(&k).then(|| l.scale(1 << k))
                    }
                    _ => None,
                }
            }
            ExprKind::Cast { ty, expr } if !ty.is_pointer() && matches!(ty.base, ScalarType::Int | ScalarType::Long) => {
                Self::from_expr_in(expr, func)
            }
            _ => None,
        }
    }
}

impl fmt::Display for AffineExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (m, c) in &self.terms {
            let (sign, mag) = if *c < 0 { ("-", -c) } else { ("+", *c) };
            if first {
                if sign == "-" {
                    f.write_str("-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if mag == 1 {
                write!(f, "{m}")?;
            } else {
                write!(f, "{mag}*{m}")?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant > 0 {
            write!(f, " + {}", self.constant)
        } else if self.constant < 0 {
            write!(f, " - {}", -self.constant)
        } else {
            Ok(())
        }
    }
}
