//! OpenMP vocabulary shared by analysis, plans, and code generation.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::frontend::ScalarType;

/// Reduction operators supported by `reduction(op:var)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReductionOp {
    Add,
    Mul,
    Min,
    Max,
    BitAnd,
    BitOr,
    BitXor,
}

impl ReductionOp {
    pub const ALL: [ReductionOp; 7] = [
        ReductionOp::Add,
        ReductionOp::Mul,
        ReductionOp::Min,
        ReductionOp::Max,
        ReductionOp::BitAnd,
        ReductionOp::BitOr,
        ReductionOp::BitXor,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            ReductionOp::Add => "+",
            ReductionOp::Mul => "*",
            ReductionOp::Min => "min",
            ReductionOp::Max => "max",
            ReductionOp::BitAnd => "&",
            ReductionOp::BitOr => "|",
            ReductionOp::BitXor => "^",
        }
    }

    /// Whether the operator is only valid on integer operands.
    pub fn integer_only(self) -> bool {
        matches!(self, ReductionOp::BitAnd | ReductionOp::BitOr | ReductionOp::BitXor)
    }

    /// Whether combining partials in a different order can change a
    /// floating-point result.
    pub fn reassociates_fp(self) -> bool {
        matches!(self, ReductionOp::Add | ReductionOp::Mul)
    }

    /// C source for the identity element of the operator at `ty`.
    pub fn identity_literal(self, ty: ScalarType) -> &'static str {
        use ReductionOp::*;
        use ScalarType::*;
        match (self, ty) {
            (Add | BitOr | BitXor, Float) => "0.0f",
            (Add | BitOr | BitXor, Double) => "0.0",
            (Add | BitOr | BitXor, _) => "0",
            (Mul, Float) => "1.0f",
            (Mul, Double) => "1.0",
            (Mul, _) => "1",
            (BitAnd, _) => "~0",
            (Min, Int) => "2147483647",
            (Min, Long) => "9223372036854775807L",
            (Min, Float) => "3.402823466e+38f",
            (Min, Double) => "1.7976931348623157e+308",
            (Max, Int) => "(-2147483647 - 1)",
            (Max, Long) => "(-9223372036854775807L - 1)",
            (Max, Float) => "-3.402823466e+38f",
            (Max, Double) => "-1.7976931348623157e+308",
        }
    }
}

impl fmt::Display for ReductionOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for ReductionOp {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ReductionOp::ALL
            .into_iter()
            .find(|op| op.symbol() == s.trim())
            .ok_or_else(|| format!("unknown reduction operator {s:?}"))
    }
}

impl Serialize for ReductionOp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for ReductionOp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Static,
    Dynamic,
    Guided,
}

impl ScheduleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Static => "static",
            ScheduleKind::Dynamic => "dynamic",
            ScheduleKind::Guided => "guided",
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "static" => Ok(ScheduleKind::Static),
            "dynamic" => Ok(ScheduleKind::Dynamic),
            "guided" => Ok(ScheduleKind::Guided),
            other => Err(format!("unknown schedule kind {other:?}")),
        }
    }
}

/// Structured content of a `#pragma omp parallel for` line.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParallelForClauses {
    pub collapse: Option<u32>,
    pub schedule: Option<(ScheduleKind, Option<u32>)>,
    pub reductions: Vec<(ReductionOp, String)>,
    pub privates: Vec<String>,
    pub num_threads: Option<u32>,
    /// Clauses this crate does not model, verbatim.
    pub other: Vec<String>,
}

impl ParallelForClauses {
    /// Renders the directive with clauses in canonical order:
    /// collapse, schedule, reduction, private.
    pub fn render(&self) -> String {
        let mut out = String::from("#pragma omp parallel for");
        if let Some(k) = self.collapse.filter(|k| *k > 1) {
            out.push_str(&format!(" collapse({k})"));
        }
        if let Some((kind, chunk)) = self.schedule {
            match chunk {
                Some(c) => out.push_str(&format!(" schedule({}, {c})", kind.as_str())),
                None => out.push_str(&format!(" schedule({})", kind.as_str())),
            }
        }
        let mut ops: Vec<ReductionOp> = Vec::new();
        for (op, _) in &self.reductions {
            if !ops.contains(op) {
                ops.push(*op);
            }
        }
        for op in ops {
            let vars: Vec<&str> =
                self.reductions.iter().filter(|(o, _)| *o == op).map(|(_, v)| v.as_str()).collect();
            out.push_str(&format!(" reduction({}:{})", op.symbol(), vars.join(", ")));
        }
        if !self.privates.is_empty() {
            out.push_str(&format!(" private({})", self.privates.join(", ")));
        }
        if let Some(n) = self.num_threads {
            out.push_str(&format!(" num_threads({n})"));
        }
        for o in &self.other {
            out.push(' ');
            out.push_str(o);
        }
        out
    }

    /// Parses the text of a `#pragma` line. Returns `None` unless it is an
    /// `omp parallel for` directive.
    pub fn parse(line: &str) -> Option<ParallelForClauses> {
        let rest = line.trim().strip_prefix('#')?.trim_start().strip_prefix("pragma")?;
        let mut words = rest.split_whitespace();
        if words.next()? != "omp" || words.next()? != "parallel" || words.next()? != "for" {
            return None;
        }
        let after_for = rest.split_once("for").map_or("", |x| x.1).replace("\\\n", " ");
        let mut clauses = ParallelForClauses::default();
        for clause in split_clauses(&after_for) {
            let (name, args) = match clause.find('(') {
                Some(p) if clause.ends_with(')') => (clause[..p].trim(), &clause[p + 1..clause.len() - 1]),
                _ => (clause.trim(), ""),
            };
            match name {
                "collapse" => clauses.collapse = args.trim().parse().ok(),
                "num_threads" => clauses.num_threads = args.trim().parse().ok(),
                "schedule" => {
                    let mut parts = args.split(',');
                    let kind_text = parts.next().unwrap_or("");
                    let kind_text = kind_text.rsplit(':').next().unwrap_or(kind_text);
                    match kind_text.parse::<ScheduleKind>() {
                        Ok(kind) => {
                            let chunk = parts.next().and_then(|c| c.trim().parse().ok());
                            clauses.schedule = Some((kind, chunk));
                        }
                        Err(_) => clauses.other.push(clause.clone()),
                    }
                }
                "reduction" => match args.split_once(':') {
                    Some((op, vars)) => match op.parse::<ReductionOp>() {
                        Ok(op) => clauses
                            .reductions
                            .extend(vars.split(',').map(|v| (op, v.trim().to_string()))),
                        Err(_) => clauses.other.push(clause.clone()),
                    },
                    None => clauses.other.push(clause.clone()),
                },
                "private" => clauses.privates.extend(args.split(',').map(|v| v.trim().to_string())),
                _ => clauses.other.push(clause.clone()),
            }
        }
        Some(clauses)
    }
}

fn split_clauses(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for c in text.chars() {
        match c {
            '(' => {
                depth += 1;
                cur.push(c);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                cur.push(c);
            }
            c if (c.is_whitespace() || c == ',') && depth == 0 => {
                if !cur.trim().is_empty() {
                    out.push(cur.trim().to_string());
                }
                cur.clear();
            }
            c => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    // `schedule (dynamic)` with a space before the parenthesis.
    let mut merged: Vec<String> = Vec::new();
    for piece in out {
        if piece.starts_with('(') {
            if let Some(last) = merged.last_mut() {
                last.push_str(&piece);
                continue;
            }
        }
        merged.push(piece);
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_clause_order() {
        let c = ParallelForClauses {
            collapse: Some(2),
            schedule: Some((ScheduleKind::Dynamic, None)),
            reductions: vec![(ReductionOp::Add, "s".into()), (ReductionOp::Max, "m".into())],
            privates: vec!["t".into()],
            ..Default::default()
        };
        assert_eq!(
            c.render(),
            "#pragma omp parallel for collapse(2) schedule(dynamic) reduction(+:s) reduction(max:m) private(t)"
        );
    }

    #[test]
    fn parse_round_trips_render() {
        let text = "#pragma omp parallel for collapse(2) schedule(guided, 4) reduction(+:a, b) private(t)";
        let c = ParallelForClauses::parse(text).unwrap();
        assert_eq!(c.collapse, Some(2));
        assert_eq!(c.schedule, Some((ScheduleKind::Guided, Some(4))));
        assert_eq!(c.reductions.len(), 2);
        assert_eq!(c.render(), text);
    }

    #[test]
    fn non_omp_pragmas_are_ignored() {
        assert!(ParallelForClauses::parse("#pragma once").is_none());
        assert!(ParallelForClauses::parse("#pragma omp parallel").is_none());
    }

    #[test]
    fn identity_for_product_is_one() {
        assert_eq!(ReductionOp::Mul.identity_literal(ScalarType::Int), "1");
        assert_eq!(ReductionOp::Mul.identity_literal(ScalarType::Float), "1.0f");
    }
}
