//! Static plan validation against the analysis facts.

use std::fmt;

use serde::Serialize;

use super::{LoopDirective, ParallelizationPlan, PlanError};
use crate::depanalysis::{AnalysisReport, DepKind, Explanation, LoopReport, Verdict};
use crate::frontend::LoopId;
use crate::omp::ScheduleKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum RuleId {
    /// Carried dependence not removed by the plan's clauses.
    R1,
    /// Declared reduction without a matching detected pattern.
    R2,
    /// Declared private that is neither privatizable nor body-local.
    R3,
    /// Collapse over a nest that is not perfect, rectangular and safe at every level.
    R4,
    /// Ill-formed schedule, chunk, collapse or thread count.
    R5,
    /// Parallelizing a loop the analysis could not decide.
    R6,
    /// Unsupported execution target.
    R7,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for RuleId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        use RuleId::*;
        [R1, R2, R3, R4, R5, R6, R7].into_iter().find(|r| r.to_string() == s).ok_or_else(|| format!("unknown rule {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: RuleId,
    #[serde(rename = "loop")]
    pub loop_id: LoopId,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationVerdict {
    pub accepted: bool,
    pub violations: Vec<Violation>,
}

impl ValidationVerdict {
    pub fn rules(&self) -> Vec<RuleId> {
        let mut r: Vec<RuleId> = self.violations.iter().map(|v| v.rule).collect();
        r.sort();
        r.dedup();
        r
    }
}

fn kind_name(k: DepKind) -> &'static str {
    match k {
        DepKind::Flow => "flow",
        DepKind::Anti => "anti",
        DepKind::Output => "output",
    }
}

struct Checker<'a> {
    report: &'a AnalysisReport,
    out: Vec<Violation>,
}

impl Checker<'_> {
    fn flag(&mut self, rule: RuleId, loop_id: LoopId, message: String) {
        self.out.push(Violation { rule, loop_id, message });
    }

    /// The loops a directive covers, outermost first (more than one under collapse).
    fn covered(&mut self, d: &LoopDirective, head: &LoopReport) -> Vec<LoopReport> {
        let mut nest = vec![head.clone()];
        let k = d.collapse.max(1) as usize;
        while nest.len() < k {
            let last = nest.last().expect("non-empty");
            let Some(child) = last.perfectly_nested_child.and_then(|c| self.report.get(c)) else {
                self.flag(
                    RuleId::R4,
                    d.loop_id,
                    format!("collapse({k}) needs {k} perfectly nested loops; {} has no single nested loop", last.loop_id),
                );
                break;
            };
            if !child.rectangular {
                self.flag(RuleId::R4, d.loop_id, format!("collapse({k}) over non-rectangular loop {}", child.loop_id));
            }
            nest.push(child.clone());
        }
        nest
    }

    fn check_level(&mut self, d: &LoopDirective, l: &LoopReport, collapsed: bool) {
        let rule_for = |r: RuleId| if collapsed { RuleId::R4 } else { r };
        if l.verdict == Verdict::Unknown {
            let why = l.reasons.first().cloned().unwrap_or_default();
            self.flag(rule_for(RuleId::R6), d.loop_id, format!("loop {} has verdict unknown: {why}", l.loop_id));
            return;
        }
        for dep in l.carried() {
            let ok = match &dep.explained_by {
                None => false,
                Some(Explanation::Reduction { variable, operator }) => {
                    d.reductions.iter().any(|r| &r.variable == variable && r.operator == *operator)
                }
                Some(Explanation::Private { variable }) => d.privates.contains(variable),
            };
            if ok {
                continue;
            }
            let fix = match &dep.explained_by {
                None => String::new(),
                Some(Explanation::Reduction { variable, operator }) => format!("; needs reduction({operator}:{variable})"),
                Some(Explanation::Private { variable }) => format!("; needs private({variable})"),
            };
            let dist = dep.distance.map_or("unknown".to_string(), |x| x.to_string());
            self.flag(
                rule_for(RuleId::R1),
                d.loop_id,
                format!(
                    "{} dependence {} -> {} carried by loop {} (distance {dist}){fix}",
                    kind_name(dep.kind),
                    dep.source.text,
                    dep.sink.text,
                    l.loop_id
                ),
            );
        }
    }

    fn directive(&mut self, d: &LoopDirective) -> Result<(), PlanError> {
        let head = self.report.get(d.loop_id).ok_or(PlanError::UnknownLoopId(d.loop_id))?.clone();
        if !d.parallelize {
            return Ok(());
        }
        // R5
        if d.collapse < 1 {
            self.flag(RuleId::R5, d.loop_id, format!("collapse must be at least 1, got {}", d.collapse));
        }
        if let Some(s) = &d.schedule {
            if s.parse::<ScheduleKind>().is_err() {
                self.flag(RuleId::R5, d.loop_id, format!("unknown schedule kind {s:?}"));
            }
        }
        match d.chunk {
            Some(c) if c < 1 => self.flag(RuleId::R5, d.loop_id, format!("chunk must be positive, got {c}")),
            Some(_) if d.schedule.is_none() => self.flag(RuleId::R5, d.loop_id, "chunk given without a schedule".into()),
            _ => {}
        }
        if let Some(n) = d.num_threads.filter(|n| *n < 1) {
            self.flag(RuleId::R5, d.loop_id, format!("num_threads must be positive, got {n}"));
        }
        // R7
        if let Some(t) = d.target.as_deref().filter(|t| *t != "cpu") {
            self.flag(RuleId::R7, d.loop_id, format!("target {t:?} is reserved and not implemented"));
        }
        let nest = self.covered(d, &head);
        for (i, l) in nest.iter().enumerate() {
            self.check_level(d, l, i > 0);
        }
        // R2
        for r in &d.reductions {
            let found = nest.iter().any(|l| l.reductions.iter().any(|p| p.variable == r.variable && p.operator == r.operator));
            if !found {
                let detected: Vec<String> = nest
                    .iter()
                    .flat_map(|l| l.reductions.iter())
                    .filter(|p| p.variable == r.variable)
                    .map(|p| p.operator.to_string())
                    .collect();
                let msg = if detected.is_empty() {
                    format!("no reduction on `{}` was detected", r.variable)
                } else {
                    format!("`{}` reduces with `{}`, not `{}`", r.variable, detected.join("`, `"), r.operator)
                };
                self.flag(RuleId::R2, d.loop_id, msg);
            }
        }
        // R3
        for p in &d.privates {
            let ok = nest
                .iter()
                .any(|l| l.privatizable.iter().any(|v| &v.variable == p) || l.local_decls.contains(p));
            if !ok {
                self.flag(RuleId::R3, d.loop_id, format!("`{p}` is not privatizable in loop {}", d.loop_id));
            }
        }
        for r in &d.reductions {
            if d.privates.contains(&r.variable) {
                self.flag(RuleId::R3, d.loop_id, format!("`{}` is both private and a reduction variable", r.variable));
            }
        }
        Ok(())
    }
}

/// Checks every directive of `plan` against `report`.
pub fn validate(plan: &ParallelizationPlan, report: &AnalysisReport) -> Result<ValidationVerdict, PlanError> {
    let mut c = Checker { report, out: Vec::new() };
    for d in &plan.directives {
        c.directive(d)?;
    }
    // Directives inside a collapsed range.
    for d in plan.directives.iter().filter(|d| d.parallelize && d.collapse > 1) {
        let mut cur = report.get(d.loop_id).and_then(|l| l.perfectly_nested_child);
        for _ in 1..d.collapse {
            let Some(id) = cur else { break };
            if plan.directive(id).is_some_and(|x| x.parallelize) {
                c.flag(RuleId::R4, d.loop_id, format!("collapsed loop {id} has its own directive"));
            }
            cur = report.get(id).and_then(|l| l.perfectly_nested_child);
        }
    }
    let violations = c.out;
    Ok(ValidationVerdict { accepted: violations.is_empty(), violations })
}
