//! Offline backend. It derives its answers from the analysis report, so runs
//! are reproducible without a model server.

use std::collections::BTreeSet;

use super::{ChatBackend, ChatRequest, ReasonerConfig, ReasonerError, Turn};
use crate::depanalysis::{AnalysisReport, LoopReport};
use crate::plan::{LoopDirective, ParallelizationPlan, PlanReduction};

pub const NO_PARALLELISM: &str = "no safe parallelism";

fn facts(l: &LoopReport) -> String {
    let mut s = format!("{} (line {}) is {}", l.loop_id, l.line, super::prompts::verdict_name(l));
    let carried: BTreeSet<&str> = l.carried().map(|d| d.source.name.as_str()).collect();
    if !carried.is_empty() {
        s.push_str(&format!("; carried dependences on {}", carried.into_iter().collect::<Vec<_>>().join(", ")));
    }
    for r in &l.reductions {
        s.push_str(&format!("; reduction({}:{})", r.operator, r.variable));
    }
    let privs: BTreeSet<&str> = l.privatizable.iter().map(|p| p.variable.as_str()).collect();
    if !privs.is_empty() {
        s.push_str(&format!("; privatizable {}", privs.into_iter().collect::<Vec<_>>().join(", ")));
    }
    s
}

fn directive(report: &AnalysisReport, head: &LoopReport, max_collapse: usize) -> LoopDirective {
    let mut levels = vec![head];
    while levels.len() < max_collapse {
        let last = levels[levels.len() - 1];
        match last.perfectly_nested_child.and_then(|c| report.get(c)) {
            Some(c) if c.verdict.is_parallel() && c.rectangular && c.accumulators.is_empty() => levels.push(c),
            _ => break,
        }
    }
    let mut d = LoopDirective::new(head.loop_id);
    d.collapse = levels.len() as i64;
    for l in &levels {
        for r in &l.reductions {
            if !d.reductions.iter().any(|x| x.variable == r.variable && x.operator == r.operator) {
                d.reductions.push(PlanReduction { variable: r.variable.clone(), operator: r.operator });
            }
        }
    }
    for l in &levels {
        for p in &l.privatizable {
            if !d.privates.contains(&p.variable) && !d.reductions.iter().any(|r| r.variable == p.variable) {
                d.privates.push(p.variable.clone());
            }
        }
    }
    let innermost = levels[levels.len() - 1];
    let irregular = levels.iter().any(|l| l.has_conditionals) || !innermost.children.is_empty();
    d.schedule = Some(if irregular { "dynamic" } else { "static" }.into());
    d.rationale = levels.iter().map(|l| facts(l)).collect::<Vec<_>>().join("; ");
    d
}

/// Parallelizes the outermost safe loop of each nest, collapsing through
/// safe rectangular children.
pub fn mock_plan(report: &AnalysisReport) -> ParallelizationPlan {
    mock_plan_limited(report, usize::MAX)
}

fn mock_plan_limited(report: &AnalysisReport, max_collapse: usize) -> ParallelizationPlan {
    let mut directives = Vec::new();
    let mut stack: Vec<&LoopReport> = report.loops.iter().filter(|l| l.parent.is_none()).rev().collect();
    while let Some(l) = stack.pop() {
        if l.verdict.is_parallel() {
            directives.push(directive(report, l, max_collapse));
        } else {
            stack.extend(l.children.iter().rev().filter_map(|c| report.get(*c)));
        }
    }
    let summary = report.loops.iter().map(facts).collect::<Vec<_>>().join(". ");
    if directives.is_empty() {
        let rationale = if summary.is_empty() { NO_PARALLELISM.to_string() } else { format!("{NO_PARALLELISM}: {summary}") };
        return ParallelizationPlan::empty(&rationale);
    }
    ParallelizationPlan { directives, rationale: summary, ..Default::default() }
}

/// Candidates proposed for tree-of-thoughts: the mock plan, a variant
/// without collapse and with the other schedule, and the empty plan.
pub fn mock_candidates(report: &AnalysisReport, n: usize) -> Vec<ParallelizationPlan> {
    let best = mock_plan(report);
    let mut alt = mock_plan_limited(report, 1);
    for d in &mut alt.directives {
        d.schedule = Some(if d.schedule.as_deref() == Some("static") { "dynamic" } else { "static" }.into());
    }
    alt.rationale = format!("variant: {}", alt.rationale);
    let empty = ParallelizationPlan::empty(&format!("{NO_PARALLELISM}: sequential baseline"));
    let mut out = vec![best, alt];
    while out.len() < n {
        out.push(empty.clone());
    }
    out.truncate(n);
    out
}

pub struct MockBackend {
    plan: ParallelizationPlan,
    candidates: Vec<ParallelizationPlan>,
}

impl MockBackend {
    pub fn new(report: &AnalysisReport, cfg: &ReasonerConfig) -> Self {
        MockBackend { plan: mock_plan(report), candidates: mock_candidates(report, cfg.tot_branching.max(1) as usize) }
    }
}

fn fenced(plan: &ParallelizationPlan) -> String {
    format!("```json\n{}\n```", plan.to_json())
}

impl ChatBackend for MockBackend {
    fn complete(&mut self, req: &ChatRequest<'_>) -> Result<String, ReasonerError> {
        Ok(match req.turn {
            Turn::Plan | Turn::Retry => fenced(&self.plan),
            Turn::TotPropose => self
                .candidates
                .iter()
                .enumerate()
                .map(|(i, p)| format!("Candidate {}:\n{}", i + 1, fenced(p)))
                .collect::<Vec<_>>()
                .join("\n\n"),
            Turn::TotEvaluate => {
                let scores: Vec<u32> = (0..self.candidates.len()).map(|i| [9, 7].get(i).copied().unwrap_or(1)).collect();
                serde_json::json!({ "scores": scores }).to_string()
            }
            Turn::ReactStep => {
                if req.messages.iter().any(|m| m.role == "assistant") {
                    format!("Thought: The loop summary is enough to decide.\nFinal Answer: {}", serde_json::to_string(&self.plan).expect("plan serializes"))
                } else {
                    "Thought: I need the verdict of every loop.\nAction: query[loops]".to_string()
                }
            }
        })
    }
}
