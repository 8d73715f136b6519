//! Prompt templates. Placeholders are written `{{name}}`.

use super::Strategy;
use crate::depanalysis::{analyze, AnalysisReport, LoopReport};
use crate::frontend::{parse, SourceUnit};
use crate::plan::ParallelizationPlan;

const SYSTEM: &str = include_str!("../../assets/prompts/system.txt");
const COMMON: &str = include_str!("../../assets/prompts/common.txt");
const ZERO_SHOT: &str = include_str!("../../assets/prompts/zero_shot.txt");
const CHAIN_OF_THOUGHT: &str = include_str!("../../assets/prompts/chain_of_thought.txt");
const STEP_BY_STEP: &str = include_str!("../../assets/prompts/step_by_step.txt");
const FEW_SHOT: &str = include_str!("../../assets/prompts/few_shot.txt");
const EXEMPLAR: &str = include_str!("../../assets/prompts/exemplar.txt");
const TREE_OF_THOUGHTS: &str = include_str!("../../assets/prompts/tree_of_thoughts.txt");
const TOT_EVALUATE: &str = include_str!("../../assets/prompts/tree_of_thoughts_evaluate.txt");
const REACT: &str = include_str!("../../assets/prompts/react.txt");
const RETRY: &str = include_str!("../../assets/prompts/retry.txt");

const EXEMPLARS: [(&str, &str); 2] = [
    (include_str!("../../assets/prompts/exemplars/1.c"), include_str!("../../assets/prompts/exemplars/1.json")),
    (include_str!("../../assets/prompts/exemplars/2.c"), include_str!("../../assets/prompts/exemplars/2.json")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptContext {
    pub tot_branching: u32,
}

impl Default for PromptContext {
    fn default() -> Self {
        PromptContext { tot_branching: 3 }
    }
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.trim_end().to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{{{k}}}}}"), v);
    }
    debug_assert!(!out.contains("{{") || vars.iter().any(|(_, v)| v.contains("{{")), "unfilled placeholder");
    out
}

pub fn system_prompt() -> &'static str {
    SYSTEM.trim_end()
}

fn common(unit: &SourceUnit, report: &AnalysisReport) -> String {
    fill(
        COMMON,
        &[
            ("path", &unit.path),
            ("source", unit.text.trim_end()),
            ("report", &report.to_json()),
            ("schema", ParallelizationPlan::schema_text().trim_end()),
        ],
    )
}

/// One line per verdict, as shown alongside the few-shot examples.
fn facts_line(report: &AnalysisReport) -> String {
    report
        .loops
        .iter()
        .map(|l| {
            let mut s = format!("{} verdict {}", l.loop_id, verdict_name(l));
            for r in &l.reductions {
                s.push_str(&format!(", reduction({}:{})", r.operator, r.variable));
            }
            for p in &l.privatizable {
                s.push_str(&format!(", privatizable {}", p.variable));
            }
            s
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn verdict_name(l: &LoopReport) -> String {
    serde_json::to_value(l.verdict).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn exemplars() -> String {
    EXEMPLARS
        .iter()
        .enumerate()
        .map(|(i, (src, plan))| {
            let unit = parse(&format!("example{}.c", i + 1), src).expect("exemplar parses");
            let report = analyze(&unit);
            fill(
                EXEMPLAR,
                &[
                    ("index", &(i + 1).to_string()),
                    ("source", src.trim_end()),
                    ("facts", &facts_line(&report)),
                    ("plan", plan.trim_end()),
                ],
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Summary lines for the ReAct loop index and the `loops` query.
pub fn loop_index(report: &AnalysisReport) -> String {
    if report.loops.is_empty() {
        return "(no loops)".into();
    }
    report
        .loops
        .iter()
        .map(|l| {
            let parent = l.parent.map_or(String::new(), |p| format!(", inside {p}"));
            format!(
                "{} in {} at line {}: for {} in [{}, {}){parent}, verdict {}",
                l.loop_id,
                l.function,
                l.line,
                l.induction,
                l.lower.as_deref().unwrap_or("?"),
                l.upper.as_deref().unwrap_or("?"),
                verdict_name(l)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// The first user message for `strategy`.
pub fn render_prompt(strategy: Strategy, unit: &SourceUnit, report: &AnalysisReport, ctx: &PromptContext) -> String {
    let c = common(unit, report);
    match strategy {
        Strategy::ZeroShot => fill(ZERO_SHOT, &[("common", &c)]),
        Strategy::ChainOfThought => fill(CHAIN_OF_THOUGHT, &[("common", &c)]),
        Strategy::StepByStep => fill(STEP_BY_STEP, &[("common", &c)]),
        Strategy::FewShot => fill(FEW_SHOT, &[("exemplars", &exemplars()), ("common", &c)]),
        Strategy::TreeOfThoughts => {
            fill(TREE_OF_THOUGHTS, &[("common", &c), ("branching", &ctx.tot_branching.to_string())])
        }
        Strategy::React => fill(
            REACT,
            &[
                ("path", &unit.path),
                ("source", unit.text.trim_end()),
                ("loop_index", &loop_index(report)),
                ("schema", ParallelizationPlan::schema_text().trim_end()),
            ],
        ),
    }
}

pub fn tot_evaluate_prompt(candidates: &[String]) -> String {
    fill(TOT_EVALUATE, &[("candidates", &candidates.join("\n\n"))])
}

pub fn retry_prompt(error: &str) -> String {
    fill(RETRY, &[("error", error)])
}

pub fn retry_scores_prompt(error: &str, n: usize) -> String {
    format!("Your previous reply could not be used: {error}\nReply with one JSON object of the form {{\"scores\": [...]}} holding {n} numbers from 0 to 10.")
}

/// The section named in the last `Action: query[...]` line of a reply.
pub fn parse_action(reply: &str) -> Option<String> {
    reply.lines().rev().find_map(|line| {
        let rest = line.trim().strip_prefix("Action:")?.trim();
        let inner = rest.strip_prefix("query[")?;
        let end = inner.rfind(']')?;
        Some(inner[..end].trim().to_string())
    })
}

/// Answers one ReAct query from the report.
pub fn react_observation(section: &str, report: &AnalysisReport) -> String {
    let mut words = section.split_whitespace();
    let head = words.next().unwrap_or("");
    if head == "loops" {
        return loop_index(report);
    }
    let Some(l) = words.next().and_then(|id| id.parse().ok()).and_then(|id| report.get(id)) else {
        return format!("unknown section {section:?}; expected loops or <section> <loop id>");
    };
    let to = |v: serde_json::Result<String>| v.unwrap_or_default();
    match head {
        "loop" => to(serde_json::to_string(l)),
        "dependences" => to(serde_json::to_string(&l.dependences)),
        "reductions" => to(serde_json::to_string(&l.reductions)),
        "privatizable" => to(serde_json::to_string(&l.privatizable)),
        "accumulators" => to(serde_json::to_string(&l.accumulators)),
        _ => format!("unknown section {head:?}"),
    }
}
