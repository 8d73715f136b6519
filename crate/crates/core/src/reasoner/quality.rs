//! How much of the analysis a plan accounts for.

use std::collections::BTreeSet;

use crate::depanalysis::AnalysisReport;
use crate::plan::ParallelizationPlan;

fn mentions(text: &str, word: &str) -> bool {
    let ident = |c: char| c.is_ascii_alphanumeric() || c == '_';
    text.match_indices(word).any(|(i, _)| {
        let before = text[..i].chars().next_back();
        let after = text[i + word.len()..].chars().next();
        !before.is_some_and(ident) && !after.is_some_and(ident)
    })
}

/// Fraction in [0, 1] of per-loop facts the plan refers to. The facts are the
/// variables of carried dependences, reductions and privatizable variables.
/// A fact counts when the loop's directive names it in a clause or when it
/// appears as a word in the plan or directive rationale. A report with no
/// facts scores 1.
pub fn analysis_quality(plan: &ParallelizationPlan, report: &AnalysisReport) -> f64 {
    let mut total = 0usize;
    let mut hit = 0usize;
    for l in &report.loops {
        let mut facts: BTreeSet<&str> = l.carried().map(|d| d.source.name.as_str()).collect();
        facts.extend(l.reductions.iter().map(|r| r.variable.as_str()));
        facts.extend(l.privatizable.iter().map(|p| p.variable.as_str()));
        let d = plan.directive(l.loop_id);
        for f in facts {
            total += 1;
            let in_clause =
                d.is_some_and(|d| d.privates.iter().any(|p| p == f) || d.reductions.iter().any(|r| r.variable == f));
            let in_text = mentions(&plan.rationale, f) || plan.directives.iter().any(|d| mentions(&d.rationale, f));
            if in_clause || in_text {
                hit += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}
