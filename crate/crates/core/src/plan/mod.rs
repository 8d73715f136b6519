//! Parallelization plans: wire format, parsing, and static validation.

mod validate;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::frontend::{LoopId, SourceUnit};
use crate::omp::ReductionOp;

pub use validate::{validate, RuleId, ValidationVerdict, Violation};

pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("malformed plan: {0}")]
    MalformedPlan(String),
    #[error("plan references loop {0}, which the analysis report does not contain")]
    UnknownLoopId(LoopId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanReduction {
    pub variable: String,
    pub operator: ReductionOp,
}

/// One loop's directive. Numeric fields are kept as given so that the
/// validator, not the parser, reports ill-formed values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopDirective {
    #[serde(rename = "loop")]
    pub loop_id: LoopId,
    pub parallelize: bool,
    #[serde(default = "one")]
    pub collapse: i64,
    #[serde(default)]
    pub schedule: Option<String>,
    #[serde(default)]
    pub chunk: Option<i64>,
    #[serde(default)]
    pub reductions: Vec<PlanReduction>,
    #[serde(default)]
    pub privates: Vec<String>,
    /// Advisory; the benchmark harness sets the thread count.
    #[serde(default)]
    pub num_threads: Option<i64>,
    /// Reserved. Only `cpu` is implemented.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default)]
    pub rationale: String,
}

fn one() -> i64 {
    1
}

impl LoopDirective {
    pub fn new(loop_id: LoopId) -> Self {
        LoopDirective {
            loop_id,
            parallelize: true,
            collapse: 1,
            schedule: None,
            chunk: None,
            reductions: vec![],
            privates: vec![],
            num_threads: None,
            target: None,
            rationale: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelizationPlan {
    pub plan_version: u32,
    pub directives: Vec<LoopDirective>,
    #[serde(default)]
    pub rationale: String,
    /// Unknown fields and other recoverable oddities seen while parsing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Default for ParallelizationPlan {
    fn default() -> Self {
        ParallelizationPlan { plan_version: PLAN_VERSION, directives: vec![], rationale: String::new(), warnings: vec![] }
    }
}

impl ParallelizationPlan {
    pub fn empty(rationale: &str) -> Self {
        ParallelizationPlan { rationale: rationale.to_string(), ..Default::default() }
    }

    pub fn directive(&self, id: LoopId) -> Option<&LoopDirective> {
        self.directives.iter().find(|d| d.loop_id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// The JSON schema description embedded in prompts.
    pub fn schema_text() -> &'static str {
        include_str!("../../assets/plan_schema.json")
    }
}

/// Top-level JSON objects in `text` as (start, end, value), in order.
fn json_objects(text: &str) -> Vec<(usize, usize, Map<String, Value>)> {
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(off) = text[i..].find('{') {
        let start = i + off;
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => {
                let end = start + stream.byte_offset();
                out.push((start, end, map));
                i = end;
            }
            _ => i = start + 1,
        }
    }
    out
}

fn strip_fences(prose: &str) -> String {
    prose
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

const PLAN_FIELDS: [&str; 4] = ["plan_version", "directives", "rationale", "warnings"];
const DIRECTIVE_FIELDS: [&str; 10] =
    ["loop", "parallelize", "collapse", "schedule", "chunk", "reductions", "privates", "num_threads", "target", "rationale"];

fn resolve_loop(v: &Value, unit: &SourceUnit) -> Result<LoopId, String> {
    let by_line = |line: i64| {
        unit.loops()
            .into_iter()
            .filter(|(_, l)| unit.line_of(l.header_span.start) as i64 == line)
            .map(|(_, l)| l.id)
            .min()
            .ok_or_else(|| format!("no loop starts on line {line}"))
    };
    match v {
        Value::Number(n) => by_line(n.as_i64().ok_or_else(|| format!("invalid loop line {n}"))?),
        Value::String(s) => {
            if let Ok(id) = s.parse::<LoopId>() {
                Ok(id)
            } else if let Ok(line) = s.trim().parse::<i64>() {
                by_line(line)
            } else {
                Err(format!("invalid loop reference {s:?}"))
            }
        }
        other => Err(format!("invalid loop reference {other}")),
    }
}

/// Extracts the last JSON object in a reasoner response and reads it as a
/// plan. Loop references may be ids (`"L0"`) or source line numbers.
pub fn parse_plan(raw: &str, unit: &SourceUnit) -> Result<ParallelizationPlan, PlanError> {
    let bad = |m: String| PlanError::MalformedPlan(m);
    let objects = json_objects(raw);
    let Some((start, end, mut obj)) = objects.into_iter().last() else {
        return Err(bad("no JSON object found in the response".into()));
    };
    let prose = strip_fences(&format!("{}\n{}", &raw[..start], &raw[end..]));
    let mut warnings = Vec::new();
    for k in obj.keys() {
        if !PLAN_FIELDS.contains(&k.as_str()) {
            warnings.push(format!("unknown plan field `{k}` ignored"));
        }
    }
    match obj.get("plan_version") {
        None => warnings.push("missing plan_version, assuming 1".into()),
        Some(v) if v.as_u64() == Some(PLAN_VERSION as u64) => {}
        Some(v) => return Err(bad(format!("unsupported plan_version {v}"))),
    }
    let Some(Value::Array(list)) = obj.remove("directives") else {
        return Err(bad("missing `directives` array".into()));
    };
    let mut directives: Vec<LoopDirective> = Vec::new();
    for (i, d) in list.into_iter().enumerate() {
        let Value::Object(mut d) = d else {
            return Err(bad(format!("directive {i} is not an object")));
        };
        for k in d.keys() {
            if !DIRECTIVE_FIELDS.contains(&k.as_str()) {
                warnings.push(format!("directive {i}: unknown field `{k}` ignored"));
            }
        }
        d.retain(|k, _| DIRECTIVE_FIELDS.contains(&k.as_str()));
        let loop_ref = d.get("loop").ok_or_else(|| bad(format!("directive {i}: missing `loop`")))?;
        let id = resolve_loop(loop_ref, unit).map_err(|m| bad(format!("directive {i}: {m}")))?;
        d.insert("loop".into(), Value::String(id.to_string()));
        if matches!(d.get("schedule"), Some(v) if !v.is_string() && !v.is_null()) {
            return Err(bad(format!("directive {i}: `schedule` must be a string")));
        }
        let dir: LoopDirective =
            serde_json::from_value(Value::Object(d)).map_err(|e| bad(format!("directive {i}: {e}")))?;
        if directives.iter().any(|x| x.loop_id == dir.loop_id) {
            return Err(bad(format!("more than one directive for loop {}", dir.loop_id)));
        }
        directives.push(dir);
    }
    let json_rationale = match obj.get("rationale") {
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
        None => String::new(),
    };
    let rationale = match (prose.is_empty(), json_rationale.is_empty()) {
        (true, _) => json_rationale,
        (false, true) => prose,
        (false, false) => format!("{prose}\n\n{json_rationale}"),
    };
    Ok(ParallelizationPlan { plan_version: PLAN_VERSION, directives, rationale, warnings })
}

#[cfg(test)]
mod tests;
