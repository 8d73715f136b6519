//! Plan generation: prompting strategies over a chat backend, with retries
//! on malformed replies.

pub mod http;
pub mod mock;
pub mod prompts;
pub mod quality;

use std::fmt;
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::depanalysis::AnalysisReport;
use crate::frontend::SourceUnit;
use crate::plan::{parse_plan, validate, ParallelizationPlan, PlanError};

pub use mock::{mock_plan, MockBackend};
pub use prompts::{render_prompt, PromptContext};
pub use quality::analysis_quality;

/// Environment variable that overrides the configured endpoint.
pub const ENDPOINT_ENV: &str = "AUTOPAR_ENDPOINT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ZeroShot,
    ChainOfThought,
    TreeOfThoughts,
    React,
    StepByStep,
    FewShot,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::ZeroShot,
        Strategy::ChainOfThought,
        Strategy::TreeOfThoughts,
        Strategy::React,
        Strategy::StepByStep,
        Strategy::FewShot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ZeroShot => "zero_shot",
            Strategy::ChainOfThought => "chain_of_thought",
            Strategy::TreeOfThoughts => "tree_of_thoughts",
            Strategy::React => "react",
            Strategy::StepByStep => "step_by_step",
            Strategy::FewShot => "few_shot",
        }
    }

    /// Display name used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            Strategy::ZeroShot => "Zero-shot",
            Strategy::ChainOfThought => "Chain of Thought",
            Strategy::TreeOfThoughts => "Tree of Thoughts",
            Strategy::React => "ReAct",
            Strategy::StepByStep => "Step-by-Step",
            Strategy::FewShot => "Few-shot",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == norm)
            .ok_or_else(|| format!("unknown strategy {s:?}; expected one of zero_shot, chain_of_thought, tree_of_thoughts, react, step_by_step, few_shot"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Mock,
    Http,
}

impl FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mock" => Ok(Backend::Mock),
            "http" => Ok(Backend::Http),
            _ => Err(format!("unknown backend {s:?}; expected mock or http")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasonerConfig {
    pub backend: Backend,
    pub endpoint: Option<String>,
    /// Request path appended to the endpoint.
    pub path: String,
    pub model: String,
    pub strategy: Strategy,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_secs: u64,
    pub tot_branching: u32,
    /// Turn limit for ReAct before giving up.
    pub react_max_steps: u32,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        ReasonerConfig {
            backend: Backend::Mock,
            endpoint: None,
            path: "/v1/chat/completions".into(),
            model: "qwen2.5:1.5b".into(),
            strategy: Strategy::ZeroShot,
            temperature: 0.2,
            max_retries: 2,
            timeout_secs: 120,
            tot_branching: 3,
            react_max_steps: 8,
        }
    }
}

impl ReasonerConfig {
    /// Applies the endpoint environment override.
    pub fn with_env(mut self) -> Self {
        if let Ok(e) = std::env::var(ENDPOINT_ENV) {
            if !e.trim().is_empty() {
                self.endpoint = Some(e.trim().to_string());
            }
        }
        self
    }

    pub fn check(&self) -> Result<(), ReasonerError> {
        let bad = |m: &str| Err(ReasonerError::Config(m.to_string()));
        if self.backend == Backend::Http && self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
            return bad("the http backend needs an endpoint");
        }
        if self.strategy == Strategy::TreeOfThoughts && self.tot_branching < 2 {
            return bad("tree_of_thoughts needs tot_branching of at least 2");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature must be within 0..=2");
        }
        if self.timeout_secs == 0 {
            return bad("timeout_secs must be positive");
        }
        if self.react_max_steps == 0 {
            return bad("react_max_steps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ReasonerError {
    #[error("invalid reasoner configuration: {0}")]
    Config(String),
    #[error("no usable plan after {attempts} attempts: {last_error}")]
    Exhausted { attempts: u32, last_error: String, trace: Box<ReasonerTrace> },
    #[error("model endpoint failed: {0}")]
    Endpoint(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(c: impl Into<String>) -> Self {
        Message { role: "system".into(), content: c.into() }
    }
    pub fn user(c: impl Into<String>) -> Self {
        Message { role: "user".into(), content: c.into() }
    }
    pub fn assistant(c: impl Into<String>) -> Self {
        Message { role: "assistant".into(), content: c.into() }
    }
}

/// Which protocol step a request belongs to. Remote models ignore it; the
/// offline backend uses it to answer in kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Turn {
    Plan,
    TotPropose,
    TotEvaluate,
    ReactStep,
    Retry,
}

pub struct ChatRequest<'a> {
    pub messages: &'a [Message],
    pub temperature: f64,
    pub turn: Turn,
}

pub trait ChatBackend {
    fn complete(&mut self, req: &ChatRequest<'_>) -> Result<String, ReasonerError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub turn: Turn,
    pub prompt: String,
    pub response: String,
    pub timestamp_ms: u64,
    pub latency_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerTrace {
    pub strategy: Strategy,
    pub model: String,
    pub backend: Backend,
    pub system_prompt: String,
    pub exchanges: Vec<Exchange>,
    pub chosen_plan: Option<ParallelizationPlan>,
    pub retries: u32,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl ReasonerTrace {
    pub fn total_latency(&self) -> f64 {
        self.exchanges.iter().map(|e| e.latency_secs).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

struct Session<'a> {
    backend: &'a mut dyn ChatBackend,
    cfg: &'a ReasonerConfig,
    messages: Vec<Message>,
    trace: ReasonerTrace,
}

impl Session<'_> {
    fn ask(&mut self, turn: Turn) -> Result<String, ReasonerError> {
        let prompt = self.messages.iter().rev().find(|m| m.role == "user").map(|m| m.content.clone()).unwrap_or_default();
        let timestamp_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
        let start = Instant::now();
        let response =
            self.backend.complete(&ChatRequest { messages: &self.messages, temperature: self.cfg.temperature, turn })?;
        let latency_secs = start.elapsed().as_secs_f64();
        log::debug!("{turn:?} reply after {latency_secs:.3}s ({} bytes)", response.len());
        self.trace.exchanges.push(Exchange { turn, prompt, response: response.clone(), timestamp_ms, latency_secs });
        self.messages.push(Message::assistant(response.clone()));
        Ok(response)
    }

    /// Records a failed reply and queues the follow-up, or gives up.
    fn retry(&mut self, error: String) -> Result<(), ReasonerError> {
        if self.trace.retries >= self.cfg.max_retries {
            let attempts = self.trace.retries + 1;
            return Err(ReasonerError::Exhausted { attempts, last_error: error, trace: Box::new(self.trace.clone()) });
        }
        self.trace.retries += 1;
        log::info!("retrying after malformed reply: {error}");
        self.messages.push(Message::user(prompts::retry_prompt(&error)));
        Ok(())
    }

    fn finish(mut self, plan: ParallelizationPlan) -> (ParallelizationPlan, ReasonerTrace) {
        self.trace.chosen_plan = Some(plan.clone());
        (plan, self.trace)
    }
}

/// Builds the configured backend and runs the configured strategy.
pub fn plan_for(
    unit: &SourceUnit,
    report: &AnalysisReport,
    cfg: &ReasonerConfig,
) -> Result<(ParallelizationPlan, ReasonerTrace), ReasonerError> {
    cfg.check()?;
    match cfg.backend {
        Backend::Mock => plan_with(&mut MockBackend::new(report, cfg), unit, report, cfg),
        Backend::Http => plan_with(&mut http::HttpBackend::new(cfg)?, unit, report, cfg),
    }
}

/// Runs the configured strategy against an arbitrary backend.
pub fn plan_with(
    backend: &mut dyn ChatBackend,
    unit: &SourceUnit,
    report: &AnalysisReport,
    cfg: &ReasonerConfig,
) -> Result<(ParallelizationPlan, ReasonerTrace), ReasonerError> {
    cfg.check()?;
    let system = prompts::system_prompt().to_string();
    let ctx = PromptContext { tot_branching: cfg.tot_branching };
    let first = render_prompt(cfg.strategy, unit, report, &ctx);
    let mut s = Session {
        backend,
        cfg,
        messages: vec![Message::system(system.clone()), Message::user(first)],
        trace: ReasonerTrace {
            strategy: cfg.strategy,
            model: cfg.model.clone(),
            backend: cfg.backend,
            system_prompt: system,
            exchanges: vec![],
            chosen_plan: None,
            retries: 0,
            metadata: serde_json::Value::Null,
        },
    };
    match cfg.strategy {
        Strategy::TreeOfThoughts => tree_of_thoughts(s, unit, report),
        Strategy::React => react(s, unit, report),
        _ => {
            let mut turn = Turn::Plan;
            loop {
                let reply = s.ask(turn)?;
                match parse_plan(&reply, unit) {
                    Ok(plan) => return Ok(s.finish(plan)),
                    Err(e) => s.retry(e.to_string())?,
                }
                turn = Turn::Retry;
            }
        }
    }
}

/// Every top-level JSON object in `text` that reads as a plan.
fn candidates(text: &str, unit: &SourceUnit) -> Vec<ParallelizationPlan> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        let mut stream = serde_json::Deserializer::from_str(&rest[start..]).into_iter::<serde_json::Value>();
        match stream.next() {
            Some(Ok(v)) if v.is_object() => {
                let end = start + stream.byte_offset();
                if let Ok(p) = parse_plan(&rest[start..end], unit) {
                    out.push(p);
                }
                rest = &rest[end..];
            }
            _ => rest = &rest[start + 1..],
        }
    }
    out
}

fn parse_scores(text: &str, n: usize) -> Result<Vec<f64>, String> {
    let mut found = None;
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        let mut stream = serde_json::Deserializer::from_str(&rest[start..]).into_iter::<serde_json::Value>();
        match stream.next() {
            Some(Ok(v)) => {
                if let Some(arr) = v.get("scores").and_then(|s| s.as_array()) {
                    found = Some(arr.clone());
                }
                rest = &rest[start + stream.byte_offset()..];
            }
            _ => rest = &rest[start + 1..],
        }
    }
    let arr = found.ok_or("no JSON object with a `scores` array found")?;
    if arr.len() != n {
        return Err(format!("expected {n} scores, got {}", arr.len()));
    }
    arr.iter()
        .map(|v| v.as_f64().filter(|x| (0.0..=10.0).contains(x)).ok_or_else(|| format!("score {v} is not a number in 0..=10")))
        .collect()
}

fn tree_of_thoughts(
    mut s: Session<'_>,
    unit: &SourceUnit,
    report: &AnalysisReport,
) -> Result<(ParallelizationPlan, ReasonerTrace), ReasonerError> {
    let want = s.cfg.tot_branching as usize;
    let mut turn = Turn::TotPropose;
    let (reply, mut cands) = loop {
        let reply = s.ask(turn)?;
        let c = candidates(&reply, unit);
        if !c.is_empty() {
            break (reply, c);
        }
        s.retry(format!("expected {want} candidate plans as JSON objects, found none that parse"))?;
        turn = Turn::Retry;
    };
    drop(reply);
    cands.truncate(want);
    let listing: Vec<String> =
        cands.iter().enumerate().map(|(i, p)| format!("Candidate {}:\n{}", i + 1, p.to_json())).collect();
    s.messages.push(Message::user(prompts::tot_evaluate_prompt(&listing)));
    let mut scores = None;
    let mut score_error = None;
    for attempt in 0..=1 {
        let reply = s.ask(if attempt == 0 { Turn::TotEvaluate } else { Turn::Retry })?;
        match parse_scores(&reply, cands.len()) {
            Ok(v) => {
                scores = Some(v);
                break;
            }
            Err(e) if attempt == 0 && s.trace.retries < s.cfg.max_retries => {
                s.trace.retries += 1;
                s.messages.push(Message::user(prompts::retry_scores_prompt(&e, cands.len())));
            }
            Err(e) => {
                score_error = Some(e);
                break;
            }
        }
    }
    let scores = scores.unwrap_or_else(|| vec![0.0; cands.len()]);
    let valid: Vec<bool> =
        cands.iter().map(|p| validate(p, report).map(|v| v.accepted).unwrap_or(false)).collect();
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));
    let chosen = order.iter().copied().find(|i| valid[*i]).unwrap_or(order[0]);
    s.trace.metadata = json!({
        "candidates": cands.len(),
        "scores": scores,
        "valid": valid,
        "chosen": chosen,
        "score_error": score_error,
    });
    let plan = cands.swap_remove(chosen);
    Ok(s.finish(plan))
}

fn react(
    mut s: Session<'_>,
    unit: &SourceUnit,
    report: &AnalysisReport,
) -> Result<(ParallelizationPlan, ReasonerTrace), ReasonerError> {
    let mut queries = Vec::new();
    for _ in 0..s.cfg.react_max_steps {
        let reply = s.ask(Turn::ReactStep)?;
        if let Some(pos) = reply.find("Final Answer:") {
            match parse_plan(&reply[pos + "Final Answer:".len()..], unit) {
                Ok(plan) => {
                    s.trace.metadata = json!({ "queries": queries });
                    return Ok(s.finish(plan));
                }
                Err(e) => s.retry(e.to_string())?,
            }
        } else if let Some(section) = prompts::parse_action(&reply) {
            let obs = prompts::react_observation(&section, report);
            queries.push(section);
            s.messages.push(Message::user(format!("Observation: {obs}")));
        } else {
            s.retry("expected an `Action: query[...]` line or a `Final Answer:`".into())?;
        }
    }
    let attempts = s.trace.retries + 1;
    Err(ReasonerError::Exhausted {
        attempts,
        last_error: format!("no final answer within {} steps", s.cfg.react_max_steps),
        trace: Box::new(s.trace),
    })
}

impl From<PlanError> for ReasonerError {
    fn from(e: PlanError) -> Self {
        ReasonerError::Config(e.to_string())
    }
}
