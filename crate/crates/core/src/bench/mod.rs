//! Speedup measurement against the sequential `-O3` build, sweeps over
//! kernels, sizes, thread counts, strategies and models, and the summary
//! tables derived from them.

pub mod report;
pub mod summary;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{resolve_kernel, slug, OutLayout, Pipeline, PipelineError};
use crate::reasoner::Strategy;
use crate::verify::{parse_driver_output, run, VerificationResult};

pub use report::{write_csv, CsvRow, SweepReport, CSV_HEADER};
pub use summary::{summarize, Summary};

/// Efficiency above `1 + EFFICIENCY_SLACK` is flagged as superlinear.
pub const EFFICIENCY_SLACK: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchError {
    #[error("benchmark run failed: {0}")]
    Runtime(String),
    #[error("invalid sweep: {0}")]
    Spec(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<PipelineError> for BenchError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Io(m) => BenchError::Io(m),
            other => BenchError::Spec(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureConfig {
    pub reps: usize,
    pub warmup: usize,
    pub seed: u64,
    pub timeout: Duration,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig { reps: 5, warmup: 1, seed: 1, timeout: Duration::from_secs(60) }
    }
}

/// Raw timings for one (size, threads) point, in nanoseconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub seq_samples_ns: Vec<u64>,
    pub par_samples_ns: Vec<u64>,
}

impl Measurement {
    pub fn t_seq(&self) -> f64 {
        median_secs(&self.seq_samples_ns)
    }
    pub fn t_par(&self) -> f64 {
        median_secs(&self.par_samples_ns)
    }
}

pub fn median_secs(samples: &[u64]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut v = samples.to_vec();
    v.sort_unstable();
    let m = v.len() / 2;
    let ns = if v.len() % 2 == 1 { v[m] as f64 } else { (v[m - 1] as f64 + v[m] as f64) / 2.0 };
    ns / 1e9
}

fn time_once(bin: &Path, size: u64, seed: u64, env: &[(&str, String)], cfg: &MeasureConfig, stem: &Path) -> Result<u64, BenchError> {
    let out = run(bin, &[size.to_string(), seed.to_string()], env, cfg.timeout, stem)
        .map_err(|e| BenchError::Runtime(e.to_string()))?;
    if !out.success() {
        return Err(BenchError::Runtime(format!("{} exited with {:?}", bin.display(), out.status)));
    }
    let d = parse_driver_output(&out.stdout).map_err(BenchError::Runtime)?;
    // A zero reading would make the speedup undefined.
    Ok(d.time_ns.max(1))
}

/// Times both binaries, one process at a time, alternating after the
/// warmup runs. The parallel binary runs with `OMP_NUM_THREADS=threads`.
pub fn measure(seq: &Path, par: &Path, size: u64, threads: usize, cfg: &MeasureConfig, log_dir: &Path) -> Result<Measurement, BenchError> {
    if threads == 0 {
        return Err(BenchError::Spec("thread count must be at least 1".into()));
    }
    if cfg.reps == 0 {
        return Err(BenchError::Spec("at least one repetition is needed".into()));
    }
    std::fs::create_dir_all(log_dir).map_err(|e| BenchError::Io(e.to_string()))?;
    let par_env = [("OMP_NUM_THREADS", threads.to_string())];
    let seq_env = [("OMP_NUM_THREADS", "1".to_string())];
    let stem = |tag: &str, k: usize| log_dir.join(format!("bench-{size}-p{threads}-{tag}{k}"));
    for k in 0..cfg.warmup {
        time_once(seq, size, cfg.seed, &seq_env, cfg, &stem("warm-seq", k))?;
        time_once(par, size, cfg.seed, &par_env, cfg, &stem("warm-par", k))?;
    }
    let mut m = Measurement { seq_samples_ns: vec![], par_samples_ns: vec![] };
    for k in 0..cfg.reps {
        m.seq_samples_ns.push(time_once(seq, size, cfg.seed, &seq_env, cfg, &stem("seq", k))?);
        m.par_samples_ns.push(time_once(par, size, cfg.seed, &par_env, cfg, &stem("par", k))?);
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success,
    /// No plan, a plan the validator rejected, or a failed verification.
    Rejected,
    RuntimeFailure,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Success => "success",
            Status::Rejected => "rejected",
            Status::RuntimeFailure => "runtime_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRecord {
    pub kernel: String,
    pub model: String,
    pub strategy: Strategy,
    pub size: u64,
    pub threads: usize,
    pub status: Status,
    pub t_seq: Option<f64>,
    pub t_par: Option<f64>,
    pub speedup: Option<f64>,
    pub efficiency: Option<f64>,
    pub runs: usize,
    /// Efficiency above the superlinear allowance.
    pub flagged: bool,
    pub seq_samples_ns: Vec<u64>,
    pub par_samples_ns: Vec<u64>,
    pub note: String,
}

impl BenchmarkRecord {
    pub fn new(kernel: &str, model: &str, strategy: Strategy, size: u64, threads: usize) -> Self {
        BenchmarkRecord {
            kernel: kernel.to_string(),
            model: model.to_string(),
            strategy,
            size,
            threads,
            status: Status::Rejected,
            t_seq: None,
            t_par: None,
            speedup: None,
            efficiency: None,
            runs: 0,
            flagged: false,
            seq_samples_ns: vec![],
            par_samples_ns: vec![],
            note: String::new(),
        }
    }

    pub fn with_measurement(mut self, m: Measurement) -> Self {
        let (ts, tp) = (m.t_seq(), m.t_par());
        let s = ts / tp;
        let e = s / self.threads as f64;
        self.status = Status::Success;
        self.t_seq = Some(ts);
        self.t_par = Some(tp);
        self.speedup = Some(s);
        self.efficiency = Some(e);
        self.flagged = e > 1.0 + EFFICIENCY_SLACK;
        self.runs = m.seq_samples_ns.len();
        self.seq_samples_ns = m.seq_samples_ns;
        self.par_samples_ns = m.par_samples_ns;
        self
    }

    pub fn failed(mut self, status: Status, note: impl Into<String>) -> Self {
        self.status = status;
        self.note = note.into();
        self
    }
}

fn default_threads() -> Vec<usize> {
    vec![1, 2, 4, 8, 16]
}

fn default_models() -> Vec<String> {
    vec![crate::reasoner::ReasonerConfig::default().model]
}

/// The cross-product a sweep runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Embedded kernel names or paths to `.c` files with metadata.
    pub kernels: Vec<String>,
    /// Sizes per kernel; the kernel's benchmark size when absent.
    pub sizes: BTreeMap<String, Vec<u64>>,
    pub threads: Vec<usize>,
    pub strategies: Vec<Strategy>,
    pub models: Vec<String>,
    pub repetitions: usize,
    pub warmup: usize,
    /// Input seed passed to every driver.
    pub seed: u64,
    /// Keep thread counts above the host's logical cores. Timings from such
    /// points measure oversubscription, not scaling.
    pub oversubscribe: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            kernels: vec![],
            sizes: BTreeMap::new(),
            threads: default_threads(),
            strategies: vec![Strategy::ZeroShot],
            models: default_models(),
            repetitions: 5,
            warmup: 1,
            seed: 1,
            oversubscribe: false,
        }
    }
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<SweepSpec, BenchError> {
        toml::from_str(text).map_err(|e| BenchError::Spec(e.to_string()))
    }

    /// Thread counts to run on a host with `cores` logical cores, and the
    /// ones dropped.
    pub fn thread_counts(&self, cores: usize) -> (Vec<usize>, Vec<usize>) {
        let mut keep = vec![];
        let mut skipped = vec![];
        for &t in &self.threads {
            if t == 0 || keep.contains(&t) || skipped.contains(&t) {
                continue;
            }
            if t > cores && !self.oversubscribe {
                skipped.push(t);
            } else {
                keep.push(t);
            }
        }
        (keep, skipped)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HostInfo {
    pub logical_cores: usize,
    pub cpu_model: String,
    pub os: String,
    pub compiler: String,
}

impl HostInfo {
    pub fn probe(pipeline: &Pipeline) -> HostInfo {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|t| t.lines().find(|l| l.starts_with("model name")).and_then(|l| l.split(':').nth(1)).map(|s| s.trim().to_string()))
            .unwrap_or_else(|| "unknown".into());
        HostInfo {
            logical_cores: logical_cores(),
            cpu_model,
            os: format!("{} {}", std::env::consts::OS, std::env::consts::ARCH),
            compiler: pipeline.toolchain.probe().unwrap_or_else(|e| e.to_string()),
        }
    }
}

pub fn logical_cores() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Static and dynamic outcome of one (model, strategy, kernel) plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanOutcome {
    pub kernel: String,
    pub model: String,
    pub strategy: Strategy,
    pub accepted: bool,
    pub quality: f64,
    pub response_secs: f64,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub records: Vec<BenchmarkRecord>,
    pub plans: Vec<PlanOutcome>,
    pub skipped_threads: Vec<usize>,
    pub summary: Summary,
}

/// Runs the full cross-product in a fixed order (model, strategy, kernel,
/// size, threads). Plans, traces and analysis reports go under `out`, and
/// every record is appended to `reports/records.csv` as soon as it exists.
pub fn sweep(spec: &SweepSpec, pipeline: &Pipeline, out: &OutLayout) -> Result<SweepResult, BenchError> {
    if spec.repetitions == 0 {
        return Err(BenchError::Spec("repetitions must be at least 1".into()));
    }
    out.create()?;
    let (threads, skipped) = spec.thread_counts(logical_cores());
    if !skipped.is_empty() {
        log::warn!("skipping thread counts {skipped:?}: host has {} logical cores", logical_cores());
    }
    let mut inputs = Vec::new();
    for k in &spec.kernels {
        let input = resolve_kernel(k)?;
        input.require_meta()?;
        inputs.push(input);
    }
    let mcfg = MeasureConfig {
        reps: spec.repetitions,
        warmup: spec.warmup,
        seed: spec.seed,
        timeout: Duration::from_secs(pipeline.toolchain.timeout_secs),
    };
    let csv_path = out.reports().join("records.csv");
    let mut csv = report::CsvSink::create(&csv_path)?;
    let mut records = Vec::new();
    let mut plans = Vec::new();
    let mut verified: HashMap<(String, String), VerificationResult> = HashMap::new();

    for model in &spec.models {
        for &strategy in &spec.strategies {
            let mut p = pipeline.clone();
            p.reasoner.model = model.clone();
            p.reasoner.strategy = strategy;
            p.verify.workspace = Some(out.builds());
            p.verify.seeds = vec![spec.seed, spec.seed + 1, spec.seed + 2];
            for input in &inputs {
                let meta = input.meta.as_ref().expect("checked above");
                let unit = input.unit()?;
                let t = p.transform(&unit)?;
                let tag = format!("{}__{}__{}", slug(&input.name), slug(model), strategy.as_str());
                out.write(&out.reports().join("analysis").join(format!("{}.json", slug(&input.name))), &t.report.to_json())?;
                if let Some(plan) = &t.plan {
                    out.write(&out.plans().join(format!("{tag}.json")), &plan.to_json())?;
                }
                if let Some(trace) = &t.trace {
                    out.write(&out.traces().join(format!("{tag}.json")), &trace.to_json())?;
                }
                let mut reason = t.error.clone();
                let ver = match &t.parallel {
                    Some(text) => {
                        let key = (input.name.clone(), text.clone());
                        if !verified.contains_key(&key) {
                            let v = p.verify(&unit, &t, meta).expect("accepted transform");
                            out.write(&out.reports().join("verification").join(format!("{tag}.json")), &v.to_json())?;
                            verified.insert(key.clone(), v);
                        }
                        verified.get(&key)
                    }
                    None => None,
                };
                let accepted = ver.is_some_and(|v| v.accepted);
                if let Some(v) = ver.filter(|v| !v.accepted) {
                    reason = Some(verification_reason(v));
                }
                plans.push(PlanOutcome {
                    kernel: input.name.clone(),
                    model: model.clone(),
                    strategy,
                    accepted,
                    quality: t.quality,
                    response_secs: t.response_secs,
                    reason: reason.clone(),
                });
                let sizes = spec.sizes.get(&input.name).cloned().unwrap_or_else(|| vec![meta.bench_size]);
                for &size in &sizes {
                    for &th in &threads {
                        let rec = BenchmarkRecord::new(&input.name, model, strategy, size, th);
                        let rec = match ver.filter(|v| v.accepted) {
                            None => rec.failed(Status::Rejected, reason.clone().unwrap_or_default()),
                            Some(v) => {
                                let bins = &v.artifacts.binaries;
                                let logs = out.builds().join("bench").join(&tag);
                                match measure(&bins["sequential"], &bins["parallel"], size, th, &mcfg, &logs) {
                                    Ok(m) => rec.with_measurement(m),
                                    Err(e) => rec.failed(Status::RuntimeFailure, e.to_string()),
                                }
                            }
                        };
                        log::info!(
                            "{} {} {} n={} p={}: {}",
                            rec.kernel,
                            rec.model,
                            rec.strategy,
                            rec.size,
                            rec.threads,
                            rec.speedup.map_or(rec.status.as_str().to_string(), |s| format!("S={s:.3}"))
                        );
                        csv.push(&rec)?;
                        records.push(rec);
                    }
                }
            }
        }
    }
    let summary = summarize(&records, &plans);
    Ok(SweepResult { records, plans, skipped_threads: skipped, summary })
}

fn verification_reason(v: &VerificationResult) -> String {
    let mut failed = vec![];
    for (ok, name) in [
        (v.compile_ok, "compile"),
        (v.regression_pass, "regression"),
        (v.race_free, "race sanitizer"),
        (v.memory_safe, "memory sanitizer"),
    ] {
        if !ok {
            failed.push(name);
        }
    }
    format!("verification failed: {}", failed.join(", "))
}

#[cfg(test)]
mod tests;
