//! Dynamic verification: build variants, regression against the sequential
//! original, and sanitizer runs.

pub mod driver;
pub mod toolchain;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::codegen::generate;
use crate::frontend::SourceUnit;
use crate::kernels::KernelMeta;
use crate::plan::{ParallelizationPlan, ValidationVerdict};

pub use driver::{driver_source, parse_driver_output, parse_dump, DriverOutput};
pub use toolchain::{build, run, RunOutput, Toolchain, Variant};

/// Relative tolerance for floating-point outputs.
pub const FP_TOLERANCE: f64 = 1e-6;
/// Relative tolerance when the plan reduces a floating-point variable.
pub const FP_REDUCTION_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("compiler not available: {0}")]
    ToolchainMissing(String),
    #[error("{} build failed (see {}):\n{diagnostics}", variant.as_str(), log.display())]
    Compile { variant: Variant, log: PathBuf, diagnostics: String },
    #[error("run failed: {0}")]
    Runtime(String),
    #[error("cannot generate driver: {0}")]
    Driver(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub threads: usize,
    pub seeds: Vec<u64>,
    pub sanitizer_repeats: usize,
    /// Regression size; the kernel's `size` when unset.
    pub size: Option<u64>,
    /// Sanitizer size; the kernel's `sanitizer_size` when unset.
    pub sanitizer_size: Option<u64>,
    /// Directory under which a unique workspace is created and kept. A
    /// temporary directory, removed afterwards, is used when unset.
    pub workspace: Option<PathBuf>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { threads: 4, seeds: vec![1, 2, 3], sanitizer_repeats: 3, size: None, sanitizer_size: None, workspace: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BufferDiff {
    pub name: String,
    pub len: usize,
    pub float: bool,
    pub max_rel_error: f64,
    pub mismatches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedReport {
    pub seed: u64,
    pub pass: bool,
    pub checksum_seq: Option<String>,
    pub checksum_par: Option<String>,
    pub buffers: Vec<BufferDiff>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionReport {
    pub pass: bool,
    pub size: u64,
    pub threads: usize,
    pub tolerance: f64,
    /// Integers and floats compared exactly.
    pub exact: bool,
    pub seeds: Vec<SeedReport>,
    /// Largest relative error over all seeds, per output buffer.
    pub max_error: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SanitizerReport {
    pub variant: Variant,
    pub size: u64,
    pub runs: usize,
    pub clean: bool,
    pub findings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Artifacts {
    pub workspace: PathBuf,
    /// False when the workspace was temporary and has been removed.
    pub persisted: bool,
    pub sources: BTreeMap<String, PathBuf>,
    pub binaries: BTreeMap<String, PathBuf>,
    pub logs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationResult {
    pub kernel: String,
    pub compile_ok: bool,
    pub regression_pass: bool,
    pub race_free: bool,
    pub memory_safe: bool,
    pub accepted: bool,
    pub tolerance: f64,
    /// The parallel source built without OpenMP matches the original exactly.
    pub sequential_equivalent: bool,
    pub regression: Option<RegressionReport>,
    pub sequential_check: Option<RegressionReport>,
    pub sanitizers: Vec<SanitizerReport>,
    pub artifacts: Artifacts,
    pub errors: Vec<String>,
}

impl VerificationResult {
    fn failed(kernel: &str, tolerance: f64, error: String) -> Self {
        VerificationResult {
            kernel: kernel.to_string(),
            compile_ok: false,
            regression_pass: false,
            race_free: false,
            memory_safe: false,
            accepted: false,
            tolerance,
            sequential_equivalent: false,
            regression: None,
            sequential_check: None,
            sanitizers: vec![],
            artifacts: Artifacts::default(),
            errors: vec![error],
        }
    }

    fn settle(&mut self) {
        self.accepted = self.compile_ok && self.regression_pass && self.race_free && self.memory_safe;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

/// 1e-4 when some directive reduces a floating-point variable, else 1e-6.
pub fn tolerance_for(unit: &SourceUnit, plan: &ParallelizationPlan) -> f64 {
    let fp = plan.directives.iter().filter(|d| d.parallelize).any(|d| {
        let Some((f, _)) = unit.find_loop(d.loop_id) else { return false };
        d.reductions.iter().any(|r| f.symbols.iter().any(|s| s.name == r.variable && s.elem_type().is_some_and(|t| t.is_float())))
    });
    if fp {
        FP_REDUCTION_TOLERANCE
    } else {
        FP_TOLERANCE
    }
}

/// Relative error with a unit floor on the magnitude, so values near zero
/// are compared absolutely.
pub fn rel_error(a: f64, b: f64) -> f64 {
    if a == b || (a.is_nan() && b.is_nan()) {
        return 0.0;
    }
    if !a.is_finite() || !b.is_finite() {
        return f64::INFINITY;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn compare(meta: &KernelMeta, seq: &str, par: &str, tolerance: f64, exact: bool) -> Result<Vec<BufferDiff>, String> {
    let s = parse_dump(seq)?;
    let p = parse_dump(par)?;
    let mut out = Vec::new();
    for a in meta.outputs() {
        let find = |d: &[driver::DumpedBuffer]| d.iter().find(|b| b.name == a.name).cloned();
        let (Some(x), Some(y)) = (find(&s), find(&p)) else {
            return Err(format!("output {} missing from dump", a.name));
        };
        if x.values.len() != y.values.len() {
            return Err(format!("output {} has {} vs {} values", a.name, x.values.len(), y.values.len()));
        }
        let float = matches!(a.ty.as_str(), "float" | "double");
        let mut diff = BufferDiff { name: a.name.clone(), len: x.values.len(), float, max_rel_error: 0.0, mismatches: 0 };
        for (u, v) in x.values.iter().zip(&y.values) {
            if u == v {
                continue;
            }
            let e = match (u.parse::<f64>(), v.parse::<f64>()) {
                (Ok(a), Ok(b)) => rel_error(a, b),
                _ => f64::INFINITY,
            };
            diff.max_rel_error = diff.max_rel_error.max(e);
            if !float || exact || e > tolerance {
                diff.mismatches += 1;
            }
        }
        out.push(diff);
    }
    Ok(out)
}

pub struct RegressRun<'a> {
    pub meta: &'a KernelMeta,
    pub size: u64,
    pub seeds: &'a [u64],
    pub threads: usize,
    pub tolerance: f64,
    pub exact: bool,
    pub timeout: Duration,
}

/// Runs both binaries on the same inputs for every seed and compares the
/// output buffers.
pub fn regress(seq: &Path, par: &Path, r: &RegressRun<'_>, dir: &Path) -> RegressionReport {
    let mut report = RegressionReport {
        pass: true,
        size: r.size,
        threads: r.threads,
        tolerance: r.tolerance,
        exact: r.exact,
        seeds: vec![],
        max_error: BTreeMap::new(),
    };
    let env = [("OMP_NUM_THREADS", r.threads.to_string())];
    for &seed in r.seeds {
        let mut sr = SeedReport { seed, pass: false, checksum_seq: None, checksum_par: None, buffers: vec![], error: None };
        let one = |bin: &Path, tag: &str| -> Result<(String, String), String> {
            let name = bin.file_name().and_then(|n| n.to_str()).unwrap_or("bin");
            let stem = dir.join(format!("{name}-{tag}-seed{seed}"));
            let dump = stem.with_extension("dump");
            let args = vec![r.size.to_string(), seed.to_string(), dump.display().to_string()];
            let out = run(bin, &args, &env, r.timeout, &stem).map_err(|e| e.to_string())?;
            if !out.success() {
                let tail: String = out.stderr.lines().take(5).collect::<Vec<_>>().join("\n");
                return Err(format!("{name} exited with {:?}: {tail}", out.status));
            }
            let d = parse_driver_output(&out.stdout)?;
            let text = std::fs::read_to_string(&dump).map_err(|e| format!("{}: {e}", dump.display()))?;
            Ok((format!("{:016x}", d.checksum), text))
        };
        let result = one(seq, "a").and_then(|a| one(par, "b").map(|b| (a, b)));
        match result {
            Ok(((cs, ds), (cp, dp))) => {
                sr.checksum_seq = Some(cs);
                sr.checksum_par = Some(cp);
                match compare(r.meta, &ds, &dp, r.tolerance, r.exact) {
                    Ok(b) => {
                        sr.pass = b.iter().all(|x| x.mismatches == 0);
                        for x in &b {
                            let e = report.max_error.entry(x.name.clone()).or_insert(0.0);
                            *e = e.max(x.max_rel_error);
                        }
                        sr.buffers = b;
                    }
                    Err(e) => sr.error = Some(e),
                }
            }
            Err(e) => sr.error = Some(e),
        }
        report.pass &= sr.pass;
        report.seeds.push(sr);
    }
    report.pass &= !r.seeds.is_empty();
    report
}

fn sanitize(bin: &Path, variant: Variant, size: u64, opts: &VerifyOptions, timeout: Duration, dir: &Path) -> SanitizerReport {
    let mut env = vec![("OMP_NUM_THREADS", opts.threads.to_string())];
    let marker: &[&str] = match variant {
        Variant::ParallelRace => {
            env.push(("TSAN_OPTIONS", "halt_on_error=1:exitcode=66:report_signal_unsafe=0".into()));
            &["WARNING: ThreadSanitizer", "ERROR: ThreadSanitizer"]
        }
        _ => {
            env.push(("ASAN_OPTIONS", "detect_leaks=0:exitcode=67".into()));
            env.push(("UBSAN_OPTIONS", "halt_on_error=1:print_stacktrace=1".into()));
            &["ERROR: AddressSanitizer", "runtime error:"]
        }
    };
    let mut rep = SanitizerReport { variant, size, runs: 0, clean: true, findings: vec![] };
    for k in 0..opts.sanitizer_repeats.max(1) {
        let seed = opts.seeds.first().copied().unwrap_or(1) + k as u64;
        let stem = dir.join(format!("{}-run{k}", variant.as_str()));
        rep.runs += 1;
        match run(bin, &[size.to_string(), seed.to_string()], &env, timeout, &stem) {
            Ok(out) => {
                let hit = out.stderr.lines().find(|l| marker.iter().any(|m| l.contains(m)));
                if let Some(line) = hit {
                    rep.clean = false;
                    rep.findings.push(format!("run {k}: {}", line.trim()));
                } else if !out.success() {
                    rep.clean = false;
                    rep.findings.push(format!("run {k}: exit status {:?}", out.status));
                }
            }
            Err(e) => {
                rep.clean = false;
                rep.findings.push(format!("run {k}: {e}"));
            }
        }
    }
    rep
}

/// Verifies `parallel` (source text) against the sequential `original`.
pub fn verify_sources(
    original: &SourceUnit,
    parallel: &str,
    meta: &KernelMeta,
    tolerance: f64,
    toolchain: &Toolchain,
    opts: &VerifyOptions,
) -> VerificationResult {
    let mut res = VerificationResult::failed(&meta.name, tolerance, String::new());
    res.errors.clear();
    let mut _temp = None;
    let dir = match &opts.workspace {
        Some(root) => {
            let made = std::fs::create_dir_all(root)
                .and_then(|_| tempfile::Builder::new().prefix(&format!("{}-", meta.name)).tempdir_in(root));
            match made {
                Ok(t) => {
                    res.artifacts.persisted = true;
                    t.keep()
                }
                Err(e) => return VerificationResult::failed(&meta.name, tolerance, format!("workspace: {e}")),
            }
        }
        None => match tempfile::Builder::new().prefix("autopar-verify-").tempdir() {
            Ok(t) => {
                let p = t.path().to_path_buf();
                _temp = Some(t);
                p
            }
            Err(e) => return VerificationResult::failed(&meta.name, tolerance, format!("workspace: {e}")),
        },
    };
    res.artifacts.workspace = dir.clone();
    let timeout = Duration::from_secs(toolchain.timeout_secs);

    let driver = match driver_source(meta, original) {
        Ok(d) => d,
        Err(e) => {
            res.errors.push(e.to_string());
            return res;
        }
    };
    let files = [
        ("original", format!("{}.c", meta.name), original.text.clone()),
        ("parallel", format!("{}_parallel.c", meta.name), parallel.to_string()),
        ("driver", "driver.c".to_string(), driver),
    ];
    for (key, name, text) in &files {
        let p = dir.join(name);
        if let Err(e) = std::fs::write(&p, text) {
            res.errors.push(format!("{}: {e}", p.display()));
            return res;
        }
        res.artifacts.sources.insert(key.to_string(), p);
    }
    let src = |k: &str| res.artifacts.sources[k].clone();
    let (orig, par, drv) = (src("original"), src("parallel"), src("driver"));
    let plan: [(&str, Variant, &PathBuf); 5] = [
        ("sequential", Variant::Sequential, &orig),
        ("parallel", Variant::Parallel, &par),
        ("parallel-noomp", Variant::Sequential, &par),
        ("parallel-race", Variant::ParallelRace, &par),
        ("parallel-memory", Variant::ParallelMemory, &par),
    ];
    let mut bins: BTreeMap<&str, PathBuf> = BTreeMap::new();
    res.compile_ok = true;
    for (name, variant, source) in plan {
        match build(toolchain, variant, &[(*source).clone(), drv.clone()], &dir, name) {
            Ok(b) => {
                bins.insert(name, b);
            }
            Err(e) => {
                res.compile_ok = false;
                res.errors.push(e.to_string());
            }
        }
        res.artifacts.logs.push(dir.join(format!("{name}.log")));
    }
    res.artifacts.binaries = bins.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    if !res.compile_ok {
        res.settle();
        return res;
    }
    let size = opts.size.unwrap_or(meta.size);
    let run_cfg = |tolerance: f64, exact: bool, threads: usize| RegressRun {
        meta,
        size,
        seeds: &opts.seeds,
        threads,
        tolerance,
        exact,
        timeout,
    };
    let seq_check = regress(&bins["sequential"], &bins["parallel-noomp"], &run_cfg(0.0, true, 1), &dir);
    let reg = regress(&bins["sequential"], &bins["parallel"], &run_cfg(tolerance, false, opts.threads), &dir);
    res.sequential_equivalent = seq_check.pass;
    res.regression_pass = reg.pass && seq_check.pass;
    for s in reg.seeds.iter().chain(&seq_check.seeds) {
        if let Some(e) = &s.error {
            res.errors.push(format!("seed {}: {e}", s.seed));
        }
    }
    res.regression = Some(reg);
    res.sequential_check = Some(seq_check);

    let ssize = opts.sanitizer_size.unwrap_or(meta.sanitizer_size);
    let race = sanitize(&bins["parallel-race"], Variant::ParallelRace, ssize, opts, timeout, &dir);
    let mem = sanitize(&bins["parallel-memory"], Variant::ParallelMemory, ssize, opts, timeout, &dir);
    res.race_free = race.clean;
    res.memory_safe = mem.clean;
    res.sanitizers = vec![race, mem];
    res.settle();
    log::info!(
        "verify {}: compile={} regression={} race_free={} memory_safe={}",
        meta.name,
        res.compile_ok,
        res.regression_pass,
        res.race_free,
        res.memory_safe
    );
    res
}

/// Generates the parallel source for an accepted plan and verifies it.
/// Every failure is recorded in the result.
pub fn verify_pipeline(
    unit: &SourceUnit,
    plan: &ParallelizationPlan,
    verdict: &ValidationVerdict,
    meta: &KernelMeta,
    toolchain: &Toolchain,
    opts: &VerifyOptions,
) -> VerificationResult {
    let tolerance = tolerance_for(unit, plan);
    if !verdict.accepted {
        return VerificationResult::failed(&meta.name, tolerance, "plan was rejected by validation".into());
    }
    match generate(unit, plan, verdict) {
        Ok(text) => verify_sources(unit, &text, meta, tolerance, toolchain, opts),
        Err(e) => VerificationResult::failed(&meta.name, tolerance, format!("codegen: {e}")),
    }
}

/// Verifies a plan without consulting the validator. Used to show that the
/// dynamic checks catch unsafe plans on their own.
pub fn verify_forced(
    unit: &SourceUnit,
    plan: &ParallelizationPlan,
    meta: &KernelMeta,
    toolchain: &Toolchain,
    opts: &VerifyOptions,
) -> VerificationResult {
    let forced = ValidationVerdict { accepted: true, violations: vec![] };
    verify_pipeline(unit, plan, &forced, meta, toolchain, opts)
}

#[cfg(test)]
mod tests;
