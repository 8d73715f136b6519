//! End-to-end glue: analyze, plan, validate, generate and verify one kernel,
//! plus the on-disk layout shared by the command line and the sweeps.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::codegen::generate;
use crate::depanalysis::{analyze, AnalysisReport};
use crate::frontend::{parse, SourceUnit};
use crate::kernels::{kernel, KernelMeta};
use crate::plan::{validate, ParallelizationPlan, ValidationVerdict};
use crate::reasoner::{analysis_quality, plan_for, ReasonerConfig, ReasonerError, ReasonerTrace};
use crate::verify::{tolerance_for, verify_sources, Toolchain, VerificationResult, VerifyOptions};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Default)]
pub struct Pipeline {
    pub reasoner: ReasonerConfig,
    pub toolchain: Toolchain,
    pub verify: VerifyOptions,
}

/// Everything the static half of the pipeline produced for one unit.
#[derive(Debug, Clone, Serialize)]
pub struct Transformed {
    pub report: AnalysisReport,
    pub plan: Option<ParallelizationPlan>,
    pub trace: Option<ReasonerTrace>,
    pub verdict: Option<ValidationVerdict>,
    /// Generated source; present only for accepted plans.
    pub parallel: Option<String>,
    pub quality: f64,
    pub response_secs: f64,
    pub error: Option<String>,
}

impl Transformed {
    pub fn accepted(&self) -> bool {
        self.parallel.is_some()
    }
}

impl Pipeline {
    /// Runs analysis, the reasoner, validation and code generation. Only a
    /// bad reasoner configuration is an error; a missing or rejected plan
    /// is recorded in the result.
    pub fn transform(&self, unit: &SourceUnit) -> Result<Transformed, PipelineError> {
        let report = analyze(unit);
        let mut out = Transformed {
            report,
            plan: None,
            trace: None,
            verdict: None,
            parallel: None,
            quality: 0.0,
            response_secs: 0.0,
            error: None,
        };
        match plan_for(unit, &out.report, &self.reasoner) {
            Ok((plan, trace)) => {
                out.response_secs = trace.total_latency();
                out.trace = Some(trace);
                out.quality = analysis_quality(&plan, &out.report);
                match validate(&plan, &out.report) {
                    Ok(v) => {
                        if v.accepted {
                            match generate(unit, &plan, &v) {
                                Ok(text) => out.parallel = Some(text),
                                Err(e) => out.error = Some(format!("codegen: {e}")),
                            }
                        } else {
                            let rules: Vec<String> = v.rules().iter().map(|r| r.to_string()).collect();
                            out.error = Some(format!("plan rejected ({})", rules.join(", ")));
                        }
                        out.verdict = Some(v);
                    }
                    Err(e) => out.error = Some(e.to_string()),
                }
                out.plan = Some(plan);
            }
            Err(ReasonerError::Config(m)) => return Err(PipelineError::Config(m)),
            Err(ReasonerError::Exhausted { attempts, last_error, trace }) => {
                out.response_secs = trace.total_latency();
                out.trace = Some(*trace);
                out.error = Some(format!("no usable plan after {attempts} attempts: {last_error}"));
            }
            Err(e) => out.error = Some(e.to_string()),
        }
        Ok(out)
    }

    /// Dynamic verification of an accepted transform.
    pub fn verify(&self, unit: &SourceUnit, t: &Transformed, meta: &KernelMeta) -> Option<VerificationResult> {
        let (plan, text) = (t.plan.as_ref()?, t.parallel.as_ref()?);
        let tol = tolerance_for(unit, plan);
        Some(verify_sources(unit, text, meta, tol, &self.toolchain, &self.verify))
    }
}

/// A kernel source with its metadata.
#[derive(Debug, Clone)]
pub struct KernelInput {
    pub name: String,
    pub path: String,
    pub source: String,
    pub meta: Option<KernelMeta>,
}

impl KernelInput {
    pub fn unit(&self) -> Result<SourceUnit, PipelineError> {
        parse(&self.path, &self.source).map_err(|e| PipelineError::Input(format!("{}: {e}", self.path)))
    }

    pub fn require_meta(&self) -> Result<&KernelMeta, PipelineError> {
        self.meta.as_ref().ok_or_else(|| {
            PipelineError::Input(format!("{}: no kernel metadata (expected a .toml file next to the source)", self.path))
        })
    }
}

/// Resolves an embedded kernel name or a path to a `.c` file. Metadata for
/// a file is read from the `.toml` file with the same stem, falling back to
/// the embedded kernel of that name.
pub fn resolve_kernel(spec: &str) -> Result<KernelInput, PipelineError> {
    let path = Path::new(spec);
    if !path.exists() {
        if let Some(k) = kernel(spec) {
            return Ok(KernelInput { name: k.name.into(), path: k.file_name(), source: k.source.into(), meta: Some(k.meta()) });
        }
        return Err(PipelineError::Input(format!("{spec}: no such file or embedded kernel")));
    }
    let source = std::fs::read_to_string(path).map_err(|e| PipelineError::Input(format!("{spec}: {e}")))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("kernel").to_string();
    let toml = path.with_extension("toml");
    let meta = if toml.exists() {
        let text = std::fs::read_to_string(&toml).map_err(|e| PipelineError::Input(format!("{}: {e}", toml.display())))?;
        Some(KernelMeta::parse(&text).map_err(|e| PipelineError::Input(format!("{}: {e}", toml.display())))?)
    } else {
        kernel(&name).map(|k| k.meta())
    };
    Ok(KernelInput { name, path: spec.to_string(), source, meta })
}

/// Output directory layout: `plans/`, `traces/`, `builds/`, `reports/`.
#[derive(Debug, Clone)]
pub struct OutLayout {
    pub root: PathBuf,
}

impl OutLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutLayout { root: root.into() }
    }

    pub fn plans(&self) -> PathBuf {
        self.root.join("plans")
    }
    pub fn traces(&self) -> PathBuf {
        self.root.join("traces")
    }
    pub fn builds(&self) -> PathBuf {
        self.root.join("builds")
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn create(&self) -> Result<(), PipelineError> {
        for d in [self.plans(), self.traces(), self.builds(), self.reports()] {
            std::fs::create_dir_all(&d).map_err(|e| PipelineError::Io(format!("{}: {e}", d.display())))?;
        }
        Ok(())
    }

    pub fn write(&self, path: &Path, text: &str) -> Result<PathBuf, PipelineError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io(format!("{}: {e}", dir.display())))?;
        }
        std::fs::write(path, text).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
        Ok(path.to_path_buf())
    }
}

/// File-name-safe form of a label such as a model name.
pub fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KERNELS;

    #[test]
    fn transform_every_kernel_with_mock() {
        let p = Pipeline::default();
        for k in KERNELS {
            let input = resolve_kernel(k.name).unwrap();
            let t = p.transform(&input.unit().unwrap()).unwrap();
            assert!(t.accepted(), "{}: {:?}", k.name, t.error);
            assert!(t.trace.is_some() && t.verdict.as_ref().unwrap().accepted);
            assert_eq!(t.quality, 1.0, "{}", k.name);
        }
    }

    #[test]
    fn bad_reasoner_config_is_fatal() {
        let mut p = Pipeline::default();
        p.reasoner.temperature = 5.0;
        let u = resolve_kernel("dot").unwrap().unit().unwrap();
        assert!(matches!(p.transform(&u), Err(PipelineError::Config(_))));
    }

    #[test]
    fn unreachable_endpoint_is_recorded() {
        let mut p = Pipeline::default();
        p.reasoner.backend = crate::reasoner::Backend::Http;
        p.reasoner.endpoint = Some("http://127.0.0.1:9".into());
        p.reasoner.timeout_secs = 2;
        let u = resolve_kernel("dot").unwrap().unit().unwrap();
        let t = p.transform(&u).unwrap();
        assert!(!t.accepted() && t.error.is_some());
    }

    #[test]
    fn resolves_files_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let c = dir.path().join("dot.c");
        std::fs::write(&c, kernel("dot").unwrap().source).unwrap();
        let k = resolve_kernel(c.to_str().unwrap()).unwrap();
        assert_eq!(k.meta.unwrap().function, "dot");
        let other = dir.path().join("mine.c");
        std::fs::write(&other, "void mine(float* a, int n) { }\n").unwrap();
        let k = resolve_kernel(other.to_str().unwrap()).unwrap();
        assert!(k.meta.is_none() && k.require_meta().is_err());
        assert!(resolve_kernel("no_such_kernel").is_err());
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("qwen2.5:1.5b"), "qwen2.5_1.5b");
    }
}
