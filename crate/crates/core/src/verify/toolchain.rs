//! Compiler invocation and sandboxed runs.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::VerifyError;

/// pthread implementation of the libgomp entry points, linked into
/// race-sanitizer builds so the sanitizer sees every synchronization.
pub const TSAN_SHIM: &str = include_str!("../../assets/gomp_tsan_shim.c");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toolchain {
    pub compiler: String,
    pub base_flags: Vec<String>,
    pub openmp_flag: String,
    /// Appended after the base flags for race-sanitizer builds.
    pub race_flags: Vec<String>,
    /// Appended after the base flags for memory-sanitizer builds.
    pub memory_flags: Vec<String>,
    pub libs: Vec<String>,
    /// Link the pthread GOMP shim into race-sanitizer builds.
    pub race_shim: bool,
    pub timeout_secs: u64,
}

impl Default for Toolchain {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Toolchain {
            compiler: "gcc".into(),
            base_flags: v(&["-O3", "-std=gnu11"]),
            openmp_flag: "-fopenmp".into(),
            race_flags: v(&["-O1", "-g", "-fsanitize=thread"]),
            memory_flags: v(&["-O1", "-g", "-fsanitize=address,undefined", "-fno-sanitize-recover=all", "-fno-omit-frame-pointer"]),
            libs: v(&["-lm"]),
            race_shim: true,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Sequential,
    Parallel,
    ParallelRace,
    ParallelMemory,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Sequential, Variant::Parallel, Variant::ParallelRace, Variant::ParallelMemory];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Sequential => "sequential",
            Variant::Parallel => "parallel",
            Variant::ParallelRace => "parallel-race",
            Variant::ParallelMemory => "parallel-memory",
        }
    }

    pub fn openmp(self) -> bool {
        self != Variant::Sequential
    }
}

impl Toolchain {
    /// Checks that the compiler runs.
    pub fn probe(&self) -> Result<String, VerifyError> {
        let out = Command::new(&self.compiler)
            .arg("--version")
            .output()
            .map_err(|e| VerifyError::ToolchainMissing(format!("{}: {e}", self.compiler)))?;
        if !out.status.success() {
            return Err(VerifyError::ToolchainMissing(format!("{} --version failed", self.compiler)));
        }
        Ok(String::from_utf8_lossy(&out.stdout).lines().next().unwrap_or("").to_string())
    }

    pub fn has_o3(&self) -> bool {
        self.base_flags.iter().any(|f| f == "-O3")
    }

    /// Compiler arguments before the input files.
    pub fn flags(&self, variant: Variant) -> Vec<String> {
        let mut f = self.base_flags.clone();
        if variant.openmp() {
            f.push(self.openmp_flag.clone());
        }
        match variant {
            Variant::ParallelRace => f.extend(self.race_flags.iter().cloned()),
            Variant::ParallelMemory => f.extend(self.memory_flags.iter().cloned()),
            _ => {}
        }
        f
    }
}

/// Compiles `sources` into `dir/<name>`; diagnostics go to `dir/<name>.log`.
pub fn build(
    toolchain: &Toolchain,
    variant: Variant,
    sources: &[PathBuf],
    dir: &Path,
    name: &str,
) -> Result<PathBuf, VerifyError> {
    let io = |e: std::io::Error| VerifyError::Io(e.to_string());
    let bin = dir.join(name);
    let log = dir.join(format!("{name}.log"));
    let mut cmd = Command::new(&toolchain.compiler);
    cmd.args(toolchain.flags(variant)).args(sources);
    if variant == Variant::ParallelRace && toolchain.race_shim {
        let shim = dir.join("gomp_tsan_shim.c");
        if !shim.exists() {
            std::fs::write(&shim, TSAN_SHIM).map_err(io)?;
        }
        cmd.arg(shim).arg("-pthread");
    }
    cmd.arg("-o").arg(&bin).args(&toolchain.libs);
    log::debug!("{cmd:?}");
    let out = cmd.output().map_err(|e| VerifyError::ToolchainMissing(format!("{}: {e}", toolchain.compiler)))?;
    let mut diag = format!("$ {cmd:?}\n");
    diag.push_str(&String::from_utf8_lossy(&out.stdout));
    diag.push_str(&String::from_utf8_lossy(&out.stderr));
    std::fs::write(&log, &diag).map_err(io)?;
    if !out.status.success() {
        return Err(VerifyError::Compile { variant, log, diagnostics: diag });
    }
    Ok(bin)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub status: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub elapsed: Duration,
}

impl RunOutput {
    pub fn success(&self) -> bool {
        self.status == Some(0)
    }
}

/// Runs `bin` with output captured to `<log_stem>.out`/`.err`. A run past the
/// timeout is killed and reported as a runtime failure.
pub fn run(
    bin: &Path,
    args: &[String],
    env: &[(&str, String)],
    timeout: Duration,
    log_stem: &Path,
) -> Result<RunOutput, VerifyError> {
    let io = |e: std::io::Error| VerifyError::Io(format!("{}: {e}", bin.display()));
    let out_path = log_stem.with_extension("out");
    let err_path = log_stem.with_extension("err");
    let mut cmd = Command::new(bin);
    cmd.args(args).stdin(Stdio::null()).stdout(File::create(&out_path).map_err(io)?).stderr(File::create(&err_path).map_err(io)?);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let start = Instant::now();
    let mut child = cmd.spawn().map_err(io)?;
    let status = match child.wait_timeout(timeout).map_err(io)? {
        Some(s) => s,
        None => {
            child.kill().ok();
            child.wait().ok();
            return Err(VerifyError::Runtime(format!("{} timed out after {}s", bin.display(), timeout.as_secs())));
        }
    };
    let elapsed = start.elapsed();
    let stdout = std::fs::read_to_string(&out_path).unwrap_or_default();
    let stderr = std::fs::read_to_string(&err_path).unwrap_or_default();
    Ok(RunOutput { status: status.code(), stdout, stderr, elapsed })
}
