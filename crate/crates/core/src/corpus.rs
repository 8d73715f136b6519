//! Self-checks for a kernel corpus: each kernel parses with no opaque
//! statements inside its loops, builds at `-O3` with a generated driver, and
//! prints the same checksum on repeated runs with the same seed.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use crate::frontend::{Stmt, StmtKind};
use crate::pipeline::{resolve_kernel, KernelInput, PipelineError};
use crate::verify::{build, driver_source, parse_driver_output, run, Toolchain, Variant};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusCheck {
    pub kernel: String,
    pub parses: bool,
    /// Opaque statements found inside loops, as `loop: reason`.
    pub opaque_in_loops: Vec<String>,
    pub compiles: bool,
    pub checksum_stable: bool,
    pub checksum: Option<String>,
    pub errors: Vec<String>,
}

impl CorpusCheck {
    pub fn pass(&self) -> bool {
        self.parses && self.opaque_in_loops.is_empty() && self.compiles && self.checksum_stable
    }
}

/// Kernel inputs from a directory (every `.c` file with a sibling `.toml`),
/// in file-name order.
pub fn corpus_dir(dir: &Path) -> Result<Vec<KernelInput>, PipelineError> {
    let rd = std::fs::read_dir(dir).map_err(|e| PipelineError::Input(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "c")).collect();
    files.sort();
    files.iter().filter(|p| p.with_extension("toml").exists()).map(|p| resolve_kernel(&p.to_string_lossy())).collect()
}

fn opaque(stmt: &Stmt, loop_name: &str, out: &mut Vec<String>) {
    stmt.walk(&mut |s| {
        if let StmtKind::Opaque { reason, .. } = &s.kind {
            out.push(format!("{loop_name}: {reason}"));
        }
    });
}

pub fn check_kernel(input: &KernelInput, toolchain: &Toolchain, dir: &Path) -> CorpusCheck {
    let mut c = CorpusCheck {
        kernel: input.name.clone(),
        parses: false,
        opaque_in_loops: vec![],
        compiles: false,
        checksum_stable: false,
        checksum: None,
        errors: vec![],
    };
    let unit = match input.unit() {
        Ok(u) => u,
        Err(e) => {
            c.errors.push(e.to_string());
            return c;
        }
    };
    c.parses = true;
    for (_, l) in unit.loops() {
        opaque(&l.body, &l.id.to_string(), &mut c.opaque_in_loops);
    }
    let meta = match input.require_meta() {
        Ok(m) => m,
        Err(e) => {
            c.errors.push(e.to_string());
            return c;
        }
    };
    let work = dir.join(&input.name);
    let io = |e: std::io::Error| e.to_string();
    let driver = match driver_source(meta, &unit) {
        Ok(d) => d,
        Err(e) => {
            c.errors.push(e.to_string());
            return c;
        }
    };
    let src = work.join(format!("{}.c", input.name));
    let drv = work.join("driver.c");
    if let Err(e) = std::fs::create_dir_all(&work)
        .and_then(|_| std::fs::write(&src, &input.source))
        .and_then(|_| std::fs::write(&drv, driver))
        .map_err(io)
    {
        c.errors.push(e);
        return c;
    }
    let bin = match build(toolchain, Variant::Sequential, &[src, drv], &work, "sequential") {
        Ok(b) => b,
        Err(e) => {
            c.errors.push(e.to_string());
            return c;
        }
    };
    c.compiles = true;
    let timeout = Duration::from_secs(toolchain.timeout_secs);
    let mut sums = vec![];
    for k in 0..2 {
        let args = [meta.size.to_string(), "1".to_string()];
        match run(&bin, &args, &[], timeout, &work.join(format!("run{k}"))) {
            Ok(o) if o.success() => match parse_driver_output(&o.stdout) {
                Ok(d) => sums.push(format!("{:016x}", d.checksum)),
                Err(e) => c.errors.push(e),
            },
            Ok(o) => c.errors.push(format!("driver exited with {:?}", o.status)),
            Err(e) => c.errors.push(e.to_string()),
        }
    }
    c.checksum_stable = sums.len() == 2 && sums[0] == sums[1];
    c.checksum = sums.into_iter().next();
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KERNELS;

    #[test]
    fn embedded_kernels_pass() {
        if Toolchain::default().probe().is_err() {
            return;
        }
        let dir = tempfile::tempdir().unwrap();
        for k in KERNELS {
            let c = check_kernel(&resolve_kernel(k.name).unwrap(), &Toolchain::default(), dir.path());
            assert!(c.pass(), "{c:?}");
        }
    }

    #[test]
    fn opaque_loops_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let c = dir.path().join("w.c");
        std::fs::write(&c, "void w(int* a, int n) {\n  for (int i = 0; i < n; i++) {\n    while (a[i] > 0) a[i]--;\n  }\n}\n").unwrap();
        let input = resolve_kernel(c.to_str().unwrap()).unwrap();
        let r = check_kernel(&input, &Toolchain::default(), dir.path());
        assert!(r.parses && !r.pass());
        assert_eq!(r.opaque_in_loops.len(), 1, "{r:?}");
    }

    #[test]
    fn directory_listing() {
        let dir = tempfile::tempdir().unwrap();
        let k = crate::kernels::kernel("dot").unwrap();
        std::fs::write(dir.path().join("dot.c"), k.source).unwrap();
        std::fs::write(dir.path().join("dot.toml"), k.meta).unwrap();
        std::fs::write(dir.path().join("lonely.c"), "void lonely(void) {}\n").unwrap();
        let found = corpus_dir(dir.path()).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].name, "dot");
    }
}
