//! Command-line front end. `run` parses arguments, dispatches to a
//! subcommand and returns the process exit code: 0 on success, 1 when a
//! plan or verification is rejected, 2 on usage or configuration errors.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use autopar_core::bench::report::render_markdown;
use autopar_core::bench::{sweep, HostInfo, SweepReport, SweepSpec};
use autopar_core::corpus::{check_kernel, corpus_dir, CorpusCheck};
use autopar_core::depanalysis::{analyze, AnalysisReport};
use autopar_core::kernels::KERNELS;
use autopar_core::pipeline::{resolve_kernel, slug, KernelInput, OutLayout, Pipeline, Transformed};
use autopar_core::plan::{parse_plan, validate, ParallelizationPlan};
use autopar_core::reasoner::{Backend, Strategy};
use autopar_core::verify::{verify_forced, verify_pipeline, VerificationResult};
use clap::{Parser, Subcommand};
use serde_json::json;

use config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "autopar", version, about = "Static analysis, planning, OpenMP code generation and verification for C loop kernels")]
pub struct Cli {
    /// Configuration file (TOML) with [reasoner], [toolchain] and [verify] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Reasoner backend: mock or http.
    #[arg(long, global = true)]
    pub backend: Option<Backend>,
    /// Model server base URL for the http backend.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Prompting strategy, e.g. zero_shot or tree_of_thoughts.
    #[arg(long, global = true)]
    pub strategy: Option<Strategy>,
    /// Thread count for verification runs; for bench, the only thread count swept.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "autopar-out")]
    pub out_dir: PathBuf,
    /// Input seed for drivers and sweeps.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print JSON on stdout instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    /// More logging on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the dependence analysis of a C file.
    Analyze { file: String },
    /// Ask the reasoner for a plan and validate it.
    Plan { file: String },
    /// Analyze, plan, validate and write `<name>_parallel.c`.
    Transform { file: String },
    /// Transform, then build, regress and sanitize.
    Verify {
        file: String,
        /// Use this plan (or fixture file with a `plan` field) instead of the reasoner.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Skip static validation of the plan.
        #[arg(long)]
        force: bool,
    },
    /// Run a sweep described by a TOML file.
    Bench { spec: PathBuf },
    /// Kernel corpus self-checks.
    Corpus {
        #[command(subcommand)]
        action: CorpusCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Parse, build and run every kernel; the embedded kernels when no directory is given.
    Verify { dir: Option<PathBuf> },
}

#[derive(Debug)]
enum Exit {
    Rejected(String),
    Usage(String),
}

impl Exit {
    fn code(&self) -> i32 {
        match self {
            Exit::Rejected(_) => 1,
            Exit::Usage(_) => 2,
        }
    }
}

type Out = Result<(), Exit>;

fn usage(e: impl ToString) -> Exit {
    Exit::Usage(e.to_string())
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                Exit::Rejected(m) => eprintln!("rejected: {m}"),
                Exit::Usage(m) => eprintln!("error: {m}"),
            }
            e.code()
        }
    }
}

fn pipeline(cli: &Cli) -> Result<Pipeline, Exit> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).map_err(usage)?,
        None => FileConfig::default(),
    };
    let mut reasoner = file.reasoner.with_env();
    if let Some(b) = cli.backend {
        reasoner.backend = b;
    }
    if let Some(e) = &cli.endpoint {
        reasoner.endpoint = Some(e.clone());
    }
    if let Some(m) = &cli.model {
        reasoner.model = m.clone();
    }
    if let Some(s) = cli.strategy {
        reasoner.strategy = s;
    }
    reasoner.check().map_err(usage)?;
    let mut verify = file.verify.options();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        verify.threads = t;
    }
    if let Some(s) = cli.seed {
        verify.seeds = vec![s, s + 1, s + 2];
    }
    Ok(Pipeline { reasoner, toolchain: file.toolchain, verify })
}

fn execute(cli: &Cli) -> Out {
    let out = OutLayout::new(&cli.out_dir);
    match &cli.command {
        Command::Analyze { file } => cmd_analyze(cli, file),
        Command::Plan { file } => {
            let p = pipeline(cli)?;
            let input = resolve_kernel(file).map_err(usage)?;
            let t = p.transform(&input.unit().map_err(usage)?).map_err(usage)?;
            let paths = save_plan(&out, &input, &t)?;
            print_plan(cli, &input, &t, &paths);
            rejected_unless(t.accepted(), &t)
        }
        Command::Transform { file } => {
            let p = pipeline(cli)?;
            let input = resolve_kernel(file).map_err(usage)?;
            let t = p.transform(&input.unit().map_err(usage)?).map_err(usage)?;
            let mut paths = save_plan(&out, &input, &t)?;
            if let Some(text) = &t.parallel {
                let path = out.root.join(format!("{}_parallel.c", input.name));
                out.write(&path, text).map_err(usage)?;
                paths.push(("parallel", path));
            }
            print_plan(cli, &input, &t, &paths);
            rejected_unless(t.accepted(), &t)
        }
        Command::Verify { file, plan, force } => cmd_verify(cli, &out, file, plan.as_deref(), *force),
        Command::Bench { spec } => cmd_bench(cli, &out, spec),
        Command::Corpus { action: CorpusCommand::Verify { dir } } => cmd_corpus(cli, &out, dir.as_deref()),
    }
}

fn rejected_unless(ok: bool, t: &Transformed) -> Out {
    if ok {
        Ok(())
    } else {
        Err(Exit::Rejected(t.error.clone().unwrap_or_else(|| "plan rejected".into())))
    }
}

fn cmd_analyze(cli: &Cli, file: &str) -> Out {
    let input = resolve_kernel(file).map_err(usage)?;
    let report = analyze(&input.unit().map_err(usage)?);
    if cli.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", analysis_table(&report));
    }
    Ok(())
}

fn analysis_table(r: &AnalysisReport) -> String {
    let mut s = String::new();
    if r.loops.is_empty() {
        let _ = writeln!(s, "{}: no loops", r.unit);
        return s;
    }
    let _ = writeln!(s, "{:<5} {:<14} {:>5} {:>5}  {:<26} facts", "loop", "function", "line", "depth", "verdict");
    for l in &r.loops {
        let mut facts: Vec<String> = vec![];
        facts.extend(l.carried().map(|d| format!("carried {}", d.source.text)));
        facts.extend(l.reductions.iter().map(|x| format!("reduction({}:{})", x.operator, x.variable)));
        facts.extend(l.privatizable.iter().map(|x| format!("private({})", x.variable)));
        facts.extend(l.accumulators.iter().map(|x| format!("accumulator {} -> {}", x.cell, x.local)));
        facts.dedup();
        let verdict = autopar_core::reasoner::prompts::verdict_name(l);
        let _ = writeln!(s, "{:<5} {:<14} {:>5} {:>5}  {:<26} {}", l.loop_id, l.function, l.line, l.depth, verdict, facts.join(", "));
        for reason in &l.reasons {
            let _ = writeln!(s, "      - {reason}");
        }
    }
    s
}

fn save_plan(out: &OutLayout, input: &KernelInput, t: &Transformed) -> Result<Vec<(&'static str, PathBuf)>, Exit> {
    out.create().map_err(usage)?;
    let name = slug(&input.name);
    let mut paths = vec![];
    let analysis = out.reports().join(format!("{name}_analysis.json"));
    paths.push(("analysis", out.write(&analysis, &t.report.to_json()).map_err(usage)?));
    if let Some(plan) = &t.plan {
        paths.push(("plan", out.write(&out.plans().join(format!("{name}.json")), &plan.to_json()).map_err(usage)?));
    }
    if let Some(trace) = &t.trace {
        paths.push(("trace", out.write(&out.traces().join(format!("{name}.json")), &trace.to_json()).map_err(usage)?));
    }
    Ok(paths)
}

fn print_plan(cli: &Cli, input: &KernelInput, t: &Transformed, paths: &[(&str, PathBuf)]) {
    if cli.json {
        let files: serde_json::Map<String, serde_json::Value> =
            paths.iter().map(|(k, p)| (k.to_string(), json!(p.display().to_string()))).collect();
        let v = json!({
            "kernel": input.name,
            "accepted": t.accepted(),
            "plan": t.plan,
            "verdict": t.verdict,
            "quality": t.quality,
            "error": t.error,
            "files": files,
        });
        println!("{}", serde_json::to_string_pretty(&v).expect("json"));
        return;
    }
    println!("kernel: {}", input.name);
    match &t.plan {
        Some(plan) if plan.directives.is_empty() => println!("plan: no directives ({})", plan.rationale),
        Some(plan) => {
            for d in &plan.directives {
                let mut parts = vec![format!("collapse {}", d.collapse)];
                if let Some(s) = &d.schedule {
                    parts.push(format!("schedule {s}"));
                }
                for r in &d.reductions {
                    parts.push(format!("reduction({}:{})", r.operator, r.variable));
                }
                if !d.privates.is_empty() {
                    parts.push(format!("private({})", d.privates.join(", ")));
                }
                println!("plan: {} {}", d.loop_id, parts.join(", "));
            }
        }
        None => println!("plan: none"),
    }
    if let Some(v) = &t.verdict {
        println!("validation: {}", if v.accepted { "accepted" } else { "rejected" });
        for x in &v.violations {
            println!("  {} {}: {}", x.rule, x.loop_id, x.message);
        }
    }
    if let Some(e) = &t.error {
        println!("error: {e}");
    }
    if let Some(text) = &t.parallel {
        for l in text.lines().filter(|l| l.trim_start().starts_with("#pragma omp")) {
            println!("pragma: {}", l.trim());
        }
    }
    for (k, p) in paths {
        println!("{k}: {}", p.display());
    }
}

fn load_plan(path: &Path, unit: &autopar_core::frontend::SourceUnit) -> Result<ParallelizationPlan, Exit> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let raw = match v.get("plan") {
        Some(p) => p.to_string(),
        None => text,
    };
    parse_plan(&raw, unit).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_verify(cli: &Cli, out: &OutLayout, file: &str, plan_file: Option<&Path>, force: bool) -> Out {
    let mut p = pipeline(cli)?;
    let input = resolve_kernel(file).map_err(usage)?;
    let meta = input.require_meta().map_err(usage)?.clone();
    let unit = input.unit().map_err(usage)?;
    out.create().map_err(usage)?;
    p.toolchain.probe().map_err(usage)?;
    p.verify.workspace = Some(out.builds());
    let name = slug(&input.name);
    let (result, verdict): (VerificationResult, Option<_>) = match plan_file {
        Some(path) => {
            let plan = load_plan(path, &unit)?;
            if force {
                (verify_forced(&unit, &plan, &meta, &p.toolchain, &p.verify), None)
            } else {
                let v = validate(&plan, &analyze(&unit)).map_err(usage)?;
                (verify_pipeline(&unit, &plan, &v, &meta, &p.toolchain, &p.verify), Some(v))
            }
        }
        None => {
            let t = p.transform(&unit).map_err(usage)?;
            save_plan(out, &input, &t)?;
            let r = match p.verify(&unit, &t, &meta) {
                Some(r) => r,
                None => {
                    let e = t.error.clone().unwrap_or_else(|| "no plan".into());
                    return Err(Exit::Rejected(e));
                }
            };
            (r, t.verdict)
        }
    };
    let path = out.reports().join(format!("{name}_verification.json"));
    out.write(&path, &result.to_json()).map_err(usage)?;
    if cli.json {
        println!("{}", result.to_json());
    } else {
        println!("kernel: {}", result.kernel);
        if let Some(v) = &verdict {
            println!("validation: {}", if v.accepted { "accepted" } else { "rejected" });
            for x in &v.violations {
                println!("  {} {}: {}", x.rule, x.loop_id, x.message);
            }
        }
        for (k, b) in [
            ("compile", result.compile_ok),
            ("regression", result.regression_pass),
            ("race-free", result.race_free),
            ("memory-safe", result.memory_safe),
            ("accepted", result.accepted),
        ] {
            println!("{k:<12} {}", if b { "yes" } else { "no" });
        }
        for s in &result.sanitizers {
            for f in &s.findings {
                println!("  {}: {f}", s.variant.as_str());
            }
        }
        for e in &result.errors {
            println!("  error: {}", e.lines().next().unwrap_or(""));
        }
        println!("report: {}", path.display());
    }
    if result.accepted {
        Ok(())
    } else {
        Err(Exit::Rejected(format!("{} failed verification", result.kernel)))
    }
}

fn cmd_bench(cli: &Cli, out: &OutLayout, spec_path: &Path) -> Out {
    let p = pipeline(cli)?;
    let text = std::fs::read_to_string(spec_path).map_err(|e| usage(format!("{}: {e}", spec_path.display())))?;
    let mut spec = SweepSpec::from_toml(&text).map_err(usage)?;
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    if let Some(t) = cli.threads {
        spec.threads = vec![t];
    }
    if let Some(m) = &cli.model {
        spec.models = vec![m.clone()];
    }
    if let Some(s) = cli.strategy {
        spec.strategies = vec![s];
    }
    let result = sweep(&spec, &p, out).map_err(usage)?;
    let host = HostInfo::probe(&p);
    let report = SweepReport::new(&host, &spec, &result);
    out.write(&out.reports().join("summary.json"), &report.to_json()).map_err(usage)?;
    let md = render_markdown(&result.summary, &host);
    out.write(&out.reports().join("summary.md"), &md).map_err(usage)?;
    if cli.json {
        println!("{}", report.to_json());
    } else {
        print!("{md}");
        println!("\nrecords: {}", out.reports().join("records.csv").display());
    }
    Ok(())
}

fn cmd_corpus(cli: &Cli, out: &OutLayout, dir: Option<&Path>) -> Out {
    let p = pipeline(cli)?;
    p.toolchain.probe().map_err(usage)?;
    let inputs = match dir {
        Some(d) => corpus_dir(d).map_err(usage)?,
        None => KERNELS.iter().map(|k| resolve_kernel(k.name)).collect::<Result<_, _>>().map_err(usage)?,
    };
    if inputs.is_empty() {
        return Err(usage("no kernels found (each .c file needs a .toml next to it)"));
    }
    let work = out.builds().join("corpus");
    let checks: Vec<CorpusCheck> = inputs.iter().map(|k| check_kernel(k, &p.toolchain, &work)).collect();
    out.write(&out.reports().join("corpus.json"), &serde_json::to_string_pretty(&checks).expect("json")).map_err(usage)?;
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&checks).expect("json"));
    } else {
        println!("{:<14} {:<6} {:<7} {:<8} checksum", "kernel", "parse", "build", "stable");
        let yn = |b: bool| if b { "yes" } else { "no" };
        for c in &checks {
            println!(
                "{:<14} {:<6} {:<7} {:<8} {}",
                c.kernel,
                yn(c.parses && c.opaque_in_loops.is_empty()),
                yn(c.compiles),
                yn(c.checksum_stable),
                c.checksum.as_deref().unwrap_or("-")
            );
            for e in c.opaque_in_loops.iter().chain(&c.errors) {
                println!("  {}", e.lines().next().unwrap_or(""));
            }
        }
    }
    let failed = checks.iter().filter(|c| !c.pass()).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(Exit::Rejected(format!("{failed} of {} kernels failed the corpus checks", checks.len())))
    }
}
