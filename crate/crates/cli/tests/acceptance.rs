//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion that this host can attain fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use autopar_core::bench::report::MEASUREMENT_COLUMNS;
use autopar_core::bench::{logical_cores, sweep, SweepSpec};
use autopar_core::codegen::{generate, CodegenError};
use autopar_core::depanalysis::gen::{random_loop, GenConfig};
use autopar_core::depanalysis::{analyze, brute_force_oracle, LoopReport, OracleConfig, OracleError};
use autopar_core::frontend::parse;
use autopar_core::kernels::{injected_plans, kernel, unsafe_plans, KERNELS};
use autopar_core::omp::ParallelForClauses;
use autopar_core::pipeline::{OutLayout, Pipeline};
use autopar_core::plan::{parse_plan, validate};
use autopar_core::reasoner::mock_plan;
use autopar_core::verify::{verify_forced, Toolchain, VerifyOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    /// Fails because the host cannot provide what the criterion measures.
    HostLimited(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_autopar"))
}

fn have_compiler() -> bool {
    Toolchain::default().probe().is_ok()
}

fn clauses(l: &LoopReport) -> ParallelForClauses {
    ParallelForClauses {
        reductions: l.reductions.iter().map(|r| (r.operator, r.variable.clone())).collect(),
        privates: l.privatizable.iter().map(|p| p.variable.clone()).collect(),
        ..Default::default()
    }
}

fn soundness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut generated, mut parallel, mut checked, mut skipped) = (0, 0, 0, 0);
    let mut unsound = vec![];
    for case in 0..600 {
        let cfg = GenConfig { float: case % 3 == 0, ..Default::default() };
        let src = random_loop(&mut rng, &cfg);
        generated += 1;
        let unit = parse("g.c", &src).expect("generated loops parse");
        let report = analyze(&unit);
        let top = &report.loops[0];
        if !top.verdict.is_parallel() {
            continue;
        }
        parallel += 1;
        let cfg = OracleConfig::default();
        // Accumulators only become safe after scalarization, so those loops
        // are checked in their generated form.
        let verdicts = if top.accumulators.is_empty() {
            let f = &unit.functions[0];
            vec![brute_force_oracle(f, f.loops()[0], &clauses(top), &cfg)]
        } else {
            let plan = mock_plan(&report);
            let v = validate(&plan, &report).expect("mock plan validates");
            let out = generate(&unit, &plan, &v).expect("mock plan generates");
            let u = parse("out.c", &out).expect("generated code parses");
            u.loops().into_iter().filter_map(|(f, l)| l.pragma.as_ref().map(|p| brute_force_oracle(f, l, &p.clauses, &cfg))).collect()
        };
        for v in verdicts {
            match v {
                Ok(v) if v.is_safe() => checked += 1,
                Ok(v) => unsound.push(format!("{src}\n{v:?}")),
                Err(OracleError::Overflow(_)) => skipped += 1,
                Err(e) => unsound.push(format!("{src}\n{e}")),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "{generated} loops, {parallel} judged parallel, {checked} oracle-confirmed, {skipped} beyond the oracle's bounds, {} unsound, {secs:.1}s",
        unsound.len()
    );
    if let Some(first) = unsound.first() {
        eprintln!("first unsound case:\n{first}");
    }
    check(generated >= 500 && unsound.is_empty() && secs < 120.0, detail)
}

fn golden(work: &Path) -> Outcome {
    let out = work.join("golden");
    let status = bin().args(["transform", "matmul", "--backend", "mock", "--out-dir"]).arg(&out).output().expect("run autopar");
    if !status.status.success() {
        return Outcome::Fail(format!("transform exited with {}", status.status));
    }
    let text = std::fs::read_to_string(out.join("matmul_parallel.c")).expect("parallel source");
    let pragmas: Vec<&str> = text.lines().map(str::trim).filter(|l| l.starts_with("#pragma omp")).collect();
    let [pragma] = pragmas[..] else {
        return Outcome::Fail(format!("{} pragmas", pragmas.len()));
    };
    let rest = pragma.trim_start_matches("#pragma omp").trim();
    let Some(clauses) = rest.strip_prefix("parallel for") else {
        return Outcome::Fail(format!("not a parallel for: {pragma}"));
    };
    let mut set: BTreeSet<&str> = clauses.split_whitespace().collect();
    set.insert("parallel for");
    let want: BTreeSet<&str> = ["parallel for", "collapse(2)", "schedule(dynamic)"].into();
    // The k loop must update a scalar, stored to C once after the loop.
    let body: Vec<&str> = text.lines().map(str::trim).collect();
    let k = body.iter().position(|l| l.starts_with("for (int k")).unwrap_or(0);
    let update = body.get(k + 1).copied().unwrap_or("");
    let local = update.split_whitespace().next().unwrap_or("");
    let scalarized = !local.contains('[')
        && update.contains("+= A[i*n + k] * B[k*n + j]")
        && body.get(k + 3).is_some_and(|l| *l == format!("C[i*n + j] = {local};"));
    check(set == want && scalarized, format!("clauses {set:?}, accumulator `{local}`"))
}

fn rejection() -> Outcome {
    let fixtures = unsafe_plans();
    let mut bad = vec![];
    for f in &fixtures {
        let k = kernel(&f.kernel).expect("fixture kernel");
        let u = parse(&k.file_name(), k.source).expect("kernel parses");
        let plan = parse_plan(&f.plan.to_string(), &u).expect("fixture plan parses");
        let v = validate(&plan, &analyze(&u)).expect("validates");
        let rules: Vec<String> = v.violations.iter().map(|x| x.rule.to_string()).collect();
        if v.accepted || !rules.contains(&f.expect) {
            bad.push(format!("{} (expected {}, got {rules:?})", f.name, f.expect));
        }
        if generate(&u, &plan, &v) != Err(CodegenError::Rejected) {
            bad.push(format!("{} reached codegen", f.name));
        }
    }
    check(fixtures.len() >= 10 && bad.is_empty(), format!("{} fixtures, failures {bad:?}", fixtures.len()))
}

fn never_silently_accept(work: &Path) -> Outcome {
    if !have_compiler() {
        return Outcome::Fail("no C compiler".into());
    }
    let fixtures = injected_plans();
    let mut caught = 0;
    let mut missed = vec![];
    for f in &fixtures {
        let k = kernel(&f.kernel).expect("fixture kernel");
        let u = parse(&k.file_name(), k.source).expect("kernel parses");
        let plan = parse_plan(&f.plan.to_string(), &u).expect("fixture plan parses");
        for run in 0..3 {
            let opts = VerifyOptions { workspace: Some(work.join(format!("injected/{}/{run}", f.name))), ..Default::default() };
            let r = verify_forced(&u, &plan, &k.meta(), &Toolchain::default(), &opts);
            let by_check = match f.expect.as_str() {
                "race" => !r.race_free,
                _ => !r.regression_pass,
            };
            if r.compile_ok && !r.accepted && by_check {
                caught += 1;
            } else {
                missed.push(format!("{} run {run}", f.name));
            }
        }
    }
    check(
        fixtures.len() >= 2 && missed.is_empty(),
        format!("{caught}/{} fixture runs rejected by the expected check, missed {missed:?}", fixtures.len() * 3),
    )
}

fn regression_tolerance(work: &Path) -> Outcome {
    if !have_compiler() {
        return Outcome::Fail("no C compiler".into());
    }
    let mut p = Pipeline::default();
    p.verify.seeds = vec![1, 2, 3];
    p.verify.workspace = Some(work.join("regression"));
    let mut accepted = 0;
    let mut bad = vec![];
    for k in KERNELS {
        let u = parse(&k.file_name(), k.source).expect("kernel parses");
        let t = p.transform(&u).expect("mock transform");
        if !t.accepted() {
            continue;
        }
        accepted += 1;
        let r = p.verify(&u, &t, &k.meta()).expect("accepted transforms verify");
        let reg = r.regression.as_ref();
        let seeds = reg.map_or(0, |g| g.seeds.iter().filter(|s| s.pass).count());
        let exact_ints = reg.is_some_and(|g| g.seeds.iter().flat_map(|s| &s.buffers).all(|b| b.float || b.max_rel_error == 0.0));
        let within = reg.is_some_and(|g| g.max_error.values().all(|e| *e <= r.tolerance));
        let tol_ok = r.tolerance == 1e-6 || r.tolerance == 1e-4;
        if !(r.regression_pass && seeds == 3 && exact_ints && within && tol_ok) {
            bad.push(format!("{} (seeds passed {seeds}, tolerance {})", k.name, r.tolerance));
        }
    }
    check(accepted > 0 && bad.is_empty(), format!("{accepted} mock-accepted kernels, 3 seeds each, failures {bad:?}"))
}

fn directional_speedup(work: &Path) -> Outcome {
    if !have_compiler() {
        return Outcome::Fail("no C compiler".into());
    }
    let cores = logical_cores();
    let spec = SweepSpec {
        kernels: vec!["matmul".into()],
        sizes: BTreeMap::from([("matmul".into(), vec![512])]),
        threads: vec![4],
        repetitions: 5,
        oversubscribe: cores < 4,
        ..Default::default()
    };
    let out = OutLayout::new(work.join("speedup"));
    let res = match sweep(&spec, &Pipeline::default(), &out) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let Some(r) = res.records.first().filter(|r| r.speedup.is_some()) else {
        return Outcome::Fail("matmul was not measured".into());
    };
    let (s, e) = (r.speedup.unwrap(), r.efficiency.unwrap());
    let definitional = (e - s / 4.0).abs() < 1e-9;
    let detail = format!("S = {s:.3}, E = {e:.3} at p = 4, |E - S/p| < 1e-9: {definitional}, {cores} logical cores");
    if cores < 4 {
        return Outcome::HostLimited(format!("{detail}; needs at least 4 cores"));
    }
    check(s >= 2.0 && definitional, detail)
}

fn report_sweep(out: &Path) -> Result<(), String> {
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let spec = out.join("sweep.toml");
    let oversubscribe = logical_cores() < 2;
    let text = format!(
        "kernels = [\"dot\", \"vector_add\", \"matmul\"]\nthreads = [1, 2]\n\
         strategies = [\"zero_shot\", \"chain_of_thought\", \"tree_of_thoughts\"]\n\
         repetitions = 2\noversubscribe = {oversubscribe}\n\
         [sizes]\ndot = [20000]\nvector_add = [20000]\nmatmul = [48]\n"
    );
    std::fs::write(&spec, text).map_err(|e| e.to_string())?;
    let o = bin().arg("bench").arg(&spec).args(["--backend", "mock", "--seed", "7", "--out-dir"]).arg(out).output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("bench exited with {}: {}", o.status, String::from_utf8_lossy(&o.stderr)))
    }
}

fn report_shape(first: &Path) -> Outcome {
    if let Err(e) = report_sweep(first) {
        return Outcome::Fail(e);
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(first.join("reports/summary.json")).unwrap()).unwrap();
    let s = &summary["summary"];
    let rows = s["per_strategy"].as_array().cloned().unwrap_or_default();
    let want: BTreeSet<&str> = ["Strategy", "Avg Speedup", "Success Rate", "Quality Score", "Best Kernel"].into();
    let columns_ok = rows.len() == 3
        && rows.iter().all(|r| r.as_object().is_some_and(|o| o.keys().map(String::as_str).collect::<BTreeSet<_>>() == want));
    let mut csv = csv::Reader::from_path(first.join("reports/records.csv")).unwrap();
    let status = csv.headers().unwrap().iter().position(|h| h == "status").unwrap();
    let mut by_status: BTreeMap<String, u64> = BTreeMap::new();
    let mut n = 0;
    for row in csv.records() {
        *by_status.entry(row.unwrap()[status].to_string()).or_default() += 1;
        n += 1;
    }
    let c = &s["counts"];
    let get = |k: &str| c[k].as_u64().unwrap_or(u64::MAX);
    let conserved = get("total") == n
        && get("successes") + get("rejections") + get("runtime_failures") == n
        && get("successes") == by_status.get("success").copied().unwrap_or(0)
        && n == 3 * 3 * 2;
    let strategies_conserve = s["counts_by_strategy"].as_object().is_some_and(|m| {
        m.values().map(|v| v["total"].as_u64().unwrap_or(0)).sum::<u64>() == n
    });
    check(
        columns_ok && conserved && strategies_conserve,
        format!("{n} CSV rows {by_status:?}, per-strategy columns exact: {columns_ok}, totals conserved: {}", conserved && strategies_conserve),
    )
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut m = BTreeMap::new();
    if let Ok(rd) = std::fs::read_dir(dir) {
        for e in rd.flatten() {
            m.insert(e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap());
        }
    }
    m
}

/// Drops the wall-clock fields of a reasoner trace.
fn strip_times(v: serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(m) => m
            .into_iter()
            .filter(|(k, _)| k != "timestamp_ms" && k != "latency_secs")
            .map(|(k, v)| (k, strip_times(v)))
            .collect(),
        serde_json::Value::Array(a) => a.into_iter().map(strip_times).collect(),
        x => x,
    }
}

fn identity_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let keep: Vec<usize> =
        r.headers().unwrap().iter().enumerate().filter(|(_, h)| !MEASUREMENT_COLUMNS.contains(h)).map(|(i, _)| i).collect();
    r.records().map(|row| {
        let row = row.unwrap();
        keep.iter().map(|&i| row[i].to_string()).collect()
    }).collect()
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    if let Err(e) = report_sweep(second) {
        return Outcome::Fail(e);
    }
    let mut differ = vec![];
    for sub in ["plans", "reports/analysis"] {
        let (a, b) = (files(&first.join(sub)), files(&second.join(sub)));
        if a.is_empty() || a != b {
            differ.push(sub.to_string());
        }
    }
    let (a, b) = (files(&first.join("traces")), files(&second.join("traces")));
    let untimed = |m: BTreeMap<String, Vec<u8>>| -> BTreeMap<String, serde_json::Value> {
        m.into_iter().map(|(k, v)| (k, strip_times(serde_json::from_slice(&v).unwrap()))).collect()
    };
    if a.is_empty() || untimed(a) != untimed(b) {
        differ.push("traces".into());
    }
    let (a, b) = (identity_rows(&first.join("reports/records.csv")), identity_rows(&second.join("reports/records.csv")));
    if a.is_empty() || a != b {
        differ.push("records.csv".into());
    }
    let plans = files(&first.join("plans")).len();
    check(differ.is_empty(), format!("{plans} plans, analyses and traces (wall-clock fields removed), {} CSV rows compared; differing: {differ:?}", a.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let work: PathBuf = tmp.path().to_path_buf();
    let sweep_a = work.join("sweep-a");
    let sweep_b = work.join("sweep-b");
    type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("dependence soundness", Box::new(soundness)),
        ("golden matmul transformation", Box::new(|| golden(&work))),
        ("unsafe-plan rejection", Box::new(rejection)),
        ("never silently accept", Box::new(|| never_silently_accept(&work))),
        ("regression tolerance", Box::new(|| regression_tolerance(&work))),
        ("directional speedup", Box::new(|| directional_speedup(&work))),
        ("report shape", Box::new(|| report_shape(&sweep_a))),
        ("determinism", Box::new(|| determinism(&sweep_a, &sweep_b))),
    ];
    let (mut failed, mut limited) = (0, 0);
    for (name, f) in &criteria {
        let t = Instant::now();
        let outcome = f();
        let secs = Duration::as_secs_f64(&t.elapsed());
        match outcome {
            Outcome::Pass(d) => println!("PASS {name}: {d} [{secs:.1}s]"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL {name}: {d} [{secs:.1}s]");
            }
            Outcome::HostLimited(d) => {
                limited += 1;
                println!("FAIL {name} (not attainable on this host): {d} [{secs:.1}s]");
            }
        }
    }
    let passed = criteria.len() - failed - limited;
    println!("acceptance: {passed} passed, {failed} failed, {limited} failed for lack of host resources");
    if failed > 0 {
        std::process::exit(1);
    }
}
