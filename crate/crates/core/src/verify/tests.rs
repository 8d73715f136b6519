use super::*;
use crate::depanalysis::analyze;
use crate::frontend::parse;
use crate::kernels::{injected_plans, kernel, KERNELS};
use crate::plan::{parse_plan, validate};
use crate::reasoner::mock_plan;

fn quick() -> VerifyOptions {
    VerifyOptions { seeds: vec![1, 2], sanitizer_repeats: 1, size: Some(64), sanitizer_size: Some(32), ..Default::default() }
}

fn have_gcc() -> bool {
    Toolchain::default().probe().is_ok()
}

fn mock_verify(name: &str, opts: &VerifyOptions) -> VerificationResult {
    let k = kernel(name).unwrap();
    let u = parse(&k.file_name(), k.source).unwrap();
    let report = analyze(&u);
    let plan = mock_plan(&report);
    let v = validate(&plan, &report).unwrap();
    verify_pipeline(&u, &plan, &v, &k.meta(), &Toolchain::default(), opts)
}

#[test]
fn flag_assembly() {
    let t = Toolchain::default();
    assert_eq!(t.flags(Variant::Sequential), ["-O3", "-std=gnu11"]);
    assert!(t.flags(Variant::Parallel).contains(&"-fopenmp".to_string()));
    let race = t.flags(Variant::ParallelRace);
    assert!(race.contains(&"-fsanitize=thread".to_string()) && race.contains(&"-fopenmp".to_string()));
    assert!(t.flags(Variant::ParallelMemory).iter().any(|f| f.contains("address")));
    assert!(t.has_o3());
}

#[test]
fn rel_error_floor() {
    assert_eq!(rel_error(1.0, 1.0), 0.0);
    assert!((rel_error(100.0, 101.0) - 1.0 / 101.0).abs() < 1e-12);
    assert!((rel_error(1e-9, 2e-9) - 1e-9).abs() < 1e-15);
    assert_eq!(rel_error(f64::NAN, 1.0), f64::INFINITY);
}

#[test]
fn tolerance_depends_on_float_reductions() {
    let tol = |name: &str| {
        let u = parse("k.c", kernel(name).unwrap().source).unwrap();
        tolerance_for(&u, &mock_plan(&analyze(&u)))
    };
    assert_eq!(tol("dot"), FP_REDUCTION_TOLERANCE);
    assert_eq!(tol("int_sum"), FP_TOLERANCE);
    assert_eq!(tol("vector_add"), FP_TOLERANCE);
}

#[test]
fn missing_compiler_is_reported() {
    let t = Toolchain { compiler: "no-such-cc-xyz".into(), ..Default::default() };
    assert!(matches!(t.probe(), Err(VerifyError::ToolchainMissing(_))));
}

#[test]
fn compile_error_is_captured() {
    if !have_gcc() {
        return;
    }
    let k = kernel("vector_add").unwrap();
    let u = parse(&k.file_name(), k.source).unwrap();
    let broken = k.source.replace("c[i] =", "undeclared_var[i] =");
    let r = verify_sources(&u, &broken, &k.meta(), FP_TOLERANCE, &Toolchain::default(), &quick());
    assert!(!r.compile_ok && !r.accepted);
    assert!(r.errors.iter().any(|e| e.contains("undeclared_var")), "{:?}", r.errors);
}

#[test]
fn original_against_itself() {
    if !have_gcc() {
        return;
    }
    let k = kernel("stencil").unwrap();
    let u = parse(&k.file_name(), k.source).unwrap();
    let r = verify_sources(&u, k.source, &k.meta(), FP_TOLERANCE, &Toolchain::default(), &quick());
    assert!(r.accepted, "{:?}", r.errors);
    assert!(r.sequential_equivalent);
    let reg = r.regression.unwrap();
    assert!(reg.max_error.values().all(|&e| e == 0.0));
    for s in reg.seeds {
        assert_eq!(s.checksum_seq, s.checksum_par);
    }
    assert!(!r.artifacts.persisted && !r.artifacts.workspace.exists());
}

#[test]
fn mock_plans_verify() {
    if !have_gcc() {
        return;
    }
    for name in ["matmul", "dot", "scaled_copy", "vmax"] {
        let r = mock_verify(name, &quick());
        assert!(r.accepted, "{name}: {}", r.to_json());
        assert_eq!(r.sanitizers.len(), 2);
    }
}

#[test]
fn empty_plan_verifies() {
    if !have_gcc() {
        return;
    }
    let r = mock_verify("prefix", &quick());
    assert!(r.accepted && r.sequential_equivalent, "{}", r.to_json());
}

#[test]
fn rejected_plan_is_not_built() {
    let k = kernel("dot").unwrap();
    let u = parse(&k.file_name(), k.source).unwrap();
    let plan = mock_plan(&analyze(&u));
    let v = ValidationVerdict { accepted: false, violations: vec![] };
    let r = verify_pipeline(&u, &plan, &v, &k.meta(), &Toolchain::default(), &quick());
    assert!(!r.accepted && !r.compile_ok);
    assert!(r.artifacts.binaries.is_empty());
}

#[test]
fn injected_faults_are_caught() {
    if !have_gcc() {
        return;
    }
    let fixtures = injected_plans();
    assert!(fixtures.len() >= 4);
    for f in fixtures {
        let k = kernel(&f.kernel).unwrap();
        let u = parse(&k.file_name(), k.source).unwrap();
        let plan = parse_plan(&f.plan.to_string(), &u).unwrap();
        let v = validate(&plan, &analyze(&u)).unwrap();
        assert!(!v.accepted, "{} should fail static validation too", f.name);
        let opts = VerifyOptions { sanitizer_size: None, sanitizer_repeats: 3, ..quick() };
        let r = verify_forced(&u, &plan, &k.meta(), &Toolchain::default(), &opts);
        assert!(r.compile_ok, "{}: {:?}", f.name, r.errors);
        assert!(!r.accepted, "{}", f.name);
        match f.expect.as_str() {
            "race" => assert!(!r.race_free, "{}: {}", f.name, r.to_json()),
            "regression" => assert!(!r.regression_pass, "{}: {}", f.name, r.to_json()),
            other => panic!("unknown expectation {other}"),
        }
    }
}

#[test]
fn workspace_is_kept_when_requested() {
    if !have_gcc() {
        return;
    }
    let root = tempfile::tempdir().unwrap();
    let opts = VerifyOptions { workspace: Some(root.path().to_path_buf()), ..quick() };
    let r = mock_verify("vector_add", &opts);
    assert!(r.accepted && r.artifacts.persisted);
    assert!(r.artifacts.workspace.starts_with(root.path()));
    for p in r.artifacts.sources.values().chain(r.artifacts.binaries.values()) {
        assert!(p.exists(), "{}", p.display());
    }
    assert!(r.artifacts.sources["parallel"].to_string_lossy().ends_with("vector_add_parallel.c"));
}

#[test]
fn driver_output_is_deterministic() {
    if !have_gcc() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let k = kernel("rowsum").unwrap();
    let u = parse(&k.file_name(), k.source).unwrap();
    let src = dir.path().join("k.c");
    let drv = dir.path().join("driver.c");
    std::fs::write(&src, k.source).unwrap();
    std::fs::write(&drv, driver_source(&k.meta(), &u).unwrap()).unwrap();
    let bin = build(&Toolchain::default(), Variant::Sequential, &[src, drv], dir.path(), "seq").unwrap();
    let go = |seed: u64, tag: &str| {
        let out = run(&bin, &["100".into(), seed.to_string()], &[], Duration::from_secs(10), &dir.path().join(tag)).unwrap();
        assert!(out.success());
        parse_driver_output(&out.stdout).unwrap()
    };
    let (a, b, c) = (go(7, "a"), go(7, "b"), go(8, "c"));
    assert_eq!(a.checksum, b.checksum);
    assert_ne!(a.checksum, c.checksum);
    let out = run(&bin, &[], &[], Duration::from_secs(10), &dir.path().join("usage")).unwrap();
    assert_eq!(out.status, Some(2));
}

#[test]
fn timeout_kills_the_run() {
    if !have_gcc() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("spin.c");
    std::fs::write(&src, "int main(void) { for (;;) {} }\n").unwrap();
    let t = Toolchain { base_flags: vec!["-O0".into()], ..Default::default() };
    let bin = build(&t, Variant::Sequential, &[src], dir.path(), "spin").unwrap();
    let e = run(&bin, &[], &[], Duration::from_millis(300), &dir.path().join("spin")).unwrap_err();
    assert!(e.to_string().contains("timed out"), "{e}");
}

#[test]
fn every_kernel_driver_builds() {
    if !have_gcc() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    for k in KERNELS {
        let u = parse(&k.file_name(), k.source).unwrap();
        let src = dir.path().join(k.file_name());
        let drv = dir.path().join(format!("{}_driver.c", k.name));
        std::fs::write(&src, k.source).unwrap();
        std::fs::write(&drv, driver_source(&k.meta(), &u).unwrap()).unwrap();
        let bin = build(&Toolchain::default(), Variant::Sequential, &[src, drv], dir.path(), k.name).unwrap();
        let out = run(&bin, &["50".into(), "1".into()], &[], Duration::from_secs(10), &dir.path().join(k.name)).unwrap();
        assert!(out.success(), "{}: {}", k.name, out.stderr);
        parse_driver_output(&out.stdout).unwrap();
    }
}
