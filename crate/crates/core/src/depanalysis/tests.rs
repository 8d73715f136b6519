use super::*;
use crate::frontend::parse;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MATMUL: &str = include_str!("../../assets/kernels/matmul.c");

fn report(src: &str) -> AnalysisReport {
    analyze(&parse("t.c", src).unwrap())
}

fn one(src: &str) -> LoopReport {
    report(src).loops.remove(0)
}

#[test]
fn matmul_verdicts() {
    let r = report(MATMUL);
    let v: Vec<Verdict> = r.loops.iter().map(|l| l.verdict).collect();
    assert_eq!(v, [Verdict::Parallelizable, Verdict::Parallelizable, Verdict::ParallelizableWithClauses]);
    let l2 = &r.loops[2];
    assert_eq!(l2.accumulators.len(), 1);
    assert_eq!(l2.accumulators[0].local, "C_priv");
    assert_eq!(l2.accumulators[0].cell, "C[i*n + j]");
    assert_eq!(l2.reductions[0].operator, ReductionOp::Add);
    assert!(l2.reductions[0].fp_reassociation);
    let carried: Vec<_> = l2.carried().collect();
    assert!(!carried.is_empty() && carried.iter().all(|d| d.explained_by.is_some()));
    for outer in &r.loops[..2] {
        assert!(outer.privatizable.iter().any(|p| p.variable == "C_priv" && p.origin == PrivateOrigin::ScalarizedAccumulator));
    }
    assert_eq!(r.loops[0].perfectly_nested_child, Some(LoopId(1)));
    assert!(r.loops[0].rectangular);
}

#[test]
fn recurrence_is_sequential() {
    let l = one("void f(int* a, int n) { for (int i = 1; i < n; i++) a[i] = a[i-1] + 1; }");
    assert_eq!(l.verdict, Verdict::Sequential);
    let d = l.carried().find(|d| d.kind == DepKind::Flow).expect("flow dependence");
    assert_eq!(d.distance, Some(1));
    assert_eq!(d.carried_at, CarriedAt::Level(1));
    assert_eq!(d.source.text, "a[i]");
    assert_eq!(d.sink.text, "a[i-1]");
}

#[test]
fn vector_add_is_parallel() {
    let l = one("void f(float* a, float* b, float* c, int n) { for (int i = 0; i < n; i++) c[i] = a[i] + b[i]; }");
    assert_eq!(l.verdict, Verdict::Parallelizable);
    assert!(l.dependences.is_empty());
}

#[test]
fn scalar_sum_reduction() {
    let l = one("float f(float* a, int n) { float s = 0.0f; for (int i = 0; i < n; i++) s += a[i]; return s; }");
    assert_eq!(l.verdict, Verdict::ParallelizableWithClauses);
    assert_eq!(l.reductions.len(), 1);
    assert_eq!(l.reductions[0].variable, "s");
    assert!(l.reductions[0].fp_reassociation);
}

#[test]
fn privatizable_temporary() {
    let l = one("void f(int* a, int* b, int n) { int t; for (int i = 0; i < n; i++) { t = a[i] * 2; b[i] = t + 1; } }");
    assert_eq!(l.verdict, Verdict::ParallelizableWithClauses);
    assert_eq!(l.privatizable[0].variable, "t");
}

#[test]
fn read_before_write_scalar_is_sequential() {
    let l = one("void f(int* a, int* b, int n) { int t = 0; for (int i = 0; i < n; i++) { b[i] = t; t = a[i]; } }");
    assert_eq!(l.verdict, Verdict::Sequential);
}

#[test]
fn opaque_body_is_unknown() {
    let l = one("void f(int* a, int n) { for (int i = 0; i < n; i++) { printf(\"%d\", a[i]); } }");
    assert_eq!(l.verdict, Verdict::Unknown);
    assert!(!l.reasons.is_empty());
}

#[test]
fn indirect_subscript_is_unknown() {
    let l = one("void f(int* a, int* idx, int n) { for (int i = 0; i < n; i++) a[idx[i]] = i; }");
    assert_eq!(l.verdict, Verdict::Unknown);
}

#[test]
fn non_unit_step_is_unknown() {
    let l = one("void f(int* a, int n) { for (int i = 0; i < n; i += 2) a[i] = 0; }");
    assert_eq!(l.verdict, Verdict::Unknown);
}

#[test]
fn even_odd_split_is_independent() {
    let l = one("void f(int* a, int n) { for (int i = 0; i < n; i++) a[2*i] = a[2*i+1]; }");
    assert_eq!(l.verdict, Verdict::Parallelizable);
}

#[test]
fn loop_independent_fact_recorded() {
    let l = one("void f(int* a, int* b, int n) { for (int i = 0; i < n; i++) { a[i] = i; b[i] = a[i]; } }");
    assert_eq!(l.verdict, Verdict::Parallelizable);
    assert!(l.dependences.iter().any(|d| d.carried_at == CarriedAt::LoopIndependent && d.kind == DepKind::Flow));
}

#[test]
fn pairwise_test_dependence() {
    let unit = parse("t.c", "void f(int* a, int n) { for (int i = 1; i < n; i++) a[i] = a[i-1] + 1; }").unwrap();
    let f = &unit.functions[0];
    let acc = Collector::new(f).collect();
    let d = test_dependence(&unit, f, &acc[0], &acc[1]).unwrap();
    assert_eq!((d.kind, d.carried_at, d.distance), (DepKind::Flow, CarriedAt::Level(1), Some(1)));
}

#[test]
fn report_json_shape() {
    let r = report(MATMUL);
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["loops"][2]["verdict"], "parallelizable-with-clauses");
    assert_eq!(v["loops"][2]["loop_id"], "L2");
    let dep = &v["loops"][2]["dependences"][0];
    assert_eq!(dep["carried_at"], 3);
    assert_eq!(dep["distance"], "unknown");
}

#[test]
fn analysis_is_deterministic() {
    assert_eq!(report(MATMUL).to_json(), report(MATMUL).to_json());
}

/// Clauses a parallel verdict relies on; `None` when an accumulator needs
/// code generation first.
fn clauses(l: &LoopReport) -> Option<crate::omp::ParallelForClauses> {
    if !l.accumulators.is_empty() {
        return None;
    }
    Some(crate::omp::ParallelForClauses {
        reductions: l.reductions.iter().map(|r| (r.operator, r.variable.clone())).collect(),
        privates: l.privatizable.iter().map(|p| p.variable.clone()).collect(),
        ..Default::default()
    })
}

#[test]
fn sound_against_oracle_on_random_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut parallel = 0;
    for case in 0..300 {
        let cfg = gen::GenConfig { float: case % 3 == 0, ..Default::default() };
        let src = gen::random_loop(&mut rng, &cfg);
        let unit = parse("g.c", &src).unwrap();
        let f = &unit.functions[0];
        let r = analyze(&unit);
        let top = &r.loops[0];
        if !top.verdict.is_parallel() {
            continue;
        }
        let Some(c) = clauses(top) else { continue };
        match brute_force_oracle(f, f.loops()[0], &c, &OracleConfig::default()) {
            Ok(v) => assert!(v.is_safe(), "unsound verdict {:?} for\n{src}\n{v:?}", top.verdict),
            Err(OracleError::Overflow(_)) => continue,
            Err(e) => panic!("{e}\n{src}"),
        }
        parallel += 1;
    }
    assert!(parallel > 30, "only {parallel} parallel cases");
}
