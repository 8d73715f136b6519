use super::*;
use crate::verify::{build, driver_source, Toolchain, Variant};

fn have_gcc() -> bool {
    Toolchain::default().probe().is_ok()
}

fn quick_pipeline() -> Pipeline {
    let mut p = Pipeline::default();
    p.verify.sanitizer_repeats = 1;
    p.verify.size = Some(64);
    p
}

#[test]
fn definitional_arithmetic() {
    let m = Measurement { seq_samples_ns: vec![656, 600, 700, 656, 656], par_samples_ns: vec![100, 90, 100, 120, 100] };
    let r = BenchmarkRecord::new("k", "m", Strategy::ZeroShot, 1, 8).with_measurement(m);
    let (s, e) = (r.speedup.unwrap(), r.efficiency.unwrap());
    assert!((s - 6.56).abs() < 1e-9);
    assert!((e - 0.82).abs() < 1e-9);
    assert!((s - r.t_seq.unwrap() / r.t_par.unwrap()).abs() < 1e-9);
    assert!((e - s / 8.0).abs() < 1e-9);
    assert!(!r.flagged && r.runs == 5);

    let m = Measurement { seq_samples_ns: vec![500; 5], par_samples_ns: vec![100; 5] };
    let r = BenchmarkRecord::new("k", "m", Strategy::ZeroShot, 1, 4).with_measurement(m);
    assert!(r.flagged, "E = 1.25 exceeds the allowance");
}

#[test]
fn medians() {
    assert_eq!(median_secs(&[3, 1, 2]), 2e-9);
    assert_eq!(median_secs(&[4, 1, 2, 3]), 2.5e-9);
    assert!(median_secs(&[]).is_nan());
}

#[test]
fn thread_counts_are_capped() {
    let spec = SweepSpec { threads: vec![1, 2, 4, 4, 8, 0], ..Default::default() };
    assert_eq!(spec.thread_counts(4), (vec![1, 2, 4], vec![8]));
    assert_eq!(spec.thread_counts(1), (vec![1], vec![2, 4, 8]));
    let over = SweepSpec { oversubscribe: true, ..spec };
    assert_eq!(over.thread_counts(1), (vec![1, 2, 4, 8], vec![]));
}

#[test]
fn spec_from_toml() {
    let spec = SweepSpec::from_toml(
        "kernels = [\"matmul\"]\nthreads = [1, 4]\nstrategies = [\"tree_of_thoughts\"]\n[sizes]\nmatmul = [64, 128]\n",
    )
    .unwrap();
    assert_eq!(spec.strategies, [Strategy::TreeOfThoughts]);
    assert_eq!(spec.sizes["matmul"], [64, 128]);
    assert_eq!(spec.repetitions, 5);
    assert!(SweepSpec::from_toml("bogus = 1").is_err());
}

#[test]
fn self_comparison() {
    if !have_gcc() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let k = crate::kernels::kernel("vector_add").unwrap();
    let u = crate::frontend::parse(&k.file_name(), k.source).unwrap();
    let src = dir.path().join("k.c");
    let drv = dir.path().join("d.c");
    std::fs::write(&src, k.source).unwrap();
    std::fs::write(&drv, driver_source(&k.meta(), &u).unwrap()).unwrap();
    let bin = build(&Toolchain::default(), Variant::Sequential, &[src, drv], dir.path(), "seq").unwrap();
    let cfg = MeasureConfig::default();
    let m = measure(&bin, &bin, 100_000, 1, &cfg, &dir.path().join("logs")).unwrap();
    assert_eq!(m.seq_samples_ns.len(), 5);
    let r = BenchmarkRecord::new("vector_add", "m", Strategy::ZeroShot, 100_000, 1).with_measurement(m);
    let s = r.speedup.unwrap();
    assert!(s > 0.3 && s < 3.0, "{s}");
    assert_eq!(r.efficiency, r.speedup);
    assert!(measure(&bin, &bin, 10, 0, &cfg, dir.path()).is_err());
    let missing = dir.path().join("nope");
    assert!(matches!(measure(&missing, &bin, 10, 1, &cfg, dir.path()), Err(BenchError::Runtime(_))));
}

#[test]
fn empty_spec() {
    let dir = tempfile::tempdir().unwrap();
    let out = OutLayout::new(dir.path());
    let r = sweep(&SweepSpec::default(), &quick_pipeline(), &out).unwrap();
    assert!(r.records.is_empty() && r.plans.is_empty());
    assert_eq!(r.summary.counts.total, 0);
    let text = std::fs::read_to_string(out.reports().join("records.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn mock_sweep() {
    if !have_gcc() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let out = OutLayout::new(dir.path());
    let spec = SweepSpec {
        kernels: vec!["matmul".into(), "dot".into(), "vector_add".into()],
        sizes: [("matmul".to_string(), vec![64]), ("dot".to_string(), vec![4096]), ("vector_add".to_string(), vec![4096])]
            .into_iter()
            .collect(),
        threads: vec![1, 4],
        repetitions: 2,
        oversubscribe: true,
        ..Default::default()
    };
    let r = sweep(&spec, &quick_pipeline(), &out).unwrap();
    assert_eq!(r.records.len(), 6);
    assert_eq!(r.plans.len(), 3);
    let c = &r.summary.counts;
    assert!(c.conserved());
    assert_eq!(c.successes, 6, "{:?}", r.records.iter().map(|x| &x.note).collect::<Vec<_>>());
    let order: Vec<(&str, usize)> = r.records.iter().map(|x| (x.kernel.as_str(), x.threads)).collect();
    assert_eq!(order, [("matmul", 1), ("matmul", 4), ("dot", 1), ("dot", 4), ("vector_add", 1), ("vector_add", 4)]);
    for x in &r.records {
        assert!((x.efficiency.unwrap() - x.speedup.unwrap() / x.threads as f64).abs() < 1e-9);
    }
    assert_eq!(r.summary.per_strategy.len(), 1);
    assert_eq!(r.summary.per_strategy[0].success_rate, 1.0);
    assert!(out.plans().join("matmul__qwen2.5_1.5b__zero_shot.json").exists());
    assert!(out.traces().join("dot__qwen2.5_1.5b__zero_shot.json").exists());
    assert!(out.reports().join("analysis/vector_add.json").exists());
    let csv = std::fs::read_to_string(out.reports().join("records.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn failed_plans_count_as_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let out = OutLayout::new(dir.path());
    let mut p = quick_pipeline();
    p.reasoner.backend = crate::reasoner::Backend::Http;
    p.reasoner.endpoint = Some("http://127.0.0.1:9".into());
    p.reasoner.timeout_secs = 2;
    let spec = SweepSpec { kernels: vec!["dot".into(), "stencil".into()], threads: vec![1], ..Default::default() };
    let r = sweep(&spec, &p, &out).unwrap();
    assert_eq!(r.summary.counts, summary::Counts { total: 2, successes: 0, rejections: 2, runtime_failures: 0 });
    assert_eq!(r.summary.per_strategy[0].success_rate, 0.0);
    assert!(r.summary.per_strategy[0].best_kernel.is_none());
    assert!(r.records.iter().all(|x| !x.note.is_empty()));
}

#[test]
fn unknown_kernel_is_a_spec_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SweepSpec { kernels: vec!["nope".into()], ..Default::default() };
    assert!(matches!(sweep(&spec, &quick_pipeline(), &OutLayout::new(dir.path())), Err(BenchError::Spec(_))));
}
