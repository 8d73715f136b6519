use std::path::Path;
use std::process::{Command, Output};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/assets/fixtures");

fn autopar(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autopar"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("AUTOPAR_ENDPOINT")
        .output()
        .expect("run autopar")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn have_gcc() -> bool {
    Command::new("gcc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn transform_matmul() {
    let dir = tempfile::tempdir().unwrap();
    let o = autopar(dir.path(), &["transform", "matmul"]);
    assert!(o.status.success(), "{o:?}");
    let text = std::fs::read_to_string(dir.path().join("matmul_parallel.c")).unwrap();
    assert!(text.contains("#pragma omp parallel for collapse(2) schedule(dynamic)\n"), "{text}");
    assert!(dir.path().join("plans/matmul.json").exists());
    assert!(dir.path().join("traces/matmul.json").exists());
    assert!(stdout(&o).contains("validation: accepted"));
}

#[test]
fn analyze_empty_function() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("e.c");
    std::fs::write(&c, "void e(void) {}\n").unwrap();
    let o = autopar(dir.path(), &["analyze", "--json", c.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["loops"], serde_json::json!([]));
    let o = autopar(dir.path(), &["analyze", c.to_str().unwrap()]);
    assert!(stdout(&o).contains("no loops"));
}

#[test]
fn analyze_table_lists_facts() {
    let dir = tempfile::tempdir().unwrap();
    let o = autopar(dir.path(), &["analyze", "dot"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("reduction(+:s)"), "{}", stdout(&o));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(autopar(dir.path(), &["--bogus", "analyze", "dot"]).status.code(), Some(2));
    assert_eq!(autopar(dir.path(), &["analyze", "no_such_kernel"]).status.code(), Some(2));
    assert_eq!(autopar(dir.path(), &["plan", "dot", "--strategy", "guessing"]).status.code(), Some(2));
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[reasoner]\nmodle = \"x\"\n").unwrap();
    assert_eq!(autopar(dir.path(), &["plan", "dot", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn unreachable_model_is_a_rejection() {
    let dir = tempfile::tempdir().unwrap();
    let o = autopar(dir.path(), &["plan", "dot", "--backend", "http", "--endpoint", "http://127.0.0.1:9"]);
    assert_eq!(o.status.code(), Some(1), "{o:?}");
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[reasoner]\nbackend = \"http\"\nendpoint = \"http://127.0.0.1:9\"\n").unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(autopar(dir.path(), &["plan", "dot", "--config", c]).status.code(), Some(1));
    assert_eq!(autopar(dir.path(), &["plan", "dot", "--config", c, "--backend", "mock"]).status.code(), Some(0));
}

#[test]
fn plan_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = autopar(dir.path(), &["plan", "vmax", "--json", "--strategy", "tree_of_thoughts"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["accepted"], true);
    assert_eq!(v["plan"]["directives"][0]["reductions"][0]["operator"], "max");
    assert!(Path::new(v["files"]["trace"].as_str().unwrap()).exists());
}

#[test]
fn verify_accepts_mock_transform() {
    if !have_gcc() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let o = autopar(dir.path(), &["verify", "dot", "--seed", "5"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("reports/dot_verification.json")).unwrap()).unwrap();
    assert_eq!(r["accepted"], true);
    let seeds: Vec<u64> = r["regression"]["seeds"].as_array().unwrap().iter().map(|s| s["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, [5, 6, 7]);
}

#[test]
fn forced_race_is_rejected() {
    if !have_gcc() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let plan = format!("{FIXTURES}/injected/race_int_sum_shared.json");
    let o = autopar(dir.path(), &["verify", "int_sum", "--plan", &plan, "--force", "--json"]);
    assert_eq!(o.status.code(), Some(1));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["race_free"], false);
    assert_eq!(r["accepted"], false);

    // Without --force the validator stops it before anything is built.
    let o = autopar(dir.path(), &["verify", "int_sum", "--plan", &plan]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("validation: rejected"));
}

#[test]
fn bench_writes_reports() {
    if !have_gcc() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.toml");
    std::fs::write(&spec, "kernels = [\"vector_add\"]\nthreads = [1]\nrepetitions = 1\n[sizes]\nvector_add = [1000]\n").unwrap();
    let o = autopar(dir.path(), &["bench", spec.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    for f in ["records.csv", "summary.json", "summary.md"] {
        assert!(dir.path().join("reports").join(f).exists(), "{f}");
    }
    assert!(stdout(&o).contains("| Strategy | Avg Speedup | Success Rate | Quality Score | Best Kernel |"));

    std::fs::write(&spec, "kernels = [\"vector_add\"]\nthread = [1]\n").unwrap();
    assert_eq!(autopar(dir.path(), &["bench", spec.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn corpus_verify() {
    if !have_gcc() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let o = autopar(dir.path(), &["corpus", "verify", "--json"]);
    assert!(o.status.success(), "{o:?}");
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 10);

    let k = dir.path().join("k");
    std::fs::create_dir(&k).unwrap();
    assert_eq!(autopar(dir.path(), &["corpus", "verify", k.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn transform_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(autopar(d.path(), &["transform", "rowsum", "--seed", "7"]).status.success());
    }
    for f in ["rowsum_parallel.c", "plans/rowsum.json", "reports/rowsum_analysis.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
