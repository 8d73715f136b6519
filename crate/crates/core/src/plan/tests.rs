use super::*;
use crate::depanalysis::analyze;
use crate::frontend::parse;
use crate::kernels::{kernel, unsafe_plans};
use proptest::prelude::*;

fn unit_of(name: &str) -> SourceUnit {
    let k = kernel(name).unwrap();
    parse(&k.file_name(), k.source).unwrap()
}

fn check(name: &str, plan_json: &str) -> ValidationVerdict {
    let unit = unit_of(name);
    let plan = parse_plan(plan_json, &unit).unwrap();
    validate(&plan, &analyze(&unit)).unwrap()
}

const APPENDIX_SHAPE: &str = "void matmul(float* A, float* B, float* C, int n) {
  for (int i = 0; i < n; i++) {
    for (int j = 0; j < n; j++) {
      float sum = 0.0f;
      for (int k = 0; k < n; k++) {
        sum += A[i*n + k] * B[k*n + j];
      }
      C[i*n + j] = sum;
    }
  }
}
";

#[test]
fn appendix_plan_accepted() {
    let v = check(
        "matmul",
        r#"{"plan_version":1,"directives":[{"loop":"L0","parallelize":true,"collapse":2,"schedule":"dynamic","privates":["C_priv"]}]}"#,
    );
    assert!(v.accepted, "{v:?}");
    let unit = parse("m.c", APPENDIX_SHAPE).unwrap();
    let plan = parse_plan(
        r#"{"plan_version":1,"directives":[{"loop":"L0","parallelize":true,"collapse":2,"schedule":"dynamic","privates":["sum"]}]}"#,
        &unit,
    )
    .unwrap();
    assert!(validate(&plan, &analyze(&unit)).unwrap().accepted);
}

#[test]
fn recurrence_plan_rejected_r1() {
    let v = check("prefix", r#"{"plan_version":1,"directives":[{"loop":"L0","parallelize":true}]}"#);
    assert!(!v.accepted);
    assert_eq!(v.rules(), [RuleId::R1]);
}

#[test]
fn empty_plan_accepted() {
    let v = check("prefix", r#"{"plan_version":1,"directives":[]}"#);
    assert!(v.accepted && v.violations.is_empty());
}

#[test]
fn reduction_plan_accepted() {
    let v = check("dot", r#"{"plan_version":1,"directives":[{"loop":"L0","parallelize":true,"reductions":[{"variable":"s","operator":"+"}]}]}"#);
    assert!(v.accepted, "{v:?}");
}

#[test]
fn unknown_loop_id() {
    let unit = unit_of("dot");
    let plan = parse_plan(r#"{"plan_version":1,"directives":[{"loop":"L7","parallelize":true}]}"#, &unit).unwrap();
    assert_eq!(validate(&plan, &analyze(&unit)), Err(PlanError::UnknownLoopId(LoopId(7))));
}

#[test]
fn fenced_plan_with_prose() {
    let raw = "Here is my analysis. The outer loop is independent.\n```json\n{\"plan_version\": 1, \"directives\": [{\"loop\": \"L0\", \"parallelize\": true}]}\n```\n";
    let plan = parse_plan(raw, &unit_of("vector_add")).unwrap();
    assert_eq!(plan.directives.len(), 1);
    assert_eq!(plan.rationale, "Here is my analysis. The outer loop is independent.");
}

#[test]
fn last_object_wins() {
    let raw = r#"draft {"plan_version":1,"directives":[]} final {"plan_version":1,"directives":[{"loop":"L0","parallelize":false}],"rationale":"r"}"#;
    let plan = parse_plan(raw, &unit_of("vector_add")).unwrap();
    assert_eq!(plan.directives.len(), 1);
    assert!(plan.rationale.ends_with('r'));
}

#[test]
fn empty_object_is_malformed() {
    assert!(matches!(parse_plan("{}", &unit_of("dot")), Err(PlanError::MalformedPlan(_))));
    assert!(matches!(parse_plan("no json here", &unit_of("dot")), Err(PlanError::MalformedPlan(_))));
    assert!(matches!(parse_plan("{\"directives\": [{\"parallelize\": true}]}", &unit_of("dot")), Err(PlanError::MalformedPlan(_))));
}

#[test]
fn line_numbers_resolve_to_loops() {
    let plan = parse_plan(r#"{"plan_version":1,"directives":[{"loop":2,"parallelize":true},{"loop":"3","parallelize":false}]}"#, &unit_of("matmul")).unwrap();
    assert_eq!(plan.directives[0].loop_id, LoopId(0));
    assert_eq!(plan.directives[1].loop_id, LoopId(1));
    assert!(parse_plan(r#"{"plan_version":1,"directives":[{"loop":1,"parallelize":true}]}"#, &unit_of("matmul")).is_err());
}

#[test]
fn unknown_fields_warn() {
    let plan = parse_plan(r#"{"plan_version":1,"confidence":0.9,"directives":[{"loop":"L0","parallelize":true,"simd":true}]}"#, &unit_of("vector_add")).unwrap();
    assert_eq!(plan.warnings.len(), 2);
}

#[test]
fn duplicate_directive_is_malformed() {
    let r = parse_plan(r#"{"plan_version":1,"directives":[{"loop":"L0","parallelize":true},{"loop":2,"parallelize":true}]}"#, &unit_of("vector_add"));
    assert!(matches!(r, Err(PlanError::MalformedPlan(_))));
}

#[test]
fn plan_round_trips() {
    let unit = unit_of("matmul");
    let plan = parse_plan(r#"{"plan_version":1,"directives":[{"loop":"L0","parallelize":true,"collapse":2,"schedule":"dynamic","chunk":4,"privates":["C_priv"]}],"rationale":"x"}"#, &unit).unwrap();
    assert_eq!(parse_plan(&plan.to_json(), &unit).unwrap(), plan);
}

#[test]
fn adversarial_fixtures_rejected_with_expected_rule() {
    for f in unsafe_plans() {
        let unit = unit_of(&f.kernel);
        let plan = parse_plan(&f.plan.to_string(), &unit).unwrap_or_else(|e| panic!("{}: {e}", f.name));
        let v = validate(&plan, &analyze(&unit)).unwrap();
        let want: RuleId = f.expect.parse().unwrap();
        assert!(!v.accepted, "{} accepted", f.name);
        assert!(v.rules().contains(&want), "{}: expected {want}, got {:?}", f.name, v.violations);
    }
}

fn safe_plans() -> Vec<(&'static str, &'static str)> {
    vec![
        ("matmul", r#"{"plan_version":1,"directives":[{"loop":"L0","parallelize":true,"collapse":2,"schedule":"dynamic","privates":["C_priv"]},{"loop":"L2","parallelize":true,"reductions":[{"variable":"C_priv","operator":"+"}]}]}"#),
        ("rowsum", r#"{"plan_version":1,"directives":[{"loop":"L0","parallelize":true,"schedule":"static","privates":["t"]},{"loop":"L1","parallelize":true,"reductions":[{"variable":"t","operator":"+"}]}]}"#),
    ]
}

proptest! {
    #[test]
    fn removing_a_directive_keeps_acceptance(which in 0usize..2, drop in 0usize..2) {
        let (k, text) = safe_plans()[which];
        let unit = unit_of(k);
        let report = analyze(&unit);
        let mut plan = parse_plan(text, &unit).unwrap();
        prop_assert!(validate(&plan, &report).unwrap().accepted);
        plan.directives.remove(drop);
        prop_assert!(validate(&plan, &report).unwrap().accepted);
    }
}
