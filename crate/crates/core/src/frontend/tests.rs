use super::*;
use proptest::prelude::*;

const MATMUL: &str = include_str!("../../assets/kernels/matmul.c");

fn only_fn(src: &str) -> FunctionDecl {
    let unit = parse("t.c", src).unwrap();
    assert_eq!(unit.functions.len(), 1);
    unit.functions.into_iter().next().unwrap()
}

/// Strips spans and ids so two parses can be compared structurally.
fn shape(unit: &SourceUnit) -> String {
    fn stmt(s: &Stmt, out: &mut String) {
        out.push_str(s.kind_name());
        match &s.kind {
            StmtKind::For(l) => {
                out.push_str(&format!("[{} {:?} {:?} {}](", l.induction_name, l.lower, l.upper, l.step));
                stmt(&l.body, out);
                out.push(')');
            }
            StmtKind::Block(b) => {
                out.push('{');
                b.iter().for_each(|s| stmt(s, out));
                out.push('}');
            }
            StmtKind::If { then_branch, else_branch, .. } => {
                stmt(then_branch, out);
                if let Some(e) = else_branch {
                    stmt(e, out);
                }
            }
            _ => {}
        }
        out.push(';');
    }
    let mut out = String::new();
    for f in &unit.functions {
        out.push_str(&f.name);
        f.body.iter().for_each(|s| stmt(s, &mut out));
    }
    out
}

#[test]
fn matmul_has_three_perfectly_nested_loops() {
    let f = only_fn(MATMUL);
    assert_eq!(f.name, "matmul");
    assert_eq!(f.params.len(), 4);
    assert!(f.params[0].ty.is_pointer());
    let loops = f.loops();
    assert_eq!(loops.len(), 3);
    assert_eq!(loops.iter().map(|l| l.id).collect::<Vec<_>>(), vec![LoopId(0), LoopId(1), LoopId(2)]);
    assert!(loops.iter().all(|l| l.is_canonical()));
    assert_eq!(loops[0].perfectly_nested_child().map(|l| l.id), Some(LoopId(1)));
    assert_eq!(loops[0].upper.as_ref().unwrap().to_string(), "n");
    // j's body holds the init store and the k loop.
    assert_eq!(loops[1].body_stmts().len(), 2);
}

#[test]
fn empty_function_has_no_statements() {
    let f = only_fn("void f(){}");
    assert!(f.body.is_empty());
    assert!(f.params.is_empty());
}

#[test]
fn while_inside_for_is_opaque() {
    let f = only_fn("void f(int n, int x){ for(int i=0;i<n;i++) while(x) x--; }");
    let l = &f.loops()[0];
    assert_eq!(l.body.kind_name(), "OpaqueStmt");
}

#[test]
fn side_effecting_calls_and_pointer_code_are_opaque() {
    let f = only_fn("void f(float* a, int n){ for(int i=0;i<n;i++){ printf(\"%d\", i); *a = 1; a[i] = sqrtf(a[i]); } }");
    let body = f.loops()[0].body_stmts();
    assert_eq!(body[0].kind_name(), "OpaqueStmt");
    assert_eq!(body[1].kind_name(), "OpaqueStmt");
    assert_eq!(body[2].kind_name(), "Assign");
}

#[test]
fn unbalanced_braces_are_syntax_errors_with_position() {
    let err = parse("t.c", "void f(int n) {\n  for (int i = 0; i < n; i++) {\n    n = 1;\n}\n").unwrap_err();
    assert!(matches!(err, FrontendError::Syntax { .. }), "{err}");
    let err = parse("t.c", "void f(int n) {\n  n = (1;\n}\n").unwrap_err();
    match err {
        FrontendError::Syntax { line, .. } => assert_eq!(line, 2),
        e => panic!("{e}"),
    }
}

#[test]
fn malformed_for_header_is_a_syntax_error() {
    let err = parse("t.c", "void f(int n) { for (int i = 0; i < n) {} }").unwrap_err();
    assert!(err.to_string().contains("for-loop header"), "{err}");
}

#[test]
fn non_unit_step_is_recorded_but_not_canonical() {
    let f = only_fn("void f(float* a, int n){ for(int i=0;i<n;i+=2) a[i]=0; }");
    let l = &f.loops()[0];
    assert_eq!(l.step, 2);
    assert!(!l.is_canonical());
}

#[test]
fn inclusive_and_reversed_conditions_normalize_to_exclusive_upper() {
    let f = only_fn("void f(float* a, int n){ for(int i=1;i<=n;i++) a[i]=0; for(int j=0; n > j; ++j) a[j]=1; }");
    let loops = f.loops();
    assert_eq!(loops[0].upper.as_ref().unwrap().to_string(), "n + 1");
    assert_eq!(loops[1].upper.as_ref().unwrap().to_string(), "n");
    assert_eq!(loops[1].step, 1);
}

#[test]
fn shadowed_names_get_distinct_keys() {
    let f = only_fn("void f(float* a, int n){ for(int i=0;i<n;i++) a[i]=0; for(int i=0;i<n;i++) a[i]=1; }");
    let loops = f.loops();
    let k0 = &f.symbol(loops[0].induction).key;
    let k1 = &f.symbol(loops[1].induction).key;
    assert_ne!(k0, k1);
}

#[test]
fn parallel_for_pragma_attaches_to_its_loop() {
    let src = "void f(float* a, int n) {\n  #pragma omp parallel for schedule(static)\n  for (int i = 0; i < n; i++) a[i] = 0;\n}\n";
    let f = only_fn(src);
    let l = &f.loops()[0];
    let p = l.pragma.as_ref().unwrap();
    assert_eq!(p.clauses.schedule.map(|s| s.0), Some(crate::omp::ScheduleKind::Static));
    assert!(f.body[0].span.slice(src).starts_with("#pragma"));
}

#[test]
fn other_directives_stay_opaque_without_swallowing_the_loop() {
    let f = only_fn("void f(float* a, int n) {\n#pragma GCC ivdep\n  for (int i = 0; i < n; i++) a[i] = 0;\n}\n");
    assert_eq!(f.body[0].kind_name(), "OpaqueStmt");
    assert_eq!(f.body[1].kind_name(), "ForLoop");
}

#[test]
fn top_level_items_outside_functions_are_kept_opaque() {
    let unit = parse("t.c", "#include <math.h>\nstatic int g = 3;\nvoid h(int);\nvoid f(){}\n").unwrap();
    assert_eq!(unit.functions.len(), 1);
    assert_eq!(unit.opaque_items.len(), 3);
}

#[test]
fn duplicate_parameter_is_rejected() {
    assert!(parse("t.c", "void f(int n, int n){}").is_err());
}

#[test]
fn empty_edit_list_reproduces_input() {
    let unit = parse("m.c", MATMUL).unwrap();
    assert_eq!(emit(&unit, &[]).unwrap(), MATMUL);
}

#[test]
fn pragma_insertion_keeps_indentation() {
    let unit = parse("m.c", MATMUL).unwrap();
    let outer = &unit.functions[0].body[0];
    let out = emit(
        &unit,
        &[Edit::InsertBefore { anchor: outer.span, text: "#pragma omp parallel for collapse(2) schedule(dynamic)".into() }],
    )
    .unwrap();
    assert!(out.contains("{\n  #pragma omp parallel for collapse(2) schedule(dynamic)\n  for (int i = 0;"));
    let again = parse("m.c", &out).unwrap();
    assert!(again.functions[0].loops()[0].pragma.is_some());
}

#[test]
fn unknown_anchor_is_an_error() {
    let unit = parse("m.c", MATMUL).unwrap();
    let err = emit(&unit, &[Edit::Replace { anchor: Span::new(3, 9), text: String::new() }]).unwrap_err();
    assert!(matches!(err, EmitError::Anchor { .. }));
}

#[test]
fn overlapping_replacements_conflict() {
    let unit = parse("m.c", MATMUL).unwrap();
    let l = unit.functions[0].loops()[1];
    let outer = unit.functions[0].loops()[0];
    let edits = [
        Edit::Replace { anchor: l.body.span, text: "{}".into() },
        Edit::Replace { anchor: outer.body.span, text: "{}".into() },
    ];
    assert!(matches!(emit(&unit, &edits), Err(EmitError::Overlap { .. })));
}

fn gen_stmt(depth: u32) -> BoxedStrategy<String> {
    let leaf = prop_oneof![
        (0i64..4).prop_map(|c| format!("a[i + {c}] = b[i] * 2.0f;")),
        Just("s += a[i];".to_string()),
        Just("t = a[i] - 1.0f; b[i] = t;".to_string()),
        Just("if (a[i] > s) s = a[i];".to_string()),
        Just("while (n > 0) n--;".to_string()),
        Just("foo(a, i);".to_string()),
    ];
    if depth == 0 {
        return leaf.boxed();
    }
    prop_oneof![
        leaf,
        gen_stmt(depth - 1).prop_map(|b| format!("for (int i = 0; i < n; i++) {{ {b} }}")),
        (gen_stmt(depth - 1), gen_stmt(depth - 1)).prop_map(|(x, y)| format!("{{ {x}\n   {y} }}")),
    ]
    .boxed()
}

proptest! {
    #[test]
    fn round_trip_and_span_soundness(body in prop::collection::vec(gen_stmt(2), 0..4)) {
        let src = format!("float f(float* a, float* b, int n) {{\n  float s = 0.0f;\n  float t;\n  {}\n  return s;\n}}\n", body.join("\n  "));
        let unit = parse("p.c", &src).unwrap();
        let out = emit(&unit, &[]).unwrap();
        prop_assert_eq!(&out, &src);
        let again = parse("p.c", &out).unwrap();
        prop_assert_eq!(shape(&unit), shape(&again));
        for f in &unit.functions {
            let mut prev_end = f.body_span.start;
            for s in &f.body {
                prop_assert!(s.span.start >= prev_end);
                prev_end = s.span.end;
            }
            f.walk(&mut |s| {
                let text = s.span.slice(&src);
                let reparsed = parse("x.c", &format!("void g(float* a, float* b, int n) {{ float s; float t; {text} }}")).unwrap();
                assert_eq!(reparsed.functions[0].body.last().unwrap().kind_name(), s.kind_name(), "{text}");
            });
        }
    }
}
