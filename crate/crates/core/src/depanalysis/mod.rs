//! Dependence analysis over the loop-nest IR.
//!
//! Distinct pointer parameters are assumed not to alias. Globals and
//! pointers declared in opaque code are treated as unknown regions.

pub mod access;
pub mod deptest;
pub mod gen;
pub mod oracle;
pub mod scalars;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Serialize, Serializer};

use crate::frontend::{
    AffineExpr, Expr, ForLoop, FunctionDecl, LoopId, ScalarType, SourceUnit, Stmt, StmtKind, SymbolId,
};
use crate::omp::ReductionOp;
use access::{AccessMode, ArrayAccess, Collector};
use deptest::{DepTest, LoopVarInfo, LoopVars};

pub use oracle::{brute_force_oracle, OracleConfig, OracleError, OracleVerdict};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DepKind {
    Flow,
    Anti,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CarriedAt {
    Level(usize),
    LoopIndependent,
}

impl Serialize for CarriedAt {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CarriedAt::Level(l) => s.serialize_u64(*l as u64),
            CarriedAt::LoopIndependent => s.serialize_str("loop-independent"),
        }
    }
}

fn ser_distance<S: Serializer>(d: &Option<i64>, s: S) -> Result<S::Ok, S::Error> {
    match d {
        Some(v) => s.serialize_i64(*v),
        None => s.serialize_str("unknown"),
    }
}

/// One endpoint of a dependence: an array access or a scalar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccessRef {
    pub name: String,
    pub text: String,
    pub line: usize,
    pub mode: AccessMode,
}

/// The clause that removes a carried dependence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Explanation {
    Reduction { variable: String, operator: ReductionOp },
    Private { variable: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependenceFact {
    pub kind: DepKind,
    pub source: AccessRef,
    pub sink: AccessRef,
    pub carried_at: CarriedAt,
    #[serde(serialize_with = "ser_distance")]
    pub distance: Option<i64>,
    pub explained_by: Option<Explanation>,
}

impl DependenceFact {
    pub fn is_carried_at(&self, level: usize) -> bool {
        self.carried_at == CarriedAt::Level(level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionPattern {
    pub variable: String,
    pub operator: ReductionOp,
    pub loop_level: usize,
    pub fp_reassociation: bool,
    /// Array cell the variable stands for after scalarization.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrivateOrigin {
    Scalar,
    /// Local introduced by scalarizing an accumulator in an inner loop.
    ScalarizedAccumulator,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivatizableVar {
    pub variable: String,
    pub loop_level: usize,
    pub origin: PrivateOrigin,
}

/// An array cell updated through one reduction operator and invariant in
/// its loop, to be hoisted into a local.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Accumulator {
    pub array: String,
    pub cell: String,
    pub operator: ReductionOp,
    pub local: String,
    pub element_type: ScalarType,
    #[serde(skip)]
    pub sym: SymbolId,
    #[serde(skip)]
    pub subscripts: Vec<AffineExpr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Parallelizable,
    ParallelizableWithClauses,
    Sequential,
    Unknown,
}

impl Verdict {
    pub fn is_parallel(self) -> bool {
        matches!(self, Verdict::Parallelizable | Verdict::ParallelizableWithClauses)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopReport {
    pub loop_id: LoopId,
    pub function: String,
    pub line: usize,
    /// Nesting level, 1 = outermost loop of the function.
    pub depth: usize,
    pub induction: String,
    pub lower: Option<String>,
    pub upper: Option<String>,
    pub step: i64,
    pub parent: Option<LoopId>,
    pub children: Vec<LoopId>,
    pub perfectly_nested_child: Option<LoopId>,
    /// Bounds do not depend on enclosing induction variables.
    pub rectangular: bool,
    pub has_conditionals: bool,
    pub local_decls: Vec<String>,
    pub dependences: Vec<DependenceFact>,
    pub reductions: Vec<ReductionPattern>,
    pub privatizable: Vec<PrivatizableVar>,
    pub accumulators: Vec<Accumulator>,
    pub verdict: Verdict,
    pub reasons: Vec<String>,
}

impl LoopReport {
    pub fn carried(&self) -> impl Iterator<Item = &DependenceFact> {
        let level = self.depth;
        self.dependences.iter().filter(move |d| d.is_carried_at(level))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub unit: String,
    pub loops: Vec<LoopReport>,
}

impl AnalysisReport {
    pub fn get(&self, id: LoopId) -> Option<&LoopReport> {
        self.loops.iter().find(|l| l.loop_id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Analyzes every loop of the unit.
pub fn analyze(unit: &SourceUnit) -> AnalysisReport {
    let mut loops = Vec::new();
    for f in &unit.functions {
        loops.extend(FunctionAnalysis::new(unit, f).run());
    }
    loops.sort_by_key(|l| l.loop_id);
    AnalysisReport { schema_version: SCHEMA_VERSION, unit: unit.path.clone(), loops }
}

/// First dependence between two accesses of one function: carried at the
/// outermost shared level that carries one, else loop-independent.
pub fn test_dependence(unit: &SourceUnit, func: &FunctionDecl, a: &ArrayAccess, b: &ArrayAccess) -> Option<DependenceFact> {
    if a.sym != b.sym || (a.mode == AccessMode::Read && b.mode == AccessMode::Read) {
        return None;
    }
    let vars = loop_vars(func);
    let ka = induction_keys(func, &a.loop_context);
    let kb = induction_keys(func, &b.loop_context);
    let common = a.loop_context.iter().zip(&b.loop_context).take_while(|(x, y)| x == y).count();
    let make = |carried_at, distance| {
        let (src, snk, dist) = orient(a, b, distance);
        DependenceFact {
            kind: kind_of(src.mode, snk.mode),
            source: access_ref(func, &unit.text, src),
            sink: access_ref(func, &unit.text, snk),
            carried_at,
            distance: dist,
            explained_by: None,
        }
    };
    let (Some(sa), Some(sb)) = (&a.subscripts, &b.subscripts) else {
        let at = if common > 0 { CarriedAt::Level(1) } else { CarriedAt::LoopIndependent };
        return Some(make(at, None));
    };
    for level in 0..common {
        if let DepTest::Dependent { distance } = deptest::test_carried(sa, &ka, sb, &kb, level, &vars) {
            return Some(make(CarriedAt::Level(level + 1), distance));
        }
    }
    if a != b {
        if let DepTest::Dependent { .. } = deptest::test_same_iteration(sa, &ka, sb, &kb, common, &vars) {
            return Some(make(CarriedAt::LoopIndependent, Some(0)));
        }
    }
    None
}

fn induction_keys(func: &FunctionDecl, ctx: &[LoopId]) -> Vec<String> {
    ctx.iter()
        .map(|id| func.find_loop(*id).map(|l| func.symbol(l.induction).key.clone()).unwrap_or_default())
        .collect()
}

fn loop_vars(func: &FunctionDecl) -> LoopVars {
    func.loops()
        .into_iter()
        .map(|l| {
            let canonical = l.step == 1;
            (
                func.symbol(l.induction).key.clone(),
                LoopVarInfo {
                    lower: if canonical { l.lower.clone() } else { None },
                    upper: if canonical { l.upper.clone() } else { None },
                },
            )
        })
        .collect()
}

fn access_ref(func: &FunctionDecl, unit_text: &str, a: &ArrayAccess) -> AccessRef {
    AccessRef {
        name: func.symbol(a.sym).name.clone(),
        text: a.span.slice(unit_text).to_string(),
        line: crate::frontend::line_col(unit_text, a.span.start).0,
        mode: a.mode,
    }
}

fn kind_of(src: AccessMode, snk: AccessMode) -> DepKind {
    match (src, snk) {
        (AccessMode::Write, AccessMode::Read) => DepKind::Flow,
        (AccessMode::Read, AccessMode::Write) => DepKind::Anti,
        _ => DepKind::Output,
    }
}

/// Puts the earlier-executing access first.
fn orient<'a>(a: &'a ArrayAccess, b: &'a ArrayAccess, distance: Option<i64>) -> (&'a ArrayAccess, &'a ArrayAccess, Option<i64>) {
    match distance {
        Some(d) if d < 0 => (b, a, Some(-d)),
        Some(d) => (a, b, Some(d)),
        None => {
            // Unknown direction: report the write as the source.
            if a.mode == AccessMode::Read && b.mode == AccessMode::Write {
                (b, a, None)
            } else {
                (a, b, None)
            }
        }
    }
}

struct FunctionAnalysis<'a> {
    unit: &'a SourceUnit,
    func: &'a FunctionDecl,
    accesses: Vec<ArrayAccess>,
    vars: LoopVars,
    levels: HashMap<LoopId, usize>,
    parents: HashMap<LoopId, Option<LoopId>>,
    children: HashMap<LoopId, Vec<LoopId>>,
}

impl<'a> FunctionAnalysis<'a> {
    fn new(unit: &'a SourceUnit, func: &'a FunctionDecl) -> Self {
        let mut levels = HashMap::new();
        let mut parents = HashMap::new();
        let mut children: HashMap<LoopId, Vec<LoopId>> = HashMap::new();
        for l in func.loops() {
            let chain = func.loop_chain(l.id).unwrap_or_default();
            levels.insert(l.id, chain.len());
            let parent = chain.len().checked_sub(2).map(|i| chain[i].id);
            parents.insert(l.id, parent);
            children.entry(l.id).or_default();
            if let Some(p) = parent {
                children.entry(p).or_default().push(l.id);
            }
        }
        FunctionAnalysis { unit, func, accesses: Collector::new(func).collect(), vars: loop_vars(func), levels, parents, children }
    }

    fn line(&self, offset: usize) -> usize {
        self.unit.line_of(offset)
    }

    fn run(&self) -> Vec<LoopReport> {
        let loops = self.func.loops();
        let mut names: BTreeSet<String> = self.func.symbols.iter().map(|s| s.name.clone()).collect();
        // Accumulators first: outer loops list the scalarized locals of inner ones.
        let mut accs: BTreeMap<LoopId, Vec<Accumulator>> = BTreeMap::new();
        let mut unknown: HashMap<LoopId, Vec<String>> = HashMap::new();
        for l in &loops {
            let reasons = self.unknown_reasons(l);
            if reasons.is_empty() {
                accs.insert(l.id, self.accumulators(l, &mut names));
            }
            unknown.insert(l.id, reasons);
        }
        loops.iter().map(|l| self.loop_report(l, &accs, unknown.remove(&l.id).unwrap_or_default())).collect()
    }

    fn in_loop<'b>(&'b self, l: &ForLoop) -> impl Iterator<Item = &'b ArrayAccess> {
        let id = l.id;
        self.accesses.iter().filter(move |a| a.loop_context.contains(&id))
    }

    fn unknown_reasons(&self, l: &ForLoop) -> Vec<String> {
        let mut reasons = Vec::new();
        let text = &self.unit.text;
        if l.step != 1 {
            reasons.push(format!("non-unit step {}", l.step));
        } else if l.lower.is_none() || l.upper.is_none() {
            reasons.push("non-affine loop bounds".to_string());
        }
        let mut written = BTreeSet::new();
        scalars::written_scalars(&l.body, &mut written);
        let mut inductions = BTreeSet::from([l.induction]);
        l.body.walk(&mut |s| match &s.kind {
            StmtKind::Opaque { reason, .. } => {
                reasons.push(format!("line {}: statement outside the analyzable subset ({reason})", self.line(s.span.start)))
            }
            StmtKind::For(inner) => {
                inductions.insert(inner.induction);
                if !inner.is_canonical() {
                    reasons.push(format!("inner loop {} at line {} is not analyzable", inner.id, self.line(s.span.start)));
                }
            }
            _ => {}
        });
        // Induction variables may only change in their own loop header.
        l.body.walk(&mut |s| {
            if let StmtKind::Assign { target, .. } | StmtKind::CompoundAssign { target, .. } = &s.kind {
                if let Some(v) = target.as_var() {
                    if inductions.contains(&v) {
                        reasons.push(format!("line {}: induction variable `{}` assigned in the body", self.line(s.span.start), self.func.symbol(v).name));
                    }
                }
            }
        });
        for b in [&l.lower_expr, &l.upper_expr] {
            if written.iter().any(|v| b.mentions(*v)) {
                reasons.push("loop bound changes inside the loop".to_string());
            }
        }
        for a in self.in_loop(l) {
            match &a.subscripts {
                None => reasons.push(format!(
                    "line {}: access `{}` is not affine or its base may alias",
                    self.line(a.span.start),
                    a.span.slice(text)
                )),
                Some(subs) => {
                    let ctx_inductions: BTreeSet<String> = induction_keys(self.func, &a.loop_context).into_iter().collect();
                    let bad = subs.iter().flat_map(|s| s.vars()).any(|k| {
                        !ctx_inductions.contains(k) && self.func.symbol_by_key(k).is_some_and(|v| written.contains(&v))
                    });
                    if bad {
                        reasons.push(format!(
                            "line {}: subscript of `{}` uses a variable written in the loop",
                            self.line(a.span.start),
                            a.span.slice(text)
                        ));
                    }
                }
            }
        }
        reasons.dedup();
        reasons
    }

    fn accumulators(&self, l: &ForLoop, names: &mut BTreeSet<String>) -> Vec<Accumulator> {
        let mut by_array: BTreeMap<SymbolId, Vec<&ArrayAccess>> = BTreeMap::new();
        for a in self.in_loop(l) {
            by_array.entry(a.sym).or_default().push(a);
        }
        let mut written = BTreeSet::new();
        scalars::written_scalars(&l.body, &mut written);
        let mut out = Vec::new();
        for (sym, list) in by_array {
            if !list.iter().any(|a| a.mode == AccessMode::Write) {
                continue;
            }
            let Some(subs) = list[0].subscripts.clone() else { continue };
            if list.iter().any(|a| a.subscripts.as_ref() != Some(&subs)) {
                continue;
            }
            // The cell must not move within one execution of the loop.
            let pos = list[0].loop_context.iter().position(|x| *x == l.id).unwrap_or(0);
            let varying: BTreeSet<String> =
                list.iter().flat_map(|a| induction_keys(self.func, &a.loop_context[pos..])).collect();
            let invariant = subs.iter().flat_map(|s| s.vars()).all(|k| {
                !varying.contains(k) && self.func.symbol_by_key(k).is_none_or(|v| !written.contains(&v))
            });
            if !invariant {
                continue;
            }
            let func = self.func;
            let is = |e: &Expr| {
                e.as_array_ref().is_some_and(|(s, idx)| {
                    s == sym && idx.iter().map(|x| AffineExpr::from_expr(x, func)).collect::<Option<Vec<_>>>().as_ref() == Some(&subs)
                })
            };
            let mentioned_in = |e: &Expr| e.mentions(sym);
            let Some(op) = scalars::reduction_op(&scalars::Target { is: &is, mentioned_in: &mentioned_in }, &l.body) else {
                continue;
            };
            let Some(elem) = func.symbol(sym).elem_type() else { continue };
            if op.integer_only() && elem.is_float() {
                continue;
            }
            let base = format!("{}_priv", func.symbol(sym).name);
            let mut local = base.clone();
            let mut k = 2;
            while names.contains(&local) {
                local = format!("{base}{k}");
                k += 1;
            }
            names.insert(local.clone());
            out.push(Accumulator {
                array: func.symbol(sym).name.clone(),
                cell: list[0].span.slice(&self.unit.text).to_string(),
                operator: op,
                local,
                element_type: elem,
                sym,
                subscripts: subs,
            });
        }
        out
    }

    fn loop_report(&self, l: &ForLoop, accs: &BTreeMap<LoopId, Vec<Accumulator>>, reasons: Vec<String>) -> LoopReport {
        let func = self.func;
        let level = self.levels[&l.id];
        let stmt_span = func
            .loops()
            .iter()
            .find(|x| x.id == l.id)
            .map(|x| x.header_span)
            .unwrap_or(l.header_span);
        let enclosing: Vec<SymbolId> = func.loop_chain(l.id).unwrap_or_default().iter().filter(|x| x.id != l.id).map(|x| x.induction).collect();
        let rectangular = enclosing.iter().all(|v| !l.lower_expr.mentions(*v) && !l.upper_expr.mentions(*v));
        let mut has_conditionals = false;
        l.body.walk(&mut |s| has_conditionals |= matches!(s.kind, StmtKind::If { .. }));
        let declared = scalars::declared_within(func, &l.body);
        let mut local_decls: Vec<String> = declared.iter().map(|s| func.symbol(*s).name.clone()).collect();
        if l.declares_induction {
            local_decls.insert(0, l.induction_name.clone());
        }
        local_decls.dedup();

        let mut report = LoopReport {
            loop_id: l.id,
            function: func.name.clone(),
            line: self.line(stmt_span.start),
            depth: level,
            induction: l.induction_name.clone(),
            lower: l.lower.as_ref().map(|e| e.to_string()),
            upper: l.upper.as_ref().map(|e| e.to_string()),
            step: l.step,
            parent: self.parents[&l.id],
            children: self.children[&l.id].clone(),
            perfectly_nested_child: l.perfectly_nested_child().map(|c| c.id),
            rectangular,
            has_conditionals,
            local_decls,
            dependences: vec![],
            reductions: vec![],
            privatizable: vec![],
            accumulators: vec![],
            verdict: Verdict::Unknown,
            reasons,
        };
        if !report.reasons.is_empty() {
            return report;
        }
        let my_accs = accs.get(&l.id).cloned().unwrap_or_default();
        report.dependences = self.array_dependences(l, level, &my_accs);

        // Scalars.
        let mut written = BTreeSet::new();
        scalars::written_scalars(&l.body, &mut written);
        let mut candidates: Vec<SymbolId> =
            written.into_iter().filter(|v| *v != l.induction && !declared.contains(v)).collect();
        candidates.sort_by(|a, b| func.symbol(*a).key.cmp(&func.symbol(*b).key));
        for v in candidates {
            let s = func.symbol(v);
            let me = AccessRef { name: s.name.clone(), text: s.name.clone(), line: report.line, mode: AccessMode::Write };
            if let Some(op) = scalars::scalar_reduction(func, &l.body, v) {
                let fp = s.elem_type().is_some_and(|t| t.is_float()) && op.reassociates_fp();
                report.reductions.push(ReductionPattern { variable: s.name.clone(), operator: op, loop_level: level, fp_reassociation: fp, cell: None });
                report.dependences.push(DependenceFact {
                    kind: DepKind::Flow,
                    source: me.clone(),
                    sink: AccessRef { mode: AccessMode::Read, ..me },
                    carried_at: CarriedAt::Level(level),
                    distance: Some(1),
                    explained_by: Some(Explanation::Reduction { variable: s.name.clone(), operator: op }),
                });
            } else if scalars::is_privatizable(func, l, v) {
                report.privatizable.push(PrivatizableVar { variable: s.name.clone(), loop_level: level, origin: PrivateOrigin::Scalar });
                report.dependences.push(DependenceFact {
                    kind: DepKind::Output,
                    source: me.clone(),
                    sink: me,
                    carried_at: CarriedAt::Level(level),
                    distance: None,
                    explained_by: Some(Explanation::Private { variable: s.name.clone() }),
                });
            } else {
                let exposed = scalars::has_exposed_read(l, v);
                report.dependences.push(DependenceFact {
                    kind: if exposed { DepKind::Flow } else { DepKind::Output },
                    source: me.clone(),
                    sink: AccessRef { mode: if exposed { AccessMode::Read } else { AccessMode::Write }, ..me },
                    carried_at: CarriedAt::Level(level),
                    distance: if exposed { Some(1) } else { None },
                    explained_by: None,
                });
            }
        }
        for a in &my_accs {
            report.reductions.push(ReductionPattern {
                variable: a.local.clone(),
                operator: a.operator,
                loop_level: level,
                fp_reassociation: a.element_type.is_float() && a.operator.reassociates_fp(),
                cell: Some(a.cell.clone()),
            });
        }
        // Locals introduced by scalarizing accumulators of inner loops.
        for (inner, list) in accs {
            if *inner != l.id && func.loop_chain(*inner).is_some_and(|c| c.iter().any(|x| x.id == l.id)) {
                for a in list {
                    report.privatizable.push(PrivatizableVar {
                        variable: a.local.clone(),
                        loop_level: level,
                        origin: PrivateOrigin::ScalarizedAccumulator,
                    });
                }
            }
        }
        report.accumulators = my_accs;
        let carried: Vec<&DependenceFact> = report.carried().collect();
        report.verdict = if carried.iter().any(|d| d.explained_by.is_none()) {
            Verdict::Sequential
        } else if carried.is_empty() {
            Verdict::Parallelizable
        } else {
            Verdict::ParallelizableWithClauses
        };
        report
    }

    fn array_dependences(&self, l: &ForLoop, level: usize, accs: &[Accumulator]) -> Vec<DependenceFact> {
        let text = &self.unit.text;
        let list: Vec<&ArrayAccess> = self.in_loop(l).collect();
        let pos = level - 1;
        let mut out = Vec::new();
        for (ia, a) in list.iter().enumerate() {
            for b in &list[ia..] {
                let same = std::ptr::eq(*a, *b);
                if a.sym != b.sym || (a.mode == AccessMode::Read && b.mode == AccessMode::Read) || (same && a.mode == AccessMode::Read) {
                    continue;
                }
                let (Some(sa), Some(sb)) = (&a.subscripts, &b.subscripts) else { continue };
                let ka = induction_keys(self.func, &a.loop_context);
                let kb = induction_keys(self.func, &b.loop_context);
                let explained = accs.iter().find(|c| c.sym == a.sym && &c.subscripts == sa && &c.subscripts == sb).map(|c| {
                    Explanation::Reduction { variable: c.local.clone(), operator: c.operator }
                });
                if let DepTest::Dependent { distance } = deptest::test_carried(sa, &ka, sb, &kb, pos, &self.vars) {
                    let (src, snk, dist) = orient(a, b, distance);
                    out.push(DependenceFact {
                        kind: kind_of(src.mode, snk.mode),
                        source: access_ref(self.func, text, src),
                        sink: access_ref(self.func, text, snk),
                        carried_at: CarriedAt::Level(level),
                        distance: dist,
                        explained_by: explained.clone(),
                    });
                }
                let common = a.loop_context.iter().zip(&b.loop_context).take_while(|(x, y)| x == y).count();
                if !same && common == level {
                    if let DepTest::Dependent { .. } = deptest::test_same_iteration(sa, &ka, sb, &kb, common, &self.vars) {
                        out.push(DependenceFact {
                            kind: kind_of(a.mode, b.mode),
                            source: access_ref(self.func, text, a),
                            sink: access_ref(self.func, text, b),
                            carried_at: CarriedAt::LoopIndependent,
                            distance: Some(0),
                            explained_by: None,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Statements of a loop body, used by tests and the oracle.
pub fn body_of(l: &ForLoop) -> &[Stmt] {
    l.body.as_list()
}

#[cfg(test)]
mod tests;
