//! Kernels and plan fixtures shipped with the crate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetaError {
    #[error("invalid kernel metadata: {0}")]
    Parse(String),
    #[error("kernel metadata: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgRole {
    In,
    Out,
    Inout,
    /// The problem size `n`.
    Size,
    /// A fixed scalar given by `value`.
    Scalar,
    /// Integers in `0..range`, for indirect subscripts.
    Index,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelArg {
    pub name: String,
    pub role: ArgRole,
    #[serde(rename = "type", default = "default_type")]
    pub ty: String,
    /// Element count as an expression in `n`.
    #[serde(default)]
    pub len: Option<String>,
    #[serde(default)]
    pub value: Option<String>,
    #[serde(default)]
    pub range: Option<String>,
}

fn default_type() -> String {
    "int".to_string()
}

/// Kernel metadata: how to build inputs, which buffers are outputs, and
/// the problem sizes used for regression, sanitizer and benchmark runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelMeta {
    pub name: String,
    pub function: String,
    #[serde(default)]
    pub domain: String,
    #[serde(default)]
    pub complexity: String,
    pub size: u64,
    pub sanitizer_size: u64,
    pub bench_size: u64,
    pub args: Vec<KernelArg>,
}

impl KernelMeta {
    pub fn parse(text: &str) -> Result<KernelMeta, MetaError> {
        let meta: KernelMeta = toml::from_str(text).map_err(|e| MetaError::Parse(e.to_string()))?;
        meta.check()?;
        Ok(meta)
    }

    fn check(&self) -> Result<(), MetaError> {
        let bad = |m: String| Err(MetaError::Invalid(m));
        for a in &self.args {
            if !matches!(a.ty.as_str(), "int" | "long" | "float" | "double") {
                return bad(format!("argument `{}` has unsupported type {:?}", a.name, a.ty));
            }
            match a.role {
                ArgRole::In | ArgRole::Out | ArgRole::Inout | ArgRole::Index => {
                    let Some(len) = &a.len else { return bad(format!("buffer `{}` needs `len`", a.name)) };
                    size_expr(len, 1).map_err(MetaError::Invalid)?;
                    if a.role == ArgRole::Index {
                        let Some(r) = &a.range else { return bad(format!("index buffer `{}` needs `range`", a.name)) };
                        size_expr(r, 1).map_err(MetaError::Invalid)?;
                    }
                }
                ArgRole::Scalar if a.value.is_none() => return bad(format!("scalar `{}` needs `value`", a.name)),
                _ => {}
            }
        }
        if !self.args.iter().any(|a| matches!(a.role, ArgRole::Out | ArgRole::Inout)) {
            return bad("no output buffer".into());
        }
        Ok(())
    }

    pub fn outputs(&self) -> impl Iterator<Item = &KernelArg> {
        self.args.iter().filter(|a| matches!(a.role, ArgRole::Out | ArgRole::Inout))
    }
}

/// Evaluates a `len`/`range` expression: sums of products of integers and `n`.
pub fn size_expr(expr: &str, n: u64) -> Result<u64, String> {
    let mut total: u64 = 0;
    for term in expr.split('+') {
        let mut prod: u64 = 1;
        for f in term.split('*') {
            let f = f.trim();
            let v = if f == "n" { n } else { f.parse::<u64>().map_err(|_| format!("bad size expression {expr:?}"))? };
            prod = prod.checked_mul(v).ok_or_else(|| format!("size expression {expr:?} overflows"))?;
        }
        total = total.checked_add(prod).ok_or_else(|| format!("size expression {expr:?} overflows"))?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
pub struct EmbeddedKernel {
    pub name: &'static str,
    pub source: &'static str,
    pub meta: &'static str,
}

impl EmbeddedKernel {
    pub fn meta(&self) -> KernelMeta {
        KernelMeta::parse(self.meta).expect("embedded metadata is valid")
    }

    pub fn file_name(&self) -> String {
        format!("{}.c", self.name)
    }
}

macro_rules! kernel {
    ($name:literal) => {
        EmbeddedKernel {
            name: $name,
            source: include_str!(concat!("../assets/kernels/", $name, ".c")),
            meta: include_str!(concat!("../assets/kernels/", $name, ".toml")),
        }
    };
}

pub const KERNELS: &[EmbeddedKernel] = &[
    kernel!("matmul"),
    kernel!("vector_add"),
    kernel!("dot"),
    kernel!("int_sum"),
    kernel!("prefix"),
    kernel!("stencil"),
    kernel!("vmax"),
    kernel!("rowsum"),
    kernel!("scaled_copy"),
    kernel!("gather"),
];

pub fn kernel(name: &str) -> Option<&'static EmbeddedKernel> {
    KERNELS.iter().find(|k| k.name == name)
}

/// Plans that must be rejected, with the rule id expected to fire.
#[derive(Debug, Clone, Deserialize)]
pub struct UnsafePlanFixture {
    #[serde(skip)]
    pub name: &'static str,
    pub kernel: String,
    pub expect: String,
    pub description: String,
    pub plan: serde_json::Value,
}

const UNSAFE_PLANS: &[(&str, &str)] = &[
    ("dot_missing_reduction", include_str!("../assets/fixtures/unsafe_plans/dot_missing_reduction.json")),
    ("dot_wrong_operator", include_str!("../assets/fixtures/unsafe_plans/dot_wrong_operator.json")),
    ("gather_unknown_verdict", include_str!("../assets/fixtures/unsafe_plans/gather_unknown_verdict.json")),
    ("int_sum_private_accumulator", include_str!("../assets/fixtures/unsafe_plans/int_sum_private_accumulator.json")),
    ("matmul_collapse_three", include_str!("../assets/fixtures/unsafe_plans/matmul_collapse_three.json")),
    ("matmul_false_private", include_str!("../assets/fixtures/unsafe_plans/matmul_false_private.json")),
    ("matmul_inner_without_reduction", include_str!("../assets/fixtures/unsafe_plans/matmul_inner_without_reduction.json")),
    ("prefix_false_reduction", include_str!("../assets/fixtures/unsafe_plans/prefix_false_reduction.json")),
    ("prefix_no_clauses", include_str!("../assets/fixtures/unsafe_plans/prefix_no_clauses.json")),
    ("rowsum_collapse_imperfect", include_str!("../assets/fixtures/unsafe_plans/rowsum_collapse_imperfect.json")),
    ("scaled_copy_missing_private", include_str!("../assets/fixtures/unsafe_plans/scaled_copy_missing_private.json")),
    ("stencil_zero_chunk", include_str!("../assets/fixtures/unsafe_plans/stencil_zero_chunk.json")),
    ("vector_add_gpu_target", include_str!("../assets/fixtures/unsafe_plans/vector_add_gpu_target.json")),
    ("vmax_min_instead_of_max", include_str!("../assets/fixtures/unsafe_plans/vmax_min_instead_of_max.json")),
];

pub fn unsafe_plans() -> Vec<UnsafePlanFixture> {
    load_fixtures(UNSAFE_PLANS)
}

fn load_fixtures(list: &[(&'static str, &str)]) -> Vec<UnsafePlanFixture> {
    list.iter()
        .map(|(name, text)| {
            let mut f: UnsafePlanFixture = serde_json::from_str(text).expect("fixture is valid JSON");
            f.name = name;
            f
        })
        .collect()
}

/// Unsafe plans that are forced past the validator so the dynamic checks can
/// be shown to catch them. `expect` is `race` or `regression`.
const INJECTED_PLANS: &[(&str, &str)] = &[
    ("race_dot_shared_sum", include_str!("../assets/fixtures/injected/race_dot_shared_sum.json")),
    ("race_int_sum_shared", include_str!("../assets/fixtures/injected/race_int_sum_shared.json")),
    ("race_matmul_inner_accumulation", include_str!("../assets/fixtures/injected/race_matmul_inner_accumulation.json")),
    ("race_scaled_copy_shared_temp", include_str!("../assets/fixtures/injected/race_scaled_copy_shared_temp.json")),
    ("wrong_reduction_int_sum_product", include_str!("../assets/fixtures/injected/wrong_reduction_int_sum_product.json")),
    ("wrong_reduction_vmax_min", include_str!("../assets/fixtures/injected/wrong_reduction_vmax_min.json")),
];

pub fn injected_plans() -> Vec<UnsafePlanFixture> {
    load_fixtures(INJECTED_PLANS)
}
