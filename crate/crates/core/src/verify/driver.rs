//! C test drivers generated from kernel metadata.
//!
//! A driver takes `size seed [dump]` on the command line, fills the inputs
//! from a seeded splitmix64 stream, times the kernel call alone and prints
//! `TIME_NS=<integer>` and `CHECKSUM=<hex>`, the checksum being FNV-1a over
//! the raw bytes of every output buffer. With a third argument it also writes
//! the output buffers as text to that path.

use std::fmt::Write as _;

use super::VerifyError;
use crate::frontend::{FunctionDecl, SourceUnit};
use crate::kernels::{ArgRole, KernelArg, KernelMeta};

/// What a driver run printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriverOutput {
    pub time_ns: u64,
    pub checksum: u64,
}

pub fn parse_driver_output(stdout: &str) -> Result<DriverOutput, String> {
    let mut time = None;
    let mut sum = None;
    for line in stdout.lines() {
        if let Some(v) = line.trim().strip_prefix("TIME_NS=") {
            time = Some(v.trim().parse::<u64>().map_err(|_| format!("bad TIME_NS value {v:?}"))?);
        } else if let Some(v) = line.trim().strip_prefix("CHECKSUM=") {
            let hex = v.trim().trim_start_matches("0x");
            sum = Some(u64::from_str_radix(hex, 16).map_err(|_| format!("bad CHECKSUM value {v:?}"))?);
        }
    }
    match (time, sum) {
        (Some(time_ns), Some(checksum)) => Ok(DriverOutput { time_ns, checksum }),
        (None, _) => Err("driver printed no TIME_NS line".into()),
        (_, None) => Err("driver printed no CHECKSUM line".into()),
    }
}

/// One output buffer read back from a dump file.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpedBuffer {
    pub name: String,
    /// Values as printed; floats use enough digits to round-trip.
    pub values: Vec<String>,
}

pub fn parse_dump(text: &str) -> Result<Vec<DumpedBuffer>, String> {
    let mut out = Vec::new();
    let mut lines = text.lines();
    while let Some(head) = lines.next() {
        if head.trim().is_empty() {
            continue;
        }
        let mut parts = head.split_whitespace();
        let (Some(name), Some(len)) = (parts.next(), parts.next()) else {
            return Err(format!("bad dump header {head:?}"));
        };
        let len: usize = len.parse().map_err(|_| format!("bad dump length in {head:?}"))?;
        let values: Vec<String> = lines.by_ref().take(len).map(|l| l.trim().to_string()).collect();
        if values.len() != len {
            return Err(format!("dump of {name} is truncated"));
        }
        out.push(DumpedBuffer { name: name.to_string(), values });
    }
    Ok(out)
}

fn c_len(expr: &str) -> String {
    format!("(size_t)({expr})")
}

fn fill(a: &KernelArg) -> String {
    let len = c_len(a.len.as_deref().unwrap_or("1"));
    let name = &a.name;
    let gen = match (a.role, a.ty.as_str()) {
        (ArgRole::Out, _) => return format!("  memset({name}, 0, {len} * sizeof *{name});\n"),
        (ArgRole::Index, _) => {
            let range = c_len(a.range.as_deref().unwrap_or("n"));
            format!("({})(next_u64() % (uint64_t){range})", a.ty)
        }
        (_, "float" | "double") => format!("({})(next_unit() * 2.0 - 1.0)", a.ty),
        _ => format!("({})((int64_t)(next_u64() % 17) - 8)", a.ty),
    };
    format!("  for (size_t q = 0; q < {len}; q++) {name}[q] = {gen};\n")
}

fn print_fmt(ty: &str) -> (&'static str, &'static str) {
    match ty {
        "float" => ("%.9g", "(double)"),
        "double" => ("%.17g", ""),
        _ => ("%lld", "(long long)"),
    }
}

/// Driver source for `meta`, calling the function as declared in `unit`.
pub fn driver_source(meta: &KernelMeta, unit: &SourceUnit) -> Result<String, VerifyError> {
    let bad = |m: String| VerifyError::Driver(m);
    let func: &FunctionDecl =
        unit.function(&meta.function).ok_or_else(|| bad(format!("function {} not found in source", meta.function)))?;
    let mut call_args = Vec::new();
    let mut params = Vec::new();
    for p in &func.params {
        let a = meta
            .args
            .iter()
            .find(|a| a.name == p.name)
            .ok_or_else(|| bad(format!("parameter {} has no metadata entry", p.name)))?;
        let is_buffer = matches!(a.role, ArgRole::In | ArgRole::Out | ArgRole::Inout | ArgRole::Index);
        if is_buffer != p.ty.is_pointer() {
            return Err(bad(format!("parameter {} is declared {} but has role {:?}", p.name, p.ty, a.role)));
        }
        let konst = if p.is_const { "const " } else { "" };
        params.push(format!("{konst}{} {}", p.ty, p.name));
        call_args.push(match a.role {
            ArgRole::Size => format!("({})n", p.ty),
            ArgRole::Scalar => format!("({})({})", p.ty, a.value.as_deref().unwrap_or("0")),
            _ => a.name.clone(),
        });
    }
    let ret = func.return_type.map_or("void", |t| t.c_name());
    let buffers: Vec<&KernelArg> =
        meta.args.iter().filter(|a| matches!(a.role, ArgRole::In | ArgRole::Out | ArgRole::Inout | ArgRole::Index)).collect();

    let mut s = String::new();
    s.push_str("#include <stdint.h>\n#include <stdio.h>\n#include <stdlib.h>\n#include <string.h>\n#include <time.h>\n\n");
    let _ = writeln!(s, "{ret} {}({});\n", func.name, params.join(", "));
    s.push_str(concat!(
        "static uint64_t rng_state;\n\n",
        "static uint64_t next_u64(void) {\n",
        "  uint64_t z = (rng_state += 0x9e3779b97f4a7c15ULL);\n",
        "  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;\n",
        "  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;\n",
        "  return z ^ (z >> 31);\n",
        "}\n\n",
        "static double next_unit(void) { return (double)(next_u64() >> 11) * (1.0 / 9007199254740992.0); }\n\n",
        "static uint64_t fnv = 0xcbf29ce484222325ULL;\n\n",
        "static void fnv_bytes(const void *p, size_t len) {\n",
        "  const unsigned char *b = p;\n",
        "  for (size_t q = 0; q < len; q++) {\n",
        "    fnv ^= b[q];\n",
        "    fnv *= 0x100000001b3ULL;\n",
        "  }\n",
        "}\n\n",
        "int main(int argc, char **argv) {\n",
        "  if (argc < 3) {\n",
        "    fprintf(stderr, \"usage: %s size seed [dump]\\n\", argv[0]);\n",
        "    return 2;\n",
        "  }\n",
        "  long n = atol(argv[1]);\n",
        "  rng_state = strtoull(argv[2], NULL, 10);\n",
    ));
    for a in &buffers {
        let len = c_len(a.len.as_deref().unwrap_or("1"));
        let _ = writeln!(s, "  {ty} *{n} = malloc(({len} + 1) * sizeof(*{n}));", ty = a.ty, n = a.name);
        let _ = writeln!(s, "  if (!{n}) return 3;", n = a.name);
    }
    for a in &buffers {
        s.push_str(&fill(a));
    }
    s.push_str("  struct timespec t0, t1;\n  clock_gettime(CLOCK_MONOTONIC, &t0);\n");
    let _ = writeln!(s, "  {}({});", func.name, call_args.join(", "));
    s.push_str("  clock_gettime(CLOCK_MONOTONIC, &t1);\n");
    for a in meta.outputs() {
        let _ = writeln!(s, "  fnv_bytes({n}, {len} * sizeof *{n});", n = a.name, len = c_len(a.len.as_deref().unwrap_or("1")));
    }
    s.push_str("  long long ns = (long long)(t1.tv_sec - t0.tv_sec) * 1000000000LL + (t1.tv_nsec - t0.tv_nsec);\n");
    s.push_str("  printf(\"TIME_NS=%lld\\n\", ns);\n  printf(\"CHECKSUM=%016llx\\n\", (unsigned long long)fnv);\n");
    s.push_str("  if (argc > 3) {\n    FILE *f = fopen(argv[3], \"w\");\n    if (!f) return 4;\n");
    for a in meta.outputs() {
        let len = c_len(a.len.as_deref().unwrap_or("1"));
        let (fmt, cast) = print_fmt(&a.ty);
        let _ = writeln!(s, "    fprintf(f, \"{n} %zu\\n\", {len});", n = a.name);
        let _ = writeln!(s, "    for (size_t q = 0; q < {len}; q++) fprintf(f, \"{fmt}\\n\", {cast}{n}[q]);", n = a.name);
    }
    s.push_str("    fclose(f);\n  }\n");
    for a in &buffers {
        let _ = writeln!(s, "  free({});", a.name);
    }
    s.push_str("  return 0;\n}\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;
    use crate::kernels::KERNELS;

    #[test]
    fn output_contract() {
        let out = parse_driver_output("noise\nTIME_NS=1234\nCHECKSUM=00000000deadbeef\n").unwrap();
        assert_eq!(out, DriverOutput { time_ns: 1234, checksum: 0xdeadbeef });
        assert!(parse_driver_output("TIME_NS=1\n").is_err());
        assert!(parse_driver_output("CHECKSUM=zz\nTIME_NS=1").is_err());
    }

    #[test]
    fn dump_round_trip() {
        let d = parse_dump("C 2\n1.5\n-2\nout 1\n7\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].values, ["1.5", "-2"]);
        assert!(parse_dump("C 3\n1\n").is_err());
    }

    #[test]
    fn drivers_for_every_kernel() {
        for k in KERNELS {
            let u = parse(&k.file_name(), k.source).unwrap();
            let s = driver_source(&k.meta(), &u).unwrap();
            assert!(s.contains(&format!("{}(", k.meta().function)), "{}", k.name);
            assert!(s.contains("TIME_NS=") && s.contains("CHECKSUM="));
        }
        let k = crate::kernels::kernel("scaled_copy").unwrap();
        let s = driver_source(&k.meta(), &parse("s.c", k.source).unwrap()).unwrap();
        assert!(s.contains("scaled_copy(x, y, (float)(1.5), (int)n);"), "{s}");
    }

    #[test]
    fn metadata_must_cover_parameters() {
        let k = crate::kernels::kernel("dot").unwrap();
        let mut meta = k.meta();
        meta.args.retain(|a| a.name != "b");
        assert!(matches!(driver_source(&meta, &parse("d.c", k.source).unwrap()), Err(VerifyError::Driver(_))));
    }
}
