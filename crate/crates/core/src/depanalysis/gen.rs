//! Random subset loops for property tests.

use rand::Rng;

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub max_trip: i64,
    pub max_coeff: i64,
    /// At most 2 arrays, named `a` and `b`.
    pub arrays: usize,
    pub max_stmts: usize,
    /// Element type of the arrays and scalars.
    pub float: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { max_trip: 6, max_coeff: 4, arrays: 2, max_stmts: 3, float: false }
    }
}

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    cfg: &'r GenConfig,
    /// Induction variables in scope, outermost first.
    ivs: Vec<&'static str>,
    fresh: usize,
}

impl<R: Rng> Gen<'_, R> {
    fn array(&mut self) -> &'static str {
        ["a", "b"][self.rng.random_range(0..self.cfg.arrays.clamp(1, 2))]
    }

    fn coeff(&mut self) -> i64 {
        self.rng.random_range(-self.cfg.max_coeff..=self.cfg.max_coeff)
    }

    fn subscript(&mut self) -> String {
        let mut parts = Vec::new();
        for iv in self.ivs.clone() {
            match self.coeff() {
                0 => {}
                1 => parts.push(iv.to_string()),
                c => parts.push(format!("{c}*{iv}")),
            }
        }
        if !self.cfg.float && self.rng.random_bool(0.2) {
            parts.push("s".to_string());
        }
        let c0 = self.rng.random_range(0..=2 * self.cfg.max_coeff);
        if parts.is_empty() || c0 != 0 {
            parts.push(c0.to_string());
        }
        parts.join(" + ").replace("+ -", "- ")
    }

    fn cell(&mut self) -> String {
        let a = self.array();
        let s = self.subscript();
        format!("{a}[{s}]")
    }

    fn leaf(&mut self) -> String {
        match self.rng.random_range(0..6) {
            0 | 1 => self.cell(),
            2 => "s".to_string(),
            3 => "t".to_string(),
            4 => self.ivs[self.rng.random_range(0..self.ivs.len())].to_string(),
            _ => self.rng.random_range(1..4).to_string(),
        }
    }

    fn expr(&mut self) -> String {
        match self.rng.random_range(0..3) {
            0 => self.leaf(),
            _ => {
                let op = ["+", "-", "*"][self.rng.random_range(0..3)];
                format!("{} {op} {}", self.leaf(), self.leaf())
            }
        }
    }

    fn lhs(&mut self) -> String {
        match self.rng.random_range(0..5) {
            0 => "s".to_string(),
            1 => "t".to_string(),
            _ => self.cell(),
        }
    }

    fn stmt(&mut self, indent: usize, depth: usize) -> String {
        let pad = "  ".repeat(indent);
        match self.rng.random_range(0..10) {
            0 if depth < 2 => {
                let iv = ["j", "k"][depth - 1];
                let trip = self.rng.random_range(1..=self.cfg.max_trip.min(3));
                self.ivs.push(iv);
                let body = self.stmt(indent + 1, depth + 1);
                self.ivs.pop();
                format!("{pad}for (int {iv} = 0; {iv} < {trip}; {iv}++)\n{body}")
            }
            1 => {
                let c = self.expr();
                let body = self.stmt(indent + 1, depth);
                format!("{pad}if ({c} > 0)\n{body}")
            }
            2 => {
                let l = self.lhs();
                let op = ["+=", "-=", "*="][self.rng.random_range(0..3)];
                let e = self.expr();
                format!("{pad}{l} {op} {e};\n")
            }
            3 => {
                let e = self.expr();
                self.fresh += 1;
                let ty = if self.cfg.float { "float" } else { "int" };
                format!("{pad}{{\n{pad}  {ty} u{n} = {e};\n{pad}  {} = u{n};\n{pad}}}\n", self.cell(), n = self.fresh)
            }
            _ => {
                let l = self.lhs();
                let e = self.expr();
                format!("{pad}{l} = {e};\n")
            }
        }
    }
}

/// A function `k` with one outer loop over `i` and a random body.
pub fn random_loop<R: Rng>(rng: &mut R, cfg: &GenConfig) -> String {
    let ty = if cfg.float { "float" } else { "int" };
    let lo = rng.random_range(0..=2);
    let trip = rng.random_range(1..=cfg.max_trip);
    let mut g = Gen { rng, cfg, ivs: vec!["i"], fresh: 0 };
    let n = g.rng.random_range(1..=cfg.max_stmts);
    let mut body = String::new();
    for _ in 0..n {
        body.push_str(&g.stmt(2, 1));
    }
    format!(
        "void k({ty}* a, {ty}* b, {ty}* out) {{\n  {ty} s = 1;\n  int t = 0;\n  for (int i = {lo}; i < {hi}; i++) {{\n{body}  }}\n  out[0] = s;\n}}\n",
        hi = lo + trip
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_loops_parse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for cfg in [GenConfig::default(), GenConfig { float: true, ..GenConfig::default() }] {
            for _ in 0..200 {
                let src = random_loop(&mut rng, &cfg);
                let unit = crate::frontend::parse("g.c", &src).unwrap_or_else(|e| panic!("{e}\n{src}"));
                assert!(!unit.functions[0].loops().is_empty());
            }
        }
    }
}
