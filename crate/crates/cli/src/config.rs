//! The configuration file: reasoner, toolchain and verification settings.
//!
//! ```toml
//! [reasoner]
//! backend = "http"
//! endpoint = "http://localhost:11434"
//! model = "qwen2.5:1.5b"
//! strategy = "tree_of_thoughts"
//!
//! [toolchain]
//! compiler = "gcc"
//! timeout_secs = 60
//!
//! [verify]
//! threads = 4
//! seeds = [1, 2, 3]
//! sanitizer_repeats = 3
//! ```
//!
//! Command-line flags override the file; `AUTOPAR_ENDPOINT` overrides the
//! endpoint in the file but not the `--endpoint` flag.

use std::path::Path;

use autopar_core::reasoner::ReasonerConfig;
use autopar_core::verify::{Toolchain, VerifyOptions};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub threads: usize,
    pub seeds: Vec<u64>,
    pub sanitizer_repeats: usize,
    pub size: Option<u64>,
    pub sanitizer_size: Option<u64>,
}

impl Default for VerifySection {
    fn default() -> Self {
        let d = VerifyOptions::default();
        VerifySection {
            threads: d.threads,
            seeds: d.seeds,
            sanitizer_repeats: d.sanitizer_repeats,
            size: None,
            sanitizer_size: None,
        }
    }
}

impl VerifySection {
    pub fn options(&self) -> VerifyOptions {
        VerifyOptions {
            threads: self.threads,
            seeds: self.seeds.clone(),
            sanitizer_repeats: self.sanitizer_repeats,
            size: self.size,
            sanitizer_size: self.sanitizer_size,
            workspace: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub reasoner: ReasonerConfig,
    pub toolchain: Toolchain,
    pub verify: VerifySection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_example_parses() {
        let doc = include_str!("config.rs");
        let example: String = doc
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start().to_string() + "\n")
            .collect();
        let c: FileConfig = toml::from_str(&example).unwrap();
        assert_eq!(c.reasoner.endpoint.as_deref(), Some("http://localhost:11434"));
        assert_eq!(c.verify.seeds, [1, 2, 3]);
        assert_eq!(c.toolchain.compiler, "gcc");
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(toml::from_str::<FileConfig>("[reasoner]\nmodle = \"x\"\n").is_err());
        assert!(toml::from_str::<FileConfig>("[other]\n").is_err());
        assert_eq!(toml::from_str::<FileConfig>("").unwrap(), FileConfig::default());
    }
}
