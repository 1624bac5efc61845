//! TOML configuration. Every field is optional; relative paths are resolved
//! against the directory holding the config file.
//!
//! ```toml
//! threads = 4
//! cache_dir = "cache"
//! run_log = "runs.jsonl"
//!
//! [provider]
//! kind = "openai"            # or "replay"
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! model = "gpt-4"
//! credential_env = "OPENAI_API_KEY"
//! transcript = "transcript.jsonl"   # replay only
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gee_core::atomic::RefinerConfig;
use gee_core::corpus::FilterConfig;
use gee_core::Lang;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub lang: Option<Lang>,
    pub threads: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub run_log: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub prompts: PromptPaths,
    #[serde(default)]
    pub refiner: RefinerSection,
    #[serde(default)]
    pub filter: Option<FilterConfig>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Openai,
    Replay,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default)]
    pub kind: ProviderKind,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub credential_env: String,
    pub transcript: Option<PathBuf>,
    pub max_tokens: Option<u32>,
    /// Overrides the retry count.
    pub max_attempts: Option<u32>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Openai,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            credential_env: "OPENAI_API_KEY".into(),
            transcript: None,
            max_tokens: None,
            max_attempts: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptPaths {
    pub extract_de: Option<PathBuf>,
    pub extract_zh: Option<PathBuf>,
    pub explain_de: Option<PathBuf>,
    pub explain_zh: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinerSection {
    pub similarity_threshold: Option<f64>,
    pub group_contiguous: Option<bool>,
    pub zh_particle_merge: Option<bool>,
    pub particle_list: Option<Vec<String>>,
}

impl RefinerSection {
    pub fn build(&self) -> RefinerConfig {
        let mut c = RefinerConfig::default();
        if let Some(t) = self.similarity_threshold {
            c.similarity_threshold = t;
        }
        if let Some(g) = self.group_contiguous {
            c.group_contiguous = g;
        }
        if let Some(m) = self.zh_particle_merge {
            c.zh_particle_merge = m;
        }
        if let Some(p) = &self.particle_list {
            c.particle_list = p.iter().cloned().collect();
        }
        c
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut c: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut c.cache_dir,
            &mut c.run_log,
            &mut c.lexicon,
            &mut c.provider.transcript,
            &mut c.prompts.extract_de,
            &mut c.prompts.extract_zh,
            &mut c.prompts.explain_de,
            &mut c.prompts.explain_zh,
        ] {
            rebase(base, p);
        }
        if c.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(c)
    }

    pub fn threads(&self) -> usize {
        self.threads.unwrap_or(4)
    }
}
