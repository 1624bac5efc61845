//! Stage files. Each stage writes JSONL that the next one reads back, so
//! any stage can be inspected or edited by hand.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use gee_core::atomic::Feasibility;
use gee_core::llm::Explanation;
use gee_core::{AtomicEdit, SentencePair};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Output of `extract`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedPair {
    #[serde(flatten)]
    pub pair: SentencePair,
    pub mode: String,
    pub edits: Vec<AtomicEdit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<Feasibility>,
    /// Digest of the model request, in llm mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Output of `explain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedPair {
    #[serde(flatten)]
    pub pair: SentencePair,
    pub edits: Vec<AtomicEdit>,
    pub explanations: Vec<Explanation>,
    /// Per edit: whether some explanation covers it.
    pub explained: Vec<bool>,
    /// Indices of explanations that describe no edit.
    pub hallucinated: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Edits of one pair, read from either stage file or from a corpus.
#[derive(Debug, Deserialize)]
pub struct EditsOnly {
    pub id: String,
    #[serde(default)]
    pub edits: Option<Vec<AtomicEdit>>,
    #[serde(default)]
    pub gold_edits: Option<Vec<AtomicEdit>>,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

/// `dir/name.json` -> `dir/name.<suffix>`
pub fn sibling(path: &Path, suffix: &str) -> std::path::PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}"))
}
