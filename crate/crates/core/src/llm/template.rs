//! Prompt templates.
//!
//! Bundled templates are kept byte for byte as published, so they do not
//! all use the same placeholder names: `{src}` may appear as
//! `{original_sentence}`, `{trg}` as `{corrected_sentence}` and `{edits}` as
//! `{edit}`. Each group of names is treated as one slot.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::{serialize_edits, AtomicEdit};
use crate::corpus::SentencePair;
use crate::diff::{coarse_edits_text, CoarseEdit};
use crate::Lang;

const EXTRACT_DE: &str = include_str!("../../assets/prompts/extract_de.txt");
const EXTRACT_ZH: &str = include_str!("../../assets/prompts/extract_zh.txt");
const EXPLAIN_DE: &str = include_str!("../../assets/prompts/explain_de.txt");
const EXPLAIN_ZH: &str = include_str!("../../assets/prompts/explain_zh.txt");
const BASELINE_DE: &str = include_str!("../../assets/prompts/baseline_oneshot_de.txt");

const SRC_NAMES: &[&str] = &["src", "original_sentence"];
const TRG_NAMES: &[&str] = &["trg", "corrected_sentence"];
const EDITS_NAMES: &[&str] = &["edits", "edit"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Extract,
    Explain,
    BaselineOneshot,
}

impl Step {
    pub fn as_str(self) -> &'static str {
        match self {
            Step::Extract => "extract",
            Step::Explain => "explain",
            Step::BaselineOneshot => "baseline_oneshot",
        }
    }

    fn needs_edits(self) -> bool {
        !matches!(self, Step::BaselineOneshot)
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Step {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "extract" => Ok(Step::Extract),
            "explain" => Ok(Step::Explain),
            "baseline_oneshot" | "baseline" => Ok(Step::BaselineOneshot),
            other => Err(format!("unknown prompt step {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {name:?} has no {{{slot}}} placeholder")]
    MissingPlaceholder { name: String, slot: &'static str },
    #[error("template {name:?} needs edits to fill {{{slot}}}")]
    MissingInput { name: String, slot: &'static str },
    #[error("no bundled {step} template for {lang}")]
    NoBuiltin { lang: Lang, step: Step },
    #[error("reading template {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub lang: Lang,
    pub step: Step,
}

/// Edits in the form the step expects: coarse tuples for extraction, atomic
/// lines for explanation.
#[derive(Debug, Clone, Copy)]
pub enum PromptEdits<'a> {
    Coarse(&'a [CoarseEdit]),
    Atomic(&'a [AtomicEdit]),
}

impl PromptEdits<'_> {
    fn render(&self) -> String {
        match self {
            PromptEdits::Coarse(edits) => coarse_edits_text(edits),
            PromptEdits::Atomic(edits) => serialize_edits(edits),
        }
    }
}

fn find_slot(body: &str, names: &[&str]) -> bool {
    names.iter().any(|n| body.contains(&format!("{{{n}}}")))
}

impl PromptTemplate {
    pub fn new(
        name: impl Into<String>,
        body: impl Into<String>,
        lang: Lang,
        step: Step,
    ) -> Result<PromptTemplate, TemplateError> {
        let t = PromptTemplate {
            name: name.into(),
            body: body.into(),
            lang,
            step,
        };
        let mut required = vec![("src", SRC_NAMES), ("trg", TRG_NAMES)];
        if step.needs_edits() {
            required.push(("edits", EDITS_NAMES));
        }
        for (slot, names) in required {
            if !find_slot(&t.body, names) {
                return Err(TemplateError::MissingPlaceholder {
                    name: t.name.clone(),
                    slot,
                });
            }
        }
        Ok(t)
    }

    pub fn builtin(lang: Lang, step: Step) -> Result<PromptTemplate, TemplateError> {
        let body = match (lang, step) {
            (Lang::De, Step::Extract) => EXTRACT_DE,
            (Lang::Zh, Step::Extract) => EXTRACT_ZH,
            (Lang::De, Step::Explain) => EXPLAIN_DE,
            (Lang::Zh, Step::Explain) => EXPLAIN_ZH,
            (Lang::De, Step::BaselineOneshot) => BASELINE_DE,
            (Lang::Zh, Step::BaselineOneshot) => return Err(TemplateError::NoBuiltin { lang, step }),
        };
        PromptTemplate::new(format!("{step}_{lang}"), body, lang, step)
    }

    pub fn load(path: &Path, lang: Lang, step: Step) -> Result<PromptTemplate, TemplateError> {
        let body = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        PromptTemplate::new(path.display().to_string(), body, lang, step)
    }

    /// Fills the placeholders in one pass, so text that happens to contain
    /// `{src}` is never substituted twice.
    pub fn render(
        &self,
        source: &str,
        target: &str,
        edits: Option<PromptEdits<'_>>,
    ) -> Result<String, TemplateError> {
        let edits_text = edits.map(|e| e.render());
        if self.step.needs_edits() && edits_text.is_none() {
            return Err(TemplateError::MissingInput {
                name: self.name.clone(),
                slot: "edits",
            });
        }
        let mut out = String::with_capacity(self.body.len() + source.len() + target.len());
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let close = after.find('}');
            let name = close.map(|c| &after[..c]);
            let value = match name {
                Some(n) if SRC_NAMES.contains(&n) => Some(source),
                Some(n) if TRG_NAMES.contains(&n) => Some(target),
                Some(n) if EDITS_NAMES.contains(&n) => edits_text.as_deref(),
                _ => None,
            };
            match (value, close) {
                (Some(v), Some(c)) => {
                    out.push_str(v);
                    rest = &after[c + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

pub fn render_prompt(
    template: &PromptTemplate,
    pair: &SentencePair,
    edits: Option<PromptEdits<'_>>,
) -> Result<String, TemplateError> {
    template.render(&pair.source, &pair.target, edits)
}
