//! Parsing explanation replies.
//!
//! Expected shape, repeated once per edit:
//!
//! ```text
//! The word 'mein' is replaced by 'meine' because ...
//! Error type: gender and case agreement
//! ```

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    /// The part before the first " because ".
    pub edit_desc: String,
    pub reason: String,
    pub error_type: String,
    /// The block as it appeared in the reply.
    pub raw: String,
    /// Index of the edit this explanation was linked to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_edit: Option<usize>,
}

impl Explanation {
    pub fn from_sentence(sentence: &str, error_type: &str) -> (Explanation, bool) {
        let sentence = sentence.trim();
        let (edit_desc, reason, split) = match sentence.find(" because ") {
            Some(at) => (&sentence[..at], &sentence[at + " because ".len()..], true),
            None => (sentence, "", false),
        };
        let raw = if error_type.is_empty() {
            sentence.to_string()
        } else {
            format!("{sentence}\nError type: {error_type}")
        };
        (
            Explanation {
                edit_desc: edit_desc.to_string(),
                reason: reason.to_string(),
                error_type: error_type.trim().to_string(),
                raw,
                matched_edit: None,
            },
            split,
        )
    }

    /// The explanation sentence, rebuilt from its two halves.
    pub fn sentence(&self) -> String {
        if self.reason.is_empty() {
            self.edit_desc.clone()
        } else {
            format!("{} because {}", self.edit_desc, self.reason)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedExplanations {
    pub explanations: Vec<Explanation>,
    pub warnings: Vec<String>,
}

const TYPE_LABEL: &str = "error type:";

/// Byte offset of a case-insensitive "Error type:" in `line`.
fn type_label_at(line: &str) -> Option<usize> {
    let lower = line.to_lowercase();
    // lowercase can change byte lengths; only trust the match if it maps back
    let at = lower.find(TYPE_LABEL)?;
    line.get(at..at + TYPE_LABEL.len())
        .filter(|s| s.eq_ignore_ascii_case(TYPE_LABEL))
        .map(|_| at)
}

fn strip_marker(line: &str) -> &str {
    let line = line.trim();
    let line = line.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(r) = rest.strip_prefix(['.', ')']) {
            return r.trim_start();
        }
    }
    line
}

fn clean_type(s: &str) -> &str {
    s.trim().trim_matches('*').trim()
}

pub fn parse_explanations(text: &str) -> ParsedExplanations {
    let mut out = ParsedExplanations::default();
    // sentence waiting for its type line
    let mut pending: Option<String> = None;

    let flush = |pending: &mut Option<String>, error_type: &str, out: &mut ParsedExplanations| {
        if let Some(sentence) = pending.take() {
            let (e, split) = Explanation::from_sentence(&sentence, error_type);
            if !split {
                out.warnings.push(format!("no \"because\" in {sentence:?}"));
            }
            if error_type.is_empty() {
                out.warnings.push(format!("no error type after {sentence:?}"));
            }
            out.explanations.push(e);
        }
    };

    for raw_line in text.lines() {
        let line = strip_marker(raw_line).trim_matches('*').trim();
        if line.is_empty() {
            continue;
        }
        let lower = line.to_lowercase();
        if lower == "explanation:" || lower == "explanations:" {
            continue;
        }
        match type_label_at(line) {
            Some(0) => {
                let t = clean_type(&line[TYPE_LABEL.len()..]);
                if pending.is_some() {
                    flush(&mut pending, t, &mut out);
                } else {
                    out.warnings.push(format!("error type {t:?} without an explanation"));
                }
            }
            Some(at) => {
                flush(&mut pending, "", &mut out);
                let sentence = line[..at].trim().to_string();
                let t = clean_type(&line[at + TYPE_LABEL.len()..]);
                pending = Some(sentence);
                flush(&mut pending, t, &mut out);
            }
            None => {
                flush(&mut pending, "", &mut out);
                pending = Some(line.to_string());
            }
        }
    }
    flush(&mut pending, "", &mut out);
    out
}
