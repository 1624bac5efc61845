//! Atomic edits: the data model, the rule-based refiner that turns a
//! sentence pair into atomic edits, the positionless edit applier, and the
//! bracketed line format used to exchange edits with language models.

mod apply;
mod lines;
mod refine;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use apply::{
    apply_edits, apply_edits_limited, apply_edits_to, edit_units, Feasibility, FeasibilityResult, Placement,
    DEFAULT_STATE_LIMIT,
};
pub use lines::{parse_edit_lines, serialize_edits, EditParseError, ParsedEdits};
pub use refine::{
    extract_rule_based, postprocess, refine, similarity, RefineError, RefinerConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditOp {
    Insert,
    Delete,
    Replace,
    Relocate,
}

impl EditOp {
    pub fn as_str(self) -> &'static str {
        match self {
            EditOp::Insert => "insert",
            EditOp::Delete => "delete",
            EditOp::Replace => "replace",
            EditOp::Relocate => "relocate",
        }
    }
}

impl fmt::Display for EditOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EditOp {
    type Err = String;

    /// Accepts the four labels plus their noun forms and a few synonyms
    /// models tend to produce.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "insert" | "insertion" | "add" | "inserted" => Ok(EditOp::Insert),
            "delete" | "deletion" | "remove" | "deleted" => Ok(EditOp::Delete),
            "replace" | "replacement" | "substitute" | "substitution" | "replaced" => {
                Ok(EditOp::Replace)
            }
            "relocate" | "relocation" | "move" | "relocated" => Ok(EditOp::Relocate),
            other => Err(format!("unknown edit operation {other:?}")),
        }
    }
}

/// One atomic correction: `[op, original, target]` with optional token
/// spans (token indices for German, token indices of the segmented text for
/// Chinese).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "EditRepr")]
pub struct AtomicEdit {
    pub op: EditOp,
    pub orig: String,
    pub tgt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_span: Option<Range<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tgt_span: Option<Range<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvariantViolation {
    #[error("insert must have an empty original and a non-empty target")]
    Insert,
    #[error("delete must have a non-empty original and an empty target")]
    Delete,
    #[error("replace must have two non-empty sides")]
    ReplaceEmpty,
    #[error("replace must change the text")]
    ReplaceIdentity,
    #[error("relocated text must be the same before and after")]
    Relocate,
}

impl AtomicEdit {
    pub fn new(op: EditOp, orig: impl Into<String>, tgt: impl Into<String>) -> AtomicEdit {
        AtomicEdit {
            op,
            orig: orig.into(),
            tgt: tgt.into(),
            src_span: None,
            tgt_span: None,
        }
    }

    pub fn insert(tgt: impl Into<String>) -> AtomicEdit {
        Self::new(EditOp::Insert, "", tgt)
    }

    pub fn delete(orig: impl Into<String>) -> AtomicEdit {
        Self::new(EditOp::Delete, orig, "")
    }

    pub fn replace(orig: impl Into<String>, tgt: impl Into<String>) -> AtomicEdit {
        Self::new(EditOp::Replace, orig, tgt)
    }

    pub fn relocate(text: impl Into<String>) -> AtomicEdit {
        let text = text.into();
        Self::new(EditOp::Relocate, text.clone(), text)
    }

    pub fn with_spans(mut self, src: Option<Range<usize>>, tgt: Option<Range<usize>>) -> Self {
        self.src_span = src;
        self.tgt_span = tgt;
        self
    }

    /// The `(op, orig, tgt)` triple that evaluation compares.
    pub fn key(&self) -> (EditOp, &str, &str) {
        (self.op, &self.orig, &self.tgt)
    }

    pub fn without_spans(&self) -> AtomicEdit {
        AtomicEdit::new(self.op, self.orig.clone(), self.tgt.clone())
    }

    pub fn validate(&self) -> Result<(), InvariantViolation> {
        let (o, t) = (self.orig.is_empty(), self.tgt.is_empty());
        match self.op {
            EditOp::Insert if !o || t => Err(InvariantViolation::Insert),
            EditOp::Delete if o || !t => Err(InvariantViolation::Delete),
            EditOp::Replace if o || t => Err(InvariantViolation::ReplaceEmpty),
            EditOp::Replace if self.orig == self.tgt => Err(InvariantViolation::ReplaceIdentity),
            EditOp::Relocate if o || self.orig != self.tgt => Err(InvariantViolation::Relocate),
            _ => Ok(()),
        }
    }

    /// The bracketed wire form, e.g. `["replace", "ein", "einen"]`.
    pub fn to_line(&self) -> String {
        format!(
            "[{}, {}, {}]",
            json_str(self.op.as_str()),
            json_str(&self.orig),
            json_str(&self.tgt)
        )
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

impl fmt::Display for AtomicEdit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

/// Accepted JSON shapes: the full object, or a bare `["op", "orig", "tgt"]`
/// triple as written in hand-made corpora.
#[derive(Deserialize)]
#[serde(untagged)]
enum EditRepr {
    Triple(String, String, String),
    Full {
        op: String,
        #[serde(default)]
        orig: String,
        #[serde(default)]
        tgt: String,
        #[serde(default)]
        src_span: Option<Range<usize>>,
        #[serde(default)]
        tgt_span: Option<Range<usize>>,
    },
}

impl TryFrom<EditRepr> for AtomicEdit {
    type Error = String;

    fn try_from(repr: EditRepr) -> Result<Self, Self::Error> {
        match repr {
            EditRepr::Triple(op, orig, tgt) => Ok(AtomicEdit::new(op.parse()?, orig, tgt)),
            EditRepr::Full {
                op,
                orig,
                tgt,
                src_span,
                tgt_span,
            } => Ok(AtomicEdit::new(op.parse()?, orig, tgt).with_spans(src_span, tgt_span)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants() {
        assert!(AtomicEdit::insert("Ich").validate().is_ok());
        assert!(AtomicEdit::relocate("machen").validate().is_ok());
        assert_eq!(
            AtomicEdit::replace("x", "x").validate(),
            Err(InvariantViolation::ReplaceIdentity)
        );
        assert_eq!(
            AtomicEdit::new(EditOp::Relocate, "a", "b").validate(),
            Err(InvariantViolation::Relocate)
        );
        assert_eq!(
            AtomicEdit::new(EditOp::Insert, "a", "b").validate(),
            Err(InvariantViolation::Insert)
        );
        assert_eq!(
            AtomicEdit::new(EditOp::Delete, "", "").validate(),
            Err(InvariantViolation::Delete)
        );
    }

    #[test]
    fn line_form() {
        assert_eq!(AtomicEdit::insert("Ich").to_line(), r#"["insert", "", "Ich"]"#);
        assert_eq!(
            AtomicEdit::relocate("machen").to_line(),
            r#"["relocate", "machen", "machen"]"#
        );
    }

    #[test]
    fn json_accepts_triples_and_objects() {
        let e: AtomicEdit = serde_json::from_str(r#"["delete", "?", ""]"#).unwrap();
        assert_eq!(e, AtomicEdit::delete("?"));
        let e: AtomicEdit = serde_json::from_str(
            r#"{"op":"replace","orig":"ein","tgt":"einen","src_span":{"start":2,"end":3}}"#,
        )
        .unwrap();
        assert_eq!(e.src_span, Some(2..3));
        assert!(serde_json::from_str::<AtomicEdit>(r#"["swap", "a", "b"]"#).is_err());
        let back = serde_json::to_string(&AtomicEdit::insert("a")).unwrap();
        assert_eq!(back, r#"{"op":"insert","orig":"","tgt":"a"}"#);
    }
}
