//! Grammar error explanation toolkit.
//!
//! Two-step pipeline over (erroneous, corrected) sentence pairs: extract
//! atomic token edits (rule-based or with a prompted language model), then
//! ask a language model for one explanation per edit. The [`eval`] module
//! scores both steps.

pub mod atomic;
pub mod corpus;
pub mod diff;
pub mod eval;
pub mod llm;
pub mod tokenize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Language of a sentence pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    De,
    Zh,
}

impl Lang {
    pub fn as_str(self) -> &'static str {
        match self {
            Lang::De => "de",
            Lang::Zh => "zh",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Lang {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "de" | "german" => Ok(Lang::De),
            "zh" | "chinese" => Ok(Lang::Zh),
            other => Err(format!("unknown language {other:?} (expected de or zh)")),
        }
    }
}

pub use atomic::{AtomicEdit, EditOp};
pub use corpus::SentencePair;

pub use tokenize::{Lexicon, TokenSeq, Tokenizer};
