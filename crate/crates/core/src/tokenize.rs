//! Tokenizers for German and Chinese with character offsets.
//!
//! German text is split on whitespace, and punctuation from a configurable
//! set is detached from the start and end of every chunk. Chinese text is
//! segmented by forward maximum matching against a [`Lexicon`].
//!
//! Offsets are character offsets (not bytes) into [`TokenSeq::original`],
//! so [`detokenize`] can rebuild the exact input.

use std::collections::HashSet;
use std::io::{self, BufRead};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Lang;

/// Word list bundled with the crate, used when no lexicon path is configured.
pub const DEFAULT_LEXICON: &str = include_str!("../assets/lexicon_zh.txt");

const GERMAN_PUNCTUATION: &[char] = &[
    '.', ',', '!', '?', ';', ':', '"', '\'', '„', '“', '(', ')', '—',
];

const GERMAN_ABBREVIATIONS: &[&str] = &["ca.", "z.B.", "bzw.", "usw.", "Nr.", "Dr."];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon line {line}: entry {entry:?} contains whitespace")]
    Whitespace { line: usize, entry: String },
    #[error("reading lexicon: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub index: usize,
    pub char_start: usize,
    pub char_end: usize,
}

/// A tokenized sentence that remembers the text it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub tokens: Vec<Token>,
    pub original: String,
    pub lang: Lang,
}

impl TokenSeq {
    /// Builds a sequence from bare token strings. The original text is the
    /// normalized join of the words (see [`join_tokens`]).
    pub fn from_words<S: AsRef<str>>(lang: Lang, words: &[S]) -> TokenSeq {
        let mut original = String::new();
        let mut tokens = Vec::with_capacity(words.len());
        let mut offset = 0usize;
        let mut prev: Option<&str> = None;
        for (index, word) in words.iter().enumerate() {
            let word = word.as_ref();
            if needs_space(lang, prev, word) {
                original.push(' ');
                offset += 1;
            }
            let len = word.chars().count();
            original.push_str(word);
            tokens.push(Token {
                text: word.to_string(),
                index,
                char_start: offset,
                char_end: offset + len,
            });
            offset += len;
            prev = Some(word);
        }
        TokenSeq {
            tokens,
            original,
            lang,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// Joins the tokens in `range` the way edit strings are written:
    /// space-separated for German, concatenated for Chinese.
    pub fn span_text(&self, range: std::ops::Range<usize>) -> String {
        join_edit_text(
            self.lang,
            self.tokens[range].iter().map(|t| t.text.as_str()),
        )
    }
}

/// Joins tokens into an edit string: single spaces for German, nothing for
/// Chinese.
pub fn join_edit_text<'a, I>(lang: Lang, parts: I) -> String
where
    I: IntoIterator<Item = &'a str>,
{
    let sep = match lang {
        Lang::De => " ",
        Lang::Zh => "",
    };
    parts.into_iter().collect::<Vec<_>>().join(sep)
}

fn is_closing(word: &str) -> bool {
    matches!(
        word,
        "." | "," | "!" | "?" | ";" | ":" | ")" | "]" | "“" | "…"
    )
}

fn is_opening(word: &str) -> bool {
    matches!(word, "(" | "[" | "„")
}

fn needs_space(lang: Lang, prev: Option<&str>, word: &str) -> bool {
    match (lang, prev) {
        (Lang::Zh, _) | (_, None) => false,
        (Lang::De, Some(prev)) => !is_closing(word) && !is_opening(prev),
    }
}

/// Joins tokens without offsets. German tokens are separated by single
/// spaces, except that closing punctuation attaches to the previous token and
/// opening brackets/quotes attach to the next one.
pub fn join_tokens<S: AsRef<str>>(lang: Lang, words: &[S]) -> String {
    TokenSeq::from_words(lang, words).original
}

/// Rebuilds the text of a sequence, reproducing the gaps recorded in the
/// original text.
pub fn detokenize(seq: &TokenSeq) -> String {
    let chars: Vec<char> = seq.original.chars().collect();
    let mut out = String::with_capacity(seq.original.len());
    let mut pos = 0usize;
    for tok in &seq.tokens {
        let start = tok.char_start.min(chars.len()).max(pos);
        out.extend(&chars[pos..start]);
        out.push_str(&tok.text);
        pos = tok.char_end.min(chars.len()).max(start);
    }
    out.extend(&chars[pos..]);
    out
}

/// Rules for German tokenization.
#[derive(Debug, Clone)]
pub struct GermanRules {
    pub punctuation: HashSet<char>,
    pub abbreviations: HashSet<String>,
}

impl Default for GermanRules {
    fn default() -> Self {
        GermanRules {
            punctuation: GERMAN_PUNCTUATION.iter().copied().collect(),
            abbreviations: GERMAN_ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl GermanRules {
    fn keeps_period(&self, core: &[char]) -> bool {
        let s: String = core.iter().collect();
        self.abbreviations.contains(&s) || is_numeric_with_period(core)
    }
}

/// `30.04.`, `1.`, `12.3.2012.`: digit groups separated and terminated by
/// periods.
fn is_numeric_with_period(core: &[char]) -> bool {
    if core.len() < 2 || core[core.len() - 1] != '.' {
        return false;
    }
    let body = &core[..core.len() - 1];
    body.split(|c| *c == '.')
        .all(|group| !group.is_empty() && group.iter().all(|c| c.is_ascii_digit()))
}

pub fn tokenize_german(text: &str) -> TokenSeq {
    tokenize_german_with(text, &GermanRules::default())
}

pub fn tokenize_german_with(text: &str, rules: &GermanRules) -> TokenSeq {
    let chars: Vec<char> = text.chars().collect();
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_german_chunk(&chars, start, i, rules, &mut spans);
    }
    build_seq(Lang::De, text, &chars, spans)
}

fn split_german_chunk(
    chars: &[char],
    start: usize,
    end: usize,
    rules: &GermanRules,
    spans: &mut Vec<(usize, usize)>,
) {
    let mut lo = start;
    let mut hi = end;
    while lo < hi && rules.punctuation.contains(&chars[lo]) {
        spans.push((lo, lo + 1));
        lo += 1;
    }
    let mut trailing = Vec::new();
    while lo < hi && rules.punctuation.contains(&chars[hi - 1]) {
        if chars[hi - 1] == '.' && rules.keeps_period(&chars[lo..hi]) {
            break;
        }
        trailing.push((hi - 1, hi));
        hi -= 1;
    }
    if lo < hi {
        spans.push((lo, hi));
    }
    spans.extend(trailing.into_iter().rev());
}

fn build_seq(lang: Lang, text: &str, chars: &[char], spans: Vec<(usize, usize)>) -> TokenSeq {
    let tokens = spans
        .into_iter()
        .enumerate()
        .map(|(index, (s, e))| Token {
            text: chars[s..e].iter().collect(),
            index,
            char_start: s,
            char_end: e,
        })
        .collect();
    TokenSeq {
        tokens,
        original: text.to_string(),
        lang,
    }
}

/// A set of Chinese words for forward maximum matching. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashSet<String>,
    max_chars: usize,
}

impl Lexicon {
    pub fn new<I, S>(words: I) -> Lexicon
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut lex = Lexicon::default();
        for w in words {
            lex.insert(w.into());
        }
        lex
    }

    fn insert(&mut self, word: String) {
        if word.is_empty() {
            return;
        }
        self.max_chars = self.max_chars.max(word.chars().count());
        self.entries.insert(word);
    }

    /// Parses the word-per-line format. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Lexicon, LexiconError> {
        Self::from_reader(text.as_bytes())
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Lexicon, LexiconError> {
        let mut lex = Lexicon::default();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let entry = line.trim();
            if entry.is_empty() || entry.starts_with('#') {
                continue;
            }
            if entry.chars().any(char::is_whitespace) {
                return Err(LexiconError::Whitespace {
                    line: n + 1,
                    entry: entry.to_string(),
                });
            }
            lex.insert(entry.to_string());
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Lexicon, LexiconError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(io::BufReader::new(file))
    }

    pub fn bundled() -> Lexicon {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is well-formed")
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Length in chars of the longest entry starting at `chars[at..]`.
    fn longest_at(&self, chars: &[char], at: usize) -> Option<usize> {
        let limit = self.max_chars.min(chars.len() - at);
        let mut candidate = String::new();
        let mut best = None;
        for (k, c) in chars[at..at + limit].iter().enumerate() {
            if c.is_whitespace() {
                break;
            }
            candidate.push(*c);
            if self.entries.contains(&candidate) {
                best = Some(k + 1);
            }
        }
        best
    }
}

/// Punctuation for segmentation purposes: ASCII punctuation plus the common
/// CJK and general punctuation blocks.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c,
            '\u{00A1}'..='\u{00BF}'
            | '\u{2010}'..='\u{205E}'
            | '\u{3000}'..='\u{303F}'
            | '\u{FE30}'..='\u{FE4F}'
            | '\u{FF01}'..='\u{FF0F}'
            | '\u{FF1A}'..='\u{FF20}'
            | '\u{FF3B}'..='\u{FF40}'
            | '\u{FF5B}'..='\u{FF65}')
}

pub fn tokenize_chinese(text: &str, lexicon: &Lexicon) -> TokenSeq {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if is_punctuation(c) {
            spans.push((i, i + 1));
            i += 1;
            continue;
        }
        if let Some(len) = lexicon.longest_at(&chars, i) {
            spans.push((i, i + len));
            i += len;
            continue;
        }
        if c.is_ascii_alphanumeric() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            spans.push((start, i));
            continue;
        }
        spans.push((i, i + 1));
        i += 1;
    }
    build_seq(Lang::Zh, text, &chars, spans)
}

/// Bundles the per-language tokenizer configuration.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    pub lexicon: Arc<Lexicon>,
    pub german: GermanRules,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::new(Lexicon::bundled())
    }
}

impl Tokenizer {
    pub fn new(lexicon: Lexicon) -> Tokenizer {
        Tokenizer {
            lexicon: Arc::new(lexicon),
            german: GermanRules::default(),
        }
    }

    pub fn tokenize(&self, lang: Lang, text: &str) -> TokenSeq {
        match lang {
            Lang::De => tokenize_german_with(text, &self.german),
            Lang::Zh => tokenize_chinese(text, &self.lexicon),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(seq: &TokenSeq) -> Vec<&str> {
        seq.texts()
    }

    #[test]
    fn german_detaches_sentence_final_period() {
        let seq = tokenize_german("Ich möchte machen ein termin.");
        assert_eq!(
            words(&seq),
            ["Ich", "möchte", "machen", "ein", "termin", "."]
        );
    }

    #[test]
    fn german_keeps_date_and_abbreviation_periods() {
        let seq = tokenize_german("Bis 30.04. muss ich ca. 75 m² finden.");
        assert_eq!(
            words(&seq),
            ["Bis", "30.04.", "muss", "ich", "ca.", "75", "m²", "finden", "."]
        );
        // no trailing period: nothing to keep
        assert_eq!(words(&tokenize_german("Bis 30.04 ich")), ["Bis", "30.04", "ich"]);
    }

    #[test]
    fn german_keeps_internal_hyphen() {
        let seq = tokenize_german("die Wohnungs- und Hauspreise");
        assert_eq!(words(&seq), ["die", "Wohnungs-", "und", "Hauspreise"]);
    }

    #[test]
    fn german_splits_stacked_punctuation() {
        let seq = tokenize_german("möchte machen ein Termine.?");
        assert_eq!(
            words(&seq),
            ["möchte", "machen", "ein", "Termine", ".", "?"]
        );
        let seq = tokenize_german("als „fremd“ empfindet.");
        assert_eq!(words(&seq), ["als", "„", "fremd", "“", "empfindet", "."]);
    }

    #[test]
    fn german_offsets_point_into_original() {
        let text = "  Hast du  Seit, für mich?";
        let seq = tokenize_german(text);
        let chars: Vec<char> = text.chars().collect();
        for tok in &seq.tokens {
            let s: String = chars[tok.char_start..tok.char_end].iter().collect();
            assert_eq!(s, tok.text);
        }
        assert_eq!(detokenize(&seq), text);
    }

    #[test]
    fn chinese_forward_maximum_matching() {
        let lex = Lexicon::new(["菜市场", "水果"]);
        let seq = tokenize_chinese("我去菜市场买水果。", &lex);
        assert_eq!(words(&seq), ["我", "去", "菜市场", "买", "水果", "。"]);

        let lex = Lexicon::new(["明天", "上午"]);
        assert_eq!(words(&tokenize_chinese("明天上午", &lex)), ["明天", "上午"]);
    }

    #[test]
    fn chinese_prefers_longest_entry() {
        let lex = Lexicon::new(["菜", "菜市", "菜市场"]);
        assert_eq!(words(&tokenize_chinese("菜市场", &lex)), ["菜市场"]);
    }

    #[test]
    fn chinese_empty_lexicon_falls_back_to_characters() {
        let seq = tokenize_chinese("我去菜市场", &Lexicon::default());
        assert_eq!(words(&seq), ["我", "去", "菜", "市", "场"]);
    }

    #[test]
    fn chinese_groups_ascii_runs_and_isolates_punctuation() {
        let seq = tokenize_chinese("我考HSK 2017，好！", &Lexicon::default());
        assert_eq!(words(&seq), ["我", "考", "HSK", "2017", "，", "好", "！"]);
        assert_eq!(detokenize(&seq), "我考HSK 2017，好！");
    }

    #[test]
    fn detokenize_without_original_gaps() {
        assert_eq!(join_tokens(Lang::De, &["Ich", "gehe", "."]), "Ich gehe.");
        assert_eq!(
            join_tokens(Lang::De, &["Er", "sagt", "„", "ja", "“", "."]),
            "Er sagt „ja“."
        );
        assert_eq!(join_tokens(Lang::Zh, &["我", "去", "菜市场"]), "我去菜市场");
    }

    #[test]
    fn lexicon_parsing() {
        let lex = Lexicon::parse("# comment\n水果\n\n 菜市场 \n").unwrap();
        assert_eq!(lex.len(), 2);
        assert!(lex.contains("菜市场"));
        assert!(matches!(
            Lexicon::parse("水 果\n"),
            Err(LexiconError::Whitespace { line: 1, .. })
        ));
    }

    #[test]
    fn bundled_lexicon_loads() {
        let lex = Lexicon::bundled();
        assert!(lex.contains("菜市场"));
    }
}
