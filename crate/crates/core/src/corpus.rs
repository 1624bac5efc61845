//! Sentence-pair corpora: loading, language-specific filters, statistics and
//! fine-tuning export.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::{apply_edits, parse_edit_lines, serialize_edits, AtomicEdit, FeasibilityResult};
use crate::diff::coarse_edits;
use crate::llm::{render_prompt, PromptEdits, PromptTemplate, TemplateError};
use crate::tokenize::{tokenize_german, Tokenizer};
use crate::Lang;

/// The hand-built sample corpus shipped with the crate.
pub const MINI_CORPUS: &str = include_str!("../assets/mini_corpus.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cefr {
    A1,
    A2,
    B1,
    B2,
    C1,
    C2,
}

impl FromStr for Cefr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A1" => Ok(Cefr::A1),
            "A2" => Ok(Cefr::A2),
            "B1" => Ok(Cefr::B1),
            "B2" => Ok(Cefr::B2),
            "C1" => Ok(Cefr::C1),
            "C2" => Ok(Cefr::C2),
            other => Err(format!("unknown CEFR level {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub id: String,
    pub lang: Lang,
    /// The erroneous sentence.
    pub source: String,
    /// The corrected sentence.
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_edits: Option<Vec<AtomicEdit>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cefr: Option<Cefr>,
}

impl SentencePair {
    pub fn new(id: impl Into<String>, lang: Lang, source: impl Into<String>, target: impl Into<String>) -> Self {
        SentencePair {
            id: id.into(),
            lang,
            source: source.into(),
            target: target.into(),
            gold_edits: None,
            cefr: None,
        }
    }

    pub fn with_gold(mut self, edits: Vec<AtomicEdit>) -> Self {
        self.gold_edits = Some(edits);
        self
    }

    /// Applies the gold edits to the source; `None` without gold edits.
    pub fn check_gold(&self, tokenizer: &Tokenizer) -> Option<FeasibilityResult> {
        let gold = self.gold_edits.as_ref()?;
        let src = tokenizer.tokenize(self.lang, &self.source);
        Some(apply_edits(&src, &self.target, gold))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Tsv,
}

impl Format {
    /// Guesses from the file extension; JSONL otherwise.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => Format::Tsv,
            _ => Format::Jsonl,
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Jsonl => "jsonl",
            Format::Tsv => "tsv",
        })
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("pair {0:?} has no gold edits")]
    MissingGold(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Deserialize)]
struct RawPair {
    #[serde(default)]
    id: Option<serde_json::Value>,
    lang: Lang,
    source: String,
    target: String,
    #[serde(default)]
    gold_edits: Option<Vec<AtomicEdit>>,
    #[serde(default)]
    cefr: Option<Cefr>,
}

fn id_text(v: serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn check_sides(line: usize, pair: &SentencePair) -> Result<(), CorpusError> {
    if pair.source.trim().is_empty() || pair.target.trim().is_empty() {
        return Err(CorpusError::Malformed {
            line,
            message: "source and target must be non-empty".into(),
        });
    }
    Ok(())
}

/// Parses JSONL text. Ids default to the 1-based line number.
pub fn parse_jsonl(text: &str) -> Result<Vec<SentencePair>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPair = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let id = match raw.id {
            None | Some(serde_json::Value::Null) => line_no.to_string(),
            Some(v) => id_text(v).ok_or_else(|| CorpusError::Malformed {
                line: line_no,
                message: "id must be a string or a number".into(),
            })?,
        };
        let pair = SentencePair {
            id,
            lang: raw.lang,
            source: raw.source,
            target: raw.target,
            gold_edits: raw.gold_edits,
            cefr: raw.cefr,
        };
        check_sides(line_no, &pair)?;
        if !seen.insert(pair.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: pair.id,
            });
        }
        out.push(pair);
    }
    Ok(out)
}

/// Parses TSV text with columns `id, lang, source, target[, gold_edits[,
/// cefr]]`, gold edit lines joined by `|`. A header row starting with `id`
/// is skipped.
pub fn parse_tsv(text: &str) -> Result<Vec<SentencePair>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if n == 0 && cols.first() == Some(&"id") {
            continue;
        }
        let bad = |message: String| CorpusError::Malformed {
            line: line_no,
            message,
        };
        if cols.len() < 4 {
            return Err(bad(format!("expected at least 4 columns, found {}", cols.len())));
        }
        let lang: Lang = cols[1].parse().map_err(bad)?;
        let id = if cols[0].trim().is_empty() {
            line_no.to_string()
        } else {
            cols[0].trim().to_string()
        };
        let gold_edits = match cols.get(4).map(|c| c.trim()) {
            None | Some("") => None,
            Some(g) => {
                let parsed = parse_edit_lines(&g.replace("]|[", "]\n[")).map_err(|e| bad(e.to_string()))?;
                if !parsed.warnings.is_empty() {
                    return Err(bad(parsed.warnings.join("; ")));
                }
                Some(parsed.edits)
            }
        };
        let cefr = match cols.get(5).map(|c| c.trim()) {
            None | Some("") => None,
            Some(c) => Some(c.parse().map_err(bad)?),
        };
        let pair = SentencePair {
            id,
            lang,
            source: cols[2].to_string(),
            target: cols[3].to_string(),
            gold_edits,
            cefr,
        };
        check_sides(line_no, &pair)?;
        if !seen.insert(pair.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: pair.id,
            });
        }
        out.push(pair);
    }
    Ok(out)
}

pub fn load_pairs(path: &Path, format: Format) -> Result<Vec<SentencePair>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        Format::Jsonl => parse_jsonl(&text),
        Format::Tsv => parse_tsv(&text),
    }
}

pub fn mini_corpus() -> Vec<SentencePair> {
    parse_jsonl(MINI_CORPUS).expect("bundled corpus parses")
}

/// Writes pairs as JSONL.
pub fn write_pairs(path: &Path, pairs: &[SentencePair]) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_tokens: usize,
    pub banned_tokens: Vec<String>,
    pub check_sentence_count: bool,
    pub zh_min_tokens: usize,
    pub zh_max_tokens: usize,
    pub drop_identical: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_tokens: 3,
            banned_tokens: vec!["incomp".into(), "unreadable".into()],
            check_sentence_count: true,
            zh_min_tokens: 5,
            zh_max_tokens: 50,
            drop_identical: true,
        }
    }
}

/// Sentences in a German token sequence: runs of `.`, `!`, `?` tokens end a
/// sentence, and anything after the last run is one more. Abbreviations and
/// ordinals keep their period inside the token, so they never count.
pub fn count_german_sentences(text: &str) -> usize {
    let seq = tokenize_german(text);
    let mut count = 0;
    let mut open = false;
    let mut prev_terminal = false;
    for tok in &seq.tokens {
        let terminal = matches!(tok.text.as_str(), "." | "!" | "?");
        if terminal {
            if !prev_terminal {
                count += 1;
            }
            open = false;
        } else {
            open = true;
        }
        prev_terminal = terminal;
    }
    count + usize::from(open)
}

fn german_keep(p: &SentencePair, cfg: &FilterConfig) -> bool {
    let src = tokenize_german(&p.source);
    let tgt = tokenize_german(&p.target);
    if src.len() < cfg.min_tokens || tgt.len() < cfg.min_tokens {
        return false;
    }
    let banned = |t: &crate::tokenize::Token| cfg.banned_tokens.contains(&t.text);
    if src.tokens.iter().chain(&tgt.tokens).any(banned) {
        return false;
    }
    !cfg.check_sentence_count || count_german_sentences(&p.source) == count_german_sentences(&p.target)
}

/// Drops short pairs, pairs with placeholder tokens, and pairs whose two
/// sides have different sentence counts. Pairs in other languages pass
/// through.
pub fn filter_german(pairs: Vec<SentencePair>, cfg: &FilterConfig) -> Vec<SentencePair> {
    pairs
        .into_iter()
        .filter(|p| p.lang != Lang::De || german_keep(p, cfg))
        .collect()
}

/// Keeps pairs whose source length in tokens is within bounds and whose
/// sides differ. Pairs in other languages pass through.
pub fn filter_chinese(pairs: Vec<SentencePair>, cfg: &FilterConfig, tokenizer: &Tokenizer) -> Vec<SentencePair> {
    pairs
        .into_iter()
        .filter(|p| {
            if p.lang != Lang::Zh {
                return true;
            }
            let n = tokenizer.tokenize(Lang::Zh, &p.source).len();
            let in_range = (cfg.zh_min_tokens..=cfg.zh_max_tokens).contains(&n);
            in_range && !(cfg.drop_identical && p.source == p.target)
        })
        .collect()
}

/// Runs the filter chain for each pair's language.
pub fn filter_pairs(pairs: Vec<SentencePair>, cfg: &FilterConfig, tokenizer: &Tokenizer) -> Vec<SentencePair> {
    filter_chinese(filter_german(pairs, cfg), cfg, tokenizer)
}

const ZH_TERMINATORS: &[char] = &['。', '！', '？'];
const ZH_CLOSERS: &[char] = &['”', '’', '」', '』', '）', ')', '"', '\''];

pub fn split_chinese_sentences(text: &str) -> Vec<String> {
    split_chinese_sentences_with(text, &[])
}

/// Splits after sentence-final punctuation. Repeated terminators and closing
/// quotes stay with the sentence they end.
pub fn split_chinese_sentences_with(text: &str, extra_terminators: &[char]) -> Vec<String> {
    let is_term = |c: char| ZH_TERMINATORS.contains(&c) || extra_terminators.contains(&c);
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut k = 0;
    while k < chars.len() {
        let c = chars[k];
        cur.push(c);
        k += 1;
        if is_term(c) {
            while k < chars.len() && (is_term(chars[k]) || ZH_CLOSERS.contains(&chars[k])) {
                cur.push(chars[k]);
                k += 1;
            }
            push_segment(&mut out, &mut cur);
        }
    }
    push_segment(&mut out, &mut cur);
    out
}

fn push_segment(out: &mut Vec<String>, cur: &mut String) {
    let seg = cur.trim();
    if !seg.is_empty() {
        out.push(seg.to_string());
    }
    cur.clear();
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pair_count: usize,
    pub edit_count: usize,
    pub mean_edits_per_pair: f64,
    /// Source length in tokens, buckets of ten (`"000-009"`, `"010-019"`, ...).
    pub token_length_histogram: BTreeMap<String, usize>,
}

const BUCKET: usize = 10;

pub fn corpus_stats(pairs: &[SentencePair], tokenizer: &Tokenizer) -> CorpusStats {
    let pair_count = pairs.len();
    let edit_count = pairs
        .iter()
        .map(|p| p.gold_edits.as_ref().map_or(0, Vec::len))
        .sum();
    let mut by_bucket: BTreeMap<usize, usize> = BTreeMap::new();
    for p in pairs {
        let n = tokenizer.tokenize(p.lang, &p.source).len();
        *by_bucket.entry(n / BUCKET).or_default() += 1;
    }
    // keyed by label, so pad the numbers for a sensible order
    let token_length_histogram = by_bucket
        .into_iter()
        .map(|(b, c)| (format!("{:03}-{:03}", b * BUCKET, b * BUCKET + BUCKET - 1), c))
        .collect();
    CorpusStats {
        pair_count,
        edit_count,
        mean_edits_per_pair: if pair_count == 0 {
            0.0
        } else {
            edit_count as f64 / pair_count as f64
        },
        token_length_histogram,
    }
}

#[derive(Serialize)]
struct ChatRecord<'a> {
    messages: [ChatTurn<'a>; 2],
}

#[derive(Serialize)]
struct ChatTurn<'a> {
    role: &'a str,
    content: &'a str,
}

/// Writes one chat-format record per pair: the extraction prompt as the user
/// turn and the gold edit lines as the assistant turn. Returns the count.
pub fn export_finetune(
    pairs: &[SentencePair],
    template: &PromptTemplate,
    tokenizer: &Tokenizer,
    path: &Path,
) -> Result<usize, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut lines = Vec::with_capacity(pairs.len());
    for p in pairs {
        let gold = p
            .gold_edits
            .as_ref()
            .ok_or_else(|| CorpusError::MissingGold(p.id.clone()))?;
        let src = tokenizer.tokenize(p.lang, &p.source);
        let tgt = tokenizer.tokenize(p.lang, &p.target);
        let coarse = coarse_edits(&src, &tgt);
        let user = render_prompt(template, p, Some(PromptEdits::Coarse(&coarse)))?;
        let assistant = serialize_edits(gold);
        let record = ChatRecord {
            messages: [
                ChatTurn {
                    role: "user",
                    content: &user,
                },
                ChatTurn {
                    role: "assistant",
                    content: &assistant,
                },
            ],
        };
        lines.push(serde_json::to_string(&record).expect("record serializes"));
    }
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for line in &lines {
        w.write_all(line.as_bytes()).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(lines.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn de(id: &str, s: &str, t: &str) -> SentencePair {
        SentencePair::new(id, Lang::De, s, t)
    }

    #[test]
    fn jsonl_defaults_and_errors() {
        let pairs = parse_jsonl("{\"id\":\"1\",\"lang\":\"de\",\"source\":\"a b c\",\"target\":\"a b c\",\"extra\":1}\n").unwrap();
        assert_eq!(pairs.len(), 1);
        assert!(parse_jsonl("").unwrap().is_empty());
        let p = parse_jsonl("\n{\"lang\":\"zh\",\"source\":\"我\",\"target\":\"你\"}").unwrap();
        assert_eq!(p[0].id, "2");
        let dup = "{\"id\":7,\"lang\":\"de\",\"source\":\"a\",\"target\":\"b\"}\n{\"id\":\"7\",\"lang\":\"de\",\"source\":\"a\",\"target\":\"b\"}";
        assert!(matches!(parse_jsonl(dup), Err(CorpusError::DuplicateId { line: 2, .. })));
        let bad = "{\"lang\":\"de\",\"source\":\"a\",\"target\":\"b\"}\nnot json";
        assert!(matches!(parse_jsonl(bad), Err(CorpusError::Malformed { line: 2, .. })));
        let empty = "{\"lang\":\"de\",\"source\":\"  \",\"target\":\"b\"}";
        assert!(matches!(parse_jsonl(empty), Err(CorpusError::Malformed { line: 1, .. })));
    }

    #[test]
    fn tsv_with_gold_and_level() {
        let text = "id\tlang\tsource\ttarget\tgold_edits\tcefr\nx\tde\tich gehe\tIch gehe\t[\"replace\", \"ich\", \"Ich\"]|[\"insert\", \"\", \".\"]\tA1\n";
        let p = parse_tsv(text).unwrap();
        assert_eq!(p[0].gold_edits.as_ref().unwrap().len(), 2);
        assert_eq!(p[0].cefr, Some(Cefr::A1));
        assert!(matches!(parse_tsv("a\tde\tb"), Err(CorpusError::Malformed { line: 1, .. })));
    }

    #[test]
    fn german_filters() {
        let cfg = FilterConfig::default();
        let pairs = vec![
            de("short", "Hallo .", "Hallo ."),
            de("unread", "Das ist unreadable hier.", "Das ist hier."),
            de("two", "Ich gehe. Er kommt.", "Ich gehe und er kommt."),
            de("ok", "Ich gehe in der Schule.", "Ich gehe in die Schule."),
        ];
        let kept: Vec<String> = filter_german(pairs, &cfg).into_iter().map(|p| p.id).collect();
        assert_eq!(kept, vec!["ok"]);
    }

    #[test]
    fn sentence_counting() {
        assert_eq!(count_german_sentences("Ich gehe. Er kommt."), 2);
        assert_eq!(count_german_sentences("Ich gehe. Er kommt"), 2);
        assert_eq!(count_german_sentences("Wirklich?!"), 1);
        assert_eq!(count_german_sentences("Das kostet ca. 3 Euro."), 1);
        assert_eq!(count_german_sentences(""), 0);
    }

    #[test]
    fn chinese_filters() {
        let tok = Tokenizer::default();
        let cfg = FilterConfig::default();
        let zh = |id: &str, s: &str, t: &str| SentencePair::new(id, Lang::Zh, s, t);
        let pairs = vec![
            zh("short", "我吃饭", "我吃了饭"),
            zh("same", "我今天吃了早饭。", "我今天吃了早饭。"),
            zh("ok", "我吃了早饭今天。", "我今天吃了早饭。"),
        ];
        let kept: Vec<String> = filter_chinese(pairs, &cfg, &tok).into_iter().map(|p| p.id).collect();
        assert_eq!(kept, vec!["ok"]);
    }

    #[test]
    fn sentence_splitting() {
        assert_eq!(split_chinese_sentences("我去。你呢？"), vec!["我去。", "你呢？"]);
        assert_eq!(split_chinese_sentences("没有标点"), vec!["没有标点"]);
        assert_eq!(split_chinese_sentences("我去。你"), vec!["我去。", "你"]);
        assert_eq!(split_chinese_sentences("真的吗？！”好。"), vec!["真的吗？！”", "好。"]);
        assert_eq!(split_chinese_sentences_with("一；二", &['；']), vec!["一；", "二"]);
        assert!(split_chinese_sentences("  ").is_empty());
    }

    #[test]
    fn stats() {
        let tok = Tokenizer::default();
        let s = corpus_stats(&[], &tok);
        assert_eq!((s.pair_count, s.edit_count, s.mean_edits_per_pair), (0, 0, 0.0));
        let one = vec![de("1", "a b c", "a b c").with_gold(vec![])];
        let s = corpus_stats(&one, &tok);
        assert_eq!(s.mean_edits_per_pair, 0.0);
        assert_eq!(s.token_length_histogram.get("000-009"), Some(&1));
    }

    #[test]
    fn finetune_export_requires_gold() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ft.jsonl");
        let t = PromptTemplate::builtin(Lang::De, crate::llm::Step::Extract).unwrap();
        let tok = Tokenizer::default();
        assert_eq!(export_finetune(&[], &t, &tok, &path).unwrap(), 0);
        assert_eq!(fs::read_to_string(&path).unwrap(), "");
        let err = export_finetune(&[de("n1", "a b", "a c")], &t, &tok, &path).unwrap_err();
        assert!(err.to_string().contains("n1"));
    }

    #[test]
    fn mini_corpus_gold_is_feasible() {
        let tok = Tokenizer::default();
        let pairs = mini_corpus();
        assert_eq!(pairs.len(), 20);
        for p in &pairs {
            let r = p.check_gold(&tok).expect("every record has gold edits");
            assert!(r.feasible, "{}", p.id);
            for e in p.gold_edits.as_ref().unwrap() {
                e.validate().unwrap();
            }
        }
    }
}
