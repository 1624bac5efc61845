//! Span alignment by recursive longest contiguous matching, and the coarse
//! ("rough") edits derived from it.
//!
//! The matcher finds the longest common contiguous run of tokens, then
//! recurses on the regions to its left and right. There is no junk
//! heuristic and comparison is case-sensitive.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::tokenize::TokenSeq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Equal,
    Insert,
    Delete,
    Replace,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Equal => "equal",
            Tag::Insert => "insert",
            Tag::Delete => "delete",
            Tag::Replace => "replace",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opcode {
    pub tag: Tag,
    pub src_lo: usize,
    pub src_hi: usize,
    pub tgt_lo: usize,
    pub tgt_hi: usize,
}

/// A common run `src[src..src+len] == tgt[tgt..tgt+len]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub src: usize,
    pub tgt: usize,
    pub len: usize,
}

/// Longest common contiguous run inside `a[alo..ahi]` and `b[blo..bhi]`.
///
/// Among maximal runs, the one starting earliest in `a` wins, then the one
/// starting earliest in `b`. Returns a zero-length match at `(alo, blo)`
/// when nothing matches.
pub fn longest_match<T: PartialEq>(
    a: &[T],
    b: &[T],
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
) -> Match {
    let mut best = Match {
        src: alo,
        tgt: blo,
        len: 0,
    };
    if alo >= ahi || blo >= bhi {
        return best;
    }
    let width = bhi - blo;
    let mut prev = vec![0usize; width + 1];
    let mut cur = vec![0usize; width + 1];
    for i in alo..ahi {
        for j in blo..bhi {
            let k = j - blo + 1;
            cur[k] = if a[i] == b[j] { prev[k - 1] + 1 } else { 0 };
            // ending positions are visited in (i, j) order, so a strictly
            // longer run is required to replace an earlier one of equal length
            if cur[k] > best.len {
                best = Match {
                    src: i + 1 - cur[k],
                    tgt: j + 1 - cur[k],
                    len: cur[k],
                };
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// All matching blocks in ascending order, adjacent blocks merged, without
/// the zero-length sentinel.
pub fn matching_blocks<T: PartialEq>(a: &[T], b: &[T]) -> Vec<Match> {
    let mut stack = vec![(0, a.len(), 0, b.len())];
    let mut found = Vec::new();
    while let Some((alo, ahi, blo, bhi)) = stack.pop() {
        let m = longest_match(a, b, alo, ahi, blo, bhi);
        if m.len == 0 {
            continue;
        }
        if alo < m.src && blo < m.tgt {
            stack.push((alo, m.src, blo, m.tgt));
        }
        if m.src + m.len < ahi && m.tgt + m.len < bhi {
            stack.push((m.src + m.len, ahi, m.tgt + m.len, bhi));
        }
        found.push(m);
    }
    found.sort_by_key(|m| (m.src, m.tgt));

    let mut merged: Vec<Match> = Vec::with_capacity(found.len());
    for m in found {
        match merged.last_mut() {
            Some(last) if last.src + last.len == m.src && last.tgt + last.len == m.tgt => {
                last.len += m.len;
            }
            _ => merged.push(m),
        }
    }
    merged
}

pub fn opcodes_for<T: PartialEq>(a: &[T], b: &[T]) -> Vec<Opcode> {
    let mut ops = Vec::new();
    let (mut i, mut j) = (0, 0);
    let sentinel = Match {
        src: a.len(),
        tgt: b.len(),
        len: 0,
    };
    for m in matching_blocks(a, b).into_iter().chain(std::iter::once(sentinel)) {
        let tag = match (i < m.src, j < m.tgt) {
            (true, true) => Some(Tag::Replace),
            (true, false) => Some(Tag::Delete),
            (false, true) => Some(Tag::Insert),
            (false, false) => None,
        };
        if let Some(tag) = tag {
            ops.push(Opcode {
                tag,
                src_lo: i,
                src_hi: m.src,
                tgt_lo: j,
                tgt_hi: m.tgt,
            });
        }
        if m.len > 0 {
            ops.push(Opcode {
                tag: Tag::Equal,
                src_lo: m.src,
                src_hi: m.src + m.len,
                tgt_lo: m.tgt,
                tgt_hi: m.tgt + m.len,
            });
        }
        i = m.src + m.len;
        j = m.tgt + m.len;
    }
    ops
}

/// Opcodes over token texts.
pub fn opcodes(src: &TokenSeq, tgt: &TokenSeq) -> Vec<Opcode> {
    opcodes_for(&src.texts(), &tgt.texts())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoarseOp {
    Insert,
    Delete,
    Replace,
}

impl CoarseOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CoarseOp::Insert => "insert",
            CoarseOp::Delete => "delete",
            CoarseOp::Replace => "replace",
        }
    }
}

/// A maximal edited span between two equal regions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoarseEdit {
    pub op: CoarseOp,
    pub orig_text: String,
    pub tgt_text: String,
    pub src_span: Range<usize>,
    pub tgt_span: Range<usize>,
}

impl CoarseEdit {
    /// Tuple form used inside extraction prompts, e.g.
    /// `('replace', 'ich haben essen', 'Ich habe')`.
    pub fn to_tuple_text(&self) -> String {
        format!(
            "({}, {}, {})",
            py_repr(self.op.as_str()),
            py_repr(&self.orig_text),
            py_repr(&self.tgt_text)
        )
    }
}

impl fmt::Display for CoarseEdit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_tuple_text())
    }
}

/// Python `repr` of a str: single quotes unless the text contains a single
/// quote and no double quote.
fn py_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') {
        '"'
    } else {
        '\''
    };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

/// One line per coarse edit, in tuple form.
pub fn coarse_edits_text(edits: &[CoarseEdit]) -> String {
    edits
        .iter()
        .map(CoarseEdit::to_tuple_text)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Coarse edits from the non-equal opcodes; neighbouring non-equal opcodes
/// are merged into a single span.
pub fn coarse_edits(src: &TokenSeq, tgt: &TokenSeq) -> Vec<CoarseEdit> {
    let mut spans: Vec<(Range<usize>, Range<usize>)> = Vec::new();
    for op in opcodes(src, tgt) {
        if op.tag == Tag::Equal {
            continue;
        }
        match spans.last_mut() {
            Some((s, t)) if s.end == op.src_lo && t.end == op.tgt_lo => {
                s.end = op.src_hi;
                t.end = op.tgt_hi;
            }
            _ => spans.push((op.src_lo..op.src_hi, op.tgt_lo..op.tgt_hi)),
        }
    }
    spans
        .into_iter()
        .map(|(s, t)| {
            let op = match (s.is_empty(), t.is_empty()) {
                (true, _) => CoarseOp::Insert,
                (false, true) => CoarseOp::Delete,
                (false, false) => CoarseOp::Replace,
            };
            CoarseEdit {
                op,
                orig_text: src.span_text(s.clone()),
                tgt_text: tgt.span_text(t.clone()),
                src_span: s,
                tgt_span: t,
            }
        })
        .collect()
}

/// Replays coarse edits by span on the source tokens.
pub fn apply_coarse_edits<'a>(src: &'a TokenSeq, tgt: &'a TokenSeq, edits: &[CoarseEdit]) -> Vec<&'a str> {
    let mut out = Vec::with_capacity(tgt.len());
    let mut pos = 0;
    for e in edits {
        out.extend(src.tokens[pos..e.src_span.start].iter().map(|t| t.text.as_str()));
        out.extend(tgt.tokens[e.tgt_span.clone()].iter().map(|t| t.text.as_str()));
        pos = e.src_span.end;
    }
    out.extend(src.tokens[pos..].iter().map(|t| t.text.as_str()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::tokenize_german;

    fn op(tag: Tag, src_lo: usize, src_hi: usize, tgt_lo: usize, tgt_hi: usize) -> Opcode {
        Opcode {
            tag,
            src_lo,
            src_hi,
            tgt_lo,
            tgt_hi,
        }
    }

    #[test]
    fn nonlocal_relocation_opcodes() {
        let src = tokenize_german("Ich möchte haben einen roten Apfel .");
        let tgt = tokenize_german("Ich möchte einen roten Apfel haben .");
        assert_eq!(
            opcodes(&src, &tgt),
            vec![
                op(Tag::Equal, 0, 2, 0, 2),
                op(Tag::Delete, 2, 3, 2, 2),
                op(Tag::Equal, 3, 6, 2, 5),
                op(Tag::Insert, 6, 6, 5, 6),
                op(Tag::Equal, 6, 7, 6, 7),
            ]
        );
    }

    #[test]
    fn identical_and_degenerate_inputs() {
        let a = ["a", "b", "c"];
        assert_eq!(opcodes_for(&a, &a), vec![op(Tag::Equal, 0, 3, 0, 3)]);
        let empty: [&str; 0] = [];
        assert_eq!(
            opcodes_for(&empty, &["a", "b"]),
            vec![op(Tag::Insert, 0, 0, 0, 2)]
        );
        assert!(opcodes_for(&empty, &empty).is_empty());
    }

    #[test]
    fn ties_prefer_leftmost_source_then_target() {
        let m = longest_match(&["x", "y", "x"], &["x", "x"], 0, 3, 0, 2);
        assert_eq!(m, Match { src: 0, tgt: 0, len: 1 });
    }

    #[test]
    fn matching_is_case_sensitive() {
        assert_eq!(
            opcodes_for(&["termin"], &["Termin"]),
            vec![op(Tag::Replace, 0, 1, 0, 1)]
        );
    }

    #[test]
    fn coarse_edits_of_extraction_prompt_examples() {
        let src = tokenize_german("ich haben essen zwei Bananen.");
        let tgt = tokenize_german("Ich habe zwei Bananen gegessen.");
        let text = coarse_edits_text(&coarse_edits(&src, &tgt));
        assert_eq!(
            text,
            "('replace', 'ich haben essen', 'Ich habe')\n('insert', '', 'gegessen')"
        );

        let src = tokenize_german("Ich habe gegessen zwei Bananen.");
        let tgt = tokenize_german("Ich habe zwei Bananen gegessen.");
        let text = coarse_edits_text(&coarse_edits(&src, &tgt));
        assert_eq!(text, "('delete', 'gegessen', '')\n('insert', '', 'gegessen')");

        let src = tokenize_german(
            "Wie oben schon erwähnt ist die Chance erwisht zurweden zwar gering, aber sie ver handen.",
        );
        let tgt = tokenize_german(
            "Wie oben schon erwähnt ist die Chance, erwischt zu werden, zwar gering, aber sie ist vorhanden.",
        );
        let text = coarse_edits_text(&coarse_edits(&src, &tgt));
        assert_eq!(
            text,
            "('replace', 'erwisht zurweden', ', erwischt zu werden ,')\n('replace', 'ver handen', 'ist vorhanden')"
        );
    }

    #[test]
    fn identical_pair_has_no_coarse_edits() {
        let s = tokenize_german("Ich gehe in die Schule.");
        assert!(coarse_edits(&s, &s).is_empty());
    }

    #[test]
    fn python_repr_quoting() {
        assert_eq!(py_repr("a"), "'a'");
        assert_eq!(py_repr("it's"), "\"it's\"");
        assert_eq!(py_repr("'\""), "'\\'\"'");
    }

    #[test]
    fn coarse_edits_replay_to_target() {
        let src = tokenize_german("Ich möchte machen ein termin.");
        let tgt = tokenize_german("Ich möchte einen Termin machen.");
        let edits = coarse_edits(&src, &tgt);
        assert_eq!(apply_coarse_edits(&src, &tgt, &edits), tgt.texts());
    }
}
