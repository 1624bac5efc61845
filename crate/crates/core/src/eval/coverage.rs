//! Which edits have an explanation, and which explanations talk about edits
//! that do not exist.
//!
//! Explanations follow the template "The word 'X' is replaced by 'Y' /
//! inserted / deleted / relocated because ...". The quoted words in the part
//! before "because" are read as mentions and matched against the edits by
//! string overlap.

use serde::{Deserialize, Serialize};

use crate::atomic::{AtomicEdit, EditOp};
use crate::corpus::SentencePair;
use crate::llm::Explanation;

/// One edit as described by an explanation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    /// `None` when no operation word follows the quoted text.
    pub op: Option<EditOp>,
    /// Quoted words; for a replacement, the original then the target.
    pub words: Vec<String>,
    /// False when the description had no quotes at all and `words` holds
    /// the whole description.
    pub quoted: bool,
}

const OPEN_CLOSE: &[(char, &[char])] = &[
    ('\'', &['\'']),
    ('"', &['"']),
    ('`', &['\'', '`']),
    ('‘', &['’']),
    ('“', &['”']),
    ('「', &['」']),
    ('„', &['“', '"']),
];

fn opener_ok(prev: Option<char>) -> bool {
    match prev {
        None => true,
        Some(c) => c.is_whitespace() || "([{:,;".contains(c) || !c.is_ascii(),
    }
}

fn closer_ok(next: Option<char>) -> bool {
    match next {
        None => true,
        Some(c) => !c.is_alphanumeric() || !c.is_ascii(),
    }
}

/// Quoted segments as (text, start byte, end byte).
fn quoted_segments(text: &str) -> Vec<(String, usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        let prev = i.checked_sub(1).map(|p| chars[p].1);
        let closers = OPEN_CLOSE.iter().find(|(o, _)| *o == c).map(|(_, cl)| *cl);
        if let (Some(closers), true) = (closers, opener_ok(prev)) {
            let close = (i + 1..chars.len()).find(|&j| {
                closers.contains(&chars[j].1) && closer_ok(chars.get(j + 1).map(|x| x.1))
            });
            if let Some(j) = close {
                let inner = &text[start + c.len_utf8()..chars[j].0];
                let end = chars[j].0 + chars[j].1.len_utf8();
                out.push((inner.trim().to_string(), start, end));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

const VERBS: &[(&str, EditOp)] = &[
    ("replaced", EditOp::Replace),
    ("changed", EditOp::Replace),
    ("corrected", EditOp::Replace),
    ("substituted", EditOp::Replace),
    ("inserted", EditOp::Insert),
    ("added", EditOp::Insert),
    ("deleted", EditOp::Delete),
    ("removed", EditOp::Delete),
    ("omitted", EditOp::Delete),
    ("relocated", EditOp::Relocate),
    ("moved", EditOp::Relocate),
];

/// The first operation word in `gap`.
fn verb_in(gap: &str) -> Option<EditOp> {
    let gap = gap.to_lowercase();
    VERBS
        .iter()
        .filter_map(|(w, op)| gap.find(w).map(|at| (at, *op)))
        .min_by_key(|(at, _)| *at)
        .map(|(_, op)| op)
}

/// Reads the edits an explanation claims to describe.
pub fn extract_mentions(edit_desc: &str) -> Vec<Mention> {
    let segs = quoted_segments(edit_desc);
    if segs.is_empty() {
        if edit_desc.trim().is_empty() {
            return Vec::new();
        }
        return vec![Mention {
            op: verb_in(edit_desc),
            words: vec![edit_desc.to_string()],
            quoted: false,
        }];
    }
    let mut out = Vec::new();
    let mut k = 0;
    while k < segs.len() {
        let gap_end = segs.get(k + 1).map_or(edit_desc.len(), |s| s.1);
        let op = verb_in(&edit_desc[segs[k].2..gap_end]);
        match op {
            Some(EditOp::Replace) if k + 1 < segs.len() => {
                out.push(Mention {
                    op,
                    words: vec![segs[k].0.clone(), segs[k + 1].0.clone()],
                    quoted: true,
                });
                k += 2;
                continue;
            }
            Some(_) => out.push(Mention {
                op,
                words: vec![segs[k].0.clone()],
                quoted: true,
            }),
            None => {}
        }
        k += 1;
    }
    if out.is_empty() {
        out.push(Mention {
            op: None,
            words: segs.into_iter().map(|s| s.0).collect(),
            quoted: true,
        });
    }
    out
}

fn norm(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).flat_map(char::to_lowercase).collect()
}

fn is_cjk(s: &str) -> bool {
    s.chars().any(|c| ('\u{3400}'..='\u{9fff}').contains(&c))
}

/// How many of the edit's words occur in free text.
fn unquoted_overlap(desc: &str, e: &AtomicEdit) -> u32 {
    let words: Vec<String> = desc
        .split_whitespace()
        .map(|w| norm(w.trim_matches(|c: char| !c.is_alphanumeric())))
        .filter(|w| !w.is_empty())
        .collect();
    let mut n = 0;
    for side in [&e.orig, &e.tgt] {
        if side.is_empty() {
            continue;
        }
        if is_cjk(side) {
            n += desc.contains(side.as_str()) as u32;
        } else {
            n += side
                .split_whitespace()
                .filter(|t| {
                    let t = norm(t.trim_matches(|c: char| !c.is_alphanumeric()));
                    !t.is_empty() && words.contains(&t)
                })
                .count() as u32;
        }
    }
    n.min(3)
}

/// 4 for an exact description, lower for partial overlap, 0 for none.
fn score(m: &Mention, e: &AtomicEdit) -> u32 {
    if !m.quoted {
        return unquoted_overlap(&m.words[0], e);
    }
    let (eo, et) = (norm(&e.orig), norm(&e.tgt));
    let hits = |w: &str| !w.is_empty() && (w == eo || w == et);
    match (m.op, m.words.as_slice()) {
        (Some(EditOp::Replace), [a, b]) => {
            let (a, b) = (norm(a), norm(b));
            if e.op == EditOp::Replace {
                2 * (a == eo) as u32 + 2 * (b == et) as u32
            } else {
                (hits(&a) || hits(&b)) as u32
            }
        }
        (Some(op), [w]) => {
            let w = norm(w);
            let own = if op == EditOp::Insert { &et } else { &eo };
            if e.op == op && w == *own && !w.is_empty() {
                4
            } else if w.is_empty() && e.op == op {
                // "The word '' is inserted"
                1
            } else if hits(&w) {
                2
            } else {
                0
            }
        }
        (_, words) => words.iter().filter(|w| hits(&norm(w))).count().min(3) as u32,
    }
}

/// Assignments as (explanation index, mention index, edit index), plus the
/// mentions of each explanation.
struct Linking {
    mentions: Vec<Vec<Mention>>,
    links: Vec<(usize, usize, usize)>,
    /// (explanation, mention) pairs no edit overlaps with.
    unsupported: Vec<(usize, usize)>,
}

fn link(edits: &[AtomicEdit], explanations: &[Explanation]) -> Linking {
    let mentions: Vec<Vec<Mention>> = explanations.iter().map(|x| extract_mentions(&x.edit_desc)).collect();
    let mut candidates = Vec::new();
    let mut unsupported = Vec::new();
    for (x, ms) in mentions.iter().enumerate() {
        for (m, mention) in ms.iter().enumerate() {
            let before = candidates.len();
            for (e, edit) in edits.iter().enumerate() {
                let s = score(mention, edit);
                if s > 0 {
                    candidates.push((s, x, m, e));
                }
            }
            if candidates.len() == before {
                unsupported.push((x, m));
            }
        }
        if ms.is_empty() {
            unsupported.push((x, usize::MAX));
        }
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3))));
    let mut edit_used = vec![false; edits.len()];
    let mut mention_used = std::collections::HashSet::new();
    let mut links = Vec::new();
    for (_, x, m, e) in candidates {
        if edit_used[e] || mention_used.contains(&(x, m)) {
            continue;
        }
        edit_used[e] = true;
        mention_used.insert((x, m));
        links.push((x, m, e));
    }
    links.sort_unstable();
    Linking {
        mentions,
        links,
        unsupported,
    }
}

/// Sets `matched_edit` on every explanation to the first edit it was
/// linked to.
pub fn link_explanations(edits: &[AtomicEdit], explanations: &mut [Explanation]) {
    let l = link(edits, explanations);
    for x in explanations.iter_mut() {
        x.matched_edit = None;
    }
    for &(x, _, e) in &l.links {
        explanations[x].matched_edit.get_or_insert(e);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedEdit {
    pub edit_index: usize,
    pub edit: AtomicEdit,
    pub explanation_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hallucination {
    pub explanation_index: usize,
    pub explanation: Explanation,
    /// The mentions that match no edit. Empty when the explanation names
    /// no edit at all.
    pub mentions: Vec<Mention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub pair_id: String,
    pub total_edits: usize,
    pub explanations: usize,
    pub matched: Vec<MatchedEdit>,
    pub missing_edits: Vec<AtomicEdit>,
    pub hallucinated: Vec<Hallucination>,
    pub coverage_rate: f64,
}

pub fn coverage(edits: &[AtomicEdit], explanations: &[Explanation], pair: &SentencePair) -> CoverageReport {
    let l = link(edits, explanations);
    let mut explained = vec![None; edits.len()];
    for &(x, _, e) in &l.links {
        explained[e] = Some(x);
    }
    let matched: Vec<MatchedEdit> = explained
        .iter()
        .enumerate()
        .filter_map(|(e, x)| {
            x.map(|x| MatchedEdit {
                edit_index: e,
                edit: edits[e].without_spans(),
                explanation_index: x,
            })
        })
        .collect();
    let missing_edits = explained
        .iter()
        .zip(edits)
        .filter(|(x, _)| x.is_none())
        .map(|(_, e)| e.without_spans())
        .collect();

    let mut hallucinated: Vec<Hallucination> = Vec::new();
    for (x, m) in l.unsupported {
        if hallucinated.last().map(|h| h.explanation_index) != Some(x) {
            hallucinated.push(Hallucination {
                explanation_index: x,
                explanation: explanations[x].clone(),
                mentions: Vec::new(),
            });
        }
        if let Some(mention) = l.mentions[x].get(m) {
            hallucinated.last_mut().expect("pushed above").mentions.push(mention.clone());
        }
    }

    let coverage_rate = if edits.is_empty() {
        1.0
    } else {
        matched.len() as f64 / edits.len() as f64
    };
    CoverageReport {
        pair_id: pair.id.clone(),
        total_edits: edits.len(),
        explanations: explanations.len(),
        matched,
        missing_edits,
        hallucinated,
        coverage_rate,
    }
}

/// Counts summed over pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageTotals {
    pub pairs: usize,
    pub edits: usize,
    pub matched: usize,
    pub missing: usize,
    pub explanations: usize,
    pub hallucinated: usize,
}

impl CoverageTotals {
    pub fn of(report: &CoverageReport) -> CoverageTotals {
        CoverageTotals {
            pairs: 1,
            edits: report.total_edits,
            matched: report.matched.len(),
            missing: report.missing_edits.len(),
            explanations: report.explanations,
            hallucinated: report.hallucinated.len(),
        }
    }

    pub fn merge(self, o: CoverageTotals) -> CoverageTotals {
        CoverageTotals {
            pairs: self.pairs + o.pairs,
            edits: self.edits + o.edits,
            matched: self.matched + o.matched,
            missing: self.missing + o.missing,
            explanations: self.explanations + o.explanations,
            hallucinated: self.hallucinated + o.hallucinated,
        }
    }

    pub fn coverage_rate(&self) -> f64 {
        if self.edits == 0 {
            1.0
        } else {
            self.matched as f64 / self.edits as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::parse_explanations;
    use crate::Lang;

    const BASE_GEE: &str = "The word 'sreiben' is replaced by 'schreiben' because there was a spelling mistake in the word.\nError type: spelling\nThe word 'Sie' is relocated after 'antworten' and the word 'und' is inserted between 'antworten' and 'schreiben' because these are separate actions and should be connected with a conjunction.\nError type: word order and conjunction\n";

    fn x(desc: &str) -> Explanation {
        Explanation::from_sentence(&format!("{desc} because r."), "t").0
    }

    #[test]
    fn mentions_from_template() {
        let m = extract_mentions("The word 'Sie' is relocated after 'antworten' and the word 'und' is inserted between 'antworten' and 'schreiben'");
        assert_eq!(m.len(), 2);
        assert_eq!((m[0].op, m[0].words.clone()), (Some(EditOp::Relocate), vec!["Sie".to_string()]));
        assert_eq!((m[1].op, m[1].words.clone()), (Some(EditOp::Insert), vec!["und".to_string()]));

        let m = extract_mentions("The word “ein” is replaced with “einen”");
        assert_eq!(m[0].words, ["ein", "einen"]);
        let m = extract_mentions("The word 'don't' is deleted");
        assert_eq!(m[0].words, ["don't"]);
        let m = extract_mentions("The word '' is inserted");
        assert_eq!((m[0].op, m[0].words.clone()), (Some(EditOp::Insert), vec![String::new()]));
    }

    #[test]
    fn fig1_full_coverage() {
        let edits = [
            AtomicEdit::relocate("machen"),
            AtomicEdit::replace("ein", "einen"),
            AtomicEdit::replace("termin", "Termin"),
        ];
        let xs = [
            x("The word 'machen' is relocated to the end of the sentence"),
            x("The word 'ein' is replaced by 'einen'"),
            x("The word 'termin' is replaced by 'Termin'"),
        ];
        let pair = SentencePair::new("fig1", Lang::De, "Ich möchte machen ein termin.", "Ich möchte einen Termin machen.");
        let r = coverage(&edits, &xs, &pair);
        assert_eq!(r.coverage_rate, 1.0);
        assert!(r.hallucinated.is_empty() && r.missing_edits.is_empty());
    }

    #[test]
    fn base_gee_output() {
        let edits = [
            AtomicEdit::insert("und"),
            AtomicEdit::replace("sreiben", "schreiben"),
            AtomicEdit::replace("?", "."),
        ];
        let xs = parse_explanations(BASE_GEE).explanations;
        let pair = SentencePair::new("b", Lang::De, "Bitte antworten sreiben Sie?", "Bitte antworten und schreiben Sie.");
        let r = coverage(&edits, &xs, &pair);
        assert_eq!(r.missing_edits, vec![AtomicEdit::replace("?", ".")]);
        assert_eq!(r.hallucinated.len(), 1);
        assert_eq!(r.hallucinated[0].explanation_index, 1);
        assert_eq!(r.hallucinated[0].mentions[0].words, ["Sie"]);
        assert_eq!(r.hallucinated[0].mentions[0].op, Some(EditOp::Relocate));
        assert_eq!(r.matched.len() + r.missing_edits.len(), 3);
    }

    #[test]
    fn nothing_explained() {
        let edits = [AtomicEdit::insert("a"), AtomicEdit::delete("b")];
        let pair = SentencePair::new("n", Lang::De, "b c", "a c");
        let r = coverage(&edits, &[], &pair);
        assert_eq!(r.coverage_rate, 0.0);
        assert_eq!(r.missing_edits.len(), 2);
        let r = coverage(&[], &[], &pair);
        assert_eq!(r.coverage_rate, 1.0);
    }

    #[test]
    fn explanation_without_edits_is_hallucinated() {
        let pair = SentencePair::new("s", Lang::De, "a b", "a b");
        let r = coverage(&[], &[x("The word 'a' is deleted")], &pair);
        assert_eq!(r.hallucinated.len(), 1);
    }

    #[test]
    fn unquoted_and_chinese() {
        let edits = [AtomicEdit::replace("只", "个"), AtomicEdit::insert("了")];
        let xs = [
            x("The word 只 is replaced with 个"),
            x("The word '了' is inserted"),
        ];
        let pair = SentencePair::new("z", Lang::Zh, "我买四只苹果。", "我买了四个苹果。");
        let r = coverage(&edits, &xs, &pair);
        assert_eq!(r.coverage_rate, 1.0);
        let mut xs = xs.to_vec();
        link_explanations(&edits, &mut xs);
        assert_eq!((xs[0].matched_edit, xs[1].matched_edit), (Some(0), Some(1)));
    }

    #[test]
    fn duplicate_explanations_do_not_double_count() {
        let edits = [AtomicEdit::replace("ein", "einen")];
        let xs = [x("The word 'ein' is replaced by 'einen'"), x("The word 'ein' is replaced by 'einen'")];
        let pair = SentencePair::new("d", Lang::De, "ein", "einen");
        let r = coverage(&edits, &xs, &pair);
        assert_eq!(r.matched.len(), 1);
        assert!(r.hallucinated.is_empty());
    }

    #[test]
    fn totals_merge() {
        let pair = SentencePair::new("n", Lang::De, "b c", "a c");
        let a = CoverageTotals::of(&coverage(&[AtomicEdit::insert("a")], &[], &pair));
        let b = CoverageTotals::of(&coverage(&[AtomicEdit::insert("a")], &[x("The word 'a' is inserted")], &pair));
        let t = a.merge(b);
        assert_eq!((t.pairs, t.edits, t.matched, t.missing), (2, 2, 1, 1));
        assert_eq!(t.coverage_rate(), 0.5);
        assert_eq!(CoverageTotals::default().merge(t), t);
    }
}
