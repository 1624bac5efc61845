//! Rule-based refinement of a sentence pair into atomic edits.
//!
//! The refiner aligns the two token sequences with a weighted edit distance
//! in which equal tokens are free, similar tokens (by normalized character
//! edit distance) may be replaced, and every other token is deleted or
//! inserted at a flat cost. Replacements may also merge or split up to three
//! word tokens (`zurweden` -> `zu werden`). The alignment is then rewritten:
//!
//! 1. a token deleted once and inserted once elsewhere becomes a relocation;
//! 2. deletions and insertions left next to each other become replacements;
//! 3. for Chinese, a replacement absorbs a neighbouring deletion or
//!    insertion when together they only reorder characters, and a changed
//!    verb particle pulls in its unchanged verb (and the reverse);
//! 4. [`postprocess`] drops identity replacements and duplicates.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::ops::Range;

use thiserror::Error;

use super::{AtomicEdit, EditOp};
use crate::diff::{apply_coarse_edits, coarse_edits, CoarseEdit};
use crate::tokenize::TokenSeq;
use crate::Lang;

const MAX_BLOCK: usize = 3;
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RefinerConfig {
    /// Minimum similarity for two differing tokens to be aligned as a
    /// replacement; also the cost of a lone insertion or deletion.
    pub similarity_threshold: f64,
    /// Merge adjacent deleted (or inserted) tokens into one edit.
    pub group_contiguous: bool,
    pub zh_particle_merge: bool,
    pub particle_list: BTreeSet<String>,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        RefinerConfig {
            similarity_threshold: 0.5,
            group_contiguous: false,
            zh_particle_merge: true,
            particle_list: ["了", "过", "完", "到", "出", "成"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl RefinerConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return Err(RefineError::Threshold(self.similarity_threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RefineError {
    #[error("similarity threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("coarse edit {index} spans {src:?}/{tgt:?} outside sequences of length {src_len}/{tgt_len}")]
    OutOfBounds {
        index: usize,
        src: Range<usize>,
        tgt: Range<usize>,
        src_len: usize,
        tgt_len: usize,
    },
    #[error("coarse edits do not transform the source into the target")]
    Mismatch,
}

/// `1 - levenshtein(a, b) / max(|a|, |b|)` over characters.
pub fn similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    char_similarity(&a, &b)
}

fn char_similarity(a: &[char], b: &[char]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if ca == cb {
                diag
            } else {
                1 + diag.min(above).min(row[j])
            };
            diag = above;
        }
    }
    row[b.len()]
}

/// Drops identity replacements and empty edits, and duplicates that sit on
/// identical spans. Span-less duplicates are kept: a sentence can receive
/// the same insertion twice.
pub fn postprocess(edits: Vec<AtomicEdit>) -> Vec<AtomicEdit> {
    let mut seen = HashSet::new();
    edits
        .into_iter()
        .filter(|e| !(e.orig.is_empty() && e.tgt.is_empty()))
        .filter(|e| !(e.op == EditOp::Replace && e.orig == e.tgt))
        .filter(|e| {
            if e.src_span.is_some() && e.tgt_span.is_some() {
                seen.insert(e.clone())
            } else {
                true
            }
        })
        .collect()
}

/// Diff followed by [`refine`].
pub fn extract_rule_based(src: &TokenSeq, tgt: &TokenSeq, cfg: &RefinerConfig) -> Vec<AtomicEdit> {
    let coarse = coarse_edits(src, tgt);
    refine(src, tgt, &coarse, cfg).expect("coarse edits computed from the same pair")
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Step {
    Start,
    Equal,
    Sub(usize, usize),
    Ins,
    Del,
}

#[derive(Debug, Clone, PartialEq)]
enum Item {
    Anchor { i: usize, j: usize },
    Sub { src: Range<usize>, tgt: Range<usize> },
    Del { i: usize, j: usize },
    Ins { i: usize, j: usize },
}

#[derive(Debug, Clone)]
struct Draft {
    op: EditOp,
    src: Range<usize>,
    tgt: Range<usize>,
}

impl Draft {
    fn sort_key(&self) -> (usize, u8, usize) {
        match self.op {
            EditOp::Insert => (self.src.start, 0, self.tgt.start),
            _ => (self.src.start, 1, self.tgt.start),
        }
    }
}

fn is_word(tok: &str) -> bool {
    tok.chars().any(char::is_alphanumeric)
}

/// Refines a pair into atomic edits. `coarse` must be the coarse edits of
/// this pair; they are checked against the sequences.
pub fn refine(
    src: &TokenSeq,
    tgt: &TokenSeq,
    coarse: &[CoarseEdit],
    cfg: &RefinerConfig,
) -> Result<Vec<AtomicEdit>, RefineError> {
    cfg.validate()?;
    check_coarse(src, tgt, coarse)?;

    let a = src.texts();
    let b = tgt.texts();
    let items = align(&a, &b, cfg.similarity_threshold);

    let mut anchors: HashSet<(usize, usize)> = HashSet::new();
    let mut drafts: Vec<Draft> = Vec::new();
    // the working list only keeps what later passes still need to see
    let mut work: Vec<Item> = Vec::new();
    for item in items {
        match item {
            Item::Anchor { i, j } => {
                anchors.insert((i, j));
                work.push(item);
            }
            Item::Sub { src, tgt } => {
                drafts.push(Draft {
                    op: EditOp::Replace,
                    src: src.clone(),
                    tgt: tgt.clone(),
                });
                work.push(Item::Sub { src, tgt });
            }
            other => work.push(other),
        }
    }

    let mut runs = collect_runs(&work);
    if cfg.group_contiguous {
        for run in &mut runs {
            run.group_all();
        }
    }

    fuse_relocations(src, tgt, &mut runs, &mut drafts);

    for run in &mut runs {
        if src.lang == Lang::Zh {
            run.group_single_chars(&a, &b);
        }
        run.pair_into(&a, &b, &mut drafts);
    }

    if src.lang == Lang::Zh {
        absorb_reorderings(&a, &b, &mut drafts);
    }
    if src.lang == Lang::Zh && cfg.zh_particle_merge {
        merge_particles(&a, &b, &anchors, &cfg.particle_list, &mut drafts);
    }

    drafts.sort_by_key(Draft::sort_key);
    let edits = drafts
        .into_iter()
        .map(|d| {
            let (orig, tgt_text) = match d.op {
                EditOp::Insert => (String::new(), tgt.span_text(d.tgt.clone())),
                EditOp::Delete => (src.span_text(d.src.clone()), String::new()),
                EditOp::Relocate => {
                    let t = src.span_text(d.src.clone());
                    (t.clone(), t)
                }
                EditOp::Replace => (src.span_text(d.src.clone()), tgt.span_text(d.tgt.clone())),
            };
            AtomicEdit::new(d.op, orig, tgt_text).with_spans(Some(d.src), Some(d.tgt))
        })
        .collect();
    Ok(postprocess(edits))
}

fn check_coarse(src: &TokenSeq, tgt: &TokenSeq, coarse: &[CoarseEdit]) -> Result<(), RefineError> {
    let mut last = 0;
    for (index, e) in coarse.iter().enumerate() {
        let bad = e.src_span.start > e.src_span.end
            || e.tgt_span.start > e.tgt_span.end
            || e.src_span.end > src.len()
            || e.tgt_span.end > tgt.len()
            || e.src_span.start < last;
        if bad {
            return Err(RefineError::OutOfBounds {
                index,
                src: e.src_span.clone(),
                tgt: e.tgt_span.clone(),
                src_len: src.len(),
                tgt_len: tgt.len(),
            });
        }
        last = e.src_span.end;
    }
    if apply_coarse_edits(src, tgt, coarse) != tgt.texts() {
        return Err(RefineError::Mismatch);
    }
    Ok(())
}

/// Weighted alignment of the whole sequences. Ties prefer, in order: equal,
/// 1:1 replacement, merge/split blocks, insertion, deletion (decided while
/// walking back from the end).
fn align(a: &[&str], b: &[&str], threshold: f64) -> Vec<Item> {
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    let mut cost = vec![f64::INFINITY; (n + 1) * w];
    let mut back = vec![Step::Start; (n + 1) * w];
    cost[0] = 0.0;

    let ca: Vec<Vec<char>> = a.iter().map(|t| t.chars().collect()).collect();
    let cb: Vec<Vec<char>> = b.iter().map(|t| t.chars().collect()).collect();
    let word_a: Vec<bool> = a.iter().map(|t| is_word(t)).collect();
    let word_b: Vec<bool> = b.iter().map(|t| is_word(t)).collect();
    let pair_sim: Vec<f64> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| char_similarity(&ca[i], &cb[j]))
        .collect();

    let sub_cost = |src: Range<usize>, tgt: Range<usize>| -> Option<f64> {
        let block = src.len() > 1 || tgt.len() > 1;
        let sim = if block {
            if !word_a[src.clone()].iter().chain(&word_b[tgt.clone()]).all(|&w| w) {
                return None;
            }
            // merging has to beat every pairing of its parts
            let best_part = src
                .clone()
                .flat_map(|i| tgt.clone().map(move |j| i * m + j))
                .map(|k| pair_sim[k])
                .fold(0.0, f64::max);
            let la: usize = ca[src.clone()].iter().map(Vec::len).sum();
            let lb: usize = cb[tgt.clone()].iter().map(Vec::len).sum();
            let bound = 1.0 - la.abs_diff(lb) as f64 / la.max(lb).max(1) as f64;
            if bound + EPS < threshold || bound <= best_part + EPS {
                return None;
            }
            let s: Vec<char> = ca[src].concat();
            let t: Vec<char> = cb[tgt].concat();
            let sim = char_similarity(&s, &t);
            if sim <= best_part + EPS {
                return None;
            }
            sim
        } else {
            if a[src.start] == b[tgt.start] {
                return None;
            }
            pair_sim[src.start * m + tgt.start]
        };
        (sim + EPS >= threshold && sim > 0.0).then_some(1.0 - sim)
    };

    for i in 0..=n {
        for j in 0..=m {
            if i == 0 && j == 0 {
                continue;
            }
            let mut best = f64::INFINITY;
            let mut step = Step::Start;
            let mut consider = |c: f64, s: Step| {
                if c < best - EPS {
                    best = c;
                    step = s;
                }
            };
            if i > 0 && j > 0 && a[i - 1] == b[j - 1] {
                consider(cost[(i - 1) * w + j - 1], Step::Equal);
            }
            if i > 0 && j > 0 {
                if let Some(c) = sub_cost(i - 1..i, j - 1..j) {
                    consider(cost[(i - 1) * w + j - 1] + c, Step::Sub(1, 1));
                }
                for k in 2..=MAX_BLOCK.min(i) {
                    if let Some(c) = sub_cost(i - k..i, j - 1..j) {
                        consider(cost[(i - k) * w + j - 1] + c, Step::Sub(k, 1));
                    }
                }
                for l in 2..=MAX_BLOCK.min(j) {
                    if let Some(c) = sub_cost(i - 1..i, j - l..j) {
                        consider(cost[(i - 1) * w + j - l] + c, Step::Sub(1, l));
                    }
                }
            }
            if j > 0 {
                consider(cost[i * w + j - 1] + threshold, Step::Ins);
            }
            if i > 0 {
                consider(cost[(i - 1) * w + j] + threshold, Step::Del);
            }
            cost[i * w + j] = best;
            back[i * w + j] = step;
        }
    }

    let mut items = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        match back[i * w + j] {
            Step::Equal => {
                items.push(Item::Anchor { i: i - 1, j: j - 1 });
                i -= 1;
                j -= 1;
            }
            Step::Sub(k, l) => {
                items.push(Item::Sub {
                    src: i - k..i,
                    tgt: j - l..j,
                });
                i -= k;
                j -= l;
            }
            Step::Ins => {
                items.push(Item::Ins { i, j: j - 1 });
                j -= 1;
            }
            Step::Del => {
                items.push(Item::Del { i: i - 1, j });
                i -= 1;
            }
            Step::Start => unreachable!("every non-origin cell has a predecessor"),
        }
    }
    items.reverse();
    items
}

/// A maximal stretch of deletions and insertions between anchors or
/// replacements. Units are token ranges; grouping widens them.
#[derive(Debug, Default)]
struct Run {
    /// (source range, target gap)
    dels: Vec<(Range<usize>, usize)>,
    /// (target range, source gap)
    inss: Vec<(Range<usize>, usize)>,
}

impl Run {
    fn group_all(&mut self) {
        if let (Some(first), Some(last)) = (self.dels.first(), self.dels.last()) {
            self.dels = vec![(first.0.start..last.0.end, first.1)];
        }
        if let (Some(first), Some(last)) = (self.inss.first(), self.inss.last()) {
            self.inss = vec![(first.0.start..last.0.end, first.1)];
        }
    }

    /// Chinese text falls back to one token per character for words missing
    /// from the lexicon, so adjacent single characters are treated as one
    /// unit before pairing.
    fn group_single_chars(&mut self, a: &[&str], b: &[&str]) {
        let single = |toks: &[&str]| toks.len() == 1 && toks[0].chars().count() == 1 && is_word(toks[0]);
        self.dels = group_adjacent(std::mem::take(&mut self.dels), |r| single(&a[r.clone()]));
        self.inss = group_adjacent(std::mem::take(&mut self.inss), |r| single(&b[r.clone()]));
    }

    /// Pairs deletions with insertions, keeping their order. When the counts
    /// differ, the pairing sharing the most characters wins; otherwise (and
    /// on ties) the earliest. Leftovers stay as they are.
    fn pair_into(&mut self, a: &[&str], b: &[&str], drafts: &mut Vec<Draft>) {
        let del_text: Vec<String> = self.dels.iter().map(|(r, _)| a[r.clone()].concat()).collect();
        let ins_text: Vec<String> = self.inss.iter().map(|(r, _)| b[r.clone()].concat()).collect();
        let pairs = best_pairing(&del_text, &ins_text);
        let mut del_used = vec![false; self.dels.len()];
        let mut ins_used = vec![false; self.inss.len()];
        for &(d, i) in &pairs {
            del_used[d] = true;
            ins_used[i] = true;
            drafts.push(Draft {
                op: EditOp::Replace,
                src: self.dels[d].0.clone(),
                tgt: self.inss[i].0.clone(),
            });
        }
        for ((src, gap), _) in self.dels.iter().zip(&del_used).filter(|(_, &u)| !u) {
            drafts.push(Draft {
                op: EditOp::Delete,
                src: src.clone(),
                tgt: *gap..*gap,
            });
        }
        for ((tgt, gap), _) in self.inss.iter().zip(&ins_used).filter(|(_, &u)| !u) {
            drafts.push(Draft {
                op: EditOp::Insert,
                src: *gap..*gap,
                tgt: tgt.clone(),
            });
        }
    }
}

/// Characters two strings have in common, counted as multisets.
fn shared_chars(x: &str, y: &str) -> usize {
    let mut pool: Vec<char> = y.chars().collect();
    x.chars()
        .filter(|c| match pool.iter().position(|p| p == c) {
            Some(at) => {
                pool.swap_remove(at);
                true
            }
            None => false,
        })
        .count()
}

/// Order-preserving matching of size min(|dels|, |inss|) maximizing shared
/// characters; ties go to the earliest pairs.
fn best_pairing(dels: &[String], inss: &[String]) -> Vec<(usize, usize)> {
    let flip = dels.len() > inss.len();
    let (short, long) = if flip { (inss, dels) } else { (dels, inss) };
    let (n, m) = (short.len(), long.len());
    if n == 0 {
        return Vec::new();
    }
    let score = |i: usize, j: usize| shared_chars(&short[i], &long[j]);
    // best[i][j]: short[i..] matched into long[j..]
    let w = m + 1;
    let mut best = vec![0usize; (n + 1) * w];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            if m - j < n - i {
                continue;
            }
            let take = score(i, j) + best[(i + 1) * w + j + 1];
            let skip = if m - j > n - i { best[i * w + j + 1] } else { 0 };
            best[i * w + j] = take.max(skip);
        }
    }
    let mut out = Vec::with_capacity(n);
    let (mut i, mut j) = (0, 0);
    while i < n {
        let take = score(i, j) + best[(i + 1) * w + j + 1];
        let can_skip = m - j > n - i;
        if !can_skip || take >= best[i * w + j + 1] {
            out.push(if flip { (j, i) } else { (i, j) });
            i += 1;
        }
        j += 1;
    }
    out
}

fn group_adjacent<F>(units: Vec<(Range<usize>, usize)>, groupable: F) -> Vec<(Range<usize>, usize)>
where
    F: Fn(&Range<usize>) -> bool,
{
    let mut out: Vec<(Range<usize>, usize, bool)> = Vec::with_capacity(units.len());
    for (r, gap) in units {
        let g = groupable(&r);
        match out.last_mut() {
            Some((last, _, true)) if g && last.end == r.start => last.end = r.end,
            _ => out.push((r, gap, g)),
        }
    }
    out.into_iter().map(|(r, gap, _)| (r, gap)).collect()
}

fn collect_runs(items: &[Item]) -> Vec<Run> {
    let mut runs = Vec::new();
    let mut cur = Run::default();
    for item in items {
        match item {
            Item::Del { i, j } => cur.dels.push((*i..*i + 1, *j)),
            Item::Ins { i, j } => cur.inss.push((*j..*j + 1, *i)),
            Item::Anchor { .. } | Item::Sub { .. } => {
                if !cur.dels.is_empty() || !cur.inss.is_empty() {
                    runs.push(std::mem::take(&mut cur));
                }
            }
        }
    }
    if !cur.dels.is_empty() || !cur.inss.is_empty() {
        runs.push(cur);
    }
    runs
}

/// Turns each text that is deleted exactly once and inserted exactly once
/// into a relocation, and removes both halves from their runs.
fn fuse_relocations(src: &TokenSeq, tgt: &TokenSeq, runs: &mut [Run], drafts: &mut Vec<Draft>) {
    let mut del_at: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
    let mut ins_at: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
    for (r, run) in runs.iter().enumerate() {
        for (k, (range, _)) in run.dels.iter().enumerate() {
            del_at.entry(src.span_text(range.clone())).or_default().push((r, k));
        }
        for (k, (range, _)) in run.inss.iter().enumerate() {
            ins_at.entry(tgt.span_text(range.clone())).or_default().push((r, k));
        }
    }
    let mut drop_del: HashSet<(usize, usize)> = HashSet::new();
    let mut drop_ins: HashSet<(usize, usize)> = HashSet::new();
    for (text, dels) in &del_at {
        let Some(inss) = ins_at.get(text) else { continue };
        if dels.len() != 1 || inss.len() != 1 {
            continue;
        }
        let (dr, dk) = dels[0];
        let (ir, ik) = inss[0];
        drafts.push(Draft {
            op: EditOp::Relocate,
            src: runs[dr].dels[dk].0.clone(),
            tgt: runs[ir].inss[ik].0.clone(),
        });
        drop_del.insert((dr, dk));
        drop_ins.insert((ir, ik));
    }
    for (r, run) in runs.iter_mut().enumerate() {
        let mut k = 0;
        run.dels.retain(|_| {
            k += 1;
            !drop_del.contains(&(r, k - 1))
        });
        let mut k = 0;
        run.inss.retain(|_| {
            k += 1;
            !drop_ins.contains(&(r, k - 1))
        });
    }
}

fn char_bag(tokens: &[&str]) -> Vec<char> {
    let mut chars: Vec<char> = tokens.iter().flat_map(|t| t.chars()).collect();
    chars.sort_unstable();
    chars
}

/// Chinese character-order errors (市菜场 -> 菜市场) align as a replacement
/// next to a lone deletion or insertion. Such neighbours are folded into the
/// replacement when the result just permutes characters.
fn absorb_reorderings(a: &[&str], b: &[&str], drafts: &mut Vec<Draft>) {
    loop {
        let mut merged = None;
        'search: for (r, rep) in drafts.iter().enumerate() {
            if rep.op != EditOp::Replace {
                continue;
            }
            for (k, d) in drafts.iter().enumerate() {
                let (src, tgt) = match d.op {
                    EditOp::Delete if d.src.end == rep.src.start && d.tgt.start == rep.tgt.start => {
                        (d.src.start..rep.src.end, rep.tgt.clone())
                    }
                    EditOp::Delete if d.src.start == rep.src.end && d.tgt.start == rep.tgt.end => {
                        (rep.src.start..d.src.end, rep.tgt.clone())
                    }
                    EditOp::Insert if d.tgt.end == rep.tgt.start && d.src.start == rep.src.start => {
                        (rep.src.clone(), d.tgt.start..rep.tgt.end)
                    }
                    EditOp::Insert if d.tgt.start == rep.tgt.end && d.src.start == rep.src.end => {
                        (rep.src.clone(), rep.tgt.start..d.tgt.end)
                    }
                    _ => continue,
                };
                if char_bag(&a[src.clone()]) == char_bag(&b[tgt.clone()]) {
                    merged = Some((r, k, src, tgt));
                    break 'search;
                }
            }
        }
        let Some((r, k, src, tgt)) = merged else { return };
        drafts[r].src = src;
        drafts[r].tgt = tgt;
        drafts.remove(k);
    }
}

/// Extends single-token replacements over an unchanged neighbour: a changed
/// particle takes its preceding verb (看过 -> 看完), a changed verb takes its
/// following particle (看成 -> 当成).
fn merge_particles(
    a: &[&str],
    b: &[&str],
    anchors: &HashSet<(usize, usize)>,
    particles: &BTreeSet<String>,
    drafts: &mut [Draft],
) {
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    for d in drafts.iter_mut() {
        if d.op != EditOp::Replace || d.src.len() != 1 || d.tgt.len() != 1 {
            continue;
        }
        let (i, j) = (d.src.start, d.tgt.start);
        let orig_p = particles.contains(a[i]);
        let tgt_p = particles.contains(b[j]);
        if orig_p && tgt_p && i > 0 && j > 0 {
            let prev = (i - 1, j - 1);
            if anchors.contains(&prev) && used.insert(prev) {
                d.src.start -= 1;
                d.tgt.start -= 1;
            }
        } else if !orig_p && !tgt_p && i + 1 < a.len() && j + 1 < b.len() {
            let next = (i + 1, j + 1);
            if particles.contains(a[i + 1]) && anchors.contains(&next) && used.insert(next) {
                d.src.end += 1;
                d.tgt.end += 1;
            }
        }
    }
}
