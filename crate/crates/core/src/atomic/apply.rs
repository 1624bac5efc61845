//! Positionless edit application.
//!
//! Serialized edits carry no positions and tokens repeat, so checking that a
//! list of edits turns the source into the target is a search: walk source
//! and target together, and at every point either place one of the pending
//! edits or copy an unchanged unit. Units are tokens for German and
//! characters for Chinese (segmentation may disagree between the source and
//! a model's edit strings, characters never do).

use std::collections::{BTreeMap, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{AtomicEdit, EditOp};
use crate::tokenize::{tokenize_german, TokenSeq};
use crate::Lang;

pub const DEFAULT_STATE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feasibility {
    Feasible,
    Infeasible,
    /// The search hit its state limit before finding an answer.
    Undecided,
}

/// Where one edit was placed. Ranges are in units (see module docs);
/// inserts have an empty source range, deletes an empty target range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Placement {
    pub edit_index: usize,
    pub src: Range<usize>,
    pub tgt: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityResult {
    pub status: Feasibility,
    pub feasible: bool,
    pub realized_target: Option<String>,
    pub assignment: Option<Vec<Placement>>,
    pub states_explored: usize,
}

impl FeasibilityResult {
    fn failed(status: Feasibility, states_explored: usize) -> Self {
        FeasibilityResult {
            status,
            feasible: false,
            realized_target: None,
            assignment: None,
            states_explored,
        }
    }
}

/// Splits text into the units edits are matched on.
pub fn edit_units(lang: Lang, text: &str) -> Vec<String> {
    match lang {
        Lang::De => tokenize_german(text)
            .tokens
            .into_iter()
            .map(|t| t.text)
            .collect(),
        Lang::Zh => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    }
}

fn seq_units(seq: &TokenSeq) -> Vec<String> {
    match seq.lang {
        Lang::De => seq.tokens.iter().map(|t| t.text.clone()).collect(),
        Lang::Zh => seq
            .tokens
            .iter()
            .flat_map(|t| t.text.chars())
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    }
}

/// Checks whether `edits` turn `src` into `tgt_text`, with the default state
/// limit.
pub fn apply_edits(src: &TokenSeq, tgt_text: &str, edits: &[AtomicEdit]) -> FeasibilityResult {
    let tgt = edit_units(src.lang, tgt_text);
    search(src, &tgt, tgt_text, edits, DEFAULT_STATE_LIMIT)
}

/// Like [`apply_edits`] against an already tokenized target.
pub fn apply_edits_to(src: &TokenSeq, tgt: &TokenSeq, edits: &[AtomicEdit]) -> FeasibilityResult {
    search(src, &seq_units(tgt), &tgt.original, edits, DEFAULT_STATE_LIMIT)
}

/// [`apply_edits`] with an explicit state limit.
pub fn apply_edits_limited(
    src: &TokenSeq,
    tgt_text: &str,
    edits: &[AtomicEdit],
    limit: usize,
) -> FeasibilityResult {
    let tgt = edit_units(src.lang, tgt_text);
    search(src, &tgt, tgt_text, edits, limit)
}

/// Identical edits share one class with a multiplicity.
struct Class {
    op: EditOp,
    orig: Vec<String>,
    tgt: Vec<String>,
    members: Vec<usize>,
    /// First counter slot; relocations own two (outgoing, incoming).
    slot: usize,
}

#[derive(Clone, Copy)]
enum Move {
    Copy,
    /// Class index; for relocations, whether this is the incoming half.
    Edit(usize, bool),
}

struct Search<'a> {
    src: &'a [String],
    tgt: &'a [String],
    classes: Vec<Class>,
    failed: HashSet<(usize, usize, Vec<u16>)>,
    states: usize,
    limit: usize,
    path: Vec<(Move, usize, usize)>,
}

fn matches_at(hay: &[String], at: usize, needle: &[String]) -> bool {
    hay.len() >= at + needle.len() && hay[at..at + needle.len()] == *needle
}

impl Search<'_> {
    /// Units still to be consumed by pending edits on each side.
    fn pending(&self, counts: &[u16]) -> (usize, usize) {
        let (mut s, mut t) = (0, 0);
        for c in &self.classes {
            let n = counts[c.slot] as usize;
            match c.op {
                EditOp::Insert => t += n * c.tgt.len(),
                EditOp::Delete => s += n * c.orig.len(),
                EditOp::Replace => {
                    s += n * c.orig.len();
                    t += n * c.tgt.len();
                }
                EditOp::Relocate => {
                    s += n * c.orig.len();
                    t += counts[c.slot + 1] as usize * c.tgt.len();
                }
            }
        }
        (s, t)
    }

    /// Depth-first search; `None` means the state limit was reached.
    fn run(&mut self, i: usize, j: usize, counts: &mut Vec<u16>) -> Option<bool> {
        let (n, m) = (self.src.len(), self.tgt.len());
        if i == n && j == m && counts.iter().all(|&c| c == 0) {
            return Some(true);
        }
        let (ps, pt) = self.pending(counts);
        if ps > n - i || pt > m - j || (n - i) - ps != (m - j) - pt {
            return Some(false);
        }
        if self.failed.contains(&(i, j, counts.clone())) {
            return Some(false);
        }
        self.states += 1;
        if self.states > self.limit {
            return None;
        }

        for k in 0..self.classes.len() {
            let c = &self.classes[k];
            let (op, slot) = (c.op, c.slot);
            let (ol, tl) = (c.orig.len(), c.tgt.len());
            let src_ok = matches_at(self.src, i, &c.orig);
            let tgt_ok = matches_at(self.tgt, j, &c.tgt);
            let mut tries: Vec<(usize, usize, usize, bool)> = Vec::new();
            match op {
                EditOp::Insert if counts[slot] > 0 && tgt_ok => tries.push((slot, 0, tl, false)),
                EditOp::Delete if counts[slot] > 0 && src_ok => tries.push((slot, ol, 0, false)),
                EditOp::Replace if counts[slot] > 0 && src_ok && tgt_ok => {
                    tries.push((slot, ol, tl, false))
                }
                EditOp::Relocate => {
                    if counts[slot] > 0 && src_ok {
                        tries.push((slot, ol, 0, false));
                    }
                    if counts[slot + 1] > 0 && tgt_ok {
                        tries.push((slot + 1, 0, tl, true));
                    }
                }
                _ => {}
            }
            for (s, di, dj, incoming) in tries {
                counts[s] -= 1;
                self.path.push((Move::Edit(k, incoming), i, j));
                let r = self.run(i + di, j + dj, counts);
                counts[s] += 1;
                match r {
                    Some(true) => return Some(true),
                    None => return None,
                    Some(false) => {
                        self.path.pop();
                    }
                }
            }
        }

        if i < n && j < m && self.src[i] == self.tgt[j] {
            self.path.push((Move::Copy, i, j));
            match self.run(i + 1, j + 1, counts) {
                Some(true) => return Some(true),
                None => return None,
                Some(false) => {
                    self.path.pop();
                }
            }
        }
        self.failed.insert((i, j, counts.clone()));
        Some(false)
    }

    fn assignment(&self) -> Vec<Placement> {
        let mut used: BTreeMap<(usize, bool), usize> = BTreeMap::new();
        let mut out: Vec<Placement> = Vec::new();
        // outgoing relocation halves wait here for their incoming half
        let mut open: BTreeMap<usize, Range<usize>> = BTreeMap::new();
        let mut pending_in: BTreeMap<usize, Range<usize>> = BTreeMap::new();
        for &(mv, i, j) in &self.path {
            let Move::Edit(k, incoming) = mv else { continue };
            let c = &self.classes[k];
            let nth = used.entry((k, incoming)).or_insert(0);
            let edit_index = c.members[*nth];
            *nth += 1;
            let src = match c.op {
                EditOp::Insert => i..i,
                EditOp::Relocate if incoming => i..i,
                _ => i..i + c.orig.len(),
            };
            let tgt = match c.op {
                EditOp::Delete => j..j,
                EditOp::Relocate if !incoming => j..j,
                _ => j..j + c.tgt.len(),
            };
            if c.op == EditOp::Relocate {
                if incoming {
                    pending_in.insert(edit_index, tgt);
                } else {
                    open.insert(edit_index, src);
                }
                continue;
            }
            out.push(Placement { edit_index, src, tgt });
        }
        for (edit_index, src) in open {
            let tgt = pending_in.remove(&edit_index).unwrap_or(0..0);
            out.push(Placement { edit_index, src, tgt });
        }
        out.sort_by_key(|p| p.edit_index);
        out
    }
}

fn search(
    src: &TokenSeq,
    tgt: &[String],
    tgt_text: &str,
    edits: &[AtomicEdit],
    limit: usize,
) -> FeasibilityResult {
    let src_units = seq_units(src);
    let mut classes: Vec<Class> = Vec::new();
    let mut slots = 0usize;
    for (idx, e) in edits.iter().enumerate() {
        if e.validate().is_err() {
            return FeasibilityResult::failed(Feasibility::Infeasible, 0);
        }
        let orig = edit_units(src.lang, &e.orig);
        let tgt_u = edit_units(src.lang, &e.tgt);
        let empty_side = match e.op {
            EditOp::Insert => tgt_u.is_empty(),
            EditOp::Delete => orig.is_empty(),
            _ => orig.is_empty() || tgt_u.is_empty(),
        };
        if empty_side {
            return FeasibilityResult::failed(Feasibility::Infeasible, 0);
        }
        if let Some(c) = classes
            .iter_mut()
            .find(|c| c.op == e.op && c.orig == orig && c.tgt == tgt_u)
        {
            c.members.push(idx);
            continue;
        }
        let width = if e.op == EditOp::Relocate { 2 } else { 1 };
        classes.push(Class {
            op: e.op,
            orig,
            tgt: tgt_u,
            members: vec![idx],
            slot: slots,
        });
        slots += width;
    }
    let mut counts = vec![0u16; slots];
    for c in &classes {
        let n = c.members.len() as u16;
        counts[c.slot] = n;
        if c.op == EditOp::Relocate {
            counts[c.slot + 1] = n;
        }
    }

    let mut s = Search {
        src: &src_units,
        tgt,
        classes,
        failed: HashSet::new(),
        states: 0,
        limit,
        path: Vec::new(),
    };
    match s.run(0, 0, &mut counts) {
        Some(true) => FeasibilityResult {
            status: Feasibility::Feasible,
            feasible: true,
            realized_target: Some(tgt_text.to_string()),
            assignment: Some(s.assignment()),
            states_explored: s.states,
        },
        Some(false) => FeasibilityResult::failed(Feasibility::Infeasible, s.states),
        None => FeasibilityResult::failed(Feasibility::Undecided, s.states),
    }
}
