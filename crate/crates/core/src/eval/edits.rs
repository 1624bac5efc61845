//! Predicted edits against gold edits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prf;
use crate::atomic::{apply_edits, AtomicEdit, Feasibility};
use crate::corpus::SentencePair;
use crate::tokenize::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    ExactMatch,
    /// Not in the gold list, but the predicted script as a whole reaches
    /// the target. Waits for a human verdict.
    FeasibleUnmatched,
    Infeasible,
    /// A feasible_unmatched edit accepted by adjudication.
    Accepted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub pair_id: String,
    pub edit: AtomicEdit,
    pub status: ReviewStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditMatchReport {
    pub pairs: usize,
    pub gold: usize,
    pub predicted: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub review_queue: Vec<ReviewItem>,
    /// Gold edits nobody predicted, as (pair id, edit).
    pub missed_gold: Vec<(String, AtomicEdit)>,
}

impl Default for EditMatchReport {
    fn default() -> Self {
        EditMatchReport {
            pairs: 0,
            gold: 0,
            predicted: 0,
            tp: 0,
            fp: 0,
            fn_: 0,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            review_queue: Vec::new(),
            missed_gold: Vec::new(),
        }
    }
}

impl EditMatchReport {
    fn refresh(&mut self) {
        let (p, r, f) = prf(self.tp, self.fp, self.fn_);
        self.precision = p;
        self.recall = r;
        self.f1 = f;
    }

    /// Component-wise sum; metrics are recomputed from the summed counts.
    pub fn merge(mut self, other: EditMatchReport) -> EditMatchReport {
        self.pairs += other.pairs;
        self.gold += other.gold;
        self.predicted += other.predicted;
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.review_queue.extend(other.review_queue);
        self.missed_gold.extend(other.missed_gold);
        self.refresh();
        self
    }

    pub fn pending(&self) -> impl Iterator<Item = &ReviewItem> {
        self.review_queue
            .iter()
            .filter(|i| i.status == ReviewStatus::FeasibleUnmatched)
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("pair {0} has no gold edits")]
    MissingGold(String),
    #[error("gold edits of pair {0} do not turn the source into the target")]
    InfeasibleGold(String),
    #[error("adjudication line {line}: {message}")]
    Adjudication { line: usize, message: String },
}

/// Scores `predicted` against `gold` for one pair. Matching is on
/// `(op, orig, tgt)` triples, as multisets.
pub fn match_edits(
    predicted: &[AtomicEdit],
    gold: &[AtomicEdit],
    pair: &SentencePair,
    tokenizer: &Tokenizer,
) -> Result<EditMatchReport, EvalError> {
    let src = tokenizer.tokenize(pair.lang, &pair.source);
    if apply_edits(&src, &pair.target, gold).status == Feasibility::Infeasible {
        return Err(EvalError::InfeasibleGold(pair.id.clone()));
    }

    let mut used = vec![false; gold.len()];
    let mut hit = vec![false; predicted.len()];
    for (i, p) in predicted.iter().enumerate() {
        if let Some(j) = (0..gold.len()).find(|&j| !used[j] && gold[j].key() == p.key()) {
            used[j] = true;
            hit[i] = true;
        }
    }
    let tp = hit.iter().filter(|&&h| h).count();
    let unmatched_status = if tp == predicted.len() || apply_edits(&src, &pair.target, predicted).feasible {
        ReviewStatus::FeasibleUnmatched
    } else {
        ReviewStatus::Infeasible
    };
    let review_queue = predicted
        .iter()
        .zip(&hit)
        .map(|(e, &h)| ReviewItem {
            pair_id: pair.id.clone(),
            edit: e.without_spans(),
            status: if h { ReviewStatus::ExactMatch } else { unmatched_status },
        })
        .collect();
    let missed_gold = gold
        .iter()
        .zip(&used)
        .filter(|(_, &u)| !u)
        .map(|(e, _)| (pair.id.clone(), e.without_spans()))
        .collect();

    let mut report = EditMatchReport {
        pairs: 1,
        gold: gold.len(),
        predicted: predicted.len(),
        tp,
        fp: predicted.len() - tp,
        fn_: gold.len() - tp,
        review_queue,
        missed_gold,
        ..EditMatchReport::default()
    };
    report.refresh();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

/// One human verdict on a queued edit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjudication {
    pub pair_id: String,
    pub edit: AtomicEdit,
    pub verdict: Verdict,
}

pub fn parse_adjudications(text: &str) -> Result<Vec<Adjudication>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let a = serde_json::from_str(line).map_err(|e| EvalError::Adjudication {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(a);
    }
    Ok(out)
}

/// Flips accepted feasible_unmatched edits to true positives. Apply to
/// per-pair reports before merging: false negatives become
/// `max(gold - tp, 0)`, which is a per-pair quantity. Returns how many
/// verdicts found no queued edit.
pub fn apply_adjudications(report: &mut EditMatchReport, verdicts: &[Adjudication]) -> usize {
    let mut unused = 0;
    for v in verdicts.iter().filter(|v| v.verdict == Verdict::Accept) {
        let item = report.review_queue.iter_mut().find(|i| {
            i.status == ReviewStatus::FeasibleUnmatched
                && i.pair_id == v.pair_id
                && i.edit.key() == v.edit.key()
        });
        match item {
            Some(item) => {
                item.status = ReviewStatus::Accepted;
                report.tp += 1;
                report.fp -= 1;
            }
            None => unused += 1,
        }
    }
    report.fn_ = report.gold.saturating_sub(report.tp);
    report.refresh();
    unused
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Lang;

    fn ex3() -> (SentencePair, Vec<AtomicEdit>) {
        let gold = vec![
            AtomicEdit::insert("Ich"),
            AtomicEdit::relocate("machen"),
            AtomicEdit::replace("ein", "einen"),
            AtomicEdit::delete("?"),
        ];
        let pair = SentencePair::new("ex3", Lang::De, "möchte machen ein Termine.?", "Ich möchte einen Termine machen.")
            .with_gold(gold.clone());
        (pair, gold)
    }

    #[test]
    fn identical_lists() {
        let (pair, gold) = ex3();
        let r = match_edits(&gold, &gold, &pair, &Tokenizer::default()).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (4, 0, 0));
        assert_eq!(r.f1, 1.0);
        assert!(r.review_queue.iter().all(|i| i.status == ReviewStatus::ExactMatch));
    }

    #[test]
    fn one_missing_prediction() {
        let (pair, gold) = ex3();
        let r = match_edits(&gold[..3], &gold, &pair, &Tokenizer::default()).unwrap();
        assert_eq!(r.recall, 0.75);
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.missed_gold, vec![("ex3".to_string(), AtomicEdit::delete("?"))]);
    }

    #[test]
    fn alternative_decomposition_is_queued_then_adjudicated() {
        let pair = SentencePair::new("a2", Lang::De, "Ich möchte haben einen roten Apfel.", "Ich möchte einen roten Apfel haben.")
            .with_gold(vec![AtomicEdit::relocate("haben")]);
        let predicted = [AtomicEdit::delete("haben"), AtomicEdit::insert("haben")];
        let mut r = match_edits(&predicted, pair.gold_edits.as_ref().unwrap(), &pair, &Tokenizer::default()).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (0, 2, 1));
        assert_eq!(r.pending().count(), 2);

        let verdicts = parse_adjudications(
            "{\"pair_id\":\"a2\",\"edit\":[\"delete\",\"haben\",\"\"],\"verdict\":\"accept\"}\n\
             {\"pair_id\":\"a2\",\"edit\":[\"insert\",\"\",\"haben\"],\"verdict\":\"accept\"}\n\
             {\"pair_id\":\"zz\",\"edit\":[\"insert\",\"\",\"x\"],\"verdict\":\"accept\"}\n",
        )
        .unwrap();
        assert_eq!(apply_adjudications(&mut r, &verdicts), 1);
        assert_eq!((r.tp, r.fp, r.fn_), (2, 0, 0));
        assert_eq!(r.f1, 1.0);
    }

    #[test]
    fn infeasible_predictions_are_marked() {
        let (pair, gold) = ex3();
        let r = match_edits(&[AtomicEdit::replace("ein", "einen"), AtomicEdit::delete("Termine")], &gold, &pair, &Tokenizer::default()).unwrap();
        assert_eq!(r.review_queue[1].status, ReviewStatus::Infeasible);
        assert_eq!(r.tp + r.fp, 2);
        assert_eq!(r.tp + r.fn_, 4);
    }

    #[test]
    fn bad_gold_is_an_error() {
        let pair = SentencePair::new("g", Lang::De, "a b", "a c");
        let gold = [AtomicEdit::delete("b")];
        assert!(matches!(match_edits(&[], &gold, &pair, &Tokenizer::default()), Err(EvalError::InfeasibleGold(_))));
    }

    #[test]
    fn merge_sums_counts() {
        let (pair, gold) = ex3();
        let t = Tokenizer::default();
        let a = match_edits(&gold, &gold, &pair, &t).unwrap();
        let b = match_edits(&gold[..2], &gold, &pair, &t).unwrap();
        let m = EditMatchReport::default().merge(a).merge(b);
        assert_eq!((m.pairs, m.tp, m.fp, m.fn_), (2, 6, 0, 2));
        assert_eq!(m.recall, 0.75);
    }
}
