//! Tallies of human judgements on generated explanations.
//!
//! One JSONL record per judged explanation, plus one record per missing
//! error:
//!
//! ```text
//! {"pair_id": "p1", "annotator": "a", "explanation_index": 0, "label": "correct"}
//! {"pair_id": "p1", "annotator": "a", "label": "missing_error", "edit": "ein -> einen"}
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::percent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MistakeLabel {
    FullyCorrect,
    WrongEditDescription,
    WrongEditReason,
    WrongErrorType,
    HallucinatedError,
    MissingError,
}

impl MistakeLabel {
    pub const EXPLANATION_LABELS: [MistakeLabel; 5] = [
        MistakeLabel::FullyCorrect,
        MistakeLabel::WrongEditDescription,
        MistakeLabel::WrongEditReason,
        MistakeLabel::WrongErrorType,
        MistakeLabel::HallucinatedError,
    ];

    pub fn parse(s: &str) -> Option<MistakeLabel> {
        let s = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Some(match s.as_str() {
            "correct" | "fully_correct" => MistakeLabel::FullyCorrect,
            "wrong_edit_description" => MistakeLabel::WrongEditDescription,
            "wrong_edit_reason" => MistakeLabel::WrongEditReason,
            "wrong_error_type" => MistakeLabel::WrongErrorType,
            "hallucinated_error" | "hallucinated" => MistakeLabel::HallucinatedError,
            "missing_error" | "missing" => MistakeLabel::MissingError,
            _ => return None,
        })
    }

    pub fn title(self) -> &'static str {
        match self {
            MistakeLabel::FullyCorrect => "Fully correct",
            MistakeLabel::WrongEditDescription => "Wrong edit description",
            MistakeLabel::WrongEditReason => "Wrong edit reason",
            MistakeLabel::WrongErrorType => "Wrong error type",
            MistakeLabel::HallucinatedError => "Hallucinated error",
            MistakeLabel::MissingError => "Missing error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub pair_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation_index: Option<usize>,
    pub label: String,
    /// Free text identifying a missing error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit: Option<String>,
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("annotation line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("record {index} (pair {pair_id}): unknown label {label:?}")]
    UnknownLabel { index: usize, pair_id: String, label: String },
    #[error("record {index} (pair {pair_id}): explanation {explanation} judged twice by the same annotator")]
    Duplicate { index: usize, pair_id: String, explanation: usize },
    #[error("pair {pair_id} is listed as dual-annotated but has {annotators} annotator(s)")]
    NotDual { pair_id: String, annotators: usize },
}

pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| AnnotationError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Agreement between two annotators over the same pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agreement {
    /// Same mistakes, or none at all.
    pub fully_agree: usize,
    /// Same mistakes except for missing errors.
    pub disagree_missing: usize,
    pub disagree_other: usize,
}

impl Agreement {
    pub fn total(&self) -> usize {
        self.fully_agree + self.disagree_missing + self.disagree_other
    }

    /// Agreement on everything except missing errors: the first two
    /// categories together.
    pub fn rate(&self) -> f64 {
        percent(self.fully_agree + self.disagree_missing, self.total())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    /// Judged explanations per label (missing errors excluded).
    pub counts: BTreeMap<MistakeLabel, usize>,
    pub explanations: usize,
    /// Distinct (pair, annotator) combinations.
    pub items: usize,
    pub missing_errors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<Agreement>,
}

impl AnnotationSummary {
    pub fn count(&self, label: MistakeLabel) -> usize {
        self.counts.get(&label).copied().unwrap_or(0)
    }

    /// Share of all judged explanations, in percent.
    pub fn percentage(&self, label: MistakeLabel) -> f64 {
        percent(self.count(label), self.explanations)
    }

    /// The summary with derived percentages, for reports.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<_> = MistakeLabel::EXPLANATION_LABELS
            .iter()
            .map(|&l| json!({"label": l, "count": self.count(l), "percent": self.percentage(l)}))
            .collect();
        let mut v = json!({
            "categories": rows,
            "explanations": self.explanations,
            "items": self.items,
            "missing_errors": self.missing_errors,
        });
        if let Some(a) = self.agreement {
            v["agreement"] = json!({
                "fully_agree": a.fully_agree,
                "fully_agree_percent": percent(a.fully_agree, a.total()),
                "disagree_missing": a.disagree_missing,
                "disagree_missing_percent": percent(a.disagree_missing, a.total()),
                "disagree_other": a.disagree_other,
                "disagree_other_percent": percent(a.disagree_other, a.total()),
                "total": a.total(),
                "rate": a.rate(),
            });
        }
        v
    }
}

#[derive(Default)]
struct ItemMistakes {
    other: BTreeSet<(Option<usize>, MistakeLabel)>,
    missing: BTreeMap<Option<String>, usize>,
}

pub fn aggregate_annotations(
    records: &[AnnotationRecord],
    dual_annotated: Option<&BTreeSet<String>>,
) -> Result<AnnotationSummary, AnnotationError> {
    let mut s = AnnotationSummary::default();
    let mut items: BTreeMap<(String, Option<String>), ItemMistakes> = BTreeMap::new();
    let mut judged: BTreeSet<(&str, Option<&str>, usize)> = BTreeSet::new();

    for (index, r) in records.iter().enumerate() {
        let label = MistakeLabel::parse(&r.label).ok_or_else(|| AnnotationError::UnknownLabel {
            index,
            pair_id: r.pair_id.clone(),
            label: r.label.clone(),
        })?;
        let item = items.entry((r.pair_id.clone(), r.annotator.clone())).or_default();
        if label == MistakeLabel::MissingError {
            s.missing_errors += 1;
            *item.missing.entry(r.edit.clone()).or_default() += 1;
            continue;
        }
        if let Some(x) = r.explanation_index {
            if !judged.insert((&r.pair_id, r.annotator.as_deref(), x)) {
                return Err(AnnotationError::Duplicate {
                    index,
                    pair_id: r.pair_id.clone(),
                    explanation: x,
                });
            }
        }
        *s.counts.entry(label).or_default() += 1;
        s.explanations += 1;
        if label != MistakeLabel::FullyCorrect {
            item.other.insert((r.explanation_index, label));
        }
    }
    s.items = items.len();

    if let Some(dual) = dual_annotated {
        let mut a = Agreement::default();
        for id in dual {
            let both: Vec<&ItemMistakes> = items
                .range((id.clone(), None)..)
                .take_while(|((p, _), _)| p == id)
                .map(|(_, m)| m)
                .collect();
            if both.len() != 2 {
                return Err(AnnotationError::NotDual {
                    pair_id: id.clone(),
                    annotators: both.len(),
                });
            }
            let same_other = both[0].other == both[1].other;
            let same_missing = both[0].missing == both[1].missing;
            match (same_other, same_missing) {
                (true, true) => a.fully_agree += 1,
                (true, false) => a.disagree_missing += 1,
                _ => a.disagree_other += 1,
            }
        }
        s.agreement = Some(a);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(pair: &str, annotator: &str, x: Option<usize>, label: &str) -> AnnotationRecord {
        AnnotationRecord {
            pair_id: pair.into(),
            annotator: Some(annotator.into()),
            explanation_index: x,
            label: label.into(),
            edit: None,
        }
    }

    #[test]
    fn category_table() {
        let mut records = Vec::new();
        let rows = [
            ("correct", 1865),
            ("wrong_edit_description", 65),
            ("wrong_edit_reason", 29),
            ("wrong_error_type", 12),
            ("hallucinated_error", 15),
        ];
        let mut n = 0;
        for (label, count) in rows {
            for _ in 0..count {
                records.push(rec(&format!("p{}", n / 3), "a", Some(n % 3), label));
                n += 1;
            }
        }
        for i in 0..67 {
            records.push(rec(&format!("p{i}"), "a", None, "missing_error"));
        }
        let s = aggregate_annotations(&records, None).unwrap();
        assert_eq!(s.explanations, 1986);
        assert_eq!(s.missing_errors, 67);
        assert_eq!(s.percentage(MistakeLabel::FullyCorrect), 93.9);
        assert_eq!(s.percentage(MistakeLabel::WrongEditDescription), 3.3);
        assert_eq!(s.percentage(MistakeLabel::WrongEditReason), 1.5);
        assert_eq!(s.percentage(MistakeLabel::WrongErrorType), 0.6);
        assert_eq!(s.percentage(MistakeLabel::HallucinatedError), 0.8);
        let total: usize = MistakeLabel::EXPLANATION_LABELS.iter().map(|&l| s.count(l)).sum();
        assert_eq!(total, s.explanations);
    }

    #[test]
    fn agreement_categories() {
        let records = vec![
            rec("same", "a", Some(0), "correct"),
            rec("same", "b", Some(0), "correct"),
            rec("miss", "a", Some(0), "correct"),
            rec("miss", "b", Some(0), "correct"),
            rec("miss", "b", None, "missing_error"),
            rec("other", "a", Some(0), "wrong_error_type"),
            rec("other", "b", Some(0), "correct"),
            rec("single", "a", Some(0), "correct"),
        ];
        let dual: BTreeSet<String> = ["same", "miss", "other"].iter().map(|s| s.to_string()).collect();
        let s = aggregate_annotations(&records, Some(&dual)).unwrap();
        let a = s.agreement.unwrap();
        assert_eq!((a.fully_agree, a.disagree_missing, a.disagree_other), (1, 1, 1));
        assert_eq!(s.items, 7);
        assert_eq!(a.rate(), 66.7);
    }

    #[test]
    fn reported_agreement_rate() {
        let a = Agreement {
            fully_agree: 78,
            disagree_missing: 8,
            disagree_other: 10,
        };
        assert_eq!(a.rate(), 89.6);
        assert_eq!(percent(a.fully_agree, a.total()), 81.3);
    }

    #[test]
    fn errors_name_the_record() {
        let err = aggregate_annotations(&[rec("p", "a", Some(0), "great")], None).unwrap_err();
        assert!(err.to_string().contains("pair p") && err.to_string().contains("great"));
        let dup = [rec("p", "a", Some(0), "correct"), rec("p", "a", Some(0), "correct")];
        assert!(matches!(aggregate_annotations(&dup, None), Err(AnnotationError::Duplicate { .. })));
        let dual: BTreeSet<String> = ["p".to_string()].into();
        assert!(matches!(
            aggregate_annotations(&[rec("p", "a", Some(0), "correct")], Some(&dual)),
            Err(AnnotationError::NotDual { .. })
        ));
    }

    #[test]
    fn labels_parse_loosely() {
        assert_eq!(MistakeLabel::parse("Wrong edit reason"), Some(MistakeLabel::WrongEditReason));
        assert_eq!(MistakeLabel::parse("fully-correct"), Some(MistakeLabel::FullyCorrect));
        assert_eq!(MistakeLabel::parse("?"), None);
    }
}
