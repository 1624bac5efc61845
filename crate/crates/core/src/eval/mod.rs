//! Scoring: edit extraction against gold edits, explanation coverage, and
//! aggregation of human annotations.

mod annotation;
mod coverage;
mod edits;
mod report;

pub use annotation::{
    aggregate_annotations, parse_annotations, Agreement, AnnotationError, AnnotationRecord,
    AnnotationSummary, MistakeLabel,
};
pub use coverage::{
    coverage, extract_mentions, link_explanations, CoverageReport, CoverageTotals, Hallucination,
    MatchedEdit, Mention,
};
pub use edits::{
    apply_adjudications, match_edits, parse_adjudications, Adjudication, EditMatchReport,
    EvalError, ReviewItem, ReviewStatus, Verdict,
};
pub use report::{
    agreement_table, annotation_table, coverage_table, edit_table, write_report_files, Table,
};

/// Precision, recall and F1 from counts. Zero denominators give 0.
pub fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    (p, r, f1_from_pr(p, r))
}

/// Harmonic mean of precision and recall.
pub fn f1_from_pr(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// `n / d` as a percentage with one decimal, rounded half away from zero.
/// Computed on integers so the result is exact for any counts.
pub fn percent(n: usize, d: usize) -> f64 {
    if d == 0 {
        return 0.0;
    }
    let (n, d) = (n as u128, d as u128);
    let tenths = (2 * n * 1000 + d) / (2 * d);
    tenths as f64 / 10.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prf_examples() {
        assert_eq!(prf(4, 0, 0), (1.0, 1.0, 1.0));
        assert_eq!(prf(0, 0, 5), (0.0, 0.0, 0.0));
        assert_eq!(prf(3, 1, 1), (0.75, 0.75, 0.75));
        assert_eq!(prf(0, 0, 0), (0.0, 0.0, 0.0));
    }

    #[test]
    fn f1_from_reported_scores() {
        assert!((f1_from_pr(0.675, 0.602) - 0.636).abs() < 1e-3);
        assert!((f1_from_pr(0.862, 0.824) - 0.843).abs() < 1e-3);
        assert_eq!(f1_from_pr(1.0, 1.0), 1.0);
        assert_eq!(f1_from_pr(0.0, 0.0), 0.0);
    }

    #[test]
    fn percentages() {
        assert_eq!(percent(1865, 1986), 93.9);
        assert_eq!(percent(296, 302), 98.0);
        assert_eq!(percent(78 + 8, 96), 89.6);
        assert_eq!(percent(78, 96), 81.3);
        assert_eq!(percent(1, 8), 12.5);
        assert_eq!(percent(1, 0), 0.0);
        assert_eq!(percent(1, 2000), 0.1);
    }
}
