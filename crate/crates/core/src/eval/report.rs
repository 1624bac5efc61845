//! Report tables as CSV and static HTML.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::{percent, Agreement, AnnotationSummary, CoverageTotals, EditMatchReport, MistakeLabel};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    /// Short name, used in file names.
    pub name: String,
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, title: &str, header: &[&str]) -> Table {
        Table {
            name: name.into(),
            title: title.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn row(&mut self, cells: &[String]) {
        self.rows.push(cells.to_vec());
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        w.write_record(&self.header).expect("writing to memory");
        for r in &self.rows {
            w.write_record(r).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv of strings is utf-8")
    }

    pub fn to_html(&self) -> String {
        let mut s = format!("<table>\n<caption>{}</caption>\n<thead><tr>", escape(&self.title));
        for h in &self.header {
            s.push_str(&format!("<th>{}</th>", escape(h)));
        }
        s.push_str("</tr></thead>\n<tbody>\n");
        for r in &self.rows {
            s.push_str("<tr>");
            for c in r {
                s.push_str(&format!("<td>{}</td>", escape(c)));
            }
            s.push_str("</tr>\n");
        }
        s.push_str("</tbody>\n</table>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn pct(n: usize, d: usize) -> String {
    format!("{:.1}%", percent(n, d))
}

pub fn edit_table(r: &EditMatchReport) -> Table {
    let mut t = Table::new("edits", "Edit extraction against gold edits", &["", "Score"]);
    t.row(&["Recall".into(), format!("{:.3}", r.recall)]);
    t.row(&["Precision".into(), format!("{:.3}", r.precision)]);
    t.row(&["F1".into(), format!("{:.3}", r.f1)]);
    t.row(&["True positives".into(), r.tp.to_string()]);
    t.row(&["False positives".into(), r.fp.to_string()]);
    t.row(&["False negatives".into(), r.fn_.to_string()]);
    t.row(&["Awaiting review".into(), r.pending().count().to_string()]);
    t
}

pub fn annotation_table(s: &AnnotationSummary) -> Table {
    let mut t = Table::new("mistakes", "Mistakes in generated explanations", &["", "Count", "Percentage"]);
    for l in MistakeLabel::EXPLANATION_LABELS {
        t.row(&[l.title().into(), s.count(l).to_string(), pct(s.count(l), s.explanations)]);
    }
    t.row(&["Total explanation count".into(), s.explanations.to_string(), "100%".into()]);
    t.row(&["Total annotated items".into(), s.items.to_string(), String::new()]);
    t.row(&["Missing error".into(), s.missing_errors.to_string(), String::new()]);
    t
}

pub fn agreement_table(a: &Agreement) -> Table {
    let mut t = Table::new("agreement", "Agreement between annotators", &["", "Count", "Percentage"]);
    let n = a.total();
    t.row(&["Fully agree".into(), a.fully_agree.to_string(), pct(a.fully_agree, n)]);
    t.row(&["Disagree on missing errors".into(), a.disagree_missing.to_string(), pct(a.disagree_missing, n)]);
    t.row(&["Disagree on other mistakes".into(), a.disagree_other.to_string(), pct(a.disagree_other, n)]);
    t.row(&["Sum".into(), n.to_string(), "100%".into()]);
    t.row(&["Agreement rate".into(), (a.fully_agree + a.disagree_missing).to_string(), format!("{:.1}%", a.rate())]);
    t
}

pub fn coverage_table(c: &CoverageTotals) -> Table {
    let mut t = Table::new("coverage", "Explanation coverage", &["", "Count", "Percentage"]);
    t.row(&["Edits".into(), c.edits.to_string(), "100%".into()]);
    t.row(&["Explained".into(), c.matched.to_string(), pct(c.matched, c.edits)]);
    t.row(&["Missing".into(), c.missing.to_string(), pct(c.missing, c.edits)]);
    t.row(&["Explanations".into(), c.explanations.to_string(), "100%".into()]);
    t.row(&["Hallucinated".into(), c.hallucinated.to_string(), pct(c.hallucinated, c.explanations)]);
    t
}

/// Writes `out` as pretty JSON, `out` with an `.html` extension holding all
/// tables, and one `<stem>.<table>.csv` per table. Returns the paths written.
pub fn write_report_files(out: &Path, json: &serde_json::Value, tables: &[Table]) -> io::Result<Vec<PathBuf>> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut written = Vec::new();
    fs::write(out, serde_json::to_string_pretty(json)? + "\n")?;
    written.push(out.to_path_buf());

    let mut html = String::from("<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>Report</title></head>\n<body>\n");
    for t in tables {
        html.push_str(&t.to_html());
    }
    html.push_str("</body>\n</html>\n");
    let html_path = out.with_extension("html");
    fs::write(&html_path, html)?;
    written.push(html_path);

    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    for t in tables {
        let p = out.with_file_name(format!("{stem}.{}.csv", t.name));
        fs::write(&p, t.to_csv())?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agreement_rows() {
        let a = Agreement {
            fully_agree: 78,
            disagree_missing: 8,
            disagree_other: 10,
        };
        let t = agreement_table(&a);
        assert_eq!(t.rows[0][2], "81.3%");
        assert_eq!(t.rows[1][2], "8.3%");
        assert_eq!(t.rows[2][2], "10.4%");
        assert_eq!(t.rows[4][2], "89.6%");
    }

    #[test]
    fn csv_and_html_escape() {
        let mut t = Table::new("x", "a<b", &["k", "v"]);
        t.row(&["x,y".into(), "\"q\"".into()]);
        assert_eq!(t.to_csv(), "k,v\n\"x,y\",\"\"\"q\"\"\"\n");
        assert!(t.to_html().contains("a&lt;b") && t.to_html().contains("&quot;q&quot;"));
    }

    #[test]
    fn files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sub/report.json");
        let t = coverage_table(&CoverageTotals::default());
        let paths = write_report_files(&out, &serde_json::json!({"a": 1}), &[t]).unwrap();
        assert_eq!(paths.len(), 3);
        assert!(dir.path().join("sub/report.coverage.csv").exists());
        assert!(dir.path().join("sub/report.html").exists());
    }
}
