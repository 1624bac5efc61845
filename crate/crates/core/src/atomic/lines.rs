//! The bracketed edit-line format: `["op", "orig", "tgt"]`, one per line.
//!
//! Writing is strict. Reading is lenient because model replies drift: any
//! of `"` `'` and typographic quotes, unquoted fields, several brackets on a
//! line, trailing commas or periods. Lines without a usable bracket are
//! skipped with a warning.

use thiserror::Error;

use super::{AtomicEdit, EditOp};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedEdits {
    pub edits: Vec<AtomicEdit>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("no edit lines found in {} line(s) of text", raw.lines().count())]
pub struct EditParseError {
    pub raw: String,
    pub warnings: Vec<String>,
}

pub fn serialize_edits(edits: &[AtomicEdit]) -> String {
    edits
        .iter()
        .map(AtomicEdit::to_line)
        .collect::<Vec<_>>()
        .join("\n")
}

fn closing_quote(open: char) -> Option<&'static [char]> {
    match open {
        '"' => Some(&['"', '”', '“']),
        '\'' => Some(&['\'', '’', '‘']),
        '‘' | '’' => Some(&['’', '\'', '‘']),
        '“' | '”' | '„' => Some(&['”', '“', '"']),
        '`' => Some(&['`', '\'']),
        _ => None,
    }
}

/// Splits the inside of one bracket into fields. Returns `None` when a quote
/// is left open.
fn split_fields(inner: &str) -> Option<Vec<String>> {
    let chars: Vec<char> = inner.chars().collect();
    let mut fields = Vec::new();
    let mut k = 0;
    loop {
        while k < chars.len() && chars[k].is_whitespace() {
            k += 1;
        }
        if k >= chars.len() {
            if inner.trim_end().ends_with(',') {
                fields.push(String::new());
            }
            break;
        }
        if let Some(closers) = closing_quote(chars[k]) {
            // a closing quote only counts when followed by a separator
            let start = k + 1;
            let mut end = None;
            let mut p = start;
            while p < chars.len() {
                if closers.contains(&chars[p]) {
                    let mut q = p + 1;
                    while q < chars.len() && chars[q].is_whitespace() {
                        q += 1;
                    }
                    if q >= chars.len() || chars[q] == ',' {
                        end = Some((p, q));
                        break;
                    }
                }
                p += 1;
            }
            let (p, q) = end?;
            fields.push(chars[start..p].iter().collect());
            k = q + 1;
            if q >= chars.len() {
                break;
            }
        } else {
            let start = k;
            while k < chars.len() && chars[k] != ',' {
                k += 1;
            }
            fields.push(chars[start..k].iter().collect::<String>().trim().to_string());
            let at_end = k >= chars.len();
            k += 1;
            if at_end {
                break;
            }
        }
    }
    Some(fields)
}

/// Top-level `[...]` groups of a line, outside quotes.
fn brackets(line: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    let mut in_str = false;
    let mut escaped = false;
    for (pos, c) in line.char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '[' if start.is_none() => start = Some(pos),
            '"' if start.is_some() => in_str = true,
            ']' => {
                if let Some(s) = start.take() {
                    out.push(&line[s..=pos]);
                }
            }
            _ => {}
        }
    }
    out
}

fn parse_bracket(group: &str) -> Result<AtomicEdit, String> {
    let fields: Vec<String> = match serde_json::from_str::<Vec<String>>(group) {
        Ok(f) => f,
        Err(_) => split_fields(&group[1..group.len() - 1])
            .ok_or_else(|| format!("unterminated quote in {group}"))?,
    };
    if fields.len() != 3 {
        return Err(format!("expected 3 fields, found {} in {group}", fields.len()));
    }
    let op: EditOp = fields[0].parse()?;
    Ok(AtomicEdit::new(op, fields[1].clone(), fields[2].clone()))
}

/// Repairs edits that break the invariants where the intent is clear.
fn normalize(e: AtomicEdit, warnings: &mut Vec<String>, out: &mut Vec<AtomicEdit>) {
    let (o, t) = (e.orig.is_empty(), e.tgt.is_empty());
    match e.op {
        EditOp::Relocate if !o && !t && e.orig != e.tgt => {
            warnings.push(format!("{e}: relocated text changed, split into delete and insert"));
            out.push(AtomicEdit::delete(e.orig));
            out.push(AtomicEdit::insert(e.tgt));
        }
        _ if o && t => warnings.push(format!("{e}: empty edit dropped")),
        EditOp::Insert | EditOp::Replace | EditOp::Relocate if o => {
            if e.op != EditOp::Insert {
                warnings.push(format!("{e}: empty original, read as insert"));
            }
            out.push(AtomicEdit::insert(e.tgt));
        }
        EditOp::Delete | EditOp::Replace | EditOp::Relocate if t => {
            if e.op != EditOp::Delete {
                warnings.push(format!("{e}: empty target, read as delete"));
            }
            out.push(AtomicEdit::delete(e.orig));
        }
        EditOp::Insert => {
            warnings.push(format!("{e}: insert with an original, read as replace"));
            out.push(AtomicEdit::replace(e.orig, e.tgt));
        }
        EditOp::Delete => {
            warnings.push(format!("{e}: delete with a target, read as replace"));
            out.push(AtomicEdit::replace(e.orig, e.tgt));
        }
        // identity replacements are left for postprocess
        _ => out.push(e),
    }
}

pub fn parse_edit_lines(text: &str) -> Result<ParsedEdits, EditParseError> {
    let mut parsed = ParsedEdits::default();
    let mut found = 0usize;
    for (n, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let groups = brackets(trimmed);
        if groups.is_empty() {
            parsed.warnings.push(format!("line {}: skipped {trimmed:?}", n + 1));
            continue;
        }
        for group in groups {
            match parse_bracket(group) {
                Ok(e) => {
                    found += 1;
                    normalize(e, &mut parsed.warnings, &mut parsed.edits);
                }
                Err(msg) => parsed.warnings.push(format!("line {}: {msg}", n + 1)),
            }
        }
    }
    if found == 0 && !text.trim().is_empty() {
        return Err(EditParseError {
            raw: text.to_string(),
            warnings: parsed.warnings,
        });
    }
    Ok(parsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edits(text: &str) -> Vec<AtomicEdit> {
        parse_edit_lines(text).unwrap().edits
    }

    #[test]
    fn serialize_examples() {
        let list = vec![AtomicEdit::insert("Ich"), AtomicEdit::relocate("machen")];
        assert_eq!(
            serialize_edits(&list),
            "[\"insert\", \"\", \"Ich\"]\n[\"relocate\", \"machen\", \"machen\"]"
        );
        assert_eq!(serialize_edits(&[]), "");
    }

    #[test]
    fn quote_styles() {
        assert_eq!(edits(r#"["replace", "ein", "einen"]"#), vec![AtomicEdit::replace("ein", "einen")]);
        assert_eq!(edits("['delete', '?', '']"), vec![AtomicEdit::delete("?")]);
        assert_eq!(edits("[‘replace’, ‘ein’, ‘einen’],"), vec![AtomicEdit::replace("ein", "einen")]);
        assert_eq!(edits("[“insert”, “”, “Ich”]."), vec![AtomicEdit::insert("Ich")]);
        assert_eq!(edits("[insert, , Ich]"), vec![AtomicEdit::insert("Ich")]);
    }

    #[test]
    fn apostrophes_inside_fields() {
        assert_eq!(edits(r#"['replace', 'gehts', 'geht's']"#), vec![AtomicEdit::replace("gehts", "geht's")]);
    }

    #[test]
    fn commas_and_brackets_inside_fields() {
        assert_eq!(edits(r#"["insert", "", ","]"#), vec![AtomicEdit::insert(",")]);
        assert_eq!(
            edits(r#"["replace", "a", "b"] ["delete", "c", ""]"#),
            vec![AtomicEdit::replace("a", "b"), AtomicEdit::delete("c")]
        );
    }

    #[test]
    fn headers_and_broken_lines_are_warnings() {
        let p = parse_edit_lines("Atomic edits:\n[\"replace\", \"再\", \"在]\n[\"delete\", \"了\", \"\"]").unwrap();
        assert_eq!(p.edits, vec![AtomicEdit::delete("了")]);
        assert_eq!(p.warnings.len(), 2);
    }

    #[test]
    fn no_edits_is_an_error() {
        let err = parse_edit_lines("I could not find any errors.").unwrap_err();
        assert_eq!(err.raw, "I could not find any errors.");
        assert_eq!(parse_edit_lines("").unwrap(), ParsedEdits::default());
        assert_eq!(parse_edit_lines("  \n").unwrap().edits, vec![]);
    }

    #[test]
    fn invariant_repairs() {
        let p = parse_edit_lines(r#"["relocate", "essen", "gegessen"]"#).unwrap();
        assert_eq!(p.edits, vec![AtomicEdit::delete("essen"), AtomicEdit::insert("gegessen")]);
        assert_eq!(p.warnings.len(), 1);
        assert_eq!(edits(r#"["replace", "", "und"]"#), vec![AtomicEdit::insert("und")]);
        assert_eq!(edits(r#"["replace", "x", "x"]"#), vec![AtomicEdit::replace("x", "x")]);
    }

    #[test]
    fn round_trip() {
        let list = vec![
            AtomicEdit::insert("Ich"),
            AtomicEdit::relocate("machen"),
            AtomicEdit::replace("ein", "einen"),
            AtomicEdit::delete("?"),
            AtomicEdit::replace("\"x\"", "„x“"),
        ];
        assert_eq!(edits(&serialize_edits(&list)), list);
    }
}
