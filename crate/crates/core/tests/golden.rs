use std::time::Instant;

use gee_core::atomic::{apply_edits_to, extract_rule_based, Feasibility, RefinerConfig};
use gee_core::corpus::{corpus_stats, mini_corpus};
use gee_core::{AtomicEdit, Lang, SentencePair, Tokenizer};

fn sorted(edits: &[AtomicEdit]) -> Vec<String> {
    let mut v: Vec<String> = edits.iter().map(AtomicEdit::to_line).collect();
    v.sort();
    v
}

fn rule(src: &str, tgt: &str) -> Vec<AtomicEdit> {
    let t = Tokenizer::default();
    let s = t.tokenize(Lang::De, src);
    let g = t.tokenize(Lang::De, tgt);
    let edits = extract_rule_based(&s, &g, &RefinerConfig::default());
    assert_eq!(apply_edits_to(&s, &g, &edits).status, Feasibility::Feasible, "{src}");
    edits
}

fn check(src: &str, tgt: &str, want: &[AtomicEdit]) {
    assert_eq!(sorted(&rule(src, tgt)), sorted(want), "{src} -> {tgt}");
}

#[test]
fn appointment_example() {
    check(
        "Ich möchte machen ein termin.",
        "Ich möchte einen Termin machen.",
        &[AtomicEdit::relocate("machen"), AtomicEdit::replace("ein", "einen"), AtomicEdit::replace("termin", "Termin")],
    );
}

#[test]
fn extraction_walkthrough() {
    check(
        "möchte machen ein Termine.?",
        "Ich möchte einen Termine machen.",
        &[
            AtomicEdit::insert("Ich"),
            AtomicEdit::relocate("machen"),
            AtomicEdit::replace("ein", "einen"),
            AtomicEdit::delete("?"),
        ],
    );
}

#[test]
fn prompt_examples() {
    check(
        "Wie oben schon erwähnt ist die Chance erwisht zurweden zwar gering, aber sie ver handen.",
        "Wie oben schon erwähnt ist die Chance, erwischt zu werden, zwar gering, aber sie ist vorhanden.",
        &[
            AtomicEdit::insert(","),
            AtomicEdit::replace("erwisht", "erwischt"),
            AtomicEdit::replace("zurweden", "zu werden"),
            AtomicEdit::insert(","),
            AtomicEdit::insert("ist"),
            AtomicEdit::replace("ver handen", "vorhanden"),
        ],
    );
    // different words, so no relocation
    check(
        "ich haben essen zwei Bananen.",
        "Ich habe zwei Bananen gegessen.",
        &[
            AtomicEdit::replace("ich", "Ich"),
            AtomicEdit::replace("haben", "habe"),
            AtomicEdit::delete("essen"),
            AtomicEdit::insert("gegessen"),
        ],
    );
    check("Ich habe gegessen zwei Bananen.", "Ich habe zwei Bananen gegessen.", &[AtomicEdit::relocate("gegessen")]);
}

#[test]
fn local_and_distant_relocation() {
    check("Ich möchte haben einen Apfel.", "Ich möchte einen Apfel haben.", &[AtomicEdit::relocate("haben")]);
    check("Ich möchte haben einen roten Apfel.", "Ich möchte einen roten Apfel haben.", &[AtomicEdit::relocate("haben")]);
}

#[test]
fn golden_set_is_fast() {
    let start = Instant::now();
    for _ in 0..5 {
        appointment_example();
        extraction_walkthrough();
        prompt_examples();
        local_and_distant_relocation();
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn mini_corpus_gold_is_reproduced() {
    let t = Tokenizer::default();
    for p in mini_corpus() {
        let s = t.tokenize(p.lang, &p.source);
        let g = t.tokenize(p.lang, &p.target);
        let gold = p.gold_edits.clone().unwrap();
        assert_eq!(apply_edits_to(&s, &g, &gold).status, Feasibility::Feasible, "{}", p.id);
        let got = extract_rule_based(&s, &g, &RefinerConfig::default());
        assert_eq!(sorted(&got), sorted(&gold), "{}", p.id);
    }
}

fn synthetic(pairs: usize, edits: usize) -> Vec<SentencePair> {
    (0..pairs)
        .map(|i| {
            let n = edits / pairs + usize::from(i < edits % pairs);
            SentencePair::new(format!("s{i}"), Lang::De, "ein satz .", "Ein Satz .")
                .with_gold(vec![AtomicEdit::insert("x"); n])
        })
        .collect()
}

#[test]
fn table_one_means() {
    let t = Tokenizer::default();
    let de = corpus_stats(&synthetic(550, 1784), &t);
    assert_eq!((de.pair_count, de.edit_count), (550, 1784));
    assert!((de.mean_edits_per_pair - 3.24).abs() < 0.005);
    let zh = corpus_stats(&synthetic(549, 884), &t);
    assert!((zh.mean_edits_per_pair - 1.61).abs() < 0.005);
    assert_eq!(zh.token_length_histogram.get("000-009"), Some(&549));
}
