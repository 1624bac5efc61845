use gee_core::atomic::{serialize_edits, Feasibility};
use gee_core::corpus::{filter_pairs, mini_corpus, FilterConfig};
use gee_core::diff::coarse_edits;
use gee_core::eval::{coverage, match_edits};
use gee_core::llm::{
    explain_edits, extract_edits_llm, render_prompt, LlmContext, PromptEdits, PromptTemplate, ReplayProvider,
    ResponseCache, RetryPolicy, Step, StepSettings, TranscriptRecord,
};
use gee_core::{AtomicEdit, EditOp, SentencePair, Tokenizer};

fn describe(e: &AtomicEdit) -> String {
    let what = match e.op {
        EditOp::Insert => format!("The word '{}' is inserted", e.tgt),
        EditOp::Delete => format!("The word '{}' is deleted", e.orig),
        EditOp::Replace => format!("The word '{}' is replaced by '{}'", e.orig, e.tgt),
        EditOp::Relocate => format!("The word '{}' is relocated", e.orig),
    };
    format!("{what} because the sentence needs it.\nError type: grammar")
}

fn transcript(pairs: &[SentencePair], tok: &Tokenizer) -> Vec<TranscriptRecord> {
    let mut out = Vec::new();
    for p in pairs {
        let ex = PromptTemplate::builtin(p.lang, Step::Extract).unwrap();
        let xp = PromptTemplate::builtin(p.lang, Step::Explain).unwrap();
        let coarse = coarse_edits(&tok.tokenize(p.lang, &p.source), &tok.tokenize(p.lang, &p.target));
        let gold = p.gold_edits.clone().unwrap();
        let prompt = render_prompt(&ex, p, Some(PromptEdits::Coarse(&coarse))).unwrap();
        out.push(TranscriptRecord::new(&prompt, serialize_edits(&gold)));
        let prompt = render_prompt(&xp, p, Some(PromptEdits::Atomic(&gold))).unwrap();
        let reply: Vec<String> = gold.iter().map(describe).collect();
        out.push(TranscriptRecord::new(&prompt, reply.join("\n")));
    }
    out
}

fn run(pairs: &[SentencePair], provider: &ReplayProvider, cache: &ResponseCache, tok: &Tokenizer) -> Vec<String> {
    let ctx = LlmContext {
        provider,
        cache: Some(cache),
        retry: RetryPolicy::no_delay(),
    };
    let mut lines = Vec::new();
    for p in pairs {
        let ex = PromptTemplate::builtin(p.lang, Step::Extract).unwrap();
        let xp = PromptTemplate::builtin(p.lang, Step::Explain).unwrap();
        let got = extract_edits_llm(p, tok, &ex, &ctx, &StepSettings::extraction("m")).unwrap();
        assert_eq!(got.feasibility.status, Feasibility::Feasible, "{}", p.id);
        let gold = p.gold_edits.clone().unwrap();
        let m = match_edits(&got.edits, &gold, p, tok).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (gold.len(), 0, 0), "{}", p.id);
        let out = explain_edits(p, &got.edits, &xp, &ctx, &StepSettings::explanation("m")).unwrap();
        let cov = coverage(&got.edits, &out.explanations, p);
        assert!(cov.missing_edits.is_empty(), "{}: {:?}", p.id, cov.missing_edits);
        assert!(cov.hallucinated.is_empty(), "{}", p.id);
        lines.push(serde_json::to_string(&(&got.edits, &out.explanations)).unwrap());
    }
    lines
}

#[test]
fn replayed_run_is_repeatable_from_cache() {
    let tok = Tokenizer::default();
    let pairs = filter_pairs(mini_corpus(), &FilterConfig::default(), &tok);
    let dir = tempfile::tempdir().unwrap();
    let cache = ResponseCache::open(dir.path()).unwrap();

    let live = ReplayProvider::new(transcript(&pairs, &tok));
    let first = run(&pairs, &live, &cache, &tok);
    assert_eq!(live.calls(), 2 * pairs.len());

    let empty = ReplayProvider::new(Vec::new());
    let second = run(&pairs, &empty, &cache, &tok);
    assert_eq!(empty.calls(), 0);
    assert_eq!(first, second);
}
