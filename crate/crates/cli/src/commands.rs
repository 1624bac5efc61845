use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use gee_core::atomic::{apply_edits_to, extract_rule_based, RefinerConfig};
use gee_core::corpus::{corpus_stats, export_finetune, filter_pairs, load_pairs, CorpusStats, Format};
use gee_core::eval::{
    agreement_table, annotation_table, apply_adjudications, coverage, coverage_table, edit_table,
    match_edits, parse_adjudications, parse_annotations, aggregate_annotations, write_report_files,
    Adjudication, CoverageReport, CoverageTotals, EditMatchReport, ReviewStatus,
};
use gee_core::llm::{
    explain_edits, extract_edits_llm, LlmContext, OpenAiCompatible, PipelineError, PromptTemplate,
    Provider, ProviderError, ReplayProvider, ResponseCache, RetryPolicy, RunLogEntry, Step,
    StepSettings,
};
use gee_core::{Lang, Lexicon, SentencePair, Tokenizer};
use serde::Serialize;

use crate::artifacts::{read_jsonl, sibling, write_json, write_jsonl, EditsOnly, ExplainedPair, ExtractedPair};
use crate::config::{Config, ProviderKind};
use crate::failure::{Classify, Failure};
use crate::parallel::map_ordered;
use crate::{Cli, Command, Mode};

struct Env {
    config: Config,
    lang: Option<Lang>,
    cache_dir: Option<PathBuf>,
    run_log: Option<PathBuf>,
    tokenizer: Tokenizer,
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.global.config {
        Some(p) => Config::load(p).usage()?,
        None => Config::default(),
    };
    let tokenizer = match &config.lexicon {
        Some(p) => Tokenizer::new(Lexicon::load(p).usage()?),
        None => Tokenizer::default(),
    };
    let env = Env {
        lang: cli.global.lang.or(config.lang),
        cache_dir: cli.global.cache_dir.or_else(|| config.cache_dir.clone()),
        run_log: cli.global.run_log.or_else(|| config.run_log.clone()),
        config,
        tokenizer,
    };
    match cli.command {
        Command::Preprocess {
            input,
            output,
            stats,
            format,
            no_filter,
            finetune,
        } => preprocess(&env, &input, &output, stats, format.as_deref(), no_filter, finetune),
        Command::Extract { input, output, mode } => extract(&env, &input, &output, mode),
        Command::Explain { input, output } => explain(&env, &input, &output),
        Command::EvalEdits {
            predictions,
            gold,
            adjudications,
            report,
            queue,
        } => eval_edits(&env, &predictions, &gold, adjudications.as_deref(), &report, queue),
        Command::EvalCoverage {
            explanations,
            edits,
            report,
        } => eval_coverage(&env, &explanations, edits.as_deref(), &report),
        Command::Report {
            annotations,
            dual_ids,
            report,
        } => annotation_report(&annotations, dual_ids.as_deref(), &report),
    }
}

impl Env {
    fn keep(&self, lang: Lang) -> bool {
        self.lang.is_none_or(|l| l == lang)
    }

    fn load_pairs(&self, path: &Path, format: Format) -> Result<Vec<SentencePair>, Failure> {
        let pairs = load_pairs(path, format).data()?;
        Ok(pairs.into_iter().filter(|p| self.keep(p.lang)).collect())
    }

    fn provider(&self) -> Result<Box<dyn Provider>, Failure> {
        let p = &self.config.provider;
        match p.kind {
            ProviderKind::Replay => {
                let path = p
                    .transcript
                    .as_ref()
                    .ok_or_else(|| Failure::Usage(anyhow!("replay provider needs a transcript path")))?;
                Ok(Box::new(ReplayProvider::load(path).usage()?))
            }
            ProviderKind::Openai => Ok(Box::new(
                OpenAiCompatible::from_env(&p.endpoint, &p.credential_env).usage()?,
            )),
        }
    }

    fn cache(&self) -> Result<Option<ResponseCache>, Failure> {
        match &self.cache_dir {
            Some(d) => Ok(Some(
                ResponseCache::open(d)
                    .with_context(|| format!("opening cache {}", d.display()))
                    .usage()?,
            )),
            None => Ok(None),
        }
    }

    fn retry(&self) -> RetryPolicy {
        let mut r = RetryPolicy::default();
        if let Some(n) = self.config.provider.max_attempts {
            r.max_attempts = n.max(1);
        }
        r
    }

    fn template(&self, lang: Lang, step: Step) -> Result<PromptTemplate, Failure> {
        let prompts = &self.config.prompts;
        let custom = match (lang, step) {
            (Lang::De, Step::Extract) => &prompts.extract_de,
            (Lang::Zh, Step::Extract) => &prompts.extract_zh,
            (Lang::De, Step::Explain) => &prompts.explain_de,
            (Lang::Zh, Step::Explain) => &prompts.explain_zh,
            _ => &None,
        };
        match custom {
            Some(path) => PromptTemplate::load(path, lang, step).usage(),
            None => PromptTemplate::builtin(lang, step).usage(),
        }
    }

    fn templates(&self, step: Step) -> Result<BTreeMap<Lang, PromptTemplate>, Failure> {
        let mut out = BTreeMap::new();
        for lang in [Lang::De, Lang::Zh] {
            if self.keep(lang) {
                out.insert(lang, self.template(lang, step)?);
            }
        }
        Ok(out)
    }

    fn settings(&self, step: Step) -> StepSettings {
        let model = self.config.provider.model.clone();
        let mut s = match step {
            Step::Extract => StepSettings::extraction(model),
            _ => StepSettings::explanation(model),
        };
        s.max_tokens = self.config.provider.max_tokens;
        s
    }

    fn write_run_log(&self, entries: &[RunLogEntry]) -> Result<(), Failure> {
        let live = entries.iter().filter(|e| !e.cached).count();
        eprintln!(
            "gee: {} model requests, {} from cache, {} live",
            entries.len(),
            entries.len() - live,
            live
        );
        let Some(path) = &self.run_log else { return Ok(()) };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).data()?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening run log {}", path.display()))
            .data()?;
        let mut buf = Vec::new();
        for e in entries {
            serde_json::to_writer(&mut buf, e).data()?;
            buf.push(b'\n');
        }
        f.write_all(&buf).data()
    }
}

#[derive(Serialize)]
struct PreprocessStats {
    input_pairs: usize,
    kept_pairs: usize,
    dropped_pairs: usize,
    languages: BTreeMap<Lang, CorpusStats>,
}

fn preprocess(
    env: &Env,
    input: &Path,
    output: &Path,
    stats: Option<PathBuf>,
    format: Option<&str>,
    no_filter: bool,
    finetune: Option<PathBuf>,
) -> Result<(), Failure> {
    let format = match format {
        None => Format::from_path(input),
        Some("jsonl") | Some("json") => Format::Jsonl,
        Some("tsv") => Format::Tsv,
        Some(other) => return Err(Failure::Usage(anyhow!("unknown format {other:?} (expected jsonl or tsv)"))),
    };
    let pairs = env.load_pairs(input, format)?;
    let input_pairs = pairs.len();
    let kept = if no_filter {
        pairs
    } else {
        let cfg = env.config.filter.clone().unwrap_or_default();
        filter_pairs(pairs, &cfg, &env.tokenizer)
    };
    write_jsonl(output, &kept).data()?;

    let mut languages = BTreeMap::new();
    for lang in [Lang::De, Lang::Zh] {
        let group: Vec<SentencePair> = kept.iter().filter(|p| p.lang == lang).cloned().collect();
        if !group.is_empty() {
            languages.insert(lang, corpus_stats(&group, &env.tokenizer));
        }
    }
    let summary = PreprocessStats {
        input_pairs,
        kept_pairs: kept.len(),
        dropped_pairs: input_pairs - kept.len(),
        languages,
    };
    let stats_path = stats.unwrap_or_else(|| sibling(output, "stats.json"));
    write_json(&stats_path, &summary).data()?;

    println!("pairs read: {input_pairs}, kept: {}, dropped: {}", summary.kept_pairs, summary.dropped_pairs);
    for (lang, s) in &summary.languages {
        println!(
            "{lang}: {} pairs, {} gold edits, {:.2} edits per pair",
            s.pair_count, s.edit_count, s.mean_edits_per_pair
        );
        for (bucket, n) in &s.token_length_histogram {
            println!("  {bucket} tokens: {n}");
        }
    }

    if let Some(path) = finetune {
        let langs: BTreeSet<Lang> = kept.iter().map(|p| p.lang).collect();
        if langs.len() > 1 {
            return Err(Failure::Usage(anyhow!("fine-tuning export needs one language; pass --lang")));
        }
        let lang = langs.into_iter().next().or(env.lang).unwrap_or(Lang::De);
        let template = env.template(lang, Step::Extract)?;
        let n = export_finetune(&kept, &template, &env.tokenizer, &path).data()?;
        eprintln!("gee: wrote {n} fine-tuning records to {}", path.display());
    }
    Ok(())
}

fn rule_extract(pair: &SentencePair, tokenizer: &Tokenizer, cfg: &RefinerConfig) -> ExtractedPair {
    let src = tokenizer.tokenize(pair.lang, &pair.source);
    let tgt = tokenizer.tokenize(pair.lang, &pair.target);
    let edits = extract_rule_based(&src, &tgt, cfg);
    let feasibility = apply_edits_to(&src, &tgt, &edits).status;
    ExtractedPair {
        pair: pair.clone(),
        mode: "rule".into(),
        edits: edits.iter().map(|e| e.without_spans()).collect(),
        feasibility: Some(feasibility),
        digest: None,
        warnings: Vec::new(),
        error: None,
    }
}

/// What to do with a per-pair model failure.
enum Outcome<T> {
    Done(T, Option<RunLogEntry>),
    /// Recorded in the output; the run goes on.
    Recorded(T, Option<RunLogEntry>),
    /// The provider is misconfigured; stop.
    Abort(ProviderError),
    /// The provider failed for this pair; recorded, exit code 3 at the end.
    ProviderFailed(T),
}

fn finish<T>(results: Vec<Outcome<T>>, env: &Env) -> Result<(Vec<T>, usize), Failure> {
    let mut out = Vec::with_capacity(results.len());
    let mut log = Vec::new();
    let mut failed = 0;
    let mut recorded = 0;
    for r in results {
        match r {
            Outcome::Done(t, e) => {
                out.push(t);
                log.extend(e);
            }
            Outcome::Recorded(t, e) => {
                recorded += 1;
                out.push(t);
                log.extend(e);
            }
            Outcome::Abort(e) => return Err(Failure::Usage(e.into())),
            Outcome::ProviderFailed(t) => {
                failed += 1;
                out.push(t);
            }
        }
    }
    if recorded > 0 {
        eprintln!("gee: {recorded} replies could not be parsed; see the error fields");
    }
    env.write_run_log(&log)?;
    Ok((out, failed))
}

fn extract(env: &Env, input: &Path, output: &Path, mode: Mode) -> Result<(), Failure> {
    let pairs = env.load_pairs(input, Format::from_path(input))?;
    let refiner = env.config.refiner.build();
    refiner.validate().usage()?;
    if mode == Mode::Rule {
        let out = map_ordered(&pairs, env.config.threads(), |p| rule_extract(p, &env.tokenizer, &refiner));
        write_jsonl(output, &out).data()?;
        eprintln!("gee: extracted edits for {} pairs", out.len());
        return Ok(());
    }

    let templates = env.templates(Step::Extract)?;
    let provider = env.provider()?;
    let cache = env.cache()?;
    let ctx = LlmContext {
        provider: provider.as_ref(),
        cache: cache.as_ref(),
        retry: env.retry(),
    };
    let settings = env.settings(Step::Extract);
    let results = map_ordered(&pairs, env.config.threads(), |pair| {
        let blank = |error: String| ExtractedPair {
            pair: pair.clone(),
            mode: "llm".into(),
            edits: Vec::new(),
            feasibility: None,
            digest: None,
            warnings: Vec::new(),
            error: Some(error),
        };
        match extract_edits_llm(pair, &env.tokenizer, &templates[&pair.lang], &ctx, &settings) {
            Ok(x) => {
                let log = RunLogEntry {
                    pair_id: pair.id.clone(),
                    step: "extract".into(),
                    digest: x.reply.digest.clone(),
                    duration_ms: x.reply.duration_ms,
                    cached: x.reply.cached,
                };
                Outcome::Done(
                    ExtractedPair {
                        pair: pair.clone(),
                        mode: "llm".into(),
                        edits: x.edits,
                        feasibility: Some(x.feasibility.status),
                        digest: Some(x.reply.digest),
                        warnings: x.warnings,
                        error: None,
                    },
                    Some(log),
                )
            }
            Err(PipelineError::Unparseable { raw, digest }) => {
                let mut rec = blank(format!("unparseable reply: {raw}"));
                rec.digest = Some(digest);
                Outcome::Recorded(rec, None)
            }
            Err(PipelineError::Provider(e)) if e.is_config() => Outcome::Abort(e),
            Err(e) => Outcome::ProviderFailed(blank(e.to_string())),
        }
    });
    let (out, failed) = finish(results, env)?;
    write_jsonl(output, &out).data()?;
    eprintln!("gee: extracted edits for {} pairs", out.len());
    provider_status(failed)
}

fn provider_status(failed: usize) -> Result<(), Failure> {
    if failed > 0 {
        return Err(Failure::Provider(anyhow!("{failed} pairs failed at the provider; see the error fields")));
    }
    Ok(())
}

fn coverage_flags(report: &CoverageReport) -> (Vec<bool>, Vec<usize>) {
    let mut explained = vec![false; report.total_edits];
    for m in &report.matched {
        explained[m.edit_index] = true;
    }
    (explained, report.hallucinated.iter().map(|h| h.explanation_index).collect())
}

fn explain(env: &Env, input: &Path, output: &Path) -> Result<(), Failure> {
    let records: Vec<ExtractedPair> = read_jsonl(input).data()?;
    let records: Vec<ExtractedPair> = records.into_iter().filter(|r| env.keep(r.pair.lang)).collect();
    let templates = env.templates(Step::Explain)?;
    let needs_model = records.iter().any(|r| !r.edits.is_empty());
    let provider: Box<dyn Provider> = if needs_model {
        env.provider()?
    } else {
        Box::new(ReplayProvider::new([]))
    };
    let cache = env.cache()?;
    let ctx = LlmContext {
        provider: provider.as_ref(),
        cache: cache.as_ref(),
        retry: env.retry(),
    };
    let settings = env.settings(Step::Explain);
    let results = map_ordered(&records, env.config.threads(), |rec| {
        let pair = &rec.pair;
        let mut out = ExplainedPair {
            pair: pair.clone(),
            edits: rec.edits.clone(),
            explanations: Vec::new(),
            explained: vec![false; rec.edits.len()],
            hallucinated: Vec::new(),
            digest: None,
            warnings: Vec::new(),
            error: rec.error.as_ref().map(|e| format!("extraction failed: {e}")),
        };
        match explain_edits(pair, &rec.edits, &templates[&pair.lang], &ctx, &settings) {
            Ok(o) => {
                let log = o.reply.as_ref().map(|r| RunLogEntry {
                    pair_id: pair.id.clone(),
                    step: "explain".into(),
                    digest: r.digest.clone(),
                    duration_ms: r.duration_ms,
                    cached: r.cached,
                });
                let report = coverage(&rec.edits, &o.explanations, pair);
                (out.explained, out.hallucinated) = coverage_flags(&report);
                out.explanations = o.explanations;
                out.digest = o.reply.map(|r| r.digest);
                out.warnings = o.warnings;
                Outcome::Done(out, log)
            }
            Err(PipelineError::Unparseable { raw, digest }) => {
                out.error = Some(format!("unparseable reply: {raw}"));
                out.digest = Some(digest);
                Outcome::Recorded(out, None)
            }
            Err(PipelineError::Provider(e)) if e.is_config() => Outcome::Abort(e),
            Err(e) => {
                out.error = Some(e.to_string());
                Outcome::ProviderFailed(out)
            }
        }
    });
    let (out, failed) = finish(results, env)?;
    write_jsonl(output, &out).data()?;
    eprintln!("gee: explained edits for {} pairs", out.len());
    provider_status(failed)
}

fn eval_edits(
    env: &Env,
    predictions: &Path,
    gold: &Path,
    adjudications: Option<&Path>,
    report_path: &Path,
    queue: Option<PathBuf>,
) -> Result<(), Failure> {
    let gold_pairs = env.load_pairs(gold, Format::from_path(gold))?;
    let predicted: Vec<EditsOnly> = read_jsonl(predictions).data()?;
    let mut by_id: HashMap<String, Vec<gee_core::AtomicEdit>> = HashMap::new();
    for p in predicted {
        let edits = p
            .edits
            .ok_or_else(|| Failure::Data(anyhow!("prediction {:?} has no edits field", p.id)))?;
        by_id.insert(p.id, edits);
    }
    let verdicts = match adjudications {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .data()?;
            parse_adjudications(&text).data()?
        }
        None => Vec::new(),
    };

    let mut total = EditMatchReport::default();
    let mut unused = 0;
    let mut used_ids = BTreeSet::new();
    for pair in &gold_pairs {
        let gold = pair
            .gold_edits
            .as_deref()
            .ok_or_else(|| Failure::Data(anyhow!("gold pair {:?} has no gold edits", pair.id)))?;
        let predicted = match by_id.get(&pair.id) {
            Some(p) => {
                used_ids.insert(pair.id.clone());
                p.as_slice()
            }
            None => {
                eprintln!("gee: no prediction for pair {:?}; counting its gold edits as missed", pair.id);
                &[]
            }
        };
        let mut r = match_edits(predicted, gold, pair, &env.tokenizer).data()?;
        let mine: Vec<Adjudication> = verdicts.iter().filter(|v| v.pair_id == pair.id).cloned().collect();
        unused += apply_adjudications(&mut r, &mine);
        total = total.merge(r);
    }
    let orphans = by_id.keys().filter(|k| !used_ids.contains(*k)).count();
    if orphans > 0 {
        eprintln!("gee: {orphans} predicted pairs have no gold pair and were ignored");
    }
    let known: BTreeSet<&str> = gold_pairs.iter().map(|p| p.id.as_str()).collect();
    unused += verdicts
        .iter()
        .filter(|v| !known.contains(v.pair_id.as_str()) && v.verdict == gee_core::eval::Verdict::Accept)
        .count();
    if unused > 0 {
        eprintln!("gee: {unused} accept verdicts matched no queued edit");
    }

    let json = serde_json::to_value(&total).data()?;
    write_report_files(report_path, &json, &[edit_table(&total)]).data()?;
    let queue_path = queue.unwrap_or_else(|| sibling(report_path, "queue.jsonl"));
    let pending: Vec<_> = total
        .review_queue
        .iter()
        .filter(|i| i.status != ReviewStatus::ExactMatch)
        .collect();
    write_jsonl(&queue_path, &pending).data()?;
    println!(
        "precision {:.3}  recall {:.3}  F1 {:.3}  (tp {}, fp {}, fn {}; {} awaiting review)",
        total.precision,
        total.recall,
        total.f1,
        total.tp,
        total.fp,
        total.fn_,
        total.pending().count()
    );
    Ok(())
}

#[derive(Serialize)]
struct CoverageOutput<'a> {
    totals: CoverageTotals,
    coverage_rate: f64,
    pairs: &'a [CoverageReport],
}

fn eval_coverage(env: &Env, explanations: &Path, edits: Option<&Path>, report_path: &Path) -> Result<(), Failure> {
    let records: Vec<ExplainedPair> = read_jsonl(explanations).data()?;
    let override_edits: Option<HashMap<String, Vec<gee_core::AtomicEdit>>> = match edits {
        Some(path) => {
            let rows: Vec<EditsOnly> = read_jsonl(path).data()?;
            Some(
                rows.into_iter()
                    .filter_map(|r| Some((r.id, r.edits.or(r.gold_edits)?)))
                    .collect(),
            )
        }
        None => None,
    };
    let mut reports = Vec::new();
    let mut totals = CoverageTotals::default();
    for rec in records.iter().filter(|r| env.keep(r.pair.lang)) {
        let edits = match &override_edits {
            Some(m) => m
                .get(&rec.pair.id)
                .ok_or_else(|| Failure::Data(anyhow!("no edits for pair {:?} in the edits file", rec.pair.id)))?,
            None => &rec.edits,
        };
        let r = coverage(edits, &rec.explanations, &rec.pair);
        totals = totals.merge(CoverageTotals::of(&r));
        reports.push(r);
    }
    let out = CoverageOutput {
        totals,
        coverage_rate: totals.coverage_rate(),
        pairs: &reports,
    };
    let json = serde_json::to_value(&out).data()?;
    write_report_files(report_path, &json, &[coverage_table(&totals)]).data()?;
    println!(
        "coverage {:.3}: {} of {} edits explained, {} hallucinated explanations",
        totals.coverage_rate(),
        totals.matched,
        totals.edits,
        totals.hallucinated
    );
    for r in &reports {
        for h in &r.hallucinated {
            println!("  {}: hallucinated: {}", r.pair_id, h.explanation.edit_desc);
        }
        for e in &r.missing_edits {
            println!("  {}: missing: {}", r.pair_id, e);
        }
    }
    Ok(())
}

fn annotation_report(annotations: &Path, dual_ids: Option<&Path>, report_path: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(annotations)
        .with_context(|| format!("reading {}", annotations.display()))
        .data()?;
    let records = parse_annotations(&text).data()?;
    let dual = match dual_ids {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).data()?;
            Some(
                text.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect::<BTreeSet<String>>(),
            )
        }
        None => None,
    };
    let summary = aggregate_annotations(&records, dual.as_ref()).data()?;
    let mut tables = vec![annotation_table(&summary)];
    if let Some(a) = &summary.agreement {
        tables.push(agreement_table(a));
    }
    write_report_files(report_path, &summary.to_json(), &tables).data()?;
    for t in &tables {
        println!("{}", t.title);
        for row in &t.rows {
            println!("  {}", row.join("  "));
        }
    }
    Ok(())
}
