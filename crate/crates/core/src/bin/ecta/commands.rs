use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use ecta::annotate::annotate;
use ecta::augment::{augment_corpus, AugmentOptions, AugmentationReport, CandidateRecord};
use ecta::codec::parse_triplets;
use ecta::config::RunConfig;
use ecta::corpus::{
    load_corpus, read_corpus_lenient, segment_clauses, write_corpus, CategorySet, Clause, CorpusOptions, DelimiterSet,
    Document,
};
use ecta::gateway::{
    load_mock_table, request_digest, Backend, Gateway, GenerationRequest, HttpBackend, HttpConfig, MockBackend,
    RetryPolicy, DEFAULT_AUGMENTATION_TEMPERATURE, DEFAULT_EXTRACTION_TEMPERATURE,
};
use ecta::lora::{run_demo, DemoConfig};
use ecta::metrics::{
    aggregate_folds, compare, evaluate, fold_csv, instance_from_output, kfold_split, Aggregation, EvalInstance, KFoldError,
    EvalOptions, MalformedPolicy, MetricsReport, Prf, TokenizerKind,
};
use ecta::prompts::{
    render_augmentation_prompt, render_extraction_instruction, render_rule_ablation, transcript, ChatTurn,
    PromptTemplate,
};

use crate::{BackendArgs, BackendChoice, Cli, CliError, Command, EvalArgs, GlobalArgs, PromptKind};

type Result<T> = std::result::Result<T, CliError>;

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

struct Context {
    global: GlobalArgs,
    config: RunConfig,
    corpus: CorpusOptions,
}

impl Context {
    fn new(global: GlobalArgs) -> Result<Self> {
        let config = match &global.config {
            Some(p) => RunConfig::load(p).map_err(usage)?,
            None => RunConfig::default(),
        };
        let delimiters = match global.delimiters.as_ref().or(config.corpus.delimiters.as_ref()) {
            Some(s) => DelimiterSet::from_str_chars(s).map_err(usage)?,
            None => DelimiterSet::default(),
        };
        let categories = match global.categories.as_ref().or(config.corpus.categories_path.as_ref()) {
            Some(p) => CategorySet::from_file(p).map_err(usage)?,
            None => CategorySet::standard(),
        };
        Ok(Context {
            global,
            config,
            corpus: CorpusOptions {
                delimiters,
                categories,
            },
        })
    }

    fn load(&self, path: &Path) -> Result<Vec<Document>> {
        load_corpus(path, &self.corpus).map_err(data)
    }

    fn emit(&self, content: &str) -> Result<()> {
        write_file_or_stdout(self.global.out.as_deref(), content)
    }

    fn emit_json<T: Serialize>(&self, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(data)?;
        s.push('\n');
        self.emit(&s)
    }

    fn eval_options(&self, args: &EvalArgs) -> Result<EvalOptions> {
        Ok(EvalOptions {
            policy: match &args.policy {
                Some(p) => p.parse::<MalformedPolicy>().map_err(usage)?,
                None => self.config.eval.malformed_policy,
            },
            tokenizer: match &args.tokenizer {
                Some(t) => t.parse::<TokenizerKind>().map_err(usage)?,
                None => self.config.eval.tokenizer,
            },
        })
    }

    fn gateway(&self, args: &BackendArgs, echo: bool) -> Result<Gateway> {
        let cfg = &self.config.gateway;
        let backend: Arc<dyn Backend> = match args.backend {
            BackendChoice::Mock => {
                let table = match args.mock_table.as_ref().or(cfg.mock_table_path.as_ref()) {
                    Some(p) => load_mock_table(p).map_err(CliError::Data)?,
                    None => HashMap::new(),
                };
                Arc::new(MockBackend::new(table, echo))
            }
            BackendChoice::Http => Arc::new(HttpBackend::new(HttpConfig::new(
                cfg.base_url.clone(),
                Duration::from_millis(cfg.timeout_ms),
            ))),
        };
        let retry = RetryPolicy {
            max_retries: cfg.max_retries,
            ..RetryPolicy::default()
        };
        Ok(Gateway::new(backend, retry).with_seed(self.global.seed))
    }

    fn model(&self, args: &BackendArgs) -> String {
        args.model.clone().unwrap_or_else(|| self.config.gateway.model_id.clone())
    }

    fn parallelism(&self, args: &BackendArgs) -> usize {
        args.parallelism.unwrap_or(self.config.gateway.parallelism)
    }
}

fn write_file_or_stdout(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())
                .and_then(|_| out.flush())
                .map_err(data)
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn find_doc<'a>(docs: &'a [Document], id: &str) -> Result<&'a Document> {
    docs.iter()
        .find(|d| d.id == id)
        .ok_or_else(|| CliError::Data(format!("no document with id {id:?}")))
}

fn template(path: Option<&PathBuf>, kind: PromptKind, drop_rules: &[u8]) -> Result<PromptTemplate> {
    let t = match (path, kind) {
        (Some(p), _) => PromptTemplate::from_file(p).map_err(usage)?,
        (None, PromptKind::Extraction) => PromptTemplate::default_extraction(),
        (None, PromptKind::Augmentation) => PromptTemplate::default_augmentation(),
    };
    if drop_rules.is_empty() {
        return Ok(t);
    }
    let set: BTreeSet<u8> = drop_rules.iter().copied().collect();
    render_rule_ablation(&t, &set).map_err(usage)
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Context::new(cli.global)?;
    match cli.command {
        Command::Validate { corpus } => validate(&ctx, &corpus),
        Command::Segment { text, corpus } => segment(&ctx, text, corpus),
        Command::Annotate { corpus, doc_id } => annotate_cmd(&ctx, &corpus, doc_id),
        Command::RenderPrompt {
            kind,
            template: tpl,
            text,
            corpus,
            doc_id,
            drop_rules,
            digest,
        } => render_prompt(&ctx, kind, tpl, text, corpus, doc_id, &drop_rules, digest),
        Command::Generate {
            corpus,
            template: tpl,
            drop_rules,
            backend,
            echo,
        } => generate(&ctx, &corpus, tpl, &drop_rules, &backend, echo),
        Command::Augment {
            corpus,
            template: tpl,
            n_per_doc,
            backend,
            corpus_out,
        } => augment(&ctx, &corpus, tpl, n_per_doc as usize, &backend, corpus_out),
        Command::ParseOutput { input, max_issues } => parse_output(&ctx, &input, max_issues),
        Command::Eval {
            pred,
            predictions,
            gold,
            doc_id,
            eval,
        } => eval_cmd(&ctx, pred, predictions, &gold, doc_id, &eval),
        Command::Kfold {
            corpus,
            k,
            predictions,
            csv,
            aggregation,
            eval,
        } => kfold(&ctx, &corpus, k, predictions, csv, aggregation, &eval),
        Command::Compare { a, b } => compare_cmd(&ctx, &a, &b),
        Command::LoraDemo {
            d,
            k,
            r,
            samples,
            lr,
            epochs,
            json,
        } => lora_demo(
            &ctx,
            DemoConfig {
                d,
                k,
                r,
                samples,
                learning_rate: lr,
                epochs,
                seed: ctx.global.seed,
            },
            json,
        ),
    }
}

#[derive(Serialize)]
struct ValidationOutput {
    documents: usize,
    valid: usize,
    invalid: usize,
    errors: Vec<String>,
}

fn validate(ctx: &Context, path: &Path) -> Result<()> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (docs, errors) = read_corpus_lenient(std::io::BufReader::new(file), &ctx.corpus);
    let out = ValidationOutput {
        documents: docs.len() + errors.len(),
        valid: docs.len(),
        invalid: errors.len(),
        errors: errors.iter().map(ToString::to_string).collect(),
    };
    ctx.emit_json(&out)?;
    if out.invalid > 0 {
        return Err(CliError::Data(format!("{} invalid record(s)", out.invalid)));
    }
    Ok(())
}

#[derive(Serialize)]
struct SegmentedDoc<'a> {
    id: &'a str,
    clauses: &'a [Clause],
}

fn segment(ctx: &Context, text: Option<String>, corpus: Option<PathBuf>) -> Result<()> {
    match (text, corpus) {
        (Some(t), _) => {
            let clauses = segment_clauses(&t, &ctx.corpus.delimiters).map_err(data)?;
            ctx.emit_json(&clauses)
        }
        (None, Some(p)) => {
            let docs = ctx.load(&p)?;
            let out: Vec<SegmentedDoc> = docs
                .iter()
                .map(|d| SegmentedDoc {
                    id: &d.id,
                    clauses: &d.clauses,
                })
                .collect();
            ctx.emit_json(&out)
        }
        (None, None) => Err(CliError::Usage("one of --text or --corpus is required".into())),
    }
}

#[derive(Serialize)]
struct AnnotatedLine<'a> {
    id: &'a str,
    annotated: String,
}

fn annotate_cmd(ctx: &Context, path: &Path, doc_id: Option<String>) -> Result<()> {
    let docs = ctx.load(path)?;
    if let Some(id) = doc_id {
        let mut s = annotate(find_doc(&docs, &id)?).map_err(data)?;
        s.push('\n');
        return ctx.emit(&s);
    }
    let mut out = String::new();
    for d in &docs {
        let line = AnnotatedLine {
            id: &d.id,
            annotated: annotate(d).map_err(|e| CliError::Data(format!("{}: {e}", d.id)))?,
        };
        out.push_str(&serde_json::to_string(&line).map_err(data)?);
        out.push('\n');
    }
    ctx.emit(&out)
}

#[derive(Serialize)]
struct PromptDigest {
    template: String,
    digest: String,
    turns: Vec<ChatTurn>,
}

#[allow(clippy::too_many_arguments)]
fn render_prompt(
    ctx: &Context,
    kind: PromptKind,
    tpl: Option<PathBuf>,
    text: Option<String>,
    corpus: Option<PathBuf>,
    doc_id: Option<String>,
    drop_rules: &[u8],
    digest: bool,
) -> Result<()> {
    let t = template(tpl.as_ref(), kind, drop_rules)?;
    let input = match (text, corpus, doc_id) {
        (Some(t), _, _) => t,
        (None, Some(p), Some(id)) => {
            let docs = ctx.load(&p)?;
            let doc = find_doc(&docs, &id)?;
            match kind {
                PromptKind::Extraction => doc.text.clone(),
                PromptKind::Augmentation => annotate(doc).map_err(data)?,
            }
        }
        _ => return Err(CliError::Usage("--text or --corpus with --doc-id is required".into())),
    };
    let turns = match kind {
        PromptKind::Extraction => render_extraction_instruction(&t, &input),
        PromptKind::Augmentation => render_augmentation_prompt(&t, &input),
    }
    .map_err(data)?;
    if digest {
        ctx.emit_json(&PromptDigest {
            template: t.name().to_string(),
            digest: request_digest(&turns),
            turns,
        })
    } else {
        ctx.emit(&transcript(&turns))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Prediction {
    id: String,
    text: String,
}

fn generate(
    ctx: &Context,
    path: &Path,
    tpl: Option<PathBuf>,
    drop_rules: &[u8],
    backend: &BackendArgs,
    echo: bool,
) -> Result<()> {
    let docs = ctx.load(path)?;
    let t = template(tpl.as_ref(), PromptKind::Extraction, drop_rules)?;
    let gateway = ctx.gateway(backend, echo)?;
    let temperature = backend.temperature.unwrap_or(DEFAULT_EXTRACTION_TEMPERATURE);
    let mut requests = Vec::with_capacity(docs.len());
    for d in &docs {
        let turns = render_extraction_instruction(&t, &d.text).map_err(|e| CliError::Data(format!("{}: {e}", d.id)))?;
        requests.push(
            GenerationRequest::new(
                turns,
                ctx.model(backend),
                temperature,
                ctx.config.gateway.max_tokens,
                d.id.clone(),
            )
            .map_err(usage)?,
        );
    }
    let results = gateway.complete_batch(&requests, ctx.parallelism(backend));
    let mut out = String::new();
    let mut failures = Vec::new();
    for (d, r) in docs.iter().zip(results) {
        match r {
            Ok(g) => {
                let line = Prediction {
                    id: d.id.clone(),
                    text: g.text,
                };
                out.push_str(&serde_json::to_string(&line).map_err(data)?);
                out.push('\n');
            }
            Err(e) => {
                log::error!("{}: {e}", d.id);
                failures.push(format!("{}: {e}", d.id));
            }
        }
    }
    ctx.emit(&out)?;
    if !failures.is_empty() {
        return Err(CliError::Backend(format!(
            "{} of {} generation(s) failed; first: {}",
            failures.len(),
            docs.len(),
            failures[0]
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct AugmentOutput<'a> {
    #[serde(flatten)]
    report: &'a AugmentationReport,
    candidates: &'a [CandidateRecord],
}

fn augment(
    ctx: &Context,
    path: &Path,
    tpl: Option<PathBuf>,
    n_per_doc: usize,
    backend: &BackendArgs,
    corpus_out: Option<PathBuf>,
) -> Result<()> {
    let docs = ctx.load(path)?;
    let t = template(tpl.as_ref(), PromptKind::Augmentation, &[])?;
    let gateway = ctx.gateway(backend, true)?;
    let options = AugmentOptions {
        n_per_doc,
        model_id: ctx.model(backend),
        temperature: backend.temperature.unwrap_or(DEFAULT_AUGMENTATION_TEMPERATURE),
        max_tokens: ctx.config.gateway.max_tokens,
        parallelism: ctx.parallelism(backend),
    };
    let outcome = augment_corpus(&docs, &t, &gateway, &options, &ctx.corpus);
    if let Some(p) = corpus_out {
        let mut buf = Vec::new();
        write_corpus(&mut buf, &outcome.corpus).map_err(data)?;
        std::fs::write(&p, buf).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
    }
    ctx.emit_json(&AugmentOutput {
        report: &outcome.report,
        candidates: &outcome.candidates,
    })?;
    if outcome.report.generation_failures > 0 {
        return Err(CliError::Backend(format!(
            "{} of {} generation(s) failed",
            outcome.report.generation_failures, outcome.report.generated
        )));
    }
    Ok(())
}

fn parse_output(ctx: &Context, input: &str, max_issues: Option<usize>) -> Result<()> {
    let text = if input == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(data)?;
        s
    } else {
        read_text(Path::new(input))?
    };
    let parsed = parse_triplets(&text, &ctx.corpus.categories);
    ctx.emit_json(&parsed)?;
    match max_issues {
        Some(max) if parsed.issues.len() > max => Err(CliError::Data(format!(
            "{} parse issue(s), more than the allowed {max}",
            parsed.issues.len()
        ))),
        _ => Ok(()),
    }
}

fn read_predictions(path: &Path) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for (i, line) in read_text(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction =
            serde_json::from_str(line).map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if out.insert(p.id.clone(), p.text).is_some() {
            return Err(CliError::Data(format!("{}:{}: duplicate id {:?}", path.display(), i + 1, p.id)));
        }
    }
    Ok(out)
}

/// One instance per gold document; documents without a prediction get empty output.
fn instances(ctx: &Context, gold: &[Document], predictions: &HashMap<String, String>) -> Result<Vec<EvalInstance>> {
    if let Some(stray) = predictions.keys().find(|id| !gold.iter().any(|d| &d.id == *id)) {
        return Err(CliError::Data(format!("prediction for unknown document {stray:?}")));
    }
    Ok(gold
        .iter()
        .map(|d| {
            let text = predictions.get(&d.id).map(String::as_str).unwrap_or_default();
            instance_from_output(d, text, &ctx.corpus.categories)
        })
        .collect())
}

fn eval_cmd(
    ctx: &Context,
    pred: Option<PathBuf>,
    predictions: Option<PathBuf>,
    gold: &Path,
    doc_id: Option<String>,
    args: &EvalArgs,
) -> Result<()> {
    let options = ctx.eval_options(args)?;
    let docs = ctx.load(gold)?;
    let insts = match (pred, predictions, doc_id) {
        (Some(p), _, Some(id)) => {
            let doc = find_doc(&docs, &id)?;
            vec![instance_from_output(doc, &read_text(&p)?, &ctx.corpus.categories)]
        }
        (None, Some(p), id) => {
            let preds = read_predictions(&p)?;
            let all = instances(ctx, &docs, &preds)?;
            match id {
                Some(id) => all.into_iter().filter(|i| i.doc_id == id).collect(),
                None => all,
            }
        }
        _ => return Err(CliError::Usage("--pred with --doc-id, or --predictions, is required".into())),
    };
    ctx.emit_json(&evaluate(&insts, &options))
}

fn kfold(
    ctx: &Context,
    path: &Path,
    k: Option<usize>,
    predictions: Option<PathBuf>,
    csv: Option<PathBuf>,
    aggregation: Option<String>,
    args: &EvalArgs,
) -> Result<()> {
    let docs = ctx.load(path)?;
    let k = k.unwrap_or(ctx.config.eval.folds);
    let ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    let plan = kfold_split(&ids, k, ctx.global.seed).map_err(|e| match e {
        KFoldError::KTooSmall(_) => usage(e),
        _ => data(e),
    })?;
    let Some(pred_path) = predictions else {
        return ctx.emit_json(&plan);
    };
    let aggregation = match aggregation {
        Some(a) => a.parse::<Aggregation>().map_err(usage)?,
        None => ctx.config.eval.aggregation,
    };
    let options = ctx.eval_options(args)?;
    let preds = read_predictions(&pred_path)?;
    let all = instances(ctx, &docs, &preds)?;
    let mut reports = Vec::with_capacity(k);
    for fold in 0..k {
        let (_, test) = plan.split(&all, fold, |i| i.doc_id.as_str());
        let test: Vec<EvalInstance> = test.into_iter().cloned().collect();
        reports.push(evaluate(&test, &options));
    }
    if let Some(p) = csv {
        write_file_or_stdout(Some(&p), &fold_csv(&reports))?;
    }
    let summary = aggregate_folds(&reports, aggregation).map_err(data)?;
    ctx.emit_json(&summary)
}

/// The score triples of a report; other fields are ignored.
#[derive(Deserialize)]
struct ScoreCard {
    span: Prf,
    #[serde(default)]
    word: Prf,
    #[serde(default)]
    cause_span: Prf,
}

fn read_scores(path: &Path) -> Result<MetricsReport> {
    let card: ScoreCard =
        serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(MetricsReport::from_scores(card.span, card.word, card.cause_span))
}

fn compare_cmd(ctx: &Context, a: &Path, b: &Path) -> Result<()> {
    ctx.emit_json(&compare(&read_scores(a)?, &read_scores(b)?))
}

fn lora_demo(ctx: &Context, config: DemoConfig, json: bool) -> Result<()> {
    let outcome = run_demo(&config).map_err(usage)?;
    let s = outcome.savings;
    eprintln!(
        "param_savings: trainable={} full={} ratio={:.6}",
        s.trainable, s.full, s.ratio
    );
    if json {
        ctx.emit_json(&outcome)
    } else {
        ctx.emit(&outcome.trace.to_csv())
    }
}
