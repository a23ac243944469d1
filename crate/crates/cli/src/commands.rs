use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use haf_core::campaign::{Campaign, CorpusRef, RoundKind};
use haf_core::corpus::{
    count_by_source, label_distribution, load_corpus, load_predictions, split, Corpus, Format, LoadMode, Provenance,
    Record, SplitSpec,
};
use haf_core::hierarchy::{predict_batch, Mode, ScoreTable, ScorerSet, DEFAULT_THRESHOLD};
use haf_core::llm::{Annotator, Extraction, PromptTemplate, ProviderConfig};
use haf_core::metrics::{evaluate, token_f1, EvalReport, Scope, TokenScore};
use haf_core::rules::{tag_review, RuleConfig};
use haf_core::taxonomy::taxonomy_document;
use haf_core::{enforce_hierarchy, AspectSpan, Label, LabelVector};
use serde_json::{json, Value};

use crate::error::{CliError, ErrorKind};
use crate::server::{self, ServerConfig};

/// Env var holding the bearer token for `serve`.
pub const TOKEN_ENV: &str = "HAF_API_TOKEN";

#[derive(Debug, Parser)]
#[command(name = "haf", version, about = "Hierarchical aspect tagging, annotation and evaluation for Taglish reviews")]
pub struct Cli {
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the rule engine over a corpus and write predictions.
    Tag(TagArgs),
    /// Flat or gated prediction from a score table or the rule engine.
    Predict(PredictArgs),
    /// Score predictions against gold labels.
    Evaluate(EvaluateArgs),
    /// Token-level F1 of predicted spans against gold spans.
    TokenF1(TokenF1Args),
    /// Label a corpus with an LLM provider and log the round.
    Annotate(AnnotateArgs),
    /// Sample LLM labels from a campaign and record human verdicts.
    Audit(AuditArgs),
    /// Seeded train/test split.
    Split(SplitArgs),
    /// Label prevalence, co-occurrence and source counts.
    Stats(StatsArgs),
    /// Check corpus, rule, template or provider files.
    Validate(ValidateArgs),
    /// Print the label taxonomy.
    Taxonomy,
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => Format::Jsonl,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScopeArg {
    General,
    Specific,
    All,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::General => Scope::General,
            ScopeArg::Specific => Scope::Specific,
            ScopeArg::All => Scope::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportArg {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Flat,
    Hierarchical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GateArg {
    Predicted,
    Gold,
}

#[derive(Debug, Args)]
pub struct CorpusIn {
    /// Corpus file (.jsonl or .csv).
    #[arg(long = "in", value_name = "CORPUS")]
    pub input: PathBuf,
    /// Override the format implied by the extension.
    #[arg(long)]
    pub format: Option<FormatArg>,
    /// Skip invalid rows instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

impl CorpusIn {
    fn load(&self) -> Result<(Corpus, Provenance), CliError> {
        let mode = if self.lenient { LoadMode::Lenient } else { LoadMode::Strict };
        let report = load_corpus(&self.input, self.format.map(Format::from), mode)?;
        for q in &report.quarantined {
            log::warn!("skipped {q}");
        }
        Ok((report.corpus, report.provenance))
    }
}

#[derive(Debug, Args)]
pub struct TagArgs {
    /// Rule file; the bundled rules when omitted.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[command(flatten)]
    pub corpus: CorpusIn,
    /// Prediction file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// JSONL score table (`review_id` plus slug scores). Rule scores when omitted.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, conflicts_with = "scores")]
    pub rules: Option<PathBuf>,
    #[command(flatten)]
    pub corpus: CorpusIn,
    #[arg(long, value_enum, default_value = "hierarchical")]
    pub mode: ModeArg,
    /// Where hierarchical gating takes the general decisions from.
    #[arg(long, value_enum, default_value = "predicted")]
    pub gate_with: GateArg,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Drop specifics whose general was not predicted.
    #[arg(long)]
    pub repair: bool,
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, value_enum, default_value = "general")]
    pub scope: ScopeArg,
    #[arg(long, value_enum, default_value = "json")]
    pub report: ReportArg,
    /// Column title in table output.
    #[arg(long, default_value = "Model")]
    pub name: String,
    /// Score gold reviews absent from the predictions as all-false.
    #[arg(long)]
    pub missing_as_empty: bool,
}

#[derive(Debug, Args)]
pub struct TokenF1Args {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub report: ReportArg,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Provider config (JSON). Defaults to the offline rule-backed mock.
    #[arg(long)]
    pub provider: Option<PathBuf>,
    /// Prompt template (JSON). Defaults to the built-in zero-shot template.
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[command(flatten)]
    pub corpus: CorpusIn,
    /// Campaign log; created when missing. Outcomes go into a new LLM round.
    #[arg(long)]
    pub campaign: Option<PathBuf>,
    /// Also ask for spans.
    #[arg(long)]
    pub spans: bool,
    /// Prediction file with the labels of annotated reviews.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub campaign: PathBuf,
    /// Number of LLM-labeled reviews to sample.
    #[arg(long)]
    pub sample: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corpus used to show review text during the session.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// JSON object of review id to verdict; prompts on stdin when omitted.
    #[arg(long)]
    pub verdicts: Option<PathBuf>,
    /// Print the sample without recording anything.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub corpus: CorpusIn,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Keep this label's prevalence equal across both sides.
    #[arg(long)]
    pub stratify: Option<Label>,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub corpus: CorpusIn,
    /// Include the 25x25 co-occurrence matrix.
    #[arg(long)]
    pub cooccurrence: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long = "in", value_name = "CORPUS")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<FormatArg>,
    /// Treat `--in` as a prediction file (hierarchy not enforced).
    #[arg(long)]
    pub predictions: bool,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long)]
    pub provider: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory of campaign logs, one `<id>.jsonl` each.
    #[arg(long, default_value = "campaigns")]
    pub data_dir: PathBuf,
    /// Corpus served to annotators; the bundled synthetic corpus when omitted.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Tag(a) => tag(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::TokenF1(a) => token_f1_cmd(a),
        Command::Annotate(a) => annotate(a),
        Command::Audit(a) => audit(a),
        Command::Split(a) => split_cmd(a),
        Command::Stats(a) => stats(a),
        Command::Validate(a) => validate(a),
        Command::Taxonomy => print_json(&serde_json::to_value(taxonomy_document()).expect("plain data")),
        Command::Serve(a) => serve(a),
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_out(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, content).map_err(|e| CliError::io(p, e)),
        None => std::io::stdout()
            .write_all(content.as_bytes())
            .map_err(|e| CliError::new(ErrorKind::Io, e.to_string())),
    }
}

fn print_json(v: &Value) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).expect("valid json");
    s.push('\n');
    write_out(None, &s)
}

fn load_rules(path: Option<&Path>) -> Result<RuleConfig, CliError> {
    Ok(match path {
        Some(p) => RuleConfig::from_path(p)?,
        None => RuleConfig::shipped(),
    })
}

fn load_provider_config(path: Option<&Path>) -> Result<ProviderConfig, CliError> {
    let mut cfg = match path {
        Some(p) => serde_json::from_str(&read_file(p)?)
            .map_err(|e| CliError::validation(format!("provider config {}: {e}", p.display())))?,
        None => ProviderConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok());
    Ok(cfg)
}

fn load_template(path: Option<&Path>) -> Result<PromptTemplate, CliError> {
    Ok(match path {
        Some(p) => PromptTemplate::from_json_str(&read_file(p)?)?,
        None => PromptTemplate::default(),
    })
}

/// One span per distinct (category, start, end) among rule matches.
fn rule_spans(result: &haf_core::rules::TagResult) -> Vec<AspectSpan> {
    let mut spans: Vec<AspectSpan> = Vec::new();
    for m in &result.matches {
        if !spans.iter().any(|s| s.category == m.span.category && s.start == m.span.start && s.end == m.span.end) {
            spans.push(m.span.clone());
        }
    }
    spans
}

fn tag(a: TagArgs) -> Result<(), CliError> {
    let rules = load_rules(a.rules.as_deref())?;
    let (corpus, _) = a.corpus.load()?;
    let records = corpus
        .records
        .iter()
        .map(|r| {
            let result = tag_review(&r.review, &rules);
            Record {
                review: r.review.clone(),
                gold: Some(result.labels),
                spans: Some(rule_spans(&result)),
            }
        })
        .collect();
    write_out(a.out.as_deref(), &Corpus { records }.to_jsonl_string())
}

fn predict(a: PredictArgs) -> Result<(), CliError> {
    let (corpus, _) = a.corpus.load()?;
    let scorers = match &a.scores {
        Some(p) => ScorerSet::from_table(Arc::new(ScoreTable::from_path(p)?)),
        None => ScorerSet::from_rules(Arc::new(load_rules(a.rules.as_deref())?)),
    };
    let mode = match (a.mode, a.gate_with) {
        (ModeArg::Flat, _) => Mode::Flat,
        (ModeArg::Hierarchical, GateArg::Predicted) => Mode::Hierarchical,
        (ModeArg::Hierarchical, GateArg::Gold) => Mode::HierarchicalGold,
    };
    let gold = if mode == Mode::HierarchicalGold { Some(corpus.gold_vectors()?) } else { None };
    let reviews: Vec<_> = corpus.reviews().cloned().collect();
    let mut preds = predict_batch(&reviews, gold.as_deref(), &scorers, a.threshold, mode, a.parallelism)?;
    if a.repair {
        preds.iter_mut().for_each(|p| *p = enforce_hierarchy(*p));
    }
    let inconsistent = preds.iter().filter(|p| !p.is_consistent()).count();
    if inconsistent > 0 {
        log::warn!("{inconsistent} prediction(s) violate the hierarchy");
    }
    let records = reviews
        .into_iter()
        .zip(preds)
        .map(|(review, labels)| Record {
            review,
            gold: Some(labels),
            spans: None,
        })
        .collect();
    write_out(a.out.as_deref(), &Corpus { records }.to_jsonl_string())
}

/// Pairs gold and predicted vectors by review id, in gold order.
pub fn align_by_id(
    gold: &Corpus,
    pred: &Corpus,
    missing_as_empty: bool,
) -> Result<(Vec<LabelVector>, Vec<LabelVector>), CliError> {
    let gold_vectors = gold.gold_vectors()?;
    let by_id: HashMap<&str, Option<LabelVector>> =
        pred.records.iter().map(|r| (r.review.id.as_str(), r.gold)).collect();
    let mut missing = Vec::new();
    let preds: Vec<LabelVector> = gold
        .reviews()
        .map(|r| match by_id.get(r.id.as_str()).copied().flatten() {
            Some(v) => v,
            None => {
                missing.push(json!(r.id));
                LabelVector::empty()
            }
        })
        .collect();
    if !missing.is_empty() && !missing_as_empty {
        return Err(CliError::validation(format!("{} gold review(s) have no prediction", missing.len()))
            .with_details(missing));
    }
    let extra: Vec<Value> = pred
        .reviews()
        .filter(|r| gold.get(&r.id).is_none())
        .map(|r| json!(r.id))
        .collect();
    if !extra.is_empty() {
        return Err(CliError::validation(format!("{} prediction(s) have no gold review", extra.len())).with_details(extra));
    }
    Ok((gold_vectors, preds))
}

pub fn evaluate_files(gold: &Path, pred: &Path, scope: Scope, missing_as_empty: bool) -> Result<EvalReport, CliError> {
    let gold = load_corpus(gold, None, LoadMode::Strict)?.corpus;
    let pred = load_predictions(pred)?.corpus;
    let (g, p) = align_by_id(&gold, &pred, missing_as_empty)?;
    Ok(evaluate(&g, &p, scope)?)
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<(), CliError> {
    let report = evaluate_files(&a.gold, &a.pred, a.scope.into(), a.missing_as_empty)?;
    match a.report {
        ReportArg::Json => print_json(&serde_json::to_value(&report).expect("plain data")),
        ReportArg::Table => write_out(None, &report.to_table(&a.name)),
    }
}

fn token_table(scores: &[TokenScore]) -> String {
    let mut s = format!("{:<10} {:>9} {:>9} {:>9}\n", "Category", "Precision", "Recall", "F1");
    for t in scores {
        s.push_str(&format!(
            "{:<10} {:>9.4} {:>9.4} {:>9.4}\n",
            t.category.slug(),
            t.prf.precision,
            t.prf.recall,
            t.prf.f1
        ));
    }
    s
}

fn token_f1_cmd(a: TokenF1Args) -> Result<(), CliError> {
    let gold = load_corpus(&a.gold, None, LoadMode::Strict)?.corpus;
    let pred = load_predictions(&a.pred)?.corpus;
    let scores = token_f1(&gold.span_set(), &pred.span_set());
    match a.report {
        ReportArg::Json => print_json(&json!({
            "schema": "haf.token_f1",
            "version": 1,
            "per_category": scores,
        })),
        ReportArg::Table => write_out(None, &token_table(&scores)),
    }
}

fn annotate(a: AnnotateArgs) -> Result<(), CliError> {
    let config = load_provider_config(a.provider.as_deref())?;
    let template = load_template(a.template.as_deref())?;
    let annotator = Annotator::from_config(&config, template)?;
    let (corpus, provenance) = a.corpus.load()?;
    let reviews: Vec<_> = corpus.reviews().cloned().collect();
    let outcomes = annotator.annotate_all(&reviews);
    let extractions = a.spans.then(|| annotator.extract_all(&reviews));
    let version = annotator.template().version().to_string();

    let mut round = None;
    if let Some(path) = &a.campaign {
        let mut c = if path.exists() {
            Campaign::open(path)?
        } else {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("campaign").to_string();
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            Campaign::create(
                path,
                id,
                None,
                CorpusRef {
                    path: provenance.path.clone(),
                    sha256: provenance.sha256.clone(),
                    n_reviews: corpus.len(),
                },
            )?
        };
        if c.corpus.sha256 != provenance.sha256 {
            log::warn!("campaign {} was created for a different corpus file", c.id);
        }
        let r = c.open_round(RoundKind::Llm, Some(version.clone()), None)?;
        for o in &outcomes {
            c.record_llm(r, o.clone())?;
        }
        c.close_round(r)?;
        round = Some(r);
    }

    let mut records = Vec::new();
    let mut unannotated = Vec::new();
    for (i, (review, o)) in reviews.iter().zip(&outcomes).enumerate() {
        match o.labels() {
            Some(labels) => {
                let spans = extractions.as_ref().and_then(|ex| match &ex[i].result {
                    Extraction::Extracted { spans, .. } => Some(spans.clone()),
                    Extraction::Failed { .. } => None,
                });
                records.push(Record {
                    review: review.clone(),
                    gold: Some(*labels),
                    spans,
                });
            }
            None => unannotated.push(review.id.clone()),
        }
    }
    if let Some(out) = &a.out {
        Corpus { records: records.clone() }.save(out)?;
    }
    if records.is_empty() && !reviews.is_empty() {
        let details = outcomes.iter().take(5).map(|o| serde_json::to_value(o).expect("plain data")).collect();
        return Err(CliError::new(ErrorKind::Provider, "no review could be annotated").with_details(details));
    }
    print_json(&json!({
        "schema": "haf.annotate_summary",
        "version": 1,
        "prompt_version": version,
        "n_reviews": reviews.len(),
        "annotated": records.len(),
        "unannotated": unannotated,
        "round": round,
    }))
}

fn read_verdicts(input: &mut dyn BufRead, candidates: &[haf_core::campaign::AuditCandidate], corpus: Option<&Corpus>) -> Result<BTreeMap<String, bool>, CliError> {
    let mut verdicts = BTreeMap::new();
    let mut stderr = std::io::stderr();
    for (i, c) in candidates.iter().enumerate() {
        let text = corpus.and_then(|k| k.get(&c.review_id)).map(|r| r.review.text.as_str());
        let labels: Vec<&str> = c.labels.labels().map(|l| l.slug()).collect();
        let _ = writeln!(stderr, "[{}/{}] {}", i + 1, candidates.len(), c.review_id);
        if let Some(t) = text {
            let _ = writeln!(stderr, "  {t}");
        }
        let _ = writeln!(stderr, "  labels: {}", if labels.is_empty() { "(none)".into() } else { labels.join(", ") });
        loop {
            let _ = write!(stderr, "  correct? [y/n] ");
            let _ = stderr.flush();
            let mut line = String::new();
            let n = input.read_line(&mut line).map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?;
            if n == 0 {
                return Err(CliError::validation("verdict session ended before every sample was judged"));
            }
            let verdict = match line.trim().to_ascii_lowercase().as_str() {
                "y" | "yes" | "1" => true,
                "n" | "no" | "0" => false,
                _ => continue,
            };
            verdicts.insert(c.review_id.clone(), verdict);
            break;
        }
    }
    Ok(verdicts)
}

fn audit(a: AuditArgs) -> Result<(), CliError> {
    let mut campaign = Campaign::open(&a.campaign)?;
    let sample = campaign.sample_audit(a.sample, a.seed)?;
    if a.dry_run {
        return print_json(&json!({"seed": a.seed, "sample": sample}));
    }
    let verdicts = match &a.verdicts {
        Some(p) => serde_json::from_str(&read_file(p)?)
            .map_err(|e| CliError::validation(format!("verdicts {}: {e}", p.display())))?,
        None => {
            let corpus = match &a.corpus {
                Some(p) => Some(load_corpus(p, None, LoadMode::Lenient)?.corpus),
                None => None,
            };
            read_verdicts(&mut std::io::stdin().lock(), &sample, corpus.as_ref())?
        }
    };
    let record = campaign.record_audit(a.seed, &sample, &verdicts)?;
    print_json(&serde_json::to_value(&record).expect("plain data"))
}

fn split_cmd(a: SplitArgs) -> Result<(), CliError> {
    let (corpus, _) = a.corpus.load()?;
    let mut spec = SplitSpec::new(a.seed, 1.0 - a.test_fraction, a.test_fraction)?;
    if let Some(label) = a.stratify {
        spec = spec.stratified(label);
    }
    let (train, test) = split(&corpus, &spec)?;
    train.save(&a.train_out)?;
    test.save(&a.test_out)?;
    print_json(&json!({
        "seed": a.seed,
        "test_fraction": a.test_fraction,
        "stratify": a.stratify,
        "n_train": train.len(),
        "n_test": test.len(),
    }))
}

fn stats(a: StatsArgs) -> Result<(), CliError> {
    let (corpus, provenance) = a.corpus.load()?;
    let n_labeled = corpus.records.iter().filter(|r| r.gold.is_some()).count();
    let mut out = json!({
        "schema": "haf.stats",
        "version": 1,
        "sha256": provenance.sha256,
        "n_reviews": corpus.len(),
        "n_labeled": n_labeled,
        "n_with_spans": corpus.records.iter().filter(|r| r.spans.is_some()).count(),
        "sources": count_by_source(&corpus),
    });
    if n_labeled > 0 {
        let d = label_distribution(&corpus)?;
        out["labels"] = serde_json::to_value(&d.labels).expect("plain data");
        if a.cooccurrence {
            out["cooccurrence"] = serde_json::to_value(&d.cooccurrence).expect("plain data");
        }
    }
    print_json(&out)
}

fn validate(a: ValidateArgs) -> Result<(), CliError> {
    let mut checks = Vec::new();
    let mut check = |target: String, result: Result<(), CliError>| {
        checks.push(match result {
            Ok(()) => json!({"target": target, "valid": true}),
            Err(e) => json!({"target": target, "valid": false, "error": e.to_json()}),
        })
    };
    if let Some(p) = &a.input {
        let r = if a.predictions {
            load_predictions(p).map(|_| ())
        } else {
            load_corpus(p, a.format.map(Format::from), LoadMode::Strict).map(|_| ())
        };
        check(p.display().to_string(), r.map_err(CliError::from));
    }
    if let Some(p) = &a.rules {
        check(p.display().to_string(), RuleConfig::from_path(p).map(|_| ()).map_err(CliError::from));
    }
    if let Some(p) = &a.template {
        check(p.display().to_string(), load_template(Some(p)).map(|_| ()));
    }
    if let Some(p) = &a.provider {
        let r = load_provider_config(Some(p)).and_then(|c| {
            (c.max_attempts > 0 && c.parallelism > 0)
                .then_some(())
                .ok_or_else(|| CliError::validation("max_attempts and parallelism must be positive"))
        });
        check(p.display().to_string(), r);
    }
    if checks.is_empty() {
        return Err(CliError::validation("nothing to validate; pass --in, --rules, --template or --provider"));
    }
    let failed: Vec<Value> = checks.iter().filter(|c| c["valid"] == false).cloned().collect();
    print_json(&json!({"valid": failed.is_empty(), "checks": checks}))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::validation(format!("{} check(s) failed", failed.len())).with_details(failed))
    }
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let (corpus, corpus_ref) = match &a.corpus {
        Some(p) => {
            let r = load_corpus(p, None, LoadMode::Strict)?;
            let n = r.corpus.len();
            (
                r.corpus,
                CorpusRef {
                    path: r.provenance.path,
                    sha256: r.provenance.sha256,
                    n_reviews: n,
                },
            )
        }
        None => server::bundled_corpus(),
    };
    let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
    if token.is_none() {
        log::warn!("{TOKEN_ENV} is not set; the API is unauthenticated");
    }
    let config = ServerConfig {
        data_dir: a.data_dir,
        corpus,
        corpus_ref,
        rules: load_rules(a.rules.as_deref())?,
        token,
    };
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| CliError::validation(format!("bad listen address: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::new(ErrorKind::Internal, e.to_string()))?;
    runtime.block_on(server::serve(addr, config))
}
