//! Corpus files, splits and label statistics.
//!
//! JSONL is the canonical format: an optional header line
//! `{"schema":"haf.corpus","version":1}` followed by one review per line:
//!
//! ```json
//! {"id":"r1","text":"mura ang item","source":"shopee","labels":{"PRICE":true,"PRICE.Affordability":true},"spans":[{"category":"PRICE","start":0,"end":4,"surface":"mura"}]}
//! ```
//!
//! `labels` lists slugs (missing ones are false); `labels`, `spans` and
//! `source` are optional. CSV is accepted for unlabeled reviews only, with
//! columns `id,text[,source]`.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::labels::{AspectSpan, LabelVector, Review};
use crate::metrics::SpanSet;
use crate::taxonomy::{Label, N_LABELS};

pub const CORPUS_SCHEMA: &str = "haf.corpus";
/// The bundled 60-review synthetic corpus, with gold labels and spans.
pub const SYNTHETIC_CORPUS_JSONL: &str = include_str!("../data/synthetic_corpus.jsonl");
pub const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Format, CorpusError> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("jsonl") | Some("ndjson") => Ok(Format::Jsonl),
            Some("csv") => Ok(Format::Csv),
            _ => Err(CorpusError::UnknownFormat(path.display().to_string())),
        }
    }
}

impl std::str::FromStr for Format {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            _ => Err(CorpusError::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Any invalid row fails the load.
    #[default]
    Strict,
    /// Invalid rows are set aside and reported.
    Lenient,
}

/// A problem with one input line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.id {
            Some(id) => write!(f, "line {} ({id}): {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown corpus format {0:?} (expected jsonl or csv)")]
    UnknownFormat(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{} invalid row(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<RowError>),
    #[error("unsupported corpus header: {0}")]
    Header(String),
    #[error("corpus needs at least {needed} items, has {got}")]
    TooSmall { needed: usize, got: usize },
    #[error("test fraction {0} is not in (0, 1)")]
    BadFraction(f64),
    #[error("review {0:?} has no gold labels")]
    Unlabeled(String),
    #[error("writing corpus: {0}")]
    Write(String),
}

/// A review with optional gold annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub review: Review,
    pub gold: Option<LabelVector>,
    pub spans: Option<Vec<AspectSpan>>,
}

impl Record {
    pub fn unlabeled(review: Review) -> Self {
        Record {
            review,
            gold: None,
            spans: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "slug_set")]
    labels: Option<LabelVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spans: Option<Vec<AspectSpan>>,
}

/// Labels on disk as a full slug-keyed boolean object. Reading goes through
/// the raw [`LabelVector`] decoder so hierarchy checks happen per row.
mod slug_set {
    use super::LabelVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<LabelVector>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().expect("skipped when None").serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<LabelVector>, D::Error> {
        LabelVector::deserialize(d).map(Some)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
    version: u32,
}

/// Where a corpus came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: Option<String>,
    pub format: Format,
    /// Hex SHA-256 of the file bytes.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub records: Vec<Record>,
}

/// A loaded corpus, plus anything set aside in lenient mode.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub corpus: Corpus,
    pub provenance: Provenance,
    pub quarantined: Vec<RowError>,
}

fn check_record(rec: &Record, hierarchy: bool) -> Result<(), String> {
    if rec.review.id.trim().is_empty() {
        return Err("empty id".into());
    }
    if rec.review.text.trim().is_empty() {
        return Err("text is empty".into());
    }
    if let Some(gold) = rec.gold.as_ref().filter(|_| hierarchy) {
        gold.check_hierarchy().map_err(|e| e.to_string())?;
    }
    for span in rec.spans.iter().flatten() {
        span.validate(&rec.review.text).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn parse_jsonl(text: &str) -> Result<Vec<(usize, Result<Record, RowError>)>, CorpusError> {
    let mut out = Vec::new();
    let mut first = true;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if std::mem::take(&mut first) && line.contains("\"schema\"") {
            let header: Header =
                serde_json::from_str(line).map_err(|e| CorpusError::Header(e.to_string()))?;
            if header.schema != CORPUS_SCHEMA || header.version != CORPUS_VERSION {
                return Err(CorpusError::Header(format!("{} v{}", header.schema, header.version)));
            }
            continue;
        }
        let parsed = serde_json::from_str::<Row>(line)
            .map_err(|e| RowError {
                line: line_no,
                id: serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|x| x.as_str()).map(str::to_string)),
                message: e.to_string(),
            })
            .map(|row| Record {
                review: Review {
                    id: row.id,
                    text: row.text,
                    source: row.source,
                },
                gold: row.labels,
                spans: row.spans,
            });
        out.push((line_no, parsed));
    }
    Ok(out)
}

#[derive(Deserialize)]
struct CsvRow {
    id: String,
    text: String,
    #[serde(default)]
    source: Option<String>,
}

fn parse_csv(text: &str) -> Vec<(usize, Result<Record, RowError>)> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    reader
        .deserialize::<CsvRow>()
        .enumerate()
        .map(|(i, row)| {
            // Header is line 1; records are assumed to be one line each.
            let line = i + 2;
            let rec = row
                .map(|r| {
                    Record::unlabeled(Review {
                        id: r.id,
                        text: r.text,
                        source: r.source.filter(|s| !s.is_empty()),
                    })
                })
                .map_err(|e| RowError {
                    line,
                    id: None,
                    message: e.to_string(),
                });
            (line, rec)
        })
        .collect()
}

/// Parses corpus text; `path` is only recorded in the provenance.
pub fn parse_corpus(text: &str, format: Format, mode: LoadMode, path: Option<&Path>) -> Result<LoadReport, CorpusError> {
    parse_rows(text, format, mode, path, true)
}

/// Parses a prediction file: corpus JSONL whose `labels` may violate the
/// hierarchy, as unrepaired flat predictions do.
pub fn parse_predictions(text: &str, path: Option<&Path>) -> Result<LoadReport, CorpusError> {
    parse_rows(text, Format::Jsonl, LoadMode::Strict, path, false)
}

/// File variant of [`parse_predictions`].
pub fn load_predictions(path: &Path) -> Result<LoadReport, CorpusError> {
    parse_predictions(&read_text(path)?, Some(path))
}

fn read_text(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_rows(
    text: &str,
    format: Format,
    mode: LoadMode,
    path: Option<&Path>,
    hierarchy: bool,
) -> Result<LoadReport, CorpusError> {
    let rows = match format {
        Format::Jsonl => parse_jsonl(text)?,
        Format::Csv => parse_csv(text),
    };
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (line, row) in rows {
        let checked = row.and_then(|rec| {
            let fail = |message: String| RowError {
                line,
                id: Some(rec.review.id.clone()),
                message,
            };
            check_record(&rec, hierarchy).map_err(fail)?;
            if !seen.insert(rec.review.id.clone()) {
                return Err(fail(format!("duplicate id {:?}", rec.review.id)));
            }
            Ok(rec)
        });
        match checked {
            Ok(rec) => records.push(rec),
            Err(e) => errors.push(e),
        }
    }
    if mode == LoadMode::Strict && !errors.is_empty() {
        return Err(CorpusError::Invalid(errors));
    }
    for e in &errors {
        log::warn!("quarantined {e}");
    }
    Ok(LoadReport {
        corpus: Corpus { records },
        provenance: Provenance {
            path: path.map(|p| p.display().to_string()),
            format,
            sha256: hex_digest(text.as_bytes()),
        },
        quarantined: errors,
    })
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads a corpus file. `format` defaults to the file extension.
pub fn load_corpus(path: &Path, format: Option<Format>, mode: LoadMode) -> Result<LoadReport, CorpusError> {
    let format = match format {
        Some(f) => f,
        None => Format::from_path(path)?,
    };
    parse_corpus(&read_text(path)?, format, mode, Some(path))
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn reviews(&self) -> impl Iterator<Item = &Review> {
        self.records.iter().map(|r| &r.review)
    }

    /// Gold vectors for every record, or the id of the first unlabeled one.
    pub fn gold_vectors(&self) -> Result<Vec<LabelVector>, CorpusError> {
        self.records
            .iter()
            .map(|r| r.gold.ok_or_else(|| CorpusError::Unlabeled(r.review.id.clone())))
            .collect()
    }

    /// Spans keyed by review id; records without spans are omitted.
    pub fn span_set(&self) -> SpanSet {
        self.records
            .iter()
            .filter_map(|r| r.spans.clone().map(|s| (r.review.id.clone(), s)))
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.review.id == id)
    }

    /// Writes the versioned header and one JSON row per record.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), CorpusError> {
        let werr = |e: std::io::Error| CorpusError::Write(e.to_string());
        writeln!(out, "{{\"schema\":\"{CORPUS_SCHEMA}\",\"version\":{CORPUS_VERSION}}}").map_err(werr)?;
        for rec in &self.records {
            let row = Row {
                id: rec.review.id.clone(),
                text: rec.review.text.clone(),
                source: rec.review.source.clone(),
                labels: rec.gold,
                spans: rec.spans.clone(),
            };
            let line = serde_json::to_string(&row).map_err(|e| CorpusError::Write(e.to_string()))?;
            writeln!(out, "{line}").map_err(werr)?;
        }
        out.flush().map_err(werr)
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let file = std::fs::File::create(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_jsonl(std::io::BufWriter::new(file))
    }
}

/// Parses [`SYNTHETIC_CORPUS_JSONL`].
pub fn synthetic_corpus() -> Corpus {
    parse_corpus(SYNTHETIC_CORPUS_JSONL, Format::Jsonl, LoadMode::Strict, None)
        .expect("bundled corpus is valid")
        .corpus
}

/// Reads a JSONL stream such as stdin.
pub fn read_jsonl<R: BufRead>(mut reader: R, mode: LoadMode) -> Result<LoadReport, CorpusError> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|source| CorpusError::Io {
        path: "<stream>".into(),
        source,
    })?;
    parse_corpus(&text, Format::Jsonl, mode, None)
}

/// Seeded train/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    /// Test share in (0, 1); train gets the rest.
    pub test_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratify_by: Option<Label>,
}

impl SplitSpec {
    pub fn new(seed: u64, train_fraction: f64, test_fraction: f64) -> Result<Self, CorpusError> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) || (train_fraction + test_fraction - 1.0).abs() > 1e-9 {
            return Err(CorpusError::BadFraction(test_fraction));
        }
        let spec = SplitSpec {
            seed,
            test_fraction,
            stratify_by: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn stratified(mut self, label: Label) -> Self {
        self.stratify_by = Some(label);
        self
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.test_fraction > 0.0 && self.test_fraction < 1.0 {
            Ok(())
        } else {
            Err(CorpusError::BadFraction(self.test_fraction))
        }
    }
}

/// Picks `k` of `pool` with a seeded shuffle.
fn pick(pool: &mut [usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    pool.shuffle(rng);
    pool[..k].to_vec()
}

/// Deterministic exact partition. The test part has `round(N * fraction)`
/// items, kept within `1..N`. With stratification, positives of the chosen
/// label get `round(P * fraction)` test slots and negatives fill the rest,
/// so test prevalence is within one item of the corpus prevalence. Both
/// parts keep the corpus order.
pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus), CorpusError> {
    spec.validate()?;
    let n = corpus.len();
    if n < 2 {
        return Err(CorpusError::TooSmall { needed: 2, got: n });
    }
    let n_test = ((n as f64 * spec.test_fraction).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut test_idx = match spec.stratify_by {
        None => pick(&mut (0..n).collect::<Vec<_>>(), n_test, &mut rng),
        Some(label) => {
            let (mut pos, mut neg) = (Vec::new(), Vec::new());
            for (i, rec) in corpus.records.iter().enumerate() {
                let gold = rec.gold.ok_or_else(|| CorpusError::Unlabeled(rec.review.id.clone()))?;
                if gold.get(label) { pos.push(i) } else { neg.push(i) }
            }
            let k_pos = ((pos.len() as f64 * spec.test_fraction).round() as usize).min(n_test);
            let k_neg = (n_test - k_pos).min(neg.len());
            let k_pos = n_test - k_neg;
            let mut idx = pick(&mut pos, k_pos, &mut rng);
            idx.extend(pick(&mut neg, k_neg, &mut rng));
            idx
        }
    };
    test_idx.sort_unstable();
    let in_test: HashSet<usize> = test_idx.into_iter().collect();
    let (mut train, mut test) = (Corpus::default(), Corpus::default());
    for (i, rec) in corpus.records.iter().enumerate() {
        if in_test.contains(&i) {
            test.records.push(rec.clone());
        } else {
            train.records.push(rec.clone());
        }
    }
    Ok((train, test))
}

/// Per-label prevalence and pairwise co-occurrence over labeled records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub n_items: usize,
    pub labels: Vec<LabelStat>,
    /// `cooccurrence[i][j]` counts items carrying both labels; the diagonal
    /// holds each label's positives. Canonical label order.
    pub cooccurrence: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelStat {
    pub label: Label,
    pub positives: usize,
    pub prevalence: f64,
}

impl LabelDistribution {
    pub fn prevalence(&self, label: Label) -> f64 {
        self.labels[label.index()].prevalence
    }
}

/// Statistics over records with gold labels; unlabeled records are skipped.
pub fn label_distribution(corpus: &Corpus) -> Result<LabelDistribution, CorpusError> {
    let golds: Vec<[bool; N_LABELS]> = corpus.records.iter().filter_map(|r| r.gold).map(|g| g.to_array()).collect();
    if golds.is_empty() {
        return Err(CorpusError::TooSmall { needed: 1, got: 0 });
    }
    let mut co = vec![vec![0usize; N_LABELS]; N_LABELS];
    for g in &golds {
        for i in (0..N_LABELS).filter(|&i| g[i]) {
            for j in (0..N_LABELS).filter(|&j| g[j]) {
                co[i][j] += 1;
            }
        }
    }
    let n = golds.len();
    let labels = Label::all()
        .map(|label| {
            let positives = co[label.index()][label.index()];
            LabelStat {
                label,
                positives,
                prevalence: positives as f64 / n as f64,
            }
        })
        .collect();
    Ok(LabelDistribution {
        n_items: n,
        labels,
        cooccurrence: co,
    })
}

/// Record counts per provenance tag.
pub fn count_by_source(corpus: &Corpus) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for rec in &corpus.records {
        *out.entry(rec.review.source.clone().unwrap_or_else(|| "unknown".into())).or_insert(0) += 1;
    }
    out
}
