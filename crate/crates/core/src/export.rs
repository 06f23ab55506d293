//! Training data: sentence-level train/test splits, entity-marker
//! serialization and class weights.
//!
//! A fact between two clusters fans out to one example per ordered pair of
//! non-overlapping (subject mention, object mention). The subject mention is
//! wrapped in `[ES] .. [/ES]`, the object mention in `[EO] .. [/EO]`:
//!
//! ```
//! use freda_core::export::{insert_markers, strip_markers, Span};
//!
//! let tokens = ["Melinda", "married", "Bill", "Gates", "."];
//! let marked = insert_markers(&tokens, Span::new(0, 1), Span::new(2, 4));
//! assert_eq!(marked.join(" "), "[ES] Melinda [/ES] married [EO] Bill Gates [/EO] .");
//! assert_eq!(strip_markers(&marked), tokens);
//! ```
//!
//! Positive examples are weighted `N_neg / N_pos` (negatives weigh 1) so
//! both classes carry the same total mass. Weights are kept as exact
//! rationals and only rounded to a float when written out.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{AnnotatedSentence, Mention};
use crate::engine::SentenceVerdict;
use crate::facts::{verdict_facts, Fact, FactsError, Label};
use crate::filtering::RelationSchema;

pub const SUBJECT_START: &str = "[ES]";
pub const SUBJECT_END: &str = "[/ES]";
pub const OBJECT_START: &str = "[EO]";
pub const OBJECT_END: &str = "[/EO]";
pub const MARKERS: [&str; 4] = [SUBJECT_START, SUBJECT_END, OBJECT_START, OBJECT_END];

pub const WEIGHTING_SCHEME: &str = "inverse_frequency_positive";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("need at least 2 sentences to split, got {0}")]
    TooFewSentences(usize),
    #[error("no non-overlapping mention pair for ({subject}, {object}) in `{sentence_id}`")]
    NoValidMentionPair {
        sentence_id: String,
        subject: String,
        object: String,
    },
    #[error("entity `{entity_ref}` not found in `{sentence_id}`")]
    UnknownEntity {
        sentence_id: String,
        entity_ref: String,
    },
    #[error("sentence `{0}` is not available for export")]
    MissingSentence(String),
    #[error("relation `{relation}` has {positives} positive and {negatives} negative training examples")]
    DegenerateClassBalance {
        relation: String,
        positives: usize,
        negatives: usize,
    },
    #[error(transparent)]
    Facts(#[from] FactsError),
    #[error("export I/O: {0}")]
    Io(#[from] io::Error),
}

/// Half-open token range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl From<&Mention> for Span {
    fn from(m: &Mention) -> Self {
        Span::new(m.start, m.end)
    }
}

fn weight_as_f64<S: Serializer>(w: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(*w.numer() as f64 / *w.denom() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrainingExample {
    #[serde(rename = "relation")]
    pub relation_name: String,
    #[serde(rename = "tokens")]
    pub marked_tokens: Vec<String>,
    pub label: Label,
    #[serde(serialize_with = "weight_as_f64")]
    pub weight: Ratio<u64>,
    pub sentence_id: String,
    #[serde(rename = "subject_span")]
    pub subject_mention: Span,
    #[serde(rename = "object_span")]
    pub object_mention: Span,
}

impl TrainingExample {
    pub fn weight_f64(&self) -> f64 {
        *self.weight.numer() as f64 / *self.weight.denom() as f64
    }
}

/// Wraps two disjoint spans in subject and object markers.
pub fn insert_markers<S: AsRef<str>>(tokens: &[S], subject: Span, object: Span) -> Vec<String> {
    debug_assert!(!subject.overlaps(&object));
    let mut out = Vec::with_capacity(tokens.len() + 4);
    for (i, t) in tokens.iter().enumerate() {
        if i == subject.start {
            out.push(SUBJECT_START.to_string());
        }
        if i == object.start {
            out.push(OBJECT_START.to_string());
        }
        out.push(t.as_ref().to_string());
        if i + 1 == subject.end {
            out.push(SUBJECT_END.to_string());
        }
        if i + 1 == object.end {
            out.push(OBJECT_END.to_string());
        }
    }
    out
}

pub fn strip_markers<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !MARKERS.contains(t))
        .map(str::to_string)
        .collect()
}

/// One example per ordered, non-overlapping pair of mentions of the fact's
/// two clusters. `s` must carry the entity list the fact was drawn from.
pub fn to_examples(f: &Fact, s: &AnnotatedSentence) -> Result<Vec<TrainingExample>, ExportError> {
    let cluster = |r: &str| {
        s.entity(r).ok_or_else(|| ExportError::UnknownEntity {
            sentence_id: s.sentence_id.clone(),
            entity_ref: r.to_string(),
        })
    };
    let subject = cluster(&f.subject_ref)?;
    let object = cluster(&f.object_ref)?;
    let tokens = s.token_texts();
    let mut out = Vec::new();
    for sm in subject.mentions.iter().map(Span::from) {
        for om in object.mentions.iter().map(Span::from) {
            if sm.overlaps(&om) {
                continue;
            }
            out.push(TrainingExample {
                relation_name: f.relation_name.clone(),
                marked_tokens: insert_markers(&tokens, sm, om),
                label: f.label,
                weight: Ratio::from_integer(1),
                sentence_id: s.sentence_id.clone(),
                subject_mention: sm,
                object_mention: om,
            });
        }
    }
    if out.is_empty() {
        return Err(ExportError::NoValidMentionPair {
            sentence_id: s.sentence_id.clone(),
            subject: f.subject_ref.clone(),
            object: f.object_ref.clone(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub relation_name: String,
    pub test_sentence_ids: BTreeSet<String>,
    pub train_sentence_ids: BTreeSet<String>,
    pub seed: u64,
}

impl SplitManifest {
    pub fn is_test(&self, sentence_id: &str) -> bool {
        self.test_sentence_ids.contains(sentence_id)
    }
}

/// Number of test sentences for `n` sentences: `floor(ratio * n)`, at least
/// one, and never all of them.
pub fn test_size(n: usize, ratio: f64) -> usize {
    // the epsilon keeps e.g. 0.29 * 100 from flooring to 28
    let raw = (ratio * n as f64 + 1e-9).floor() as usize;
    raw.max(1).min(n.saturating_sub(1))
}

/// Shuffles the (deduplicated, sorted) ids with a seeded ChaCha8 stream and
/// moves the first [`test_size`] of them to the test side.
pub fn split(
    relation_name: &str,
    sentence_ids: &[String],
    ratio: f64,
    seed: u64,
) -> Result<SplitManifest, ExportError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(ExportError::InvalidRatio(ratio));
    }
    let mut ids: Vec<String> = sentence_ids
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if ids.len() < 2 {
        return Err(ExportError::TooFewSentences(ids.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let k = test_size(ids.len(), ratio);
    let train = ids.split_off(k);
    Ok(SplitManifest {
        relation_name: relation_name.to_string(),
        test_sentence_ids: ids.into_iter().collect(),
        train_sentence_ids: train.into_iter().collect(),
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub positives: usize,
    pub negatives: usize,
    #[serde(serialize_with = "weight_as_f64")]
    pub positive_weight: Ratio<u64>,
}

/// Sets negatives to 1 and positives to `N_neg / N_pos`.
pub fn assign_weights(examples: &mut [TrainingExample]) -> Result<ClassCounts, ExportError> {
    let positives = examples.iter().filter(|e| e.label == Label::Positive).count();
    let negatives = examples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(ExportError::DegenerateClassBalance {
            relation: examples
                .first()
                .map(|e| e.relation_name.clone())
                .unwrap_or_default(),
            positives,
            negatives,
        });
    }
    let positive_weight = Ratio::new(negatives as u64, positives as u64);
    for e in examples.iter_mut() {
        e.weight = match e.label {
            Label::Positive => positive_weight,
            Label::Negative => Ratio::from_integer(1),
        };
    }
    Ok(ClassCounts {
        positives,
        negatives,
        positive_weight,
    })
}

/// Exact total weight per class.
pub fn class_mass(examples: &[TrainingExample]) -> (Ratio<u64>, Ratio<u64>) {
    let mut pos = Ratio::from_integer(0);
    let mut neg = Ratio::from_integer(0);
    for e in examples {
        match e.label {
            Label::Positive => pos += e.weight,
            Label::Negative => neg += e.weight,
        }
    }
    (pos, neg)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationCounts {
    pub train_sentences: usize,
    pub test_sentences: usize,
    pub train_positive_facts: usize,
    pub train_negative_facts: usize,
    pub test_positive_facts: usize,
    pub test_negative_facts: usize,
    pub train_positive_examples: usize,
    pub train_negative_examples: usize,
    pub test_positive_examples: usize,
    pub test_negative_examples: usize,
    pub positive_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub ratio: f64,
    pub weighting_scheme: String,
    pub relations: BTreeMap<String, RelationCounts>,
    /// Relations left out, with the reason.
    pub skipped: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RelationDataset {
    pub split: SplitManifest,
    pub train: Vec<TrainingExample>,
    pub test: Vec<TrainingExample>,
    pub train_facts: Vec<Fact>,
    pub test_facts: Vec<Fact>,
    pub weights: ClassCounts,
}

impl RelationDataset {
    pub fn counts(&self) -> RelationCounts {
        let count = |facts: &[Fact], l: Label| facts.iter().filter(|f| f.label == l).count();
        let count_ex = |ex: &[TrainingExample], l: Label| ex.iter().filter(|e| e.label == l).count();
        RelationCounts {
            train_sentences: self.split.train_sentence_ids.len(),
            test_sentences: self.split.test_sentence_ids.len(),
            train_positive_facts: count(&self.train_facts, Label::Positive),
            train_negative_facts: count(&self.train_facts, Label::Negative),
            test_positive_facts: count(&self.test_facts, Label::Positive),
            test_negative_facts: count(&self.test_facts, Label::Negative),
            train_positive_examples: count_ex(&self.train, Label::Positive),
            train_negative_examples: count_ex(&self.train, Label::Negative),
            test_positive_examples: count_ex(&self.test, Label::Positive),
            test_negative_examples: count_ex(&self.test, Label::Negative),
            positive_weight: *self.weights.positive_weight.numer() as f64
                / *self.weights.positive_weight.denom() as f64,
        }
    }
}

/// Builds one relation's train and test sets from its verdicts. Token text
/// comes from `sentences`; entities come from each verdict. Weights are
/// assigned over the training examples; test examples keep weight 1.
pub fn build_relation_dataset(
    schema: &RelationSchema,
    verdicts: &[SentenceVerdict],
    sentences: &BTreeMap<String, AnnotatedSentence>,
    ratio: f64,
    seed: u64,
) -> Result<RelationDataset, ExportError> {
    let verdicts: Vec<&SentenceVerdict> = verdicts
        .iter()
        .filter(|v| v.relation_name == schema.name)
        .collect();
    let ids: Vec<String> = verdicts.iter().map(|v| v.sentence_id.clone()).collect();
    let split = split(&schema.name, &ids, ratio, seed)?;

    let mut ds = RelationDataset {
        split,
        train: Vec::new(),
        test: Vec::new(),
        train_facts: Vec::new(),
        test_facts: Vec::new(),
        weights: ClassCounts {
            positives: 0,
            negatives: 0,
            positive_weight: Ratio::from_integer(1),
        },
    };
    for v in verdicts {
        let base = sentences
            .get(&v.sentence_id)
            .ok_or_else(|| ExportError::MissingSentence(v.sentence_id.clone()))?;
        let s = base.with_entities(v.final_entities.clone());
        let facts = verdict_facts(v, schema)?;
        let test = ds.split.is_test(&v.sentence_id);
        for f in facts {
            let examples = to_examples(&f, &s)?;
            if test {
                ds.test.extend(examples);
                ds.test_facts.push(f);
            } else {
                ds.train.extend(examples);
                ds.train_facts.push(f);
            }
        }
    }
    ds.weights = assign_weights(&mut ds.train).map_err(|e| match e {
        ExportError::DegenerateClassBalance {
            positives,
            negatives,
            ..
        } => ExportError::DegenerateClassBalance {
            relation: schema.name.clone(),
            positives,
            negatives,
        },
        other => other,
    })?;
    Ok(ds)
}

/// Exports every relation that has verdicts. Relations whose data cannot be
/// split or weighted are recorded under `skipped` instead of failing the
/// whole export.
pub fn build_datasets(
    schemas: &BTreeMap<String, RelationSchema>,
    verdicts: &[SentenceVerdict],
    sentences: &BTreeMap<String, AnnotatedSentence>,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<RelationDataset>, DatasetManifest), ExportError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(ExportError::InvalidRatio(ratio));
    }
    let mut manifest = DatasetManifest {
        seed,
        ratio,
        weighting_scheme: WEIGHTING_SCHEME.to_string(),
        relations: BTreeMap::new(),
        skipped: BTreeMap::new(),
    };
    let mut datasets = Vec::new();
    let relations: BTreeSet<&str> = verdicts.iter().map(|v| v.relation_name.as_str()).collect();
    for name in relations {
        let schema = schemas
            .get(name)
            .ok_or_else(|| FactsError::UnknownRelation(name.to_string()))?;
        match build_relation_dataset(schema, verdicts, sentences, ratio, seed) {
            Ok(ds) => {
                manifest.relations.insert(name.to_string(), ds.counts());
                datasets.push(ds);
            }
            Err(e @ (ExportError::TooFewSentences(_) | ExportError::DegenerateClassBalance { .. })) => {
                manifest.skipped.insert(name.to_string(), e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    Ok((datasets, manifest))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    let mut w = io::BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes `<relation>.train.jsonl`, `<relation>.test.jsonl`,
/// `test_facts.jsonl` (gold facts of every test split) and `manifest.json`.
pub fn write_datasets(
    dir: &Path,
    datasets: &[RelationDataset],
    manifest: &DatasetManifest,
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut gold = Vec::new();
    for ds in datasets {
        let name = &ds.split.relation_name;
        write_jsonl(&dir.join(format!("{name}.train.jsonl")), &ds.train)?;
        write_jsonl(&dir.join(format!("{name}.test.jsonl")), &ds.test)?;
        gold.extend(ds.test_facts.iter().cloned());
    }
    crate::facts::sort_facts(&mut gold);
    write_jsonl(&dir.join("test_facts.jsonl"), &gold)?;
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(dir.join("manifest.json"), json + "\n")
}
