//! Precision, recall and F1 of predicted facts against gold facts.
//!
//! Scoring is at the fact level: one key per (sentence, relation, subject,
//! object). A gold key without a prediction counts as predicted negative.
//! Named aggregates (e.g. `Interim`, `Total`) pool several relations.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::facts::{Fact, Label};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("prediction ({0}) matches no gold fact")]
    UnknownKey(String),
    #[error("gold fact ({0}) appears more than once")]
    DuplicateGoldKey(String),
    #[error("relation `{0}` is not in the report")]
    UnknownRelation(String),
    #[error("aggregate `{0}` has no relations")]
    EmptySubset(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub sentence_id: String,
    #[serde(rename = "relation")]
    pub relation_name: String,
    pub subject_ref: String,
    pub object_ref: String,
    #[serde(rename = "label")]
    pub predicted_label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Key<'a> {
    sentence_id: &'a str,
    relation: &'a str,
    subject: &'a str,
    object: &'a str,
}

impl fmt::Display for Key<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, {}, {}, {}",
            self.sentence_id, self.relation, self.subject, self.object
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    fn add(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Micro,
    Macro,
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Averaging::Micro => "micro",
            Averaging::Macro => "macro",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(flatten)]
    pub counts: Counts,
}

impl From<Counts> for RelationScore {
    fn from(counts: Counts) -> Self {
        RelationScore {
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateScore {
    pub name: String,
    pub averaging: Averaging,
    pub relations: Vec<String>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_relation: BTreeMap<String, RelationScore>,
    pub aggregates: Vec<AggregateScore>,
}

/// Scores predictions against gold facts. Duplicate predictions for a key
/// keep the last one; a prediction for a key absent from the gold set is an
/// error.
pub fn evaluate(preds: &[Prediction], gold: &[Fact]) -> Result<EvalReport, EvalError> {
    let mut gold_labels: HashMap<Key<'_>, Label> = HashMap::with_capacity(gold.len());
    for f in gold {
        let key = Key {
            sentence_id: &f.sentence_id,
            relation: &f.relation_name,
            subject: &f.subject_ref,
            object: &f.object_ref,
        };
        if gold_labels.insert(key.clone(), f.label).is_some() {
            return Err(EvalError::DuplicateGoldKey(key.to_string()));
        }
    }
    let mut predicted: HashMap<Key<'_>, Label> = HashMap::with_capacity(preds.len());
    for p in preds {
        let key = Key {
            sentence_id: &p.sentence_id,
            relation: &p.relation_name,
            subject: &p.subject_ref,
            object: &p.object_ref,
        };
        if !gold_labels.contains_key(&key) {
            return Err(EvalError::UnknownKey(key.to_string()));
        }
        predicted.insert(key, p.predicted_label);
    }

    let mut per_relation: BTreeMap<String, Counts> = BTreeMap::new();
    for (key, gold_label) in &gold_labels {
        let counts = per_relation.entry(key.relation.to_string()).or_default();
        let pred = predicted.get(key).copied().unwrap_or(Label::Negative);
        match (*gold_label, pred) {
            (Label::Positive, Label::Positive) => counts.tp += 1,
            (Label::Negative, Label::Positive) => counts.fp += 1,
            (Label::Positive, Label::Negative) => counts.fn_ += 1,
            (Label::Negative, Label::Negative) => {}
        }
    }
    Ok(EvalReport {
        per_relation: per_relation
            .into_iter()
            .map(|(r, c)| (r, RelationScore::from(c)))
            .collect(),
        aggregates: Vec::new(),
    })
}

/// Pools a subset of relations. Micro sums the counts first; macro averages
/// the per-relation precision, recall and F1.
pub fn aggregate(
    report: &EvalReport,
    relations: &[String],
    name: &str,
    averaging: Averaging,
) -> Result<AggregateScore, EvalError> {
    if relations.is_empty() {
        return Err(EvalError::EmptySubset(name.to_string()));
    }
    let rows = relations
        .iter()
        .map(|r| {
            report
                .per_relation
                .get(r)
                .ok_or_else(|| EvalError::UnknownRelation(r.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (precision, recall, f1) = match averaging {
        Averaging::Micro => {
            let mut pooled = Counts::default();
            rows.iter().for_each(|r| pooled.add(r.counts));
            (pooled.precision(), pooled.recall(), pooled.f1())
        }
        Averaging::Macro => {
            let n = rows.len() as f64;
            (
                rows.iter().map(|r| r.precision).sum::<f64>() / n,
                rows.iter().map(|r| r.recall).sum::<f64>() / n,
                rows.iter().map(|r| r.f1).sum::<f64>() / n,
            )
        }
    };
    Ok(AggregateScore {
        name: name.to_string(),
        averaging,
        relations: relations.to_vec(),
        precision,
        recall,
        f1,
    })
}

impl EvalReport {
    pub fn relations(&self) -> Vec<String> {
        self.per_relation.keys().cloned().collect()
    }

    /// Computes an aggregate and appends it to the report.
    pub fn add_aggregate(
        &mut self,
        relations: &[String],
        name: &str,
        averaging: Averaging,
    ) -> Result<&AggregateScore, EvalError> {
        let agg = aggregate(self, relations, name, averaging)?;
        self.aggregates.push(agg);
        Ok(self.aggregates.last().expect("just pushed"))
    }

    /// Fixed-width table: one row per relation (P, R, F1), then the
    /// aggregates with their averaging method.
    pub fn render_table(&self) -> String {
        let width = self
            .per_relation
            .keys()
            .map(String::len)
            .chain(self.aggregates.iter().map(|a| a.name.len() + 8))
            .max()
            .unwrap_or(8)
            .max(8);
        let mut out = String::new();
        let rule = "-".repeat(width + 24);
        let _ = writeln!(out, "{:<width$}{:>8}{:>8}{:>8}", "Relation", "P", "R", "F1");
        let _ = writeln!(out, "{rule}");
        for (name, s) in &self.per_relation {
            let _ = writeln!(
                out,
                "{:<width$}{:>8.2}{:>8.2}{:>8.2}",
                name, s.precision, s.recall, s.f1
            );
        }
        for a in &self.aggregates {
            let _ = writeln!(out, "{rule}");
            let label = format!("{} ({})", a.name, a.averaging);
            let _ = writeln!(
                out,
                "{:<width$}{:>8.2}{:>8.2}{:>8.2}",
                label, a.precision, a.recall, a.f1
            );
        }
        out
    }
}
