//! Labeled directed entity-pair facts.
//!
//! Every ordered pair of distinct clusters whose types fit the relation's
//! signature becomes exactly one fact: positive if the verdict asserted it
//! (or its reverse, for symmetric relations), negative otherwise. For the
//! sentence *"Princess Alberta was the fourth daughter of Queen Victoria and
//! Prince Albert."* under `child_of` (PER → PER) with two asserted pairs that
//! gives two positives and four negatives.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatedSentence, EntityCluster};
use crate::engine::{Decision, EntityPair, SentenceVerdict};
use crate::filtering::RelationSchema;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FactsError {
    #[error("type mismatch in `{sentence_id}`: {reason}")]
    TypeMismatch { sentence_id: String, reason: String },
    #[error("verdict for `{verdict}` does not belong to `{other}`")]
    Mismatch { verdict: String, other: String },
    #[error("no schema for relation `{0}`")]
    UnknownRelation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub sentence_id: String,
    pub relation_name: String,
    pub subject_ref: String,
    pub object_ref: String,
    pub label: Label,
}

impl Fact {
    pub fn pair(&self) -> EntityPair {
        EntityPair::new(&self.subject_ref, &self.object_ref)
    }

    fn sort_key(&self) -> (&str, &str, &str, &str) {
        (
            &self.sentence_id,
            &self.subject_ref,
            &self.object_ref,
            &self.relation_name,
        )
    }
}

/// Sorts facts by (sentence, subject, object, relation).
pub fn sort_facts(facts: &mut [Fact]) {
    facts.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// Ordered pairs of distinct clusters matching the relation's signature.
pub fn typed_pairs(entities: &[EntityCluster], schema: &RelationSchema) -> Vec<EntityPair> {
    let mut pairs = Vec::new();
    for s in entities.iter().filter(|e| e.entity_type == schema.subject_type) {
        for o in entities.iter().filter(|e| e.entity_type == schema.object_type) {
            if s.entity_ref != o.entity_ref {
                pairs.push(EntityPair::new(&s.entity_ref, &o.entity_ref));
            }
        }
    }
    pairs.sort();
    pairs
}

fn fact(sentence_id: &str, relation: &str, pair: &EntityPair, label: Label) -> Fact {
    Fact {
        sentence_id: sentence_id.to_string(),
        relation_name: relation.to_string(),
        subject_ref: pair.subject.clone(),
        object_ref: pair.object.clone(),
        label,
    }
}

/// Facts for a verdict, using the verdict's own (final) entity list.
pub fn verdict_facts(v: &SentenceVerdict, schema: &RelationSchema) -> Result<Vec<Fact>, FactsError> {
    if v.relation_name != schema.name {
        return Err(FactsError::Mismatch {
            verdict: v.relation_name.clone(),
            other: schema.name.clone(),
        });
    }
    let mismatch = |reason: String| FactsError::TypeMismatch {
        sentence_id: v.sentence_id.clone(),
        reason,
    };
    let type_of = |r: &str| v.final_entities.iter().find(|e| e.entity_ref == r).map(|e| e.entity_type);

    let mut positives = BTreeSet::new();
    if v.final_decision == Decision::Expresses {
        for p in &v.final_pairs {
            let (Some(st), Some(ot)) = (type_of(&p.subject), type_of(&p.object)) else {
                return Err(mismatch(format!("pair ({}, {}) names a missing entity", p.subject, p.object)));
            };
            if p.subject == p.object || st != schema.subject_type || ot != schema.object_type {
                return Err(mismatch(format!(
                    "pair ({}: {st}, {}: {ot}) does not fit {} -> {}",
                    p.subject, p.object, schema.subject_type, schema.object_type
                )));
            }
            positives.insert(p.clone());
            if schema.symmetric {
                positives.insert(p.reversed());
            }
        }
    }

    Ok(typed_pairs(&v.final_entities, schema)
        .iter()
        .map(|p| {
            let label = if positives.contains(p) {
                Label::Positive
            } else {
                Label::Negative
            };
            fact(&v.sentence_id, &v.relation_name, p, label)
        })
        .collect())
}

/// Expands one adjudicated verdict on sentence `s` into positive and
/// negative facts, ordered by (subject, object).
pub fn extract_facts(
    v: &SentenceVerdict,
    s: &AnnotatedSentence,
    schema: &RelationSchema,
) -> Result<Vec<Fact>, FactsError> {
    if v.sentence_id != s.sentence_id {
        return Err(FactsError::Mismatch {
            verdict: v.sentence_id.clone(),
            other: s.sentence_id.clone(),
        });
    }
    verdict_facts(v, schema)
}

/// Negative facts for externally annotated test sentences, where only the
/// positives are known. With `same_entity_negatives`, every cluster with at
/// least two mentions whose type fills both slots also yields the pair of
/// itself with itself: two mentions of one entity cannot be related.
pub fn extract_test_negatives(
    s: &AnnotatedSentence,
    positives: &[Fact],
    schema: &RelationSchema,
    same_entity_negatives: bool,
) -> Vec<Fact> {
    let mut known: BTreeSet<EntityPair> = positives.iter().map(Fact::pair).collect();
    if schema.symmetric {
        known.extend(positives.iter().map(|f| f.pair().reversed()));
    }
    let mut out: Vec<Fact> = typed_pairs(&s.entities, schema)
        .iter()
        .filter(|p| !known.contains(p))
        .map(|p| fact(&s.sentence_id, &schema.name, p, Label::Negative))
        .collect();
    if same_entity_negatives {
        for e in &s.entities {
            if e.mentions.len() >= 2
                && e.entity_type == schema.subject_type
                && e.entity_type == schema.object_type
            {
                let p = EntityPair::new(&e.entity_ref, &e.entity_ref);
                out.push(fact(&s.sentence_id, &schema.name, &p, Label::Negative));
            }
        }
    }
    sort_facts(&mut out);
    out
}

/// Facts for many verdicts, in output order.
pub fn facts_for_verdicts<'a>(
    verdicts: impl IntoIterator<Item = &'a SentenceVerdict>,
    schemas: &BTreeMap<String, RelationSchema>,
) -> Result<Vec<Fact>, FactsError> {
    let mut out = Vec::new();
    for v in verdicts {
        let schema = schemas
            .get(&v.relation_name)
            .ok_or_else(|| FactsError::UnknownRelation(v.relation_name.clone()))?;
        out.extend(verdict_facts(v, schema)?);
    }
    sort_facts(&mut out);
    Ok(out)
}

/// The count rows of a dataset statistics table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatisticsReport {
    pub relations: usize,
    pub sentences: usize,
    pub positive_responses: usize,
    pub negative_responses: usize,
    pub positive_facts: usize,
    pub negative_facts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

impl StatisticsReport {
    pub fn with_kappa(mut self, kappa: Option<f64>) -> Self {
        self.kappa = kappa;
        self
    }
}

/// Counts adjudicated (sentence, relation) units by decision, and facts by
/// label.
pub fn corpus_statistics(verdicts: &[SentenceVerdict], facts: &[Fact]) -> StatisticsReport {
    let positive_responses = verdicts
        .iter()
        .filter(|v| v.final_decision == Decision::Expresses)
        .count();
    let positive_facts = facts.iter().filter(|f| f.label == Label::Positive).count();
    StatisticsReport {
        relations: verdicts
            .iter()
            .map(|v| v.relation_name.as_str())
            .collect::<BTreeSet<_>>()
            .len(),
        sentences: verdicts.len(),
        positive_responses,
        negative_responses: verdicts.len() - positive_responses,
        positive_facts,
        negative_facts: facts.len() - positive_facts,
        kappa: None,
    }
}

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

impl fmt::Display for StatisticsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kappa = self.kappa.map_or_else(|| "n/a".to_string(), |k| format!("{k:.2}"));
        let rows = [
            ("Relations", thousands(self.relations)),
            ("Sentences", thousands(self.sentences)),
            ("Positive responses", thousands(self.positive_responses)),
            ("Negative responses", thousands(self.negative_responses)),
            ("Positive facts", thousands(self.positive_facts)),
            ("Negative facts", thousands(self.negative_facts)),
            ("Inter-annotator kappa", kappa),
        ];
        writeln!(f, "{:<24}{:>10}", "Statistics", "Total")?;
        for (name, value) in rows {
            writeln!(f, "{name:<24}{value:>10}")?;
        }
        Ok(())
    }
}
