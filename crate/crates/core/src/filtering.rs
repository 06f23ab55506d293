//! Candidate selection: keyword matching and distant supervision against
//! knowledge-base entity pairs.

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatedSentence, EntityType};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("invalid schema registry JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate relation name `{0}`")]
    DuplicateRelation(String),
    #[error("relation `{0}` is symmetric but its subject and object types differ")]
    AsymmetricTypes(String),
    #[error("relation `{name}` has a keyword that is not lowercase: `{keyword}`")]
    KeywordCase { name: String, keyword: String },
    #[error("relation `{0}` has an empty keyword")]
    EmptyKeyword(String),
    #[error("kb pairs line {line}: {reason}")]
    KbPair { line: usize, reason: String },
}

/// A relation's type signature, symmetry and selection keywords.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    pub name: String,
    pub subject_type: EntityType,
    pub object_type: EntityType,
    #[serde(default)]
    pub symmetric: bool,
    /// Lowercase phrases, tried in order.
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kb_pairs_path: Option<PathBuf>,
}

impl RelationSchema {
    pub fn new(name: &str, subject_type: EntityType, object_type: EntityType) -> Self {
        RelationSchema {
            name: name.to_string(),
            subject_type,
            object_type,
            symmetric: false,
            keywords: Vec::new(),
            kb_pairs_path: None,
        }
    }

    pub fn symmetric(mut self) -> Self {
        self.symmetric = true;
        self
    }

    pub fn with_keywords<I, S>(mut self, keywords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.keywords = keywords.into_iter().map(Into::into).collect();
        self
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.symmetric && self.subject_type != self.object_type {
            return Err(SchemaError::AsymmetricTypes(self.name.clone()));
        }
        for k in &self.keywords {
            if k.trim().is_empty() {
                return Err(SchemaError::EmptyKeyword(self.name.clone()));
            }
            if k.to_lowercase() != *k {
                return Err(SchemaError::KeywordCase {
                    name: self.name.clone(),
                    keyword: k.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Parses and validates a JSON array of relation schemas.
pub fn load_schema_registry(json: &str) -> Result<Vec<RelationSchema>, SchemaError> {
    let schemas: Vec<RelationSchema> = serde_json::from_str(json)?;
    let mut names = HashSet::new();
    for s in &schemas {
        s.validate()?;
        if !names.insert(s.name.as_str()) {
            return Err(SchemaError::DuplicateRelation(s.name.clone()));
        }
    }
    Ok(schemas)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KbPair {
    pub subject_label: String,
    pub object_label: String,
}

impl KbPair {
    pub fn new(subject_label: &str, object_label: &str) -> Self {
        KbPair {
            subject_label: subject_label.to_string(),
            object_label: object_label.to_string(),
        }
    }
}

/// Reads `subject_label<TAB>object_label` lines. Blank lines are skipped.
pub fn parse_kb_pairs(tsv: &str) -> Result<Vec<KbPair>, SchemaError> {
    let mut pairs = Vec::new();
    for (i, line) in tsv.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: &str| SchemaError::KbPair {
            line: i + 1,
            reason: reason.to_string(),
        };
        let (subject, object) = line
            .split_once('\t')
            .ok_or_else(|| err("expected two tab-separated labels"))?;
        let (subject, object) = (subject.trim(), object.trim());
        if subject.is_empty() || object.is_empty() || object.contains('\t') {
            return Err(err("labels must be non-empty and exactly two"));
        }
        pairs.push(KbPair::new(subject, object));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Keyword,
    Distant,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub sentence_id: String,
    pub relation_name: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_keyword: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_pair: Option<KbPair>,
}

/// First keyword whose tokens occur contiguously in the lowercased sentence.
/// Matching is on exact tokens; there is no stemming.
pub fn match_keywords<'a>(s: &AnnotatedSentence, schema: &'a RelationSchema) -> Option<&'a str> {
    let lowered: Vec<String> = s.tokens.iter().map(|t| t.text.to_lowercase()).collect();
    schema
        .keywords
        .iter()
        .find(|kw| {
            let phrase: Vec<&str> = kw.split_whitespace().collect();
            !phrase.is_empty()
                && lowered
                    .windows(phrase.len())
                    .any(|w| w.iter().zip(&phrase).all(|(a, b)| a == b))
        })
        .map(String::as_str)
}

/// First pair whose labels both name (case-insensitively) distinct clusters
/// of the sentence.
pub fn match_distant<'a>(s: &AnnotatedSentence, pairs: &'a [KbPair]) -> Option<&'a KbPair> {
    let labels: Vec<String> = s
        .entities
        .iter()
        .map(|e| e.display_label.to_lowercase())
        .collect();
    pairs.iter().find(|p| {
        let subject = p.subject_label.to_lowercase();
        let object = p.object_label.to_lowercase();
        labels.iter().enumerate().any(|(i, a)| {
            *a == subject && labels.iter().enumerate().any(|(j, b)| i != j && *b == object)
        })
    })
}

/// Whether the sentence has entities that could fill the relation's slots.
/// Symmetric relations need two clusters of the shared type.
pub fn passes_type_prefilter(s: &AnnotatedSentence, schema: &RelationSchema) -> bool {
    let count = |t: EntityType| s.entities.iter().filter(|e| e.entity_type == t).count();
    if schema.symmetric {
        count(schema.subject_type) >= 2
    } else {
        count(schema.subject_type) >= 1 && count(schema.object_type) >= 1
    }
}

/// Classifies one sentence; `None` when it is not a candidate.
pub fn classify(
    s: &AnnotatedSentence,
    schema: &RelationSchema,
    pairs: &[KbPair],
) -> Option<Candidate> {
    if !passes_type_prefilter(s, schema) {
        return None;
    }
    let keyword = match_keywords(s, schema);
    let pair = match_distant(s, pairs);
    let provenance = match (keyword, pair) {
        (Some(_), Some(_)) => Provenance::Both,
        (Some(_), None) => Provenance::Keyword,
        (None, Some(_)) => Provenance::Distant,
        (None, None) => return None,
    };
    Some(Candidate {
        sentence_id: s.sentence_id.clone(),
        relation_name: schema.name.clone(),
        provenance,
        matched_keyword: keyword.map(str::to_string),
        matched_pair: pair.cloned(),
    })
}

/// Scans the corpus in order and returns up to `quota` candidates.
pub fn select_candidates<'a, I>(
    corpus: I,
    schema: &RelationSchema,
    pairs: &[KbPair],
    quota: usize,
) -> Vec<Candidate>
where
    I: IntoIterator<Item = &'a AnnotatedSentence>,
{
    assert!(quota >= 1, "quota must be at least 1");
    corpus
        .into_iter()
        .filter_map(|s| classify(s, schema, pairs))
        .take(quota)
        .collect()
}
