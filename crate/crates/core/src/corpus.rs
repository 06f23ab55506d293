//! Sentence ingestion: parsing the `.wexea` bracket markup into tokens and
//! entities, plus a rule-based date tagger.
//!
//! A corpus line has three tab-separated fields, `sentence_id`, `article`
//! and the markup itself. Entity mentions are written as
//! `[[id|TYPE|surface tokens]]`; brackets sharing an id are mentions of the
//! same entity and end up in one [`EntityCluster`].
//!
//! ```
//! use freda_core::corpus::{parse_corpus_line, EntityType};
//!
//! let s = parse_corpus_line("s1\tGates\t[[Q2|PER|Bill Gates]] said [[Q2|PER|he]] left .").unwrap();
//! assert_eq!(s.entities.len(), 1);
//! assert_eq!(s.entities[0].entity_type, EntityType::Per);
//! assert_eq!(s.entities[0].mentions.len(), 2);
//! ```

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("empty input")]
    EmptyInput,
    #[error("malformed markup: {0}")]
    MalformedMarkup(String),
    #[error("invalid sentence {sentence_id}: {reason}")]
    InvalidSentence { sentence_id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "PER")]
    Per,
    #[serde(rename = "ORG")]
    Org,
    #[serde(rename = "LOC")]
    Loc,
    #[serde(rename = "DATE")]
    Date,
    #[serde(rename = "AWARD")]
    Award,
    #[serde(rename = "OTHER")]
    Other,
}

impl EntityType {
    pub const ALL: [EntityType; 6] = [
        EntityType::Per,
        EntityType::Org,
        EntityType::Loc,
        EntityType::Date,
        EntityType::Award,
        EntityType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Per => "PER",
            EntityType::Org => "ORG",
            EntityType::Loc => "LOC",
            EntityType::Date => "DATE",
            EntityType::Award => "AWARD",
            EntityType::Other => "OTHER",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| CorpusError::MalformedMarkup(format!("unknown entity type `{s}`")))
    }
}

/// Where a mention came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Corpus,
    DateTagger,
    Annotator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub index: usize,
    pub text: String,
}

/// A half-open token range `[start, end)` owned by one entity cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub origin: Origin,
}

impl Mention {
    pub fn new(start: usize, end: usize, origin: Origin) -> Self {
        Mention { start, end, origin }
    }

    pub fn overlaps(&self, other: &Mention) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCluster {
    pub entity_ref: String,
    pub display_label: String,
    pub entity_type: EntityType,
    pub mentions: Vec<Mention>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub sentence_id: String,
    pub source_article: String,
    #[serde(with = "token_texts")]
    pub tokens: Vec<Token>,
    pub entities: Vec<EntityCluster>,
}

mod token_texts {
    use super::Token;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(tokens: &[Token], s: S) -> Result<S::Ok, S::Error> {
        let texts: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
        texts.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Token>, D::Error> {
        let texts = Vec::<String>::deserialize(d)?;
        Ok(texts
            .into_iter()
            .enumerate()
            .map(|(index, text)| Token { index, text })
            .collect())
    }
}

impl AnnotatedSentence {
    pub fn entity(&self, entity_ref: &str) -> Option<&EntityCluster> {
        self.entities.iter().find(|e| e.entity_ref == entity_ref)
    }

    pub fn token_texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// Surface text of a token range, tokens joined by single spaces.
    pub fn surface(&self, start: usize, end: usize) -> String {
        self.tokens[start..end]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Same sentence with its entity list swapped out.
    pub fn with_entities(&self, entities: Vec<EntityCluster>) -> AnnotatedSentence {
        AnnotatedSentence {
            entities,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        validate_entities(&self.sentence_id, self.tokens.len(), &self.entities)?;
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i {
                return Err(self.invalid(format!("token {i} carries index {}", t.index)));
            }
            if t.text.is_empty() || t.text.chars().any(char::is_whitespace) {
                return Err(self.invalid(format!("token {i} is empty or contains whitespace")));
            }
        }
        Ok(())
    }

    fn invalid(&self, reason: String) -> CorpusError {
        CorpusError::InvalidSentence {
            sentence_id: self.sentence_id.clone(),
            reason,
        }
    }
}

/// Checks an entity list against a sentence of `token_count` tokens: unique
/// refs, non-empty clusters, in-range spans, pairwise disjoint mentions.
pub fn validate_entities(
    sentence_id: &str,
    token_count: usize,
    entities: &[EntityCluster],
) -> Result<(), CorpusError> {
    let invalid = |reason: String| CorpusError::InvalidSentence {
        sentence_id: sentence_id.to_string(),
        reason,
    };
    let mut refs = HashSet::new();
    let mut covered = vec![false; token_count];
    for cluster in entities {
        if cluster.entity_ref.is_empty() {
            return Err(invalid("empty entity_ref".into()));
        }
        if !refs.insert(cluster.entity_ref.as_str()) {
            return Err(invalid(format!("duplicate entity_ref `{}`", cluster.entity_ref)));
        }
        if cluster.mentions.is_empty() {
            return Err(invalid(format!("entity `{}` has no mentions", cluster.entity_ref)));
        }
        for m in &cluster.mentions {
            if m.start >= m.end || m.end > token_count {
                return Err(invalid(format!(
                    "mention [{}, {}) of `{}` is out of range",
                    m.start, m.end, cluster.entity_ref
                )));
            }
            for slot in &mut covered[m.start..m.end] {
                if *slot {
                    return Err(invalid(format!(
                        "mention [{}, {}) of `{}` overlaps another mention",
                        m.start, m.end, cluster.entity_ref
                    )));
                }
                *slot = true;
            }
        }
    }
    Ok(())
}

/// Splits raw text on whitespace, detaching leading and trailing punctuation
/// as single-character tokens. Punctuation inside a word (`U.S.-born`) stays,
/// and a chunk made only of punctuation (`--`) is kept whole.
pub fn tokenize(raw: &str) -> Result<Vec<Token>, CorpusError> {
    let pieces = split_tokens(raw);
    if pieces.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    Ok(pieces
        .into_iter()
        .enumerate()
        .map(|(index, text)| Token {
            index,
            text: text.to_string(),
        })
        .collect())
}

fn split_tokens(raw: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for chunk in raw.split_whitespace() {
        if !chunk.chars().any(char::is_alphanumeric) {
            out.push(chunk);
            continue;
        }
        let first_word = chunk
            .char_indices()
            .find(|(_, c)| c.is_alphanumeric())
            .map(|(i, _)| i)
            .unwrap_or(0);
        let last_word_end = chunk
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_alphanumeric())
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(chunk.len());
        for (i, c) in chunk[..first_word].char_indices() {
            out.push(&chunk[i..i + c.len_utf8()]);
        }
        out.push(&chunk[first_word..last_word_end]);
        for (i, c) in chunk[last_word_end..].char_indices() {
            let at = last_word_end + i;
            out.push(&chunk[at..at + c.len_utf8()]);
        }
    }
    out
}

/// Parses one `.wexea` line: `sentence_id<TAB>article<TAB>markup`.
pub fn parse_corpus_line(line: &str) -> Result<AnnotatedSentence, CorpusError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let mut fields = line.splitn(3, '\t');
    let (Some(id), Some(article), Some(markup)) = (fields.next(), fields.next(), fields.next())
    else {
        return Err(CorpusError::MalformedMarkup(
            "expected `sentence_id<TAB>article<TAB>markup`".into(),
        ));
    };
    if id.trim().is_empty() {
        return Err(CorpusError::MalformedMarkup("empty sentence_id".into()));
    }
    parse_markup(id.trim(), article, markup)
}

/// Parses the markup field of a corpus line.
pub fn parse_markup(
    sentence_id: &str,
    source_article: &str,
    markup: &str,
) -> Result<AnnotatedSentence, CorpusError> {
    let malformed = |msg: String| CorpusError::MalformedMarkup(format!("{sentence_id}: {msg}"));
    let mut tokens: Vec<String> = Vec::new();
    let mut entities: Vec<EntityCluster> = Vec::new();
    let mut rest = markup;

    loop {
        let open = rest.find("[[");
        let plain = &rest[..open.unwrap_or(rest.len())];
        if plain.contains("]]") {
            return Err(malformed("closing `]]` without opening `[[`".into()));
        }
        tokens.extend(split_tokens(plain).into_iter().map(str::to_string));
        let Some(open) = open else { break };

        let after = &rest[open + 2..];
        let close = after
            .find("]]")
            .ok_or_else(|| malformed("unbalanced `[[`".into()))?;
        let inner = &after[..close];
        if inner.contains("[[") {
            return Err(malformed("nested `[[`".into()));
        }
        let mut parts = inner.splitn(3, '|');
        let (Some(entity_ref), Some(type_str), Some(surface)) =
            (parts.next(), parts.next(), parts.next())
        else {
            return Err(malformed(format!("expected `[[id|TYPE|surface]]`, got `[[{inner}]]`")));
        };
        let entity_ref = entity_ref.trim();
        if entity_ref.is_empty() {
            return Err(malformed("empty entity id".into()));
        }
        let entity_type: EntityType = type_str.trim().parse()?;
        let surface_tokens = split_tokens(surface);
        if surface_tokens.is_empty() {
            return Err(malformed(format!("empty surface for `{entity_ref}`")));
        }
        let start = tokens.len();
        tokens.extend(surface_tokens.into_iter().map(str::to_string));
        let mention = Mention::new(start, tokens.len(), Origin::Corpus);

        match entities.iter_mut().find(|e| e.entity_ref == entity_ref) {
            Some(cluster) if cluster.entity_type != entity_type => {
                return Err(malformed(format!(
                    "entity `{entity_ref}` declared as both {} and {entity_type}",
                    cluster.entity_type
                )));
            }
            Some(cluster) => cluster.mentions.push(mention),
            None => entities.push(EntityCluster {
                entity_ref: entity_ref.to_string(),
                display_label: tokens[start..].join(" "),
                entity_type,
                mentions: vec![mention],
            }),
        }
        rest = &after[close + 2..];
    }

    if tokens.is_empty() {
        return Err(malformed("sentence has no tokens".into()));
    }
    let sentence = AnnotatedSentence {
        sentence_id: sentence_id.to_string(),
        source_article: source_article.to_string(),
        tokens: tokens
            .into_iter()
            .enumerate()
            .map(|(index, text)| Token { index, text })
            .collect(),
        entities,
    };
    sentence.validate()?;
    Ok(sentence)
}

/// Parses a whole `.wexea` document, skipping blank lines and rejecting
/// duplicate sentence ids.
pub fn parse_corpus(text: &str) -> Result<Vec<AnnotatedSentence>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sentence = parse_corpus_line(line).map_err(|e| match e {
            CorpusError::MalformedMarkup(m) => {
                CorpusError::MalformedMarkup(format!("line {}: {m}", lineno + 1))
            }
            other => other,
        })?;
        if !seen.insert(sentence.sentence_id.clone()) {
            return Err(CorpusError::MalformedMarkup(format!(
                "line {}: duplicate sentence_id `{}`",
                lineno + 1,
                sentence.sentence_id
            )));
        }
        out.push(sentence);
    }
    Ok(out)
}

/// Writes a sentence back as a `.wexea` line. Every mention becomes a bracket
/// segment, so origins other than `corpus` are not preserved.
pub fn serialize_sentence(s: &AnnotatedSentence) -> String {
    let mut owner: Vec<Option<(&EntityCluster, &Mention)>> = vec![None; s.tokens.len()];
    for cluster in &s.entities {
        for m in &cluster.mentions {
            owner[m.start] = Some((cluster, m));
        }
    }
    let mut parts = Vec::new();
    let mut i = 0;
    while i < s.tokens.len() {
        match owner[i] {
            Some((cluster, m)) => {
                parts.push(format!(
                    "[[{}|{}|{}]]",
                    cluster.entity_ref,
                    cluster.entity_type,
                    s.surface(m.start, m.end)
                ));
                i = m.end;
            }
            None => {
                parts.push(s.tokens[i].text.clone());
                i += 1;
            }
        }
    }
    format!("{}\t{}\t{}", s.sentence_id, s.source_article, parts.join(" "))
}

const MONTHS: &[&str] = &[
    "January", "February", "March", "April", "May", "June", "July", "August", "September",
    "October", "November", "December", "Jan", "Feb", "Mar", "Apr", "Jun", "Jul", "Aug", "Sep",
    "Sept", "Oct", "Nov", "Dec",
];

fn is_month(t: &str) -> bool {
    MONTHS.contains(&t)
}

fn is_year(t: &str) -> bool {
    t.len() == 4 && t.bytes().all(|b| b.is_ascii_digit())
}

fn is_day(t: &str) -> bool {
    (1..=2).contains(&t.len())
        && t.bytes().all(|b| b.is_ascii_digit())
        && matches!(t.parse::<u8>(), Ok(1..=31))
}

/// Lengths of the date patterns that match at `i`, longest first.
fn date_match_lengths(tokens: &[&str], i: usize) -> Vec<usize> {
    let at = |k: usize| tokens.get(i + k).copied().unwrap_or("");
    let mut lens = Vec::new();
    // Month D , YYYY
    if is_month(at(0)) && is_day(at(1)) && at(2) == "," && is_year(at(3)) {
        lens.push(4);
    }
    // D Month YYYY
    if is_day(at(0)) && is_month(at(1)) && is_year(at(2)) {
        lens.push(3);
    }
    // Month D
    if is_month(at(0)) && is_day(at(1)) {
        lens.push(2);
    }
    if is_year(at(0)) {
        lens.push(1);
    }
    lens
}

/// Adds a `DATE` cluster for every maximal date expression that does not
/// touch an existing mention. Recognized forms: a 4-digit year,
/// `Month D`, `Month D , YYYY` and `D Month YYYY`, where `Month` is a full
/// English month name or its common abbreviation (`Jan` .. `Dec`, `Sept`).
pub fn tag_dates(s: &AnnotatedSentence) -> AnnotatedSentence {
    let texts = s.token_texts();
    let mut covered = vec![false; texts.len()];
    for m in s.entities.iter().flat_map(|e| &e.mentions) {
        covered[m.start..m.end].iter_mut().for_each(|c| *c = true);
    }
    let mut refs: BTreeSet<String> = s.entities.iter().map(|e| e.entity_ref.clone()).collect();
    let mut out = s.clone();

    let mut i = 0;
    while i < texts.len() {
        let free_len = date_match_lengths(&texts, i)
            .into_iter()
            .find(|&len| !covered[i..i + len].iter().any(|&c| c));
        let Some(len) = free_len else {
            i += 1;
            continue;
        };
        let mut entity_ref = format!("DATE:{i}");
        while refs.contains(&entity_ref) {
            entity_ref.push('\'');
        }
        refs.insert(entity_ref.clone());
        out.entities.push(EntityCluster {
            entity_ref,
            display_label: s.surface(i, i + len),
            entity_type: EntityType::Date,
            mentions: vec![Mention::new(i, i + len, Origin::DateTagger)],
        });
        i += len;
    }
    out
}
