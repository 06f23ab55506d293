//! The adjudication workflow.
//!
//! Each (sentence, relation) pair moves through
//!
//! ```text
//! pending --r1--> awaiting_second --r2 agrees--> adjudicated
//!                                 --r2 differs--> awaiting_tiebreak --r3--> adjudicated
//! ```
//!
//! and can be pulled out of circulation with `ignore` (one relation) or
//! `delete` (every relation). Every round after the first is served the
//! entity list left by the previous round, but never the previous decision.
//!
//! All mutations are expressed as [`Event`]s; an engine is the deterministic
//! fold of its event log.

mod log;
mod speed;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{validate_entities, AnnotatedSentence, EntityCluster};
use crate::filtering::RelationSchema;

pub use log::{read_events, replay, Event, EventLog, JournaledEngine, LogError};
pub use speed::{speed_report, SpeedRow};

pub const DEFAULT_LEASE: Duration = Duration::from_secs(10 * 60);
pub const DEFAULT_APPROACH: &str = "freda";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("no task available for annotator `{annotator_id}` on `{relation_name}`")]
    NoTaskAvailable {
        annotator_id: String,
        relation_name: String,
    },
    #[error("stale round: {0}")]
    StaleRound(String),
    #[error("annotator `{0}` already responded for this sentence and relation")]
    DuplicateAnnotator(String),
    #[error("invalid pair: {0}")]
    InvalidPairTypes(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("unknown sentence `{0}`")]
    UnknownSentence(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("sentence `{sentence_id}` is already a candidate for `{relation_name}`")]
    DuplicateCandidate {
        sentence_id: String,
        relation_name: String,
    },
    #[error("sentence `{sentence_id}` is not adjudicated for `{relation_name}`")]
    NotAdjudicated {
        sentence_id: String,
        relation_name: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Expresses,
    NotExpresses,
}

/// A directed (subject, object) pair of entity refs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityPair {
    pub subject: String,
    pub object: String,
}

impl EntityPair {
    pub fn new(subject: &str, object: &str) -> Self {
        EntityPair {
            subject: subject.to_string(),
            object: object.to_string(),
        }
    }

    pub fn reversed(&self) -> Self {
        EntityPair {
            subject: self.object.clone(),
            object: self.subject.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationResponse {
    pub annotator_id: String,
    pub relation_name: String,
    pub sentence_id: String,
    pub round: u8,
    pub decision: Decision,
    #[serde(default)]
    pub asserted_pairs: BTreeSet<EntityPair>,
    /// Full replacement entity list for the sentence.
    pub entity_edits: Vec<EntityCluster>,
    pub elapsed_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approach_tag: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    AwaitingSecond,
    AwaitingTiebreak,
    Adjudicated,
    Deleted,
    Ignored,
}

impl Status {
    /// Round a response must carry to be accepted, if any.
    pub fn open_round(self) -> Option<u8> {
        match self {
            Status::Pending => Some(1),
            Status::AwaitingSecond => Some(2),
            Status::AwaitingTiebreak => Some(3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceState {
    pub sentence_id: String,
    pub relation_name: String,
    pub status: Status,
    pub responses: Vec<AnnotationResponse>,
    pub current_entities: Vec<EntityCluster>,
}

impl SentenceState {
    pub fn response(&self, round: u8) -> Option<&AnnotationResponse> {
        self.responses.iter().find(|r| r.round == round)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceVerdict {
    pub sentence_id: String,
    pub relation_name: String,
    pub final_decision: Decision,
    pub final_pairs: BTreeSet<EntityPair>,
    pub final_entities: Vec<EntityCluster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub annotator_id: String,
    pub approach_tag: String,
    pub sentence_id: String,
    pub elapsed_seconds: f64,
}

/// What an annotator is shown: the sentence with the latest entity list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub relation_name: String,
    pub round: u8,
    pub sentence: AnnotatedSentence,
}

/// Resolves an adjudicated state: majority decision, and the union of the
/// majority side's pairs that still point at existing entities.
pub fn adjudicate(state: &SentenceState) -> Result<SentenceVerdict, EngineError> {
    if state.status != Status::Adjudicated {
        return Err(EngineError::NotAdjudicated {
            sentence_id: state.sentence_id.clone(),
            relation_name: state.relation_name.clone(),
        });
    }
    let yes = state
        .responses
        .iter()
        .filter(|r| r.decision == Decision::Expresses)
        .count();
    let final_decision = if 2 * yes > state.responses.len() {
        Decision::Expresses
    } else {
        Decision::NotExpresses
    };
    let refs: BTreeSet<&str> = state
        .current_entities
        .iter()
        .map(|e| e.entity_ref.as_str())
        .collect();
    let final_pairs = match final_decision {
        Decision::NotExpresses => BTreeSet::new(),
        Decision::Expresses => state
            .responses
            .iter()
            .filter(|r| r.decision == final_decision)
            .flat_map(|r| r.asserted_pairs.iter())
            .filter(|p| refs.contains(p.subject.as_str()) && refs.contains(p.object.as_str()))
            .cloned()
            .collect(),
    };
    Ok(SentenceVerdict {
        sentence_id: state.sentence_id.clone(),
        relation_name: state.relation_name.clone(),
        final_decision,
        final_pairs,
        final_entities: state.current_entities.clone(),
    })
}

#[derive(Debug, Clone)]
struct Lease {
    annotator_id: String,
    expires: Instant,
}

type StateKey = (String, String);

fn key(relation_name: &str, sentence_id: &str) -> StateKey {
    (relation_name.to_string(), sentence_id.to_string())
}

/// Serializable view of everything an event log determines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSnapshot {
    pub sentences: Vec<AnnotatedSentence>,
    pub deleted: Vec<String>,
    pub states: Vec<SentenceState>,
}

#[derive(Debug, Clone)]
pub struct AnnotationEngine {
    schemas: BTreeMap<String, RelationSchema>,
    sentences: BTreeMap<String, AnnotatedSentence>,
    deleted: BTreeSet<String>,
    // keyed by (relation, sentence) so a relation's queue is one range scan
    states: BTreeMap<StateKey, SentenceState>,
    leases: HashMap<StateKey, Lease>,
    lease_duration: Duration,
    default_approach: String,
}

impl AnnotationEngine {
    pub fn new(schemas: impl IntoIterator<Item = RelationSchema>) -> Self {
        AnnotationEngine {
            schemas: schemas.into_iter().map(|s| (s.name.clone(), s)).collect(),
            sentences: BTreeMap::new(),
            deleted: BTreeSet::new(),
            states: BTreeMap::new(),
            leases: HashMap::new(),
            lease_duration: DEFAULT_LEASE,
            default_approach: DEFAULT_APPROACH.to_string(),
        }
    }

    pub fn with_lease_duration(mut self, lease: Duration) -> Self {
        self.lease_duration = lease;
        self
    }

    pub fn with_default_approach(mut self, tag: &str) -> Self {
        self.default_approach = tag.to_string();
        self
    }

    pub fn schema(&self, relation_name: &str) -> Option<&RelationSchema> {
        self.schemas.get(relation_name)
    }

    pub fn schemas(&self) -> impl Iterator<Item = &RelationSchema> {
        self.schemas.values()
    }

    pub fn sentence(&self, sentence_id: &str) -> Option<&AnnotatedSentence> {
        self.sentences.get(sentence_id)
    }

    pub fn is_deleted(&self, sentence_id: &str) -> bool {
        self.deleted.contains(sentence_id)
    }

    pub fn state(&self, sentence_id: &str, relation_name: &str) -> Option<&SentenceState> {
        self.states.get(&key(relation_name, sentence_id))
    }

    /// All states, ordered by (relation, sentence).
    pub fn states(&self) -> impl Iterator<Item = &SentenceState> + Clone {
        self.states.values()
    }

    pub fn apply(&mut self, event: &Event) -> Result<(), EngineError> {
        self.check(event)?;
        self.commit(event);
        Ok(())
    }

    /// Validates an event against the current state without changing it.
    pub fn check(&self, event: &Event) -> Result<(), EngineError> {
        match event {
            Event::CandidateAdded {
                relation_name,
                sentence,
            } => self.check_candidate(relation_name, sentence),
            Event::Response { response } => self.check_response(response),
            Event::Delete { sentence_id } => self.check_known(sentence_id),
            Event::Ignore {
                sentence_id,
                relation_name,
            } => self.check_ignore(sentence_id, relation_name),
        }
    }

    /// Applies an event that already passed [`check`](Self::check).
    pub(crate) fn commit(&mut self, event: &Event) {
        match event {
            Event::CandidateAdded {
                relation_name,
                sentence,
            } => {
                let deleted = self.deleted.contains(&sentence.sentence_id);
                self.sentences
                    .entry(sentence.sentence_id.clone())
                    .or_insert_with(|| sentence.clone());
                self.states.insert(
                    key(relation_name, &sentence.sentence_id),
                    SentenceState {
                        sentence_id: sentence.sentence_id.clone(),
                        relation_name: relation_name.clone(),
                        status: if deleted { Status::Deleted } else { Status::Pending },
                        responses: Vec::new(),
                        current_entities: sentence.entities.clone(),
                    },
                );
            }
            Event::Response { response } => {
                let k = key(&response.relation_name, &response.sentence_id);
                self.leases.remove(&k);
                let state = self.states.get_mut(&k).expect("checked");
                state.current_entities = response.entity_edits.clone();
                state.status = match state.status {
                    Status::Pending => Status::AwaitingSecond,
                    Status::AwaitingSecond => {
                        if state.responses[0].decision == response.decision {
                            Status::Adjudicated
                        } else {
                            Status::AwaitingTiebreak
                        }
                    }
                    Status::AwaitingTiebreak => Status::Adjudicated,
                    other => unreachable!("response accepted in status {other:?}"),
                };
                state.responses.push(response.clone());
            }
            Event::Delete { sentence_id } => {
                self.deleted.insert(sentence_id.clone());
                for (k, state) in self.states.iter_mut() {
                    if k.1 == *sentence_id {
                        state.status = Status::Deleted;
                    }
                }
                self.leases.retain(|k, _| k.1 != *sentence_id);
            }
            Event::Ignore {
                sentence_id,
                relation_name,
            } => {
                let k = key(relation_name, sentence_id);
                if let Some(state) = self.states.get_mut(&k) {
                    if state.status != Status::Deleted {
                        state.status = Status::Ignored;
                    }
                }
                self.leases.remove(&k);
            }
        }
    }

    fn check_known(&self, sentence_id: &str) -> Result<(), EngineError> {
        if self.sentences.contains_key(sentence_id) {
            Ok(())
        } else {
            Err(EngineError::UnknownSentence(sentence_id.to_string()))
        }
    }

    fn check_candidate(
        &self,
        relation_name: &str,
        sentence: &AnnotatedSentence,
    ) -> Result<(), EngineError> {
        if !self.schemas.contains_key(relation_name) {
            return Err(EngineError::UnknownRelation(relation_name.to_string()));
        }
        sentence
            .validate()
            .map_err(|e| EngineError::InvalidResponse(e.to_string()))?;
        if let Some(existing) = self.sentences.get(&sentence.sentence_id) {
            if existing != sentence {
                return Err(EngineError::InvalidResponse(format!(
                    "sentence `{}` was already added with different content",
                    sentence.sentence_id
                )));
            }
        }
        if self
            .states
            .contains_key(&key(relation_name, &sentence.sentence_id))
        {
            return Err(EngineError::DuplicateCandidate {
                sentence_id: sentence.sentence_id.clone(),
                relation_name: relation_name.to_string(),
            });
        }
        Ok(())
    }

    fn check_ignore(&self, sentence_id: &str, relation_name: &str) -> Result<(), EngineError> {
        self.check_known(sentence_id)?;
        let state = self
            .states
            .get(&key(relation_name, sentence_id))
            .ok_or_else(|| EngineError::UnknownSentence(sentence_id.to_string()))?;
        if state.status == Status::Adjudicated {
            return Err(EngineError::StaleRound(format!(
                "`{sentence_id}` is already adjudicated for `{relation_name}`"
            )));
        }
        Ok(())
    }

    fn check_response(&self, r: &AnnotationResponse) -> Result<(), EngineError> {
        self.check_known(&r.sentence_id)?;
        let schema = self
            .schemas
            .get(&r.relation_name)
            .ok_or_else(|| EngineError::UnknownRelation(r.relation_name.clone()))?;
        let state = self
            .states
            .get(&key(&r.relation_name, &r.sentence_id))
            .ok_or_else(|| EngineError::UnknownSentence(r.sentence_id.clone()))?;

        let Some(expected) = state.status.open_round() else {
            return Err(EngineError::StaleRound(format!(
                "`{}` is {:?} for `{}`",
                r.sentence_id, state.status, r.relation_name
            )));
        };
        if r.round != expected {
            return Err(EngineError::StaleRound(format!(
                "expected round {expected}, got {}",
                r.round
            )));
        }
        if state.responses.iter().any(|p| p.annotator_id == r.annotator_id) {
            return Err(EngineError::DuplicateAnnotator(r.annotator_id.clone()));
        }

        if r.annotator_id.is_empty() {
            return Err(EngineError::InvalidResponse("empty annotator_id".into()));
        }
        if !(r.elapsed_seconds.is_finite() && r.elapsed_seconds >= 0.0) {
            return Err(EngineError::InvalidResponse(
                "elapsed_seconds must be a non-negative number".into(),
            ));
        }
        match (r.decision, r.asserted_pairs.is_empty()) {
            (Decision::Expresses, true) => {
                return Err(EngineError::InvalidResponse(
                    "`expresses` needs at least one asserted pair".into(),
                ))
            }
            (Decision::NotExpresses, false) => {
                return Err(EngineError::InvalidResponse(
                    "`not_expresses` cannot assert pairs".into(),
                ))
            }
            _ => {}
        }
        let token_count = self.sentences[&r.sentence_id].tokens.len();
        validate_entities(&r.sentence_id, token_count, &r.entity_edits)
            .map_err(|e| EngineError::InvalidResponse(e.to_string()))?;

        for pair in &r.asserted_pairs {
            if pair.subject == pair.object {
                return Err(EngineError::InvalidPairTypes(format!(
                    "`{}` cannot be related to itself",
                    pair.subject
                )));
            }
            let lookup = |entity_ref: &str| {
                r.entity_edits
                    .iter()
                    .find(|e| e.entity_ref == entity_ref)
                    .ok_or_else(|| {
                        EngineError::InvalidPairTypes(format!("unknown entity `{entity_ref}`"))
                    })
            };
            let subject = lookup(&pair.subject)?;
            let object = lookup(&pair.object)?;
            if subject.entity_type != schema.subject_type
                || object.entity_type != schema.object_type
            {
                return Err(EngineError::InvalidPairTypes(format!(
                    "({}: {}, {}: {}) does not fit {} ({} -> {})",
                    pair.subject,
                    subject.entity_type,
                    pair.object,
                    object.entity_type,
                    schema.name,
                    schema.subject_type,
                    schema.object_type
                )));
            }
        }
        Ok(())
    }

    pub fn add_candidate(
        &mut self,
        relation_name: &str,
        sentence: AnnotatedSentence,
    ) -> Result<(), EngineError> {
        self.apply(&Event::CandidateAdded {
            relation_name: relation_name.to_string(),
            sentence,
        })
    }

    pub fn submit_response(
        &mut self,
        response: AnnotationResponse,
    ) -> Result<&SentenceState, EngineError> {
        let k = key(&response.relation_name, &response.sentence_id);
        self.apply(&Event::Response { response })?;
        Ok(&self.states[&k])
    }

    /// Marks the sentence deleted for every relation. Deleting twice is fine.
    pub fn delete_sentence(&mut self, sentence_id: &str) -> Result<(), EngineError> {
        self.apply(&Event::Delete {
            sentence_id: sentence_id.to_string(),
        })
    }

    pub fn ignore_for_relation(
        &mut self,
        sentence_id: &str,
        relation_name: &str,
    ) -> Result<(), EngineError> {
        self.apply(&Event::Ignore {
            sentence_id: sentence_id.to_string(),
            relation_name: relation_name.to_string(),
        })
    }

    pub fn next_task(
        &mut self,
        annotator_id: &str,
        relation_name: &str,
    ) -> Result<Task, EngineError> {
        self.next_task_at(annotator_id, relation_name, Instant::now())
    }

    /// Serves the lowest sentence id still open for this annotator and
    /// leases it so nobody else gets the same round until `now + lease`.
    pub fn next_task_at(
        &mut self,
        annotator_id: &str,
        relation_name: &str,
        now: Instant,
    ) -> Result<Task, EngineError> {
        if !self.schemas.contains_key(relation_name) {
            return Err(EngineError::UnknownRelation(relation_name.to_string()));
        }
        let start = (relation_name.to_string(), String::new());
        let found = self
            .states
            .range(start..)
            .take_while(|(k, _)| k.0 == relation_name)
            .find(|(k, state)| {
                state.status.open_round().is_some()
                    && !self.deleted.contains(&state.sentence_id)
                    && state.responses.iter().all(|r| r.annotator_id != annotator_id)
                    && self.leases.get(*k).is_none_or(|lease| {
                        lease.annotator_id == annotator_id || lease.expires <= now
                    })
            })
            .map(|(k, state)| (k.clone(), state));

        let Some((k, state)) = found else {
            return Err(EngineError::NoTaskAvailable {
                annotator_id: annotator_id.to_string(),
                relation_name: relation_name.to_string(),
            });
        };
        let task = Task {
            relation_name: relation_name.to_string(),
            round: state.status.open_round().expect("open"),
            sentence: self.sentences[&state.sentence_id].with_entities(state.current_entities.clone()),
        };
        self.leases.insert(
            k,
            Lease {
                annotator_id: annotator_id.to_string(),
                expires: now + self.lease_duration,
            },
        );
        Ok(task)
    }

    /// Verdicts for every adjudicated, undeleted (sentence, relation), with
    /// pairs that no longer fit the relation's type signature dropped.
    pub fn verdicts(&self) -> Vec<SentenceVerdict> {
        self.states
            .values()
            .filter(|s| s.status == Status::Adjudicated && !self.deleted.contains(&s.sentence_id))
            .map(|s| {
                let mut v = adjudicate(s).expect("adjudicated");
                if let Some(schema) = self.schemas.get(&s.relation_name) {
                    let type_of = |r: &str| {
                        v.final_entities
                            .iter()
                            .find(|e| e.entity_ref == r)
                            .map(|e| e.entity_type)
                    };
                    let keep: BTreeSet<EntityPair> = v
                        .final_pairs
                        .iter()
                        .filter(|p| {
                            type_of(&p.subject) == Some(schema.subject_type)
                                && type_of(&p.object) == Some(schema.object_type)
                        })
                        .cloned()
                        .collect();
                    v.final_pairs = keep;
                }
                v
            })
            .collect()
    }

    pub fn timing_records(&self) -> Vec<TimingRecord> {
        self.states
            .values()
            .flat_map(|s| &s.responses)
            .filter(|r| r.elapsed_seconds > 0.0)
            .map(|r| TimingRecord {
                annotator_id: r.annotator_id.clone(),
                approach_tag: r
                    .approach_tag
                    .clone()
                    .unwrap_or_else(|| self.default_approach.clone()),
                sentence_id: r.sentence_id.clone(),
                elapsed_seconds: r.elapsed_seconds,
            })
            .collect()
    }

    pub fn snapshot(&self) -> EngineSnapshot {
        EngineSnapshot {
            sentences: self.sentences.values().cloned().collect(),
            deleted: self.deleted.iter().cloned().collect(),
            states: self.states.values().cloned().collect(),
        }
    }

    /// Canonical JSON of [`snapshot`](Self::snapshot); equal engines give
    /// identical bytes.
    pub fn snapshot_json(&self) -> String {
        serde_json::to_string(&self.snapshot()).expect("snapshot serializes")
    }
}
