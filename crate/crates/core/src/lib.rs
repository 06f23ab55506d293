//! Building relation-extraction datasets from an entity-annotated corpus.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! - [`corpus`] parses `.wexea` markup into [`corpus::AnnotatedSentence`]s and tags dates.
//! - [`filtering`] picks candidate sentences per relation by keyword or knowledge-base pair.
//! - [`engine`] runs the two-plus-tiebreak annotation workflow and persists it as an event log.
//! - [`facts`] expands adjudicated verdicts into labeled directed entity pairs.
//! - [`agreement`] computes Cohen's kappa between the first two annotators.
//! - [`export`] splits by sentence, inserts entity markers and weights the classes.
//! - [`evaluation`] scores predictions against gold facts.

pub mod agreement;
pub mod corpus;
pub mod engine;
pub mod evaluation;
pub mod export;
pub mod facts;
pub mod filtering;
