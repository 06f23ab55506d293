//! Annotation server and batch pipeline for relation-extraction datasets.
//!
//! [`api`] exposes the annotation engine over HTTP; [`cli`] drives the
//! batch steps (ingest, filter, facts, export, kappa, eval, speed) from the
//! command line. Both report failures with the codes of [`error::ErrorCode`].

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
