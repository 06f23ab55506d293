//! Append-only JSON-lines event log and replay.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AnnotationEngine, AnnotationResponse, EngineError, SentenceState, Task};
use crate::corpus::AnnotatedSentence;

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event_type", rename_all = "snake_case")]
pub enum Event {
    CandidateAdded {
        relation_name: String,
        sentence: AnnotatedSentence,
    },
    Response {
        response: AnnotationResponse,
    },
    Delete {
        sentence_id: String,
    },
    Ignore {
        sentence_id: String,
        relation_name: String,
    },
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event log I/O: {0}")]
    Io(#[from] io::Error),
    #[error("event log line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("event log line {line}: {source}")]
    Replay { line: usize, source: EngineError },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Reads every event in a log file. A missing file is an empty log.
pub fn read_events(path: &Path) -> Result<Vec<Event>, LogError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|source| LogError::Parse {
            line: i + 1,
            source,
        })?;
        events.push(event);
    }
    Ok(events)
}

/// Folds events into a fresh engine.
pub fn replay<'a>(
    engine: AnnotationEngine,
    events: impl IntoIterator<Item = &'a Event>,
) -> Result<AnnotationEngine, LogError> {
    let mut engine = engine;
    for (i, event) in events.into_iter().enumerate() {
        engine
            .apply(event)
            .map_err(|source| LogError::Replay { line: i + 1, source })?;
    }
    Ok(engine)
}

pub struct EventLog {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl EventLog {
    /// Opens (creating if needed) a log for appending.
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(EventLog {
            path,
            writer: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &Event) -> io::Result<()> {
        serde_json::to_writer(&mut self.writer, event)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()
    }
}

/// An engine whose every accepted mutation is appended to its log before it
/// takes effect.
pub struct JournaledEngine {
    engine: AnnotationEngine,
    log: EventLog,
}

impl JournaledEngine {
    /// Replays the log at `path` into `engine`, then keeps appending to it.
    pub fn open(engine: AnnotationEngine, path: impl Into<PathBuf>) -> Result<Self, LogError> {
        let path = path.into();
        let events = read_events(&path)?;
        let engine = replay(engine, &events)?;
        let log = EventLog::open(path)?;
        Ok(JournaledEngine { engine, log })
    }

    pub fn engine(&self) -> &AnnotationEngine {
        &self.engine
    }

    pub fn log_path(&self) -> &Path {
        self.log.path()
    }

    pub fn record(&mut self, event: Event) -> Result<(), LogError> {
        self.engine.check(&event)?;
        self.log.append(&event)?;
        self.engine.commit(&event);
        Ok(())
    }

    pub fn add_candidate(
        &mut self,
        relation_name: &str,
        sentence: AnnotatedSentence,
    ) -> Result<(), LogError> {
        self.record(Event::CandidateAdded {
            relation_name: relation_name.to_string(),
            sentence,
        })
    }

    pub fn submit_response(
        &mut self,
        response: AnnotationResponse,
    ) -> Result<&SentenceState, LogError> {
        let (sentence_id, relation_name) =
            (response.sentence_id.clone(), response.relation_name.clone());
        self.record(Event::Response { response })?;
        Ok(self
            .engine
            .state(&sentence_id, &relation_name)
            .expect("state exists after an accepted response"))
    }

    pub fn delete_sentence(&mut self, sentence_id: &str) -> Result<(), LogError> {
        self.record(Event::Delete {
            sentence_id: sentence_id.to_string(),
        })
    }

    pub fn ignore_for_relation(
        &mut self,
        sentence_id: &str,
        relation_name: &str,
    ) -> Result<(), LogError> {
        self.record(Event::Ignore {
            sentence_id: sentence_id.to_string(),
            relation_name: relation_name.to_string(),
        })
    }

    /// Leases are not logged; they only live in memory.
    pub fn next_task_at(
        &mut self,
        annotator_id: &str,
        relation_name: &str,
        now: std::time::Instant,
    ) -> Result<Task, EngineError> {
        self.engine.next_task_at(annotator_id, relation_name, now)
    }
}
