use std::fmt;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use freda_core::engine::{EngineError, LogError};
use serde::{Deserialize, Serialize};

/// Machine-readable error codes shared by the HTTP API and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NoTask,
    StaleRound,
    DuplicateAnnotator,
    InvalidPairTypes,
    UnknownSentence,
    MalformedRequest,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::NoTask => "no_task",
            ErrorCode::StaleRound => "stale_round",
            ErrorCode::DuplicateAnnotator => "duplicate_annotator",
            ErrorCode::InvalidPairTypes => "invalid_pair_types",
            ErrorCode::UnknownSentence => "unknown_sentence",
            ErrorCode::MalformedRequest => "malformed_request",
        }
    }

    pub fn http_status(self) -> u16 {
        match self {
            ErrorCode::NoTask | ErrorCode::UnknownSentence => 404,
            ErrorCode::StaleRound | ErrorCode::DuplicateAnnotator => 409,
            ErrorCode::InvalidPairTypes => 422,
            ErrorCode::MalformedRequest => 400,
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub http_status: u16,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            http_status: code.http_status(),
        }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::MalformedRequest, message)
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let code = match &e {
            EngineError::NoTaskAvailable { .. } => ErrorCode::NoTask,
            EngineError::StaleRound(_) | EngineError::NotAdjudicated { .. } => ErrorCode::StaleRound,
            EngineError::DuplicateAnnotator(_) => ErrorCode::DuplicateAnnotator,
            EngineError::InvalidPairTypes(_) => ErrorCode::InvalidPairTypes,
            EngineError::UnknownSentence(_) => ErrorCode::UnknownSentence,
            EngineError::InvalidResponse(_)
            | EngineError::UnknownRelation(_)
            | EngineError::DuplicateCandidate { .. } => ErrorCode::MalformedRequest,
        };
        ApiError::new(code, e.to_string())
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: ErrorCode,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = ErrorBody {
            code: self.code,
            message: &self.message,
        };
        (status, Json(body)).into_response()
    }
}

/// Failure of a CLI subcommand: validation problems exit with 1, I/O
/// problems with 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(ApiError),
    #[error("io_error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        CliError::Validation(ApiError::malformed(message))
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<ApiError> for CliError {
    fn from(e: ApiError) -> Self {
        CliError::Validation(e)
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        CliError::Validation(e.into())
    }
}

impl From<LogError> for CliError {
    fn from(e: LogError) -> Self {
        match e {
            LogError::Io(e) => CliError::Io(e.to_string()),
            LogError::Engine(e) => e.into(),
            other => CliError::invalid(other.to_string()),
        }
    }
}
