//! Failure classes shared by the CLI (exit codes, `--json` error output) and
//! the HTTP layer (status codes, error bodies).

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use geoctl_core::Error as CoreError;

/// Error body returned by every failing endpoint and printed by `--json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    /// Offending request field, e.g. `keys[0].frame`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_revision: Option<u64>,
}

#[derive(Debug)]
pub enum ServiceError {
    Core(CoreError),
    NotFound(String),
    Conflict { expected: u64, current: u64 },
    Unprocessable { field: String, message: String },
    BadRequest(String),
    Internal(String),
}

pub type ServiceResult<T> = Result<T, ServiceError>;

impl From<CoreError> for ServiceError {
    fn from(e: CoreError) -> Self {
        ServiceError::Core(e)
    }
}

impl std::fmt::Display for ServiceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Core(e) => write!(f, "{e}"),
            Self::NotFound(m) | Self::BadRequest(m) | Self::Internal(m) => f.write_str(m),
            Self::Conflict { expected, current } => {
                write!(f, "revision conflict: request is based on {expected}, scene is at {current}")
            }
            Self::Unprocessable { field, message } => write!(f, "{field}: {message}"),
        }
    }
}

impl std::error::Error for ServiceError {}

/// Exit code for a core error class.
pub fn exit_code(kind: &str) -> i32 {
    match kind {
        "usage" => 2,
        "io" => 3,
        "parse" | "format" => 4,
        "shape" => 5,
        "invalid" | "domain" | "bounds" => 6,
        "empty_object" => 7,
        "manifest" => 8,
        "not_found" => 9,
        "conflict" => 10,
        _ => 1,
    }
}

impl ServiceError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Core(e) => e.kind(),
            Self::NotFound(_) => "not_found",
            Self::Conflict { .. } => "conflict",
            Self::Unprocessable { .. } => "invalid",
            Self::BadRequest(_) => "usage",
            Self::Internal(_) => "internal",
        }
    }

    pub fn exit_code(&self) -> i32 {
        exit_code(self.kind())
    }

    pub fn body(&self) -> ErrorBody {
        let (field, current_revision) = match self {
            Self::Unprocessable { field, .. } => (Some(field.clone()), None),
            Self::Conflict { current, .. } => (None, Some(*current)),
            _ => (None, None),
        };
        ErrorBody {
            error: self.kind().to_owned(),
            message: self.to_string(),
            field,
            current_revision,
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::Conflict { .. } => StatusCode::CONFLICT,
            Self::Unprocessable { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Self::BadRequest(_) => StatusCode::BAD_REQUEST,
            Self::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            Self::Core(e) => match e {
                CoreError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
                CoreError::Parse { .. } | CoreError::Format(_) => StatusCode::BAD_REQUEST,
                _ => StatusCode::UNPROCESSABLE_ENTITY,
            },
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.body())).into_response()
    }
}
