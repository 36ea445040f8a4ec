use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use distractor_core::Error as CoreError;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("bad request: {0}")]
    BadRequest(String),
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Core(CoreError::Io(e))
    }
}

impl AppError {
    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Core(e) => e.kind(),
            AppError::BadRequest(_) => "bad_request",
        }
    }

    pub fn status(&self) -> StatusCode {
        let AppError::Core(e) = self else {
            return StatusCode::BAD_REQUEST;
        };
        match e {
            CoreError::NotFound(_) => StatusCode::NOT_FOUND,
            CoreError::ModelNotLoaded { .. } => StatusCode::CONFLICT,
            CoreError::EmptyCorpus(_) | CoreError::NoEvaluableQueries => StatusCode::UNPROCESSABLE_ENTITY,
            CoreError::InvalidConfig(_)
            | CoreError::InvalidLabel(_)
            | CoreError::Annotation(_)
            | CoreError::MalformedRecord { .. }
            | CoreError::AlphaOutOfRange(_)
            | CoreError::InvalidRank(_)
            | CoreError::Json(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn body(&self) -> ErrorBody {
        let available = match self {
            AppError::Core(CoreError::ModelNotLoaded { available, .. }) => Some(available.clone()),
            _ => None,
        };
        ErrorBody {
            error: ErrorDetail {
                kind: self.kind().to_string(),
                message: self.to_string(),
                available,
            },
        }
    }
}

/// JSON error payload shared by the HTTP API and `--json-errors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub kind: String,
    pub message: String,
    /// Loaded models, for `model_not_loaded`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub available: Option<Vec<String>>,
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(self.body())).into_response()
    }
}
