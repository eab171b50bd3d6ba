use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario error at {}{field}: {message}", line.map(|l| format!("line {l}, ")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        field: String,
        message: String,
    },
    #[error("level {level}: {source}")]
    Level {
        level: u32,
        #[source]
        source: obstacle_core::Error,
    },
    #[error(transparent)]
    Core(#[from] obstacle_core::Error),
    #[error("unknown experiment `{0}` (see list-experiments)")]
    Registry(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Parse {
            line: None,
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_level(level: u32) -> impl FnOnce(obstacle_core::Error) -> Self {
        move |source| HarnessError::Level { level, source }
    }
}
