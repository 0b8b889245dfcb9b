use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("parameter {0:?} lies outside the parameter region")]
    OutsideRegion(Vec<f64>),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("grid quadrature supports at most 4 parameter dimensions, got {0}")]
    GridDimension(usize),
    #[error("posterior normalizer underflows on the grid even after the log-sum-exp shift")]
    Underflow,
    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("no data: {0}")]
    NoData(String),
    #[error("unknown model id `{0}`")]
    UnknownModel(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by bad input (configs, arguments, files that do
    /// not match the schema) as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::OutsideRegion(_)
                | Error::EmptyDataset
                | Error::GridDimension(_)
                | Error::MissingColumn(_)
                | Error::NoData(_)
                | Error::UnknownModel(_)
                | Error::Json(_)
        )
    }
}
