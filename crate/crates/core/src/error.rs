use thiserror::Error;

use crate::domain::{IcpId, KpiId, XAppId};

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown xApp {0}")]
    UnknownXApp(XAppId),

    #[error("unknown ICP {0}")]
    UnknownIcp(IcpId),

    #[error("unknown KPI {0}")]
    UnknownKpi(KpiId),

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("feature width mismatch: model expects {expected}, graph has {found}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("class {0} has no samples")]
    EmptyClass(String),

    #[error("empty dataset: {0}")]
    Empty(&'static str),

    #[error("missing columns: {0:?}")]
    MissingColumns(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn at_row(self, row: usize) -> Error {
        Error::Row {
            row,
            source: Box::new(self),
        }
    }
}
