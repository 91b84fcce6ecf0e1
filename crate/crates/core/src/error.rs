use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("degenerate column '{0}': zero variance")]
    DegenerateColumn(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("diagonal block of group '{group}' is singular (min eigenvalue {min_eigenvalue:e})")]
    BlockSingular { group: String, min_eigenvalue: f64 },

    #[error("infeasible knockoff construction: {0}")]
    Feasibility(String),

    #[error("SDP coordinate ascent did not converge after {sweeps} sweeps")]
    SdpConvergence { sweeps: usize, last_feasible: Vec<f64> },

    #[error("group lasso did not converge at lambda={lambda:e}")]
    PathConvergence {
        lambda: f64,
        /// Entry statistics over the grid prefix that did converge.
        partial_z: Vec<f64>,
        partial_ztilde: Vec<f64>,
    },

    #[error("multinomial fit did not converge for group '{0}'")]
    MultinomialConvergence(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("strategy not applicable: {0}")]
    StrategyInapplicable(String),

    #[error("config error in field '{field}': {message}")]
    Config { field: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag used in CLI error payloads.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::Parse { .. } => "parse",
            Error::Data(_) => "data",
            Error::DegenerateColumn(_) => "degenerate_column",
            Error::DegenerateDesign(_) => "degenerate_design",
            Error::Dimension(_) => "dimension",
            Error::BlockSingular { .. } => "block_singular",
            Error::Feasibility(_) => "feasibility",
            Error::SdpConvergence { .. } => "sdp_convergence",
            Error::PathConvergence { .. } => "path_convergence",
            Error::MultinomialConvergence(_) => "multinomial_convergence",
            Error::Alignment(_) => "alignment",
            Error::Range(_) => "range",
            Error::StrategyInapplicable(_) => "strategy_inapplicable",
            Error::Config { .. } => "config",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
