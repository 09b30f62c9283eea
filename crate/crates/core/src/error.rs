use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("svd did not converge after {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },

    /// Raised with the anchor index whose Jacobian could not be factored.
    #[error("svd failed at anchor {anchor}: {source}")]
    AnchorSvd {
        anchor: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate point: {0}")]
    Degenerate(String),

    #[error("rank deficient: sigma_{k} = {sigma_k:e} (spectrum {spectrum:?})")]
    RankDeficient {
        k: usize,
        sigma_k: f64,
        spectrum: Vec<f64>,
    },

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error("training diverged at round {round}, epoch {epoch}, step {step}: {detail}")]
    Diverged {
        round: usize,
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
