use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violates an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// The prior has zero spread, so no Beta law exists; callers fall back to a point mass.
    #[error("degenerate prior: std is zero, use a point mass at mean {mean}")]
    DegeneratePrior { mean: f64 },

    /// The raw blend collapsed to (nearly) the zero vector and has no direction.
    #[error("degenerate blend: intermediate latent norm {norm:e} is below 1e-12")]
    DegenerateBlend { norm: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("malformed input{}: {msg}", location.as_ref().map(|p| format!(" in {}", p.display())).unwrap_or_default())]
    Format {
        location: Option<PathBuf>,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format {
            location: None,
            msg: msg.into(),
        }
    }

    /// Attach a file path to a [`Error::Format`] error; other variants pass through.
    pub fn at_path(self, path: impl Into<PathBuf>) -> Self {
        match self {
            Error::Format { msg, .. } => Error::Format {
                location: Some(path.into()),
                msg,
            },
            other => other,
        }
    }
}
