//! Distribution-aware active learning.
//!
//! A VAE *teacher* trained offline on unlabeled data scores how typical each
//! pool sample is. The *selector* multiplies the *learner*'s predictive
//! entropy by that score raised to an attention exponent β and queries the
//! top of the ranking. The harness drives full active-learning runs on a 2-D
//! toy mixture with uniform outliers and on MNIST with held-out digits acting
//! as outliers.

pub mod datasets;
pub mod harness;
pub mod learner;
pub mod numerics;
pub mod par;
pub mod selector;
pub mod teacher;

mod binio;

pub use numerics::{NumericsError, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("{0}")]
    Contract(String),
    #[error("{0}")]
    Domain(String),
    #[error("degenerate pool: {0}")]
    DegeneratePool(String),
    #[error("query budget exhausted: requested {requested}, {remaining} unqueried samples left")]
    BudgetExhausted { requested: usize, remaining: usize },
    #[error("unsupported input dimension {0}")]
    UnsupportedDimension(usize),
    #[error("format error in {what}: {detail}")]
    Format { what: String, detail: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
