//! Crate-wide error type.

use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Filesystem failure, with the path that triggered it.
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// A file's magic, header, or record shape does not match its format.
    Format {
        path: Option<PathBuf>,
        message: String,
    },
    /// A statistics query on counts with Z = 0.
    EmptyStatistics,
    /// NPMI requested for a term against itself.
    SelfPair,
    /// A point failed the hyperboloid constraint beyond tolerance.
    OffManifold(String),
    /// A point lies on or outside the unit ball.
    OutsideBall,
    /// A vector passed as tangent is not Lorentz-orthogonal to its base point.
    NotTangent(String),
    /// A distance, loss, or gradient became non-finite.
    NonFinite(String),
    EmptyVocabulary,
    /// No association pair survived the threshold.
    EmptyAssociations,
    /// A metric was asked to evaluate zero pairs or an empty level set.
    EmptyEvaluationSet,
    /// A term string is missing from the vocabulary or report.
    UnknownTerm(String),
    /// A queried or ingested term normalizes to nothing.
    EmptyTerm(String),
    InvalidConfig(String),
    InvalidInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: Option<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path,
            message: message.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io { path, source } => write!(f, "{}: {}", path.display(), source),
            Error::Format {
                path: Some(p),
                message,
            } => {
                write!(f, "{}: {}", p.display(), message)
            }
            Error::Format {
                path: None,
                message,
            } => write!(f, "{message}"),
            Error::EmptyStatistics => {
                write!(f, "empty statistics: total co-occurrence mass is zero")
            }
            Error::SelfPair => write!(f, "self-pair undefined: npmi(x, x) has no meaning"),
            Error::OffManifold(what) => write!(f, "off-manifold input: {what}"),
            Error::OutsideBall => write!(f, "outside ball: point norm is not < 1"),
            Error::NotTangent(what) => write!(f, "not a tangent vector: {what}"),
            Error::NonFinite(what) => write!(f, "non-finite value: {what}"),
            Error::EmptyVocabulary => write!(f, "vocabulary is empty"),
            Error::EmptyAssociations => write!(f, "no associations above threshold"),
            Error::EmptyEvaluationSet => write!(f, "empty evaluation set"),
            Error::UnknownTerm(t) => write!(f, "unknown term: {t:?}"),
            Error::EmptyTerm(t) => write!(f, "term normalizes to empty: {t:?}"),
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
