//! Crate-wide error type and its mapping onto process exit codes.
//!
//! Every fallible operation in this crate returns [`Error`]. The variants are
//! grouped into four broad categories so the CLI can translate any failure
//! into a stable exit code without inspecting message strings.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure category, used to pick the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad configuration: unknown keys, out-of-range values, missing files
    /// named by the config.
    Config,
    /// Bad input data: malformed corpus rows, mismatched lengths, arguments
    /// that violate an operation's preconditions.
    Data,
    /// Backend trouble: transport failures, HTTP errors, responses that
    /// cannot be parsed into the expected format.
    Backend,
    /// Statistical degeneracy: estimands that are undefined on the given
    /// input (zero variance, single-class labels, unidentifiable variance
    /// components).
    Degenerate,
}

impl ErrorCategory {
    /// Exit code the CLI uses for this category. Success is 0.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Backend => 4,
            ErrorCategory::Degenerate => 5,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Problems with run configuration or CLI arguments.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem trouble while reading or writing a named path.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A corpus or ratings file failed validation. `row` is 1-based when known.
    #[error("data error{}: {message}", fmt_row(.row))]
    Data { row: Option<usize>, message: String },

    /// An operation was called with arguments that violate its preconditions.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The backend could not be reached or replied with a transport-level
    /// failure. `retryable` distinguishes timeouts and rate limits from
    /// permanent rejections such as authentication failures.
    #[error("backend transport error: {message}")]
    Transport { message: String, retryable: bool },

    /// The backend replied, but the payload did not match the wire protocol.
    #[error("backend protocol error: {0}")]
    Protocol(String),

    /// Model output could not be parsed into the expected structure. Carries
    /// the raw text so callers can log or surface it.
    #[error("unparseable model output ({what}): {detail}")]
    Parse {
        what: String,
        detail: String,
        raw: String,
    },

    /// Scoring a specific instance failed after all retries and re-prompts.
    #[error("scoring failed for instance {instance_id}: {message}")]
    Scoring {
        instance_id: String,
        message: String,
    },

    /// The requested estimand is undefined on this input.
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

fn fmt_row(row: &Option<usize>) -> String {
    match row {
        Some(n) => format!(" at row {n}"),
        None => String::new(),
    }
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data {
            row: None,
            message: msg.into(),
        }
    }

    pub fn data_at(row: usize, msg: impl Into<String>) -> Self {
        Error::Data {
            row: Some(row),
            message: msg.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Category of this error, determining the CLI exit code.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::Io { .. } | Error::Data { .. } | Error::Invalid(_) => ErrorCategory::Data,
            Error::Transport { .. }
            | Error::Protocol(_)
            | Error::Parse { .. }
            | Error::Scoring { .. } => ErrorCategory::Backend,
            Error::Degenerate(_) => ErrorCategory::Degenerate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(Error::config("x").category().exit_code(), 2);
        assert_eq!(Error::data("x").category().exit_code(), 3);
        assert_eq!(Error::invalid("x").category().exit_code(), 3);
        assert_eq!(
            Error::Transport {
                message: "t".into(),
                retryable: true
            }
            .category()
            .exit_code(),
            4
        );
        assert_eq!(
            Error::Parse {
                what: "scores".into(),
                detail: "no list".into(),
                raw: "???".into()
            }
            .category()
            .exit_code(),
            4
        );
        assert_eq!(Error::degenerate("x").category().exit_code(), 5);
    }

    #[test]
    fn data_error_formats_row() {
        let e = Error::data_at(17, "bad label");
        assert_eq!(e.to_string(), "data error at row 17: bad label");
        let e = Error::data("bad label");
        assert_eq!(e.to_string(), "data error: bad label");
    }
}
