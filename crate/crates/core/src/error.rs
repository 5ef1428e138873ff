//! Error type shared across the workspace.
//!
//! Variants map onto the CLI exit codes: config errors exit 2, missing
//! stage artifacts exit 3, numeric failures exit 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or malformed config/input file.
    #[error("config error: {0}")]
    Config(String),

    /// Shape-incompatible tensor operands; names the op and the shapes.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// Non-finite value produced, non-scalar loss, divergence and friends.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A pipeline stage was invoked before its prerequisites exist.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    /// Corrupt or mismatched on-disk artifact (bad magic, wrong layout...).
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 missing artifact, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Format(_) => 2,
            Error::MissingArtifact(_) => 3,
            Error::Numeric(_) | Error::Shape { .. } => 4,
            Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => 3,
            Error::Io(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::MissingArtifact("x".into()).exit_code(), 3);
        assert_eq!(Error::Numeric("x".into()).exit_code(), 4);
        let shape = Error::Shape { op: "matmul", detail: "2x3 vs 2x3".into() };
        assert_eq!(shape.exit_code(), 4);
    }

    #[test]
    fn shape_error_names_op_and_shapes() {
        let e = Error::Shape { op: "matmul", detail: "[2, 3] x [2, 3]".into() };
        let msg = e.to_string();
        assert!(msg.contains("matmul"));
        assert!(msg.contains("[2, 3]"));
    }
}
