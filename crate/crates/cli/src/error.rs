use std::fmt;
use std::path::{Path, PathBuf};

/// A failure reported as one line, `error: <category>: <detail>`, with an
/// exit status per category.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    BadArgs(String),
    InputMissing { what: &'static str, path: PathBuf },
    InputInvalid(String),
    Weights(String),
    Runtime(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::BadArgs(_) => "bad-args",
            CliError::InputMissing { .. } => "input-missing",
            CliError::InputInvalid(_) => "input-invalid",
            CliError::Weights(_) => "weights",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadArgs(_) => 2,
            CliError::InputMissing { .. } | CliError::InputInvalid(_) => 3,
            CliError::Weights(_) => 4,
            CliError::Runtime(_) => 5,
        }
    }

    pub fn missing(what: &'static str, path: &Path) -> Self {
        CliError::InputMissing {
            what,
            path: path.to_owned(),
        }
    }

    /// The line printed to stderr. Newlines in the detail are flattened so the
    /// line stays parseable.
    pub fn line(&self) -> String {
        let detail = match self {
            CliError::InputMissing { what, path } => {
                format!("{what} file not found: {}", path.display())
            }
            CliError::BadArgs(m)
            | CliError::InputInvalid(m)
            | CliError::Weights(m)
            | CliError::Runtime(m) => m.clone(),
        };
        let detail = detail.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error: {}: {}", self.category(), detail)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}
