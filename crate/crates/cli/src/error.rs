use std::fmt;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// A failure tagged with the stage that produced it.
#[derive(Debug)]
pub struct CliError {
    pub stage: String,
    pub message: String,
    pub code: i32,
}

impl CliError {
    pub fn new(stage: impl Into<String>, code: i32, message: impl Into<String>) -> Self {
        CliError {
            stage: stage.into(),
            message: message.into(),
            code,
        }
    }

    pub fn data(stage: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::new(stage, EXIT_DATA, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Exit code for an underlying error type.
pub trait Classify: fmt::Display {
    fn exit_code(&self) -> i32 {
        EXIT_DATA
    }
}

impl Classify for fcbm_core::Error {
    fn exit_code(&self) -> i32 {
        if self.is_numeric() {
            EXIT_NUMERIC
        } else {
            EXIT_DATA
        }
    }
}

impl Classify for std::io::Error {}
impl Classify for serde_json::Error {}
impl Classify for fcbm_client::ClientError {}
impl Classify for glob::PatternError {}
impl Classify for glob::GlobError {}

pub trait Stage<T> {
    fn stage(self, stage: &str) -> CliResult<T>;
}

impl<T, E: Classify> Stage<T> for Result<T, E> {
    fn stage(self, stage: &str) -> CliResult<T> {
        self.map_err(|e| CliError::new(stage, e.exit_code(), e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_errors_exit_three() {
        let r: Result<(), _> = Err(fcbm_core::Error::Numeric("loss is NaN".into()));
        let e = r.stage("train").unwrap_err();
        assert_eq!(e.code, EXIT_NUMERIC);
        assert_eq!(e.to_string(), "train: numeric failure: loss is NaN");
    }

    #[test]
    fn shape_errors_exit_two() {
        let r: Result<(), _> = Err(fcbm_core::Error::Shape("k".into()));
        assert_eq!(r.stage("eval").unwrap_err().code, EXIT_DATA);
    }
}
