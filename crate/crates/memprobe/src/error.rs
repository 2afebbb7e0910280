//! Top-level error type mapped onto the documented exit codes:
//! 0 ok, 1 usage, 2 backend failure, 3 data/schema error.

use memprobe_core::backend::BackendError;
use memprobe_core::design::DesignError;
use memprobe_core::lexicon::LexiconError;
use memprobe_core::prompt::PromptError;
use memprobe_core::scoring::ScoringError;
use memprobe_core::stats::StatsError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Backend(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Backend(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> CliError {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> CliError {
        CliError::Data(msg.into())
    }

    pub fn backend(msg: impl Into<String>) -> CliError {
        CliError::Backend(msg.into())
    }
}

impl From<DesignError> for CliError {
    fn from(err: DesignError) -> CliError {
        CliError::Usage(err.to_string())
    }
}

impl From<LexiconError> for CliError {
    fn from(err: LexiconError) -> CliError {
        CliError::Data(format!("lexicon: {err}"))
    }
}

impl From<PromptError> for CliError {
    fn from(err: PromptError) -> CliError {
        CliError::Data(format!("prompt: {err}"))
    }
}

impl From<BackendError> for CliError {
    fn from(err: BackendError) -> CliError {
        CliError::Backend(err.to_string())
    }
}

impl From<ScoringError> for CliError {
    fn from(err: ScoringError) -> CliError {
        CliError::Data(format!("scoring: {err}"))
    }
}

impl From<StatsError> for CliError {
    fn from(err: StatsError) -> CliError {
        CliError::Data(format!("stats: {err}"))
    }
}
