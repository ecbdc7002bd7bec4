use std::fmt;

use qepnl::corpus::CorpusError;
use qepnl::pipeline::PipelineError;
use qepnl::plan::PlanError;
use qepnl::poem::PoemError;
use qepnl::pool::PoolError;
use qepnl::rules::RuleError;
use qepnl::seq2seq::ModelError;

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_MALFORMED: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }

    pub fn malformed(message: impl fmt::Display) -> Self {
        CliError { code: EXIT_MALFORMED, message: message.to_string() }
    }

    pub fn runtime(message: impl fmt::Display) -> Self {
        CliError { code: EXIT_RUNTIME, message: message.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::InvalidBudget => CliError::usage(e.to_string()),
            _ => CliError::malformed(e),
        }
    }
}

impl From<PoemError> for CliError {
    fn from(e: PoemError) -> Self {
        match e {
            PoemError::CorruptStore(_) => CliError::malformed(e),
            _ => CliError::runtime(e),
        }
    }
}

impl From<PoolError> for CliError {
    fn from(e: PoolError) -> Self {
        match e {
            PoolError::Lex { .. } | PoolError::Parse { .. } => CliError::malformed(e),
            PoolError::Store(s) => s.into(),
            _ => CliError::runtime(e),
        }
    }
}

impl From<RuleError> for CliError {
    fn from(e: RuleError) -> Self {
        CliError::runtime(e)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Format { .. } => CliError::malformed(e),
            _ => CliError::runtime(e),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Checkpoint(_) | ModelError::BadVocab(_) => CliError::malformed(e),
            ModelError::Config(_) => CliError::usage(e.to_string()),
            _ => CliError::runtime(e),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Usage(m) => CliError::usage(m),
            PipelineError::Plan(p) => p.into(),
            PipelineError::Rule(r) => r.into(),
            PipelineError::Corpus(c) => c.into(),
            PipelineError::Model(m) => m.into(),
            PipelineError::Store(s) => s.into(),
            PipelineError::Config(_) => CliError::malformed(e),
            PipelineError::Io { .. } => CliError::runtime(e),
        }
    }
}
