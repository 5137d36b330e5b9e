use std::fmt;
use std::path::Path;

/// Pipeline stage named in diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliStage {
    Parse,
    Load,
    Label,
    Simulate,
    Fit,
    Evaluate,
    Write,
}

impl CliStage {
    pub fn as_str(self) -> &'static str {
        match self {
            CliStage::Parse => "parse",
            CliStage::Load => "load",
            CliStage::Label => "label",
            CliStage::Simulate => "simulate",
            CliStage::Fit => "fit",
            CliStage::Evaluate => "evaluate",
            CliStage::Write => "write",
        }
    }
}

impl fmt::Display for CliStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[stage={stage}] {message}")]
pub struct Failure {
    pub stage: CliStage,
    pub message: String,
    /// Root cause from the core library, when there is one.
    pub core: Option<simforest_core::Error>,
}

impl Failure {
    pub fn new(stage: CliStage, message: impl Into<String>) -> Self {
        Failure {
            stage,
            message: message.into(),
            core: None,
        }
    }

    pub fn io(stage: CliStage, path: &Path, err: impl fmt::Display) -> Self {
        Failure::new(stage, format!("{}: {err}", path.display()))
    }

    /// Core errors carry their stage when they escape an MCCV iteration;
    /// anything else is an input problem.
    pub fn core(err: simforest_core::Error) -> Self {
        use simforest_core::error::Stage;
        let stage = match err.stage() {
            Some(Stage::Label) => CliStage::Label,
            Some(Stage::Simulate) => CliStage::Simulate,
            Some(Stage::Fit) => CliStage::Fit,
            Some(Stage::Evaluate) => CliStage::Evaluate,
            None => CliStage::Load,
        };
        Failure {
            stage,
            message: err.to_string(),
            core: Some(err),
        }
    }
}

impl From<simforest_core::Error> for Failure {
    fn from(err: simforest_core::Error) -> Self {
        Failure::core(err)
    }
}

pub type CliResult<T> = Result<T, Failure>;
