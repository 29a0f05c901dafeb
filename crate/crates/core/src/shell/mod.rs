//! Configuration, staged pipeline with on-disk checkpoints, and run manifests.

mod config;
mod manifest;
mod pipeline;

pub use config::*;
pub use manifest::*;
pub use pipeline::*;

use thiserror::Error;

/// Pipeline stage, used to attribute failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Setup,
    Stationary,
    Kick,
    Propagate,
    Observe,
    Sweep,
    RigidBody,
    DimerModel,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Setup => "setup",
            Stage::Stationary => "stationary",
            Stage::Kick => "kick",
            Stage::Propagate => "propagate",
            Stage::Observe => "observe",
            Stage::Sweep => "sweep",
            Stage::RigidBody => "rigid",
            Stage::DimerModel => "dimer",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum ShellError {
    #[error("config line {line}, field '{field}': {msg}")]
    Parse { line: usize, field: String, msg: String },
    #[error("config constraints violated:\n  {}", .0.join("\n  "))]
    ConstraintViolation(Vec<String>),
    #[error("{stage} stage: outputs of the {needs} stage are missing or stale; run it first")]
    MissingStage { stage: Stage, needs: Stage },
    #[error("{stage} stage: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl ShellError {
    pub(crate) fn config(msg: String) -> Self {
        ShellError::ConstraintViolation(vec![msg])
    }

    pub(crate) fn stage<E: std::error::Error + Send + Sync + 'static>(stage: Stage) -> impl FnOnce(E) -> Self {
        move |e| ShellError::Stage { stage, source: Box::new(e) }
    }

    pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| ShellError::Io { path: path.display().to_string(), source }
    }

    /// Process exit code: 2 for configuration problems, 3 for failures while
    /// computing or writing results.
    pub fn exit_code(&self) -> i32 {
        match self {
            ShellError::Parse { .. } | ShellError::ConstraintViolation(_) | ShellError::MissingStage { .. } => 2,
            ShellError::Stage { .. } | ShellError::Io { .. } => 3,
        }
    }
}
