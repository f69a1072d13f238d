//! Experiment driver: dataset generation, training, evaluation, timing and
//! report export for LEAP net and baseline surrogates.

pub mod commands;
pub mod config;
pub mod metrics;

use std::fmt;

pub use commands::{bench, eval, eval_one, gen_data, report, train, Layout};
pub use config::ExperimentConfig;

/// Failure classes with a stable process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Failure {
    Input,
    Numerics,
    Compat,
    Artifact,
}

impl Failure {
    pub fn exit_code(self) -> i32 {
        match self {
            Failure::Input => 2,
            Failure::Numerics => 3,
            Failure::Compat => 4,
            Failure::Artifact => 5,
        }
    }
}

/// An error tagged with its failure class. Displays as the wrapped error.
#[derive(Debug)]
pub struct Classified {
    pub kind: Failure,
    pub error: anyhow::Error,
}

impl fmt::Display for Classified {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl std::error::Error for Classified {}

pub trait ResultExt<T> {
    /// Tags the error unless it already carries a class.
    fn fail_as(self, kind: Failure) -> anyhow::Result<T>;
}

impl<T, E: Into<anyhow::Error>> ResultExt<T> for Result<T, E> {
    fn fail_as(self, kind: Failure) -> anyhow::Result<T> {
        self.map_err(|e| {
            let error = e.into();
            if error.downcast_ref::<Classified>().is_some() {
                error
            } else {
                Classified { kind, error }.into()
            }
        })
    }
}

/// Exit code for an error that reached `main`. Untagged numerics and shape
/// errors from the core library keep their class; anything else is 1.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if let Some(c) = err.downcast_ref::<Classified>() {
        return c.kind.exit_code();
    }
    for cause in err.chain() {
        match cause.downcast_ref::<leapgrid_core::Error>() {
            Some(leapgrid_core::Error::Numerics(_)) => return Failure::Numerics.exit_code(),
            Some(leapgrid_core::Error::Shape(_)) => return Failure::Compat.exit_code(),
            _ => {}
        }
    }
    1
}
