//! Design space exploration: parameter sweeps with constraints, one
//! co-simulation per design, objective scores and ranking.

mod genetic;
mod objective;
mod run;
mod space;

use std::path::PathBuf;

use thiserror::Error;

use crate::codegen::CodegenError;

pub use genetic::{genetic_search, genetic_search_with, GeneticOptions, MAX_RETRIES, MUTATION_RATE};
pub use objective::{band_deviation, run_external, score, valve_switch_count, Direction, ObjectiveKind, ObjectiveSpec, ScoreContext};
pub use run::{
    build_native, compare_designs, rank_designs, run_designs, run_dse, BuildInfo, DesignResult, DesignStatus, DseReport,
    Executor,
};
pub use space::{enumerate_designs, CmpOp, Constraint, DesignPoint, DesignSpace, Engine, ParameterSweep, SweepValues, Term};

#[derive(Debug, Error)]
pub enum DseError {
    #[error("invalid design space: {0}")]
    Config(String),
    #[error("design space is empty: all {candidates} candidate designs violate the constraints")]
    EmptyDesignSpace { candidates: usize },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error("{0}")]
    Runtime(String),
}

impl DseError {
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            DseError::Config(_)
                | DseError::EmptyDesignSpace { .. }
                | DseError::Codegen(CodegenError::Plan(_) | CodegenError::ToolchainNotFound { .. })
        )
    }
}
