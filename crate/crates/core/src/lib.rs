//! Runtime shields for safety specifications over linear integer arithmetic.
//!
//! The pipeline has three stages:
//!
//! 1. [`spec`] parses a temporal safety specification (a conjunction of
//!    always-clauses whose atoms are integer linear comparisons, with Next
//!    applied only directly to comparisons) and canonicalizes its literals.
//! 2. [`boolabs`] computes the valid reactions of the environment (the ways
//!    the environment can partition the system's achievable literal patterns)
//!    and produces an equi-realizable Boolean specification.
//! 3. [`synth`] solves the induced safety game, yielding either a maximally
//!    permissive winning region or a deterministic controller, and [`shield`]
//!    uses the result at runtime to pass through or correct the outputs of an
//!    external design so that the emitted trace always satisfies the
//!    specification.
//!
//! Decision procedures live in [`theory`]: a bounded-enumeration backend that
//! is exact within a configurable box and an SMT-LIB 2 subprocess client.
//! [`oracle`] contains independent brute-force reference implementations used
//! to validate the main pipeline in tests.

pub mod boolabs;
pub mod oracle;
pub mod shield;
pub mod spec;
pub mod synth;
pub mod theory;

pub use crate::boolabs::{BoolSpec, Choice, Reaction, ReactionKind, ReactionTable};
pub use crate::shield::{
    Architecture, ShieldArtifact, ShieldConfig, ShieldSession, StepOutcome, StepRecord,
};
pub use crate::spec::{MonitorVerdict, Owner, SpecT, Valuation};
pub use crate::synth::{Controller, SafetyGame, WinningRegion};
pub use crate::theory::{DistanceMetric, ObjectiveSpec, Solver, SolverConfig};

/// Errors shared across the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(#[from] spec::ParseError),
    #[error("evaluation error: {0}")]
    Eval(#[from] spec::EvalError),
    #[error("solver error: {0}")]
    Solver(#[from] theory::SolverError),
    #[error("{0}")]
    Guard(String),
    #[error("reaction set is not feasible: {0}")]
    Infeasible(String),
    #[error("specification is unrealizable")]
    Unrealizable,
    #[error("no reaction matches the current input; the reaction table is corrupt or not covering")]
    NoReaction,
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
