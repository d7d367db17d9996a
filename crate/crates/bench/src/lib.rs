//! Shared fixtures for the pipeline benchmarks.

use shieldmt_core::boolabs::{compute_vr, AbstractionOptions};
use shieldmt_core::shield::{ShieldArtifact, ShieldConfig, ShieldSession};
use shieldmt_core::spec::parse_spec;
use shieldmt_core::synth::{build_game, solve_game};
use shieldmt_core::theory::Solver;
use shieldmt_core::{ReactionTable, SolverConfig, SpecT};

/// The running example: one environment input, one system output, a Next
/// obligation and an immediate cap.
pub const RUNNING_SRC: &str = "\
inputs: x: Int;
outputs: y: Int;
guarantee: G( (x < 10) -> X(y > 9) );
guarantee: G( (x >= 10) -> (y <= x) );
";

pub fn running_spec() -> SpecT {
    parse_spec(RUNNING_SRC).unwrap()
}

/// Abstraction at bound 32; runtime sessions at bound 64 see the same
/// output box.
pub fn abstraction_opts() -> AbstractionOptions {
    AbstractionOptions { solver: SolverConfig::Bounded { bound: 32 }, ..Default::default() }
}

pub fn vr_table(spec: &SpecT) -> ReactionTable {
    compute_vr(spec, &abstraction_opts()).unwrap()
}

pub fn wr_session(spec: &SpecT, table: &ReactionTable) -> ShieldSession {
    let wr = solve_game(&build_game(spec, table).unwrap()).unwrap();
    ShieldSession::new(
        spec.clone(),
        ShieldArtifact::WinningRegion(wr),
        ShieldConfig::default(),
        Solver::bounded(64),
    )
    .unwrap()
}
