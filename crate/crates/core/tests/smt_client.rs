//! Exercises the SMT subprocess client against a scripted stand-in solver,
//! covering response parsing, error surfacing, timeouts, and respawning.
//! When `SHIELDMT_SMT_BIN` points at a real solver, an extra agreement test
//! cross-checks it against the bounded backend.

use shieldmt_core::spec::{LinExpr, Valuation};
use shieldmt_core::theory::{
    Formula, ObjectiveSpec, QFormula, Solver, SolverConfig, SolverError, DEFAULT_BOUND,
    ENV_SMT_BIN,
};
use std::io::Write;
use std::time::{Duration, Instant};

fn mock_path() -> String {
    format!("{}/tests/mock_smt.py", env!("CARGO_MANIFEST_DIR"))
}

fn mock_solver(scenario: &str, timeout_ms: u64) -> Solver {
    SolverConfig::Smt {
        bin: "python3".into(),
        args: vec![mock_path(), scenario.into()],
        timeout: Duration::from_millis(timeout_ms),
    }
    .build()
}

/// A solver whose scripted responses differ per spawn: line N of the file
/// drives the N-th process start.
fn mock_solver_per_spawn(lines: &[&str], timeout_ms: u64) -> (Solver, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario");
    let mut f = std::fs::File::create(&path).unwrap();
    for line in lines {
        writeln!(f, "{line}").unwrap();
    }
    let solver = mock_solver(&format!("file:{}", path.display()), timeout_ms);
    (solver, dir)
}

/// `exists y. y > 9` — any closed query works; the mock scripts the answers.
fn closed_query() -> QFormula {
    QFormula::closed(Formula::exists(
        vec!["y".into()],
        Formula::atom_le(LinExpr::constant(10).sub(&LinExpr::var("y")).unwrap()),
    ))
}

fn model_query() -> QFormula {
    QFormula::exists(
        vec!["y".into()],
        Formula::atom_le(LinExpr::constant(10).sub(&LinExpr::var("y")).unwrap()),
    )
}

#[test]
fn truth_queries_map_sat_and_unsat() {
    let mut s = mock_solver("sat;unsat", 2_000);
    assert!(s.check_validity(&closed_query()).unwrap());
    assert!(!s.check_validity(&closed_query()).unwrap());
}

#[test]
fn model_query_parses_plain_and_negative_values() {
    let mut s = mock_solver("sat;((|y| 42));sat;((|y| (- 7)))", 2_000);
    let m = s.find_model(&model_query(), &ObjectiveSpec::None).unwrap().unwrap();
    assert_eq!(m, Valuation::from([("y".to_string(), 42)]));
    let m = s.find_model(&model_query(), &ObjectiveSpec::None).unwrap().unwrap();
    assert_eq!(m, Valuation::from([("y".to_string(), -7)]));
}

#[test]
fn unsat_model_query_returns_none() {
    let mut s = mock_solver("unsat", 2_000);
    assert!(s.find_model(&model_query(), &ObjectiveSpec::None).unwrap().is_none());
}

#[test]
fn unknown_is_a_distinct_error() {
    let mut s = mock_solver("unknown", 2_000);
    assert!(matches!(s.check_validity(&closed_query()), Err(SolverError::Unknown)));
}

#[test]
fn solver_error_is_surfaced_then_session_recovers() {
    let (mut s, _dir) = mock_solver_per_spawn(&[r#"(error "boom")"#, "sat"], 2_000);
    match s.check_validity(&closed_query()) {
        Err(SolverError::Process(msg)) => assert_eq!(msg, "boom"),
        other => panic!("expected a process error, got {other:?}"),
    }
    // The failed process was killed; the next query uses a fresh one.
    assert!(s.check_validity(&closed_query()).unwrap());
}

#[test]
fn garbage_output_is_a_parse_error() {
    let (mut s, _dir) = mock_solver_per_spawn(&["definitely not smt", "unsat"], 2_000);
    assert!(matches!(s.check_validity(&closed_query()), Err(SolverError::Response(_))));
    assert!(!s.check_validity(&closed_query()).unwrap());
}

#[test]
fn timeout_kills_the_process_and_respawns() {
    let (mut s, _dir) = mock_solver_per_spawn(&["SLEEP", "sat"], 300);
    let t0 = Instant::now();
    assert!(matches!(s.check_validity(&closed_query()), Err(SolverError::Timeout(300))));
    assert!(t0.elapsed() < Duration::from_secs(5), "timeout must not wait out the sleep");
    assert!(s.check_validity(&closed_query()).unwrap());
}

#[test]
fn crashed_process_is_reported_and_replaced() {
    let (mut s, _dir) = mock_solver_per_spawn(&["EXIT", "sat"], 2_000);
    assert!(matches!(s.check_validity(&closed_query()), Err(SolverError::Process(_))));
    assert!(s.check_validity(&closed_query()).unwrap());
}

#[test]
fn missing_binary_fails_to_spawn() {
    let mut s = SolverConfig::Smt {
        bin: "shieldmt-no-such-solver".into(),
        args: vec![],
        timeout: Duration::from_millis(500),
    }
    .build();
    assert!(matches!(s.check_validity(&closed_query()), Err(SolverError::Spawn { .. })));
}

/// With a real solver configured, spot-check agreement with the bounded
/// backend on queries whose answers are bound-independent.
#[test]
fn real_solver_agrees_with_bounded_backend() {
    if std::env::var(ENV_SMT_BIN).map(|v| v.is_empty()).unwrap_or(true) {
        return; // no external solver available
    }
    let mut smt = SolverConfig::from_env().build();
    let mut bounded = Solver::bounded(DEFAULT_BOUND);

    let queries = [
        QFormula::closed(Formula::exists(
            vec!["y".into()],
            Formula::atom_le(LinExpr::constant(10).sub(&LinExpr::var("y")).unwrap()),
        )),
        QFormula::closed(Formula::forall(
            vec!["x".into()],
            Formula::exists(
                vec!["y".into()],
                Formula::atom_le(
                    LinExpr::var("x").sub(&LinExpr::var("y")).unwrap(),
                ),
            ),
        )),
    ];
    for q in &queries {
        assert_eq!(smt.check_validity(q).unwrap(), bounded.check_validity(q).unwrap());
    }

    // Exact optimization: minimize |y - 4| subject to y > 9 yields 10.
    let q = model_query();
    let reference = Valuation::from([("y".to_string(), 4)]);
    let obj = ObjectiveSpec::MinimizeDistance {
        reference,
        metric: shieldmt_core::theory::DistanceMetric::L1,
    };
    let a = smt.find_model(&q, &obj).unwrap().unwrap();
    let b = bounded.find_model(&q, &obj).unwrap().unwrap();
    assert_eq!(a, b);
    assert_eq!(a["y"], 10);
}
