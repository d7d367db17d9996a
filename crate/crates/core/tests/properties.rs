//! Property tests over randomly generated small specifications (one input
//! `x`, one output `y`, up to three literals with small coefficients), all
//! checked against the brute-force oracles or against stated invariants.

use proptest::prelude::*;
use shieldmt_core::boolabs::{
    check_feasible, compute_mvr, compute_vr, AbstractionOptions, Feasibility,
};
use shieldmt_core::oracle::{oracle_min_distance, oracle_mvr, oracle_realizable, oracle_vr};
use shieldmt_core::shield::{
    Architecture, ShieldArtifact, ShieldConfig, ShieldSession,
};
use shieldmt_core::spec::{parse_spec, MonitorVerdict, SpecT, Valuation};
use shieldmt_core::synth::{build_game, extract_controller, solve_game};
use shieldmt_core::theory::{distance, DistanceMetric, ObjectiveSpec, Solver, SolverConfig};
use shieldmt_core::{Choice, ReactionTable, StepRecord};

const CMP_OPS: [&str; 6] = ["<", "<=", ">", ">=", "==", "!="];

fn render_literal(a: i64, b: i64, op: usize, c: i64) -> String {
    let mut terms = Vec::new();
    if a != 0 {
        terms.push(format!("{a}*x"));
    }
    if b != 0 {
        terms.push(format!("{b}*y"));
    }
    format!("{} {} {}", terms.join(" + "), CMP_OPS[op], c)
}

prop_compose! {
    fn arb_literal()(
        a in -2i64..=2,
        b in -2i64..=2,
        op in 0usize..6,
        c in -10i64..=10,
    ) -> (i64, i64, usize, i64) {
        // Keep at least one variable; a pure-constant comparison is not a
        // literal. Bias nothing else.
        if a == 0 && b == 0 { (1, 1, op, c) } else { (a, b, op, c) }
    }
}

prop_compose! {
    fn arb_spec_source()(
        lits in proptest::collection::vec(arb_literal(), 3),
        shapes in proptest::collection::vec((0u8..7, 0usize..3, 0usize..3), 1..=2),
    ) -> String {
        let lit: Vec<String> =
            lits.iter().map(|&(a, b, op, c)| render_literal(a, b, op, c)).collect();
        let mut src = String::from("inputs: x: Int;\noutputs: y: Int;\n");
        for (shape, i, j) in shapes {
            let a = &lit[i];
            let b = &lit[j];
            let body = match shape {
                0 => format!("({a})"),
                1 => format!("({a}) -> X({b})"),
                2 => format!("({a}) -> ({b})"),
                3 => format!("({a}) && ({b})"),
                4 => format!("({a}) || ({b})"),
                5 => format!("!({a}) -> X({b})"),
                _ => format!("({a}) || X({b})"),
            };
            src.push_str(&format!("guarantee: G( {body} );\n"));
        }
        src
    }
}

/// Abstraction at bound 32 (inner system block [-64, 64]) so that runtime
/// sessions at bound 64 see exactly the same output box.
fn abstraction_opts() -> AbstractionOptions {
    AbstractionOptions {
        solver: SolverConfig::Bounded { bound: 32 },
        ..AbstractionOptions::default()
    }
}

fn val(pairs: &[(&str, i64)]) -> Valuation {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn wr_session(spec: &SpecT, table: &ReactionTable, objective: ObjectiveSpec) -> ShieldSession {
    let wr = solve_game(&build_game(spec, table).unwrap()).unwrap();
    ShieldSession::new(
        spec.clone(),
        ShieldArtifact::WinningRegion(wr),
        ShieldConfig { objective, ..ShieldConfig::default() },
        Solver::bounded(64),
    )
    .unwrap()
}

fn ctrl_session(spec: &SpecT, table: &ReactionTable) -> ShieldSession {
    let wr = solve_game(&build_game(spec, table).unwrap()).unwrap();
    let ctrl = extract_controller(&wr).unwrap();
    ShieldSession::new(
        spec.clone(),
        ShieldArtifact::Controller(ctrl),
        ShieldConfig {
            architecture: Architecture::ControllerBased,
            ..ShieldConfig::default()
        },
        Solver::bounded(64),
    )
    .unwrap()
}

fn replay(
    session: &mut ShieldSession,
    xs: &[Valuation],
    ys: &[Valuation],
) -> Vec<StepRecord> {
    let xs = xs.to_vec();
    let ys = ys.to_vec();
    let mut env = move |t: usize| xs.get(t).cloned();
    let mut design = move |t: usize, _: &Valuation| ys.get(t).cloned();
    session.run(&mut env, &mut design, usize::MAX, |_| {}).unwrap()
}

fn monitor_joint(spec: &SpecT, recs: &[StepRecord]) -> MonitorVerdict {
    let joint: Vec<Valuation> = recs
        .iter()
        .map(|r| {
            let mut j = r.x.clone();
            j.extend(r.y_out.clone());
            j
        })
        .collect();
    spec.monitor_prefix(&joint).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    /// The printer emits the concrete syntax back; reparsing must be
    /// structurally identical.
    #[test]
    fn print_then_parse_is_identity(src in arb_spec_source()) {
        let spec = parse_spec(&src).unwrap();
        let reparsed = parse_spec(&spec.print()).unwrap();
        prop_assert_eq!(&spec, &reparsed);
    }

    /// Literal evaluation (through canonicalization) agrees with direct
    /// arithmetic on the source comparison.
    #[test]
    fn literal_eval_matches_direct_arithmetic(
        (a, b, op, c) in arb_literal(),
        x in -50i64..=50,
        y in -50i64..=50,
    ) {
        let src = format!(
            "inputs: x: Int;\noutputs: y: Int;\nguarantee: G( ({}) );\n",
            render_literal(a, b, op, c)
        );
        let spec = parse_spec(&src).unwrap();
        prop_assert_eq!(spec.literals.len(), 1);
        let v = val(&[("x", x), ("y", y)]);
        let lhs = a as i128 * x as i128 + b as i128 * y as i128;
        let expect = match CMP_OPS[op] {
            "<" => lhs < c as i128,
            "<=" => lhs <= c as i128,
            ">" => lhs > c as i128,
            ">=" => lhs >= c as i128,
            "==" => lhs == c as i128,
            _ => lhs != c as i128,
        };
        prop_assert_eq!(spec.literals[0].eval(&v).unwrap(), expect);
    }

    /// A verdict cannot improve as the trace grows: prefixes of an OK trace
    /// are OK, and a violation position is stable under extension.
    #[test]
    fn monitor_verdict_is_stable_under_extension(
        src in arb_spec_source(),
        steps in proptest::collection::vec((-12i64..=12, -12i64..=12), 2..8),
    ) {
        let spec = parse_spec(&src).unwrap();
        let trace: Vec<Valuation> =
            steps.iter().map(|&(x, y)| val(&[("x", x), ("y", y)])).collect();
        let full = spec.monitor_prefix(&trace).unwrap();
        for cut in 1..trace.len() {
            let short = spec.monitor_prefix(&trace[..cut]).unwrap();
            match (short, full) {
                (MonitorVerdict::ViolatedAt(s), MonitorVerdict::Ok) => {
                    prop_assert!(false, "violation at {} vanished on extension", s);
                }
                (MonitorVerdict::ViolatedAt(s), MonitorVerdict::ViolatedAt(f)) => {
                    prop_assert!(f <= s, "violation moved later: {} -> {}", s, f);
                }
                _ => {}
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    /// The solver-driven abstraction equals brute-force grouping, and the
    /// minimal table equals the brute-force subset filter.
    #[test]
    fn abstraction_agrees_with_brute_force(src in arb_spec_source()) {
        let spec = parse_spec(&src).unwrap();
        let table = compute_vr(&spec, &abstraction_opts()).unwrap();
        let masks: Vec<u64> = table.reactions.iter().map(|r| r.mask()).collect();
        let expect = oracle_vr(&spec, 32);
        prop_assert_eq!(&masks, &expect);

        let mvr = compute_mvr(&table);
        let mvr_masks: Vec<u64> = mvr.reactions.iter().map(|r| r.mask()).collect();
        prop_assert_eq!(mvr_masks, oracle_mvr(&expect));

        // Both tables are feasible sets by construction.
        prop_assert_eq!(
            check_feasible(&spec, &table.reactions, &abstraction_opts()).unwrap(),
            Feasibility::Feasible
        );
        prop_assert_eq!(
            check_feasible(&spec, &mvr.reactions, &abstraction_opts()).unwrap(),
            Feasibility::Feasible
        );
    }

    /// Game realizability on the Boolean abstraction coincides with playing
    /// the concrete bounded game directly.
    #[test]
    fn realizability_agrees_with_bounded_game(src in arb_spec_source()) {
        let spec = parse_spec(&src).unwrap();
        let table = compute_vr(&spec, &abstraction_opts()).unwrap();
        let game = build_game(&spec, &table).unwrap();
        let solved = solve_game(&game);
        prop_assert_eq!(solved.is_some(), oracle_realizable(&spec, 32));
        if let Some(wr) = solved {
            prop_assert_eq!(wr.validate(), Ok(()));
            let ctrl = extract_controller(&wr).unwrap();
            prop_assert_eq!(ctrl.validate(), Ok(()));
        }
    }

    /// On realizable specifications, enforced runs never violate the
    /// specification, under either architecture, and a design that follows
    /// the controller is never overridden by the winning-region shield.
    #[test]
    fn enforcement_keeps_random_runs_safe(src in arb_spec_source(), seed in 0u64..1 << 48) {
        let spec = parse_spec(&src).unwrap();
        let table = compute_vr(&spec, &abstraction_opts()).unwrap();
        if solve_game(&build_game(&spec, &table).unwrap()).is_none() {
            return Ok(()); // unrealizable: nothing to enforce
        }
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Valuation> =
            (0..40).map(|_| val(&[("x", rng.random_range(-8..=8))])).collect();
        let ys: Vec<Valuation> =
            (0..40).map(|_| val(&[("y", rng.random_range(-64..=64))])).collect();

        let mut wr_sess = wr_session(&spec, &table, ObjectiveSpec::None);
        let recs = replay(&mut wr_sess, &xs, &ys);
        prop_assert_eq!(monitor_joint(&spec, &recs), MonitorVerdict::Ok);

        let mut ct_sess = ctrl_session(&spec, &table);
        let ct_recs = replay(&mut ct_sess, &xs, &ys);
        prop_assert_eq!(monitor_joint(&spec, &ct_recs), MonitorVerdict::Ok);

        // Containment: the controller's emitted outputs replayed through a
        // fresh winning-region shield pass untouched.
        let out_ys: Vec<Valuation> = ct_recs.iter().map(|r| r.y_out.clone()).collect();
        let mut wr2 = wr_session(&spec, &table, ObjectiveSpec::None);
        let recs2 = replay(&mut wr2, &xs, &out_ys);
        prop_assert!(recs2.iter().all(|r| !r.overridden));
    }

    /// Identical sessions on identical streams produce identical records.
    #[test]
    fn enforcement_is_deterministic(src in arb_spec_source(), seed in 0u64..1 << 48) {
        let spec = parse_spec(&src).unwrap();
        let table = compute_vr(&spec, &abstraction_opts()).unwrap();
        if solve_game(&build_game(&spec, &table).unwrap()).is_none() {
            return Ok(());
        }
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Valuation> =
            (0..20).map(|_| val(&[("x", rng.random_range(-8..=8))])).collect();
        let ys: Vec<Valuation> =
            (0..20).map(|_| val(&[("y", rng.random_range(-64..=64))])).collect();
        let a = replay(&mut wr_session(&spec, &table, ObjectiveSpec::None), &xs, &ys);
        let b = replay(&mut wr_session(&spec, &table, ObjectiveSpec::None), &xs, &ys);
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    /// On the packaged running example, an overriding distance-minimizing
    /// shield attains exactly the brute-force minimum distance over all safe
    /// outputs, and pass-throughs happen exactly when the design's move is
    /// among the safe choices.
    #[test]
    fn override_distance_is_globally_minimal(x in -10i64..=10, y in -64i64..=64) {
        let spec = parse_spec(
            "inputs: x: Int;\noutputs: y: Int;\n\
             guarantee: G( (x < 10) -> X(y > 9) );\n\
             guarantee: G( !(x < 10) -> (y <= x) );\n",
        )
        .unwrap();
        let table = compute_vr(&spec, &AbstractionOptions::default()).unwrap();
        let objective = ObjectiveSpec::MinimizeDistance {
            reference: Valuation::new(),
            metric: DistanceMetric::L1,
        };
        let mut session = wr_session(&spec, &table, objective);
        let v_x = val(&[("x", x)]);
        let v_y = val(&[("y", y)]);

        // Safe moves from the initial state: choices of the current reaction
        // whose pattern does not doom any clause.
        let e = session.partitioner(&v_x).unwrap();
        let mut allowed = 0u64;
        for c in &session.table().reactions[e].choices {
            if spec.allowed_next(c.0) != 0 {
                allowed |= 1 << c.0;
            }
        }

        let out = session.step(&v_x, &v_y).unwrap();
        let min = oracle_min_distance(&spec, &v_x, allowed, &v_y, DistanceMetric::L1, 64)
            .expect("winning region offers at least one safe output")
            .0;
        if out.record.overridden {
            let got = distance(DistanceMetric::L1, &out.record.y_out, &v_y);
            prop_assert_eq!(got, min);
            prop_assert!(min > 0, "a zero-distance safe output must pass through");
        } else {
            prop_assert_eq!(min, 0);
            let c = Choice(spec.literal_mask(&{
                let mut j = v_x.clone();
                j.extend(v_y.clone());
                j
            }).unwrap());
            prop_assert!(allowed >> c.0 & 1 == 1);
        }
    }
}
