//! Benchmarks split along the shield's two runtime phases — the Boolean
//! bookkeeping of a pass-through step versus a correcting step that queries
//! the theory solver — plus the offline pipeline stages.

use criterion::{criterion_group, criterion_main, Criterion};
use shieldmt_bench::{abstraction_opts, running_spec, vr_table, wr_session};
use shieldmt_core::boolabs::compute_vr;
use shieldmt_core::synth::{build_game, extract_controller, solve_game};
use shieldmt_core::Valuation;

fn val(pairs: &[(&str, i64)]) -> Valuation {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// A safe proposal at x:15 (y:5 keeps y <= x): the shield passes it through
/// without touching the solver once the input's reaction is cached.
fn boolean_pass_through(c: &mut Criterion) {
    let spec = running_spec();
    let table = vr_table(&spec);
    let mut session = wr_session(&spec, &table);
    let x = val(&[("x", 15)]);
    let y = val(&[("y", 5)]);
    session.step(&x, &y).unwrap();
    c.bench_function("step/boolean_pass_through", |b| {
        b.iter(|| session.step(&x, &y).unwrap())
    });
}

/// An unsafe proposal at x:15 (y:20 breaks y <= x): every step overrides,
/// paying for a model query against the theory backend.
fn theory_override(c: &mut Criterion) {
    let spec = running_spec();
    let table = vr_table(&spec);
    let mut session = wr_session(&spec, &table);
    let x = val(&[("x", 15)]);
    let y = val(&[("y", 20)]);
    assert!(session.step(&x, &y).unwrap().record.overridden);
    c.bench_function("step/theory_override", |b| {
        b.iter(|| session.step(&x, &y).unwrap())
    });
}

/// Offline stages: valid-reaction computation and safety-game solving.
fn offline_pipeline(c: &mut Criterion) {
    let spec = running_spec();
    let opts = abstraction_opts();
    c.bench_function("abstract/compute_vr", |b| b.iter(|| compute_vr(&spec, &opts).unwrap()));

    let table = vr_table(&spec);
    c.bench_function("synth/solve_and_extract", |b| {
        b.iter(|| {
            let wr = solve_game(&build_game(&spec, &table).unwrap()).unwrap();
            extract_controller(&wr).unwrap()
        })
    });
}

criterion_group!(phases, boolean_pass_through, theory_override, offline_pipeline);
criterion_main!(phases);
