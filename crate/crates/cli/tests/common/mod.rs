//! Shared test support: a seeded generator of small specifications (one
//! input `x`, one output `y`, up to three literals with coefficients in
//! [-2, 2] and constants in [-10, 10]) plus helpers for driving the binary
//! and in-process shield sessions.
//!
//! Each integration-test target compiles this module separately and uses a
//! different subset of it.
#![allow(dead_code)]

use std::path::PathBuf;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shieldmt_core::spec::parse_spec;
use shieldmt_core::SpecT;

pub const CMP_OPS: [&str; 6] = ["<", "<=", ">", ">=", "==", "!="];

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

fn gen_literal(rng: &mut ChaCha8Rng) -> String {
    let (mut a, mut b) = (rng.random_range(-2i64..=2), rng.random_range(-2i64..=2));
    if a == 0 && b == 0 {
        (a, b) = (1, 1);
    }
    let op = rng.random_range(0..CMP_OPS.len());
    let c = rng.random_range(-10i64..=10);
    render_literal(a, b, op, c)
}

/// One reproducible specification source per seed, mirroring the shapes of
/// the property-test generator.
pub fn corpus_source(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lit: Vec<String> = (0..3).map(|_| gen_literal(&mut rng)).collect();
    let mut src = String::from("inputs: x: Int;\noutputs: y: Int;\n");
    for _ in 0..rng.random_range(1..=2usize) {
        let a = &lit[rng.random_range(0..3)];
        let b = &lit[rng.random_range(0..3)];
        let body = match rng.random_range(0u8..7) {
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

/// The first `count` parsed corpus specifications from consecutive seeds.
pub fn corpus(base_seed: u64, count: usize) -> Vec<SpecT> {
    (0..count as u64).map(|k| parse_spec(&corpus_source(base_seed + k)).unwrap()).collect()
}

/// Path of the packaged running-example specification.
pub fn running_spec_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../examples/running.spec")
}

pub fn running_spec() -> SpecT {
    parse_spec(&std::fs::read_to_string(running_spec_path()).unwrap()).unwrap()
}

/// Run the `shieldmt` binary with `args`, returning its output.
pub fn shieldmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shieldmt"))
        .args(args)
        .env_remove("SHIELDMT_SMT_BIN")
        .env_remove("SHIELDMT_SMT_ARGS")
        .env_remove("SHIELDMT_SMT_TIMEOUT_MS")
        .env_remove("SHIELDMT_BOUND")
        .env_remove("SHIELDMT_JOBS")
        .env_remove("SHIELDMT_SEED")
        .output()
        .expect("spawning shieldmt")
}

pub fn stdout_of(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}
