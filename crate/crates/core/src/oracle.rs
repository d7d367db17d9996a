//! Brute-force reference implementations for tests.
//!
//! Everything here recomputes results of the main pipeline by exhaustive
//! enumeration over value grids, using only the literal evaluator — no
//! solver, no formula construction, no game machinery — so that agreement
//! is meaningful evidence. Grids mirror the bounded solver's ranges:
//! environment variables span `[-bound, bound]` and, for achievability,
//! system variables span the inner-block range `[-2*bound, 2*bound]`;
//! runtime output enumeration spans `[-bound, bound]` like the provider.

use crate::spec::{SpecT, Valuation};
use crate::theory::DistanceMetric;
use std::collections::BTreeSet;

/// Calls `f` with every assignment of `names` to values in `[lo, hi]`.
fn for_each_valuation(names: &[String], lo: i64, hi: i64, f: &mut impl FnMut(&Valuation)) {
    let mut vals = vec![lo; names.len()];
    loop {
        let v: Valuation =
            names.iter().cloned().zip(vals.iter().copied()).collect();
        f(&v);
        let mut i = 0;
        loop {
            if i == names.len() {
                return;
            }
            vals[i] += 1;
            if vals[i] <= hi {
                break;
            }
            vals[i] = lo;
            i += 1;
        }
    }
}

/// The distinct achievable-pattern sets over the environment grid: for each
/// input the bitset (over literal patterns) of patterns some output realizes.
fn achievable_sets(spec: &SpecT, bound: i64) -> BTreeSet<u64> {
    let env = spec.env_vars();
    let sys = spec.sys_vars();
    let mut sets = BTreeSet::new();
    for_each_valuation(&env, -bound, bound, &mut |v_x| {
        let mut achievable = 0u64;
        for_each_valuation(&sys, -2 * bound, 2 * bound, &mut |v_y| {
            let mut joint = v_x.clone();
            joint.extend(v_y.iter().map(|(k, v)| (k.clone(), *v)));
            let mask =
                spec.literal_mask(&joint).expect("joint valuation covers all variables");
            achievable |= 1 << mask;
        });
        if achievable != 0 {
            sets.insert(achievable);
        }
    });
    sets
}

/// Valid reactions by direct grouping: the distinct achievable sets, each
/// encoded as a bitset over choice patterns, in ascending order.
pub fn oracle_vr(spec: &SpecT, bound: i64) -> Vec<u64> {
    achievable_sets(spec, bound).into_iter().collect()
}

/// Minimal valid reactions: drops every set that strictly contains another.
pub fn oracle_mvr(vr: &[u64]) -> Vec<u64> {
    vr.iter()
        .copied()
        .filter(|&r| !vr.iter().any(|&o| o != r && o & !r == 0))
        .collect()
}

/// Realizability by playing the concrete bounded game: a pattern survives
/// when, whatever achievable set the environment presents next, some
/// surviving pattern in it extends the run without violating a clause; the
/// specification is realizable when every achievable set the environment can
/// open with contains a surviving pattern.
pub fn oracle_realizable(spec: &SpecT, bound: i64) -> bool {
    let sets: Vec<u64> = achievable_sets(spec, bound).into_iter().collect();
    let count = spec.choice_count();
    let pair_ok = |m: u32, m2: u32| spec.guarantees.iter().all(|cl| cl.body.eval(m, m2));
    let mut alive = vec![true; count as usize];
    loop {
        let mut changed = false;
        for m in 0..count {
            if !alive[m as usize] {
                continue;
            }
            let ok = sets.iter().all(|&a| {
                (0..count).any(|m2| a >> m2 & 1 == 1 && alive[m2 as usize] && pair_ok(m, m2))
            });
            if !ok {
                alive[m as usize] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    sets.iter().all(|&a| (0..count).any(|m| a >> m & 1 == 1 && alive[m as usize]))
}

/// Minimum distance from `reference` to any output in `[-bound, bound]`
/// whose joint pattern with `v_x` lies in `allowed` (a bitset over
/// patterns), with a witness. `None` when no such output exists.
pub fn oracle_min_distance(
    spec: &SpecT,
    v_x: &Valuation,
    allowed: u64,
    reference: &Valuation,
    metric: DistanceMetric,
    bound: i64,
) -> Option<(i128, Valuation)> {
    let sys = spec.sys_vars();
    let mut best: Option<(i128, Valuation)> = None;
    for_each_valuation(&sys, -bound, bound, &mut |v_y| {
        let mut joint = v_x.clone();
        joint.extend(v_y.iter().map(|(k, v)| (k.clone(), *v)));
        let mask = spec.literal_mask(&joint).expect("joint valuation covers all variables");
        if allowed >> mask & 1 == 0 {
            return;
        }
        let mut d: i128 = 0;
        for (name, r) in reference {
            let diff = (v_y.get(name).copied().unwrap_or(0) as i128 - *r as i128).abs();
            match metric {
                DistanceMetric::L1 => d += diff,
                DistanceMetric::Linf => d = d.max(diff),
            }
        }
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, v_y.clone()));
        }
    });
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_spec;

    const RUNNING: &str = "\
inputs: x: Int;
outputs: y: Int;
guarantee: G( (x < 10) -> X(y > 9) );
guarantee: G( !(x < 10) -> (y <= x) );
";

    #[test]
    fn grouping_reproduces_the_three_reactions() {
        let spec = parse_spec(RUNNING).unwrap();
        assert_eq!(oracle_vr(&spec, 64), vec![40, 42, 84]);
    }

    #[test]
    fn minimal_filter_drops_the_superset() {
        assert_eq!(oracle_mvr(&[40, 42, 84]), vec![40, 84]);
    }

    #[test]
    fn bounded_game_agrees_on_realizability() {
        let spec = parse_spec(RUNNING).unwrap();
        assert!(oracle_realizable(&spec, 64));
        let bad = parse_spec(
            "inputs: x: Int;\noutputs: y: Int;\nguarantee: G( (y > 9) && (y <= x) );\n",
        )
        .unwrap();
        assert!(!oracle_realizable(&bad, 64));
    }

    #[test]
    fn distance_enumeration_matches_hand_values() {
        let spec = parse_spec(RUNNING).unwrap();
        let x0: Valuation = [("x".to_string(), 0)].into();
        let ref4: Valuation = [("y".to_string(), 4)].into();
        // Pattern {s0}: outputs in [1,9]; the reference itself qualifies.
        let (d, w) =
            oracle_min_distance(&spec, &x0, 1 << 1, &ref4, DistanceMetric::L1, 64).unwrap();
        assert_eq!((d, w["y"]), (0, 4));
        // Pattern {s0,s2}: outputs are y <= 0; nearest to 4 is 0.
        let (d, w) =
            oracle_min_distance(&spec, &x0, 1 << 5, &ref4, DistanceMetric::L1, 64).unwrap();
        assert_eq!((d, w["y"]), (4, 0));
        // Both patterns allowed: the union's optimum.
        let (d, _) = oracle_min_distance(
            &spec,
            &x0,
            (1 << 5) | (1 << 3),
            &ref4,
            DistanceMetric::L1,
            64,
        )
        .unwrap();
        assert_eq!(d, 4);
        // Unachievable pattern set.
        assert!(oracle_min_distance(&spec, &x0, 1 << 7, &ref4, DistanceMetric::L1, 64)
            .is_none());
    }
}
