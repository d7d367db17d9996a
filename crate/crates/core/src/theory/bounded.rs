//! Exhaustive-enumeration backend: decides queries exactly over a finite box
//! (`[-B * 2^d, B * 2^d]` for variables at quantifier depth `d`). This is the
//! testing baseline and the default production backend when no external SMT
//! solver is configured.
//!
//! Caveat: witnesses or counterexamples outside the box are invisible, so a
//! verdict is exact only for desk-scale constants well inside the bound. The
//! default bound of 64 covers all packaged examples with wide margin.

use super::eval::Compiled;
use super::{distance, DistanceMetric, Formula, ObjectiveSpec, QFormula, SolverError};
use crate::spec::Valuation;

#[derive(Clone, Debug)]
pub struct BoundedSolver {
    bound: i64,
}

impl BoundedSolver {
    pub fn new(bound: i64) -> BoundedSolver {
        BoundedSolver { bound: bound.abs().max(1) }
    }

    pub fn bound(&self) -> i64 {
        self.bound
    }

    pub fn check_truth(&mut self, f: &Formula) -> Result<bool, SolverError> {
        let c = Compiled::compile(f, &[])?;
        let mut slots = vec![0i64; c.n_slots];
        Ok(c.eval(&mut slots, self.bound))
    }

    pub fn find_model(
        &mut self,
        solve: &[String],
        body: &Formula,
        obj: &ObjectiveSpec,
    ) -> Result<Option<Valuation>, SolverError> {
        // Solve variables are enumerated in sorted name order so that the
        // assignment tuple order matches the lexicographic tie-break rule.
        let mut names: Vec<String> = solve.to_vec();
        names.sort();
        names.dedup();
        let hard = Compiled::compile(body, &names)?;
        match obj {
            ObjectiveSpec::None => self.first_model(&names, &hard),
            ObjectiveSpec::MinimizeDistance { reference, metric } => {
                let score = |m: &Valuation| distance(*metric, m, reference);
                self.best_model(&names, &hard, score)
            }
            ObjectiveSpec::SoftConstraints { constraints, closest_to } => {
                let softs: Vec<(Compiled, u64)> = constraints
                    .iter()
                    .map(|sc| Ok((Compiled::compile(&sc.formula.as_formula(), &names)?, sc.weight)))
                    .collect::<Result<_, SolverError>>()?;
                let score = |m: &Valuation| {
                    closest_to.as_ref().map_or(0, |(r, metric)| distance(*metric, m, r))
                };
                self.best_model_soft(&names, &hard, &softs, score)
            }
        }
    }

    /// First model in near-zero-first order: each variable ranges over
    /// 0, -1, 1, -2, 2, ... so the returned model has small magnitudes.
    fn first_model(&self, names: &[String], hard: &Compiled) -> Result<Option<Valuation>, SolverError> {
        let mut slots = vec![0i64; hard.n_slots];
        let bound = self.bound;
        fn go(
            depth: usize,
            names: &[String],
            hard: &Compiled,
            slots: &mut Vec<i64>,
            bound: i64,
        ) -> bool {
            if depth == names.len() {
                return hard.eval(slots, bound);
            }
            for i in 0..=(2 * bound as u64) {
                let v = if i % 2 == 0 { (i / 2) as i64 } else { -((i as i64 + 1) / 2) };
                slots[depth] = v;
                if go(depth + 1, names, hard, slots, bound) {
                    return true;
                }
            }
            false
        }
        if go(0, names, hard, &mut slots, bound) {
            Ok(Some(valuation(names, &slots)))
        } else {
            Ok(None)
        }
    }

    /// Scans the whole box in lexicographic order (sorted names, ascending
    /// values), keeping the first strictly better model, which realizes
    /// "minimal score, ties broken by lexicographically smallest valuation".
    fn best_model(
        &self,
        names: &[String],
        hard: &Compiled,
        score: impl Fn(&Valuation) -> i128,
    ) -> Result<Option<Valuation>, SolverError> {
        let mut best: Option<(i128, Valuation)> = None;
        self.scan(names, hard, &mut |assign| {
            let m = valuation(names, assign);
            let d = score(&m);
            if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                best = Some((d, m));
            }
        });
        Ok(best.map(|(_, m)| m))
    }

    fn best_model_soft(
        &self,
        names: &[String],
        hard: &Compiled,
        softs: &[(Compiled, u64)],
        score: impl Fn(&Valuation) -> i128,
    ) -> Result<Option<Valuation>, SolverError> {
        let mut best: Option<(u64, i128, Valuation)> = None;
        let bound = self.bound;
        let mut soft_slots: Vec<Vec<i64>> = softs.iter().map(|(c, _)| vec![0i64; c.n_slots]).collect();
        self.scan(names, hard, &mut |assign| {
            let mut weight = 0u64;
            for ((c, w), buf) in softs.iter().zip(soft_slots.iter_mut()) {
                buf[..names.len()].copy_from_slice(assign);
                if c.eval(buf, bound) {
                    weight += w;
                }
            }
            let m = valuation(names, assign);
            let d = score(&m);
            let better = match &best {
                None => true,
                Some((bw, bd, _)) => weight > *bw || (weight == *bw && d < *bd),
            };
            if better {
                best = Some((weight, d, m));
            }
        });
        Ok(best.map(|(_, _, m)| m))
    }

    /// Visits every hard-satisfying assignment of the solve variables in
    /// lexicographic order.
    fn scan(&self, names: &[String], hard: &Compiled, visit: &mut impl FnMut(&[i64])) {
        let mut slots = vec![0i64; hard.n_slots];
        let bound = self.bound;
        fn go(
            depth: usize,
            names: &[String],
            hard: &Compiled,
            slots: &mut Vec<i64>,
            bound: i64,
            visit: &mut impl FnMut(&[i64]),
        ) {
            if depth == names.len() {
                if hard.eval(slots, bound) {
                    let snapshot: Vec<i64> = slots[..names.len()].to_vec();
                    visit(&snapshot);
                }
                return;
            }
            for v in -bound..=bound {
                slots[depth] = v;
                go(depth + 1, names, hard, slots, bound, visit);
            }
        }
        go(0, names, hard, &mut slots, bound, visit);
    }
}

fn valuation(names: &[String], slots: &[i64]) -> Valuation {
    names.iter().cloned().zip(slots.iter().copied()).collect()
}

/// Brute-force validity over `[-bound, bound]`; the testing oracle for
/// [`super::Solver::check_validity`].
pub fn oracle_enumerate_validity(f: &QFormula, bound: i64) -> Result<bool, SolverError> {
    let formula = f.as_formula();
    let free = formula.free_vars();
    if !free.is_empty() {
        return Err(SolverError::Unsupported(format!(
            "oracle query has free variables: {}",
            free.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    BoundedSolver::new(bound).check_truth(&formula)
}

/// Brute-force model search over `[-bound, bound]`; the testing oracle for
/// [`super::Solver::find_model`].
pub fn oracle_enumerate_model(
    f: &QFormula,
    bound: i64,
    obj: &ObjectiveSpec,
) -> Result<Option<Valuation>, SolverError> {
    BoundedSolver::new(bound).find_model(&f.solve_vars(), &f.body, obj)
}

/// Distance between a model and a reference under a metric, re-exported for
/// test oracles that compare optimization results.
pub fn model_distance(metric: DistanceMetric, a: &Valuation, reference: &Valuation) -> i128 {
    distance(metric, a, reference)
}
