//! Decision procedures for quantified linear integer arithmetic queries.
//!
//! Formulas are Boolean combinations of canonical atoms (`lin <= 0`,
//! `lin = 0`) with structurally scoped quantifier blocks; every query the
//! pipeline builds stays within exists-forall alternation up to negation.
//! Two backends implement the same interface: [`bounded::BoundedSolver`]
//! decides queries exactly within a finite box — variables at quantifier
//! depth `d` range over `[-B * 2^d, B * 2^d]`, giving inner witnesses
//! headroom over outer values — and is the default when no external solver
//! is configured; [`smt::SmtSolver`] talks SMT-LIB 2 to an external solver
//! subprocess and decides queries over unbounded integers.
//!
//! A solver answer of unknown or a timeout is always surfaced as an error,
//! never treated as a truth value.

pub mod bounded;
mod eval;
pub mod smt;

pub use bounded::{oracle_enumerate_model, oracle_enumerate_validity, BoundedSolver};
pub use smt::SmtSolver;

use crate::spec::{CanonRel, EvalError, LinExpr, Valuation};
use std::collections::BTreeSet;
use std::fmt;
use std::time::Duration;

/// Default enumeration bound of the bounded backend (depth-0 variables range
/// over `[-B, B]`, depth-`d` over `[-B * 2^d, B * 2^d]`). Covers every
/// constant appearing in the packaged examples with wide margin.
pub const DEFAULT_BOUND: i64 = 64;

/// Default per-query wall-clock budget for the SMT backend.
pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;

/// Environment variable naming the SMT solver binary.
pub const ENV_SMT_BIN: &str = "SHIELDMT_SMT_BIN";
/// Environment variable overriding extra arguments passed to the solver.
pub const ENV_SMT_ARGS: &str = "SHIELDMT_SMT_ARGS";
/// Environment variable overriding the per-query timeout in milliseconds.
pub const ENV_SMT_TIMEOUT_MS: &str = "SHIELDMT_SMT_TIMEOUT_MS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quant {
    Exists,
    Forall,
}

/// First-order formula over linear integer atoms. Quantifiers are scoped
/// structurally; conjoining formulas never requires renaming because inner
/// bindings shadow outer ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Formula {
    Const(bool),
    /// `lin <= 0` or `lin = 0`.
    Atom(CanonRel, LinExpr),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Quantified(Quant, Vec<String>, Box<Formula>),
}

impl Formula {
    pub fn atom_le(lin: LinExpr) -> Formula {
        Formula::Atom(CanonRel::Le, lin)
    }

    pub fn atom_eq(lin: LinExpr) -> Formula {
        Formula::Atom(CanonRel::Eq, lin)
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(fs: Vec<Formula>) -> Formula {
        match fs.len() {
            0 => Formula::Const(true),
            1 => fs.into_iter().next().unwrap(),
            _ => Formula::And(fs),
        }
    }

    pub fn or(fs: Vec<Formula>) -> Formula {
        match fs.len() {
            0 => Formula::Const(false),
            1 => fs.into_iter().next().unwrap(),
            _ => Formula::Or(fs),
        }
    }

    pub fn exists(vars: Vec<String>, f: Formula) -> Formula {
        if vars.is_empty() {
            f
        } else {
            Formula::Quantified(Quant::Exists, vars, Box::new(f))
        }
    }

    pub fn forall(vars: Vec<String>, f: Formula) -> Formula {
        if vars.is_empty() {
            f
        } else {
            Formula::Quantified(Quant::Forall, vars, Box::new(f))
        }
    }

    /// Variables not bound by any enclosing quantifier.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Formula::Const(_) => {}
            Formula::Atom(_, lin) => {
                for name in lin.coeffs.keys() {
                    if !bound.iter().any(|b| b == name) {
                        out.insert(name.clone());
                    }
                }
            }
            Formula::Not(f) => f.collect_free(bound, out),
            Formula::And(fs) | Formula::Or(fs) => {
                for f in fs {
                    f.collect_free(bound, out);
                }
            }
            Formula::Quantified(_, vars, f) => {
                let depth = bound.len();
                bound.extend(vars.iter().cloned());
                f.collect_free(bound, out);
                bound.truncate(depth);
            }
        }
    }

    /// Substitutes ground values for free variables, folding ground atoms to
    /// constants. Bound occurrences shadow the substitution.
    pub fn ground(&self, v: &Valuation) -> Result<Formula, EvalError> {
        self.ground_inner(v, &mut Vec::new())
    }

    fn ground_inner(&self, v: &Valuation, shadowed: &mut Vec<String>) -> Result<Formula, EvalError> {
        Ok(match self {
            Formula::Const(b) => Formula::Const(*b),
            Formula::Atom(rel, lin) => {
                let mut visible = v.clone();
                for name in shadowed.iter() {
                    visible.remove(name);
                }
                let lin = lin.ground(&visible)?;
                if lin.coeffs.is_empty() {
                    Formula::Const(match rel {
                        CanonRel::Le => lin.constant <= 0,
                        CanonRel::Eq => lin.constant == 0,
                    })
                } else {
                    Formula::Atom(*rel, lin)
                }
            }
            Formula::Not(f) => Formula::not(f.ground_inner(v, shadowed)?),
            Formula::And(fs) => Formula::and(
                fs.iter().map(|f| f.ground_inner(v, shadowed)).collect::<Result<_, _>>()?,
            ),
            Formula::Or(fs) => Formula::or(
                fs.iter().map(|f| f.ground_inner(v, shadowed)).collect::<Result<_, _>>()?,
            ),
            Formula::Quantified(q, vars, f) => {
                let depth = shadowed.len();
                shadowed.extend(vars.iter().cloned());
                let inner = f.ground_inner(v, shadowed)?;
                shadowed.truncate(depth);
                Formula::Quantified(*q, vars.clone(), Box::new(inner))
            }
        })
    }

    /// Evaluates a ground formula (no variables at all, after quantifier
    /// domains are irrelevant). Errors if a free variable remains.
    pub fn eval_ground(&self, v: &Valuation) -> Result<bool, EvalError> {
        match self {
            Formula::Const(b) => Ok(*b),
            Formula::Atom(rel, lin) => {
                let val = lin.eval(v)?;
                Ok(match rel {
                    CanonRel::Le => val <= 0,
                    CanonRel::Eq => val == 0,
                })
            }
            Formula::Not(f) => Ok(!f.eval_ground(v)?),
            Formula::And(fs) => {
                for f in fs {
                    if !f.eval_ground(v)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Formula::Or(fs) => {
                for f in fs {
                    if f.eval_ground(v)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Formula::Quantified(..) => Err(EvalError::MissingVar("<quantified>".into())),
        }
    }
}

/// A query with an explicit leading quantifier block over the variables to be
/// solved (for model queries) plus a body that may itself contain quantified
/// subformulas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QFormula {
    pub prefix: Vec<(Quant, String)>,
    pub body: Formula,
}

impl QFormula {
    pub fn closed(body: Formula) -> QFormula {
        QFormula { prefix: Vec::new(), body }
    }

    pub fn exists(vars: Vec<String>, body: Formula) -> QFormula {
        QFormula { prefix: vars.into_iter().map(|v| (Quant::Exists, v)).collect(), body }
    }

    pub fn forall(vars: Vec<String>, body: Formula) -> QFormula {
        QFormula { prefix: vars.into_iter().map(|v| (Quant::Forall, v)).collect(), body }
    }

    /// Folds the prefix into the body as structural quantifiers.
    pub fn as_formula(&self) -> Formula {
        let mut f = self.body.clone();
        for (q, var) in self.prefix.iter().rev() {
            f = Formula::Quantified(*q, vec![var.clone()], Box::new(f));
        }
        f
    }

    /// Leading existential block (the variables a model query solves for).
    pub fn solve_vars(&self) -> Vec<String> {
        self.prefix
            .iter()
            .take_while(|(q, _)| *q == Quant::Exists)
            .map(|(_, v)| v.clone())
            .collect()
    }
}

/// Distance between integer tuples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// Sum of absolute coordinate differences.
    L1,
    /// Maximum absolute coordinate difference.
    Linf,
}

pub fn distance(metric: DistanceMetric, a: &Valuation, reference: &Valuation) -> i128 {
    let mut acc: i128 = 0;
    for (name, r) in reference {
        let v = a.get(name).copied().unwrap_or(0);
        let d = (v as i128 - *r as i128).abs();
        match metric {
            DistanceMetric::L1 => acc += d,
            DistanceMetric::Linf => acc = acc.max(d),
        }
    }
    acc
}

/// A weighted soft constraint; the formula may carry its own quantifier
/// prefix (for example a universally quantified closeness condition).
#[derive(Clone, Debug)]
pub struct SoftConstraint {
    pub formula: QFormula,
    pub weight: u64,
}

/// What [`Solver::find_model`] optimizes beyond plain satisfaction.
#[derive(Clone, Debug, Default)]
pub enum ObjectiveSpec {
    /// Any model; each backend is internally deterministic.
    #[default]
    None,
    /// Exact minimization of the distance to a reference point, ties broken
    /// by the lexicographically smallest valuation (variable name order,
    /// then value).
    MinimizeDistance { reference: Valuation, metric: DistanceMetric },
    /// Maximize the total weight of satisfied soft constraints (hard
    /// constraints always hold); when `closest_to` is set, the distance to
    /// the reference is minimized among maximum-weight models, then ties
    /// break lexicographically.
    SoftConstraints { constraints: Vec<SoftConstraint>, closest_to: Option<(Valuation, DistanceMetric)> },
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("solver timed out after {0} ms")]
    Timeout(u64),
    #[error("solver returned unknown")]
    Unknown,
    #[error("unsupported query: {0}")]
    Unsupported(String),
    #[error("failed to spawn solver `{bin}`: {source}")]
    Spawn { bin: String, source: std::io::Error },
    #[error("solver process error: {0}")]
    Process(String),
    #[error("cannot parse solver response: {0}")]
    Response(String),
    #[error("solver i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// How to build a solver session. Cheap to clone; worker threads build their
/// own sessions from the same configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolverConfig {
    /// Exhaustive enumeration over `[-bound, bound]` per variable.
    Bounded { bound: i64 },
    /// External SMT-LIB 2 solver subprocess.
    Smt { bin: String, args: Vec<String>, timeout: Duration },
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::Bounded { bound: DEFAULT_BOUND }
    }
}

impl fmt::Display for SolverConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverConfig::Bounded { bound } => write!(f, "bounded enumeration (B={bound})"),
            SolverConfig::Smt { bin, .. } => write!(f, "smt subprocess ({bin})"),
        }
    }
}

impl SolverConfig {
    /// Reads the standard environment variables: when `SHIELDMT_SMT_BIN` is
    /// set, an SMT subprocess configuration is produced; otherwise the
    /// bounded backend with the default bound.
    pub fn from_env() -> SolverConfig {
        match std::env::var(ENV_SMT_BIN) {
            Ok(bin) if !bin.is_empty() => {
                let args = std::env::var(ENV_SMT_ARGS)
                    .map(|s| s.split_whitespace().map(str::to_string).collect())
                    .unwrap_or_else(|_| smt::default_args(&bin));
                let timeout = std::env::var(ENV_SMT_TIMEOUT_MS)
                    .ok()
                    .and_then(|s| s.parse::<u64>().ok())
                    .unwrap_or(DEFAULT_TIMEOUT_MS);
                SolverConfig::Smt { bin, args, timeout: Duration::from_millis(timeout) }
            }
            _ => SolverConfig::default(),
        }
    }

    pub fn build(&self) -> Solver {
        match self {
            SolverConfig::Bounded { bound } => Solver { imp: Imp::Bounded(BoundedSolver::new(*bound)) },
            SolverConfig::Smt { bin, args, timeout } => {
                Solver { imp: Imp::Smt(SmtSolver::new(bin.clone(), args.clone(), *timeout)) }
            }
        }
    }
}

enum Imp {
    Bounded(BoundedSolver),
    Smt(SmtSolver),
}

/// A solver session. Queries are independent; SMT sessions reuse one
/// subprocess with push/pop framing.
pub struct Solver {
    imp: Imp,
}

impl Solver {
    pub fn bounded(bound: i64) -> Solver {
        Solver { imp: Imp::Bounded(BoundedSolver::new(bound)) }
    }

    /// Decides the truth of a closed formula. The query must be closed;
    /// remaining free variables are an error.
    pub fn check_validity(&mut self, f: &QFormula) -> Result<bool, SolverError> {
        let formula = f.as_formula();
        let free = formula.free_vars();
        if !free.is_empty() {
            return Err(SolverError::Unsupported(format!(
                "validity query has free variables: {}",
                free.into_iter().collect::<Vec<_>>().join(", ")
            )));
        }
        match &mut self.imp {
            Imp::Bounded(b) => b.check_truth(&formula),
            Imp::Smt(s) => s.check_truth(&formula),
        }
    }

    /// Finds a model for the leading existential block of `f` (the body may
    /// contain further quantified subformulas, e.g. a trailing universal
    /// block). Returns `None` when unsatisfiable. Optimizing objectives are
    /// exact; see [`ObjectiveSpec`].
    pub fn find_model(
        &mut self,
        f: &QFormula,
        obj: &ObjectiveSpec,
    ) -> Result<Option<Valuation>, SolverError> {
        let solve = f.solve_vars();
        if solve.len() != f.prefix.len() {
            return Err(SolverError::Unsupported(
                "model query prefix must be purely existential".into(),
            ));
        }
        let free = f.as_formula().free_vars();
        if !free.is_empty() {
            return Err(SolverError::Unsupported(format!(
                "model query has unquantified free variables: {}",
                free.into_iter().collect::<Vec<_>>().join(", ")
            )));
        }
        let check_reference = |reference: &Valuation| -> Result<(), SolverError> {
            // Exactness of the lexicographic tie-break requires the metric to
            // score every solved variable, so the reference must assign the
            // solve set exactly.
            if reference.len() != solve.len() || solve.iter().any(|n| !reference.contains_key(n)) {
                return Err(SolverError::Unsupported(
                    "distance reference must assign exactly the solved variables".into(),
                ));
            }
            Ok(())
        };
        match obj {
            ObjectiveSpec::None => {}
            ObjectiveSpec::MinimizeDistance { reference, .. } => check_reference(reference)?,
            ObjectiveSpec::SoftConstraints { constraints, closest_to } => {
                for sc in constraints {
                    let sc_free = sc.formula.as_formula().free_vars();
                    if let Some(name) = sc_free.iter().find(|n| !solve.contains(n)) {
                        return Err(SolverError::Unsupported(format!(
                            "soft constraint mentions unsolved variable `{name}`"
                        )));
                    }
                }
                if let Some((reference, _)) = closest_to {
                    check_reference(reference)?;
                }
            }
        }
        match &mut self.imp {
            Imp::Bounded(b) => b.find_model(&solve, &f.body, obj),
            Imp::Smt(s) => s.find_model(&solve, &f.body, obj),
        }
    }
}
