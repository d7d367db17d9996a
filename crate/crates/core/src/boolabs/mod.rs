//! Boolean abstraction of the literals: valid reactions and the induced
//! equi-realizable Boolean specification.
//!
//! A *choice* is a truth pattern over the specification's literals (one
//! minterm). For an input valuation, the *achievable set* is the set of
//! choices the system can realize by picking its outputs. A *reaction* is a
//! set of choices; it is *valid* when some input's achievable set is exactly
//! that reaction. The valid reactions (VR) — or any feasible subset, such as
//! the minimal valid reactions (MVR) — become the finite input alphabet of a
//! Boolean safety game.

use crate::spec::{BodyExpr, SpecT};
use crate::theory::{Formula, QFormula, SolverConfig};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// A truth pattern over the literal table: bit `i` is literal `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Choice(pub u32);

impl Choice {
    pub fn contains(self, lit: usize) -> bool {
        self.0 >> lit & 1 == 1
    }

    pub fn indices(self) -> Vec<u32> {
        (0..32).filter(|i| self.0 >> i & 1 == 1).collect()
    }

    pub fn from_indices(indices: &[u32]) -> Choice {
        Choice(indices.iter().fold(0, |m, i| m | 1 << i))
    }

    /// Names of the true literals, e.g. `["s0", "s2"]`.
    pub fn prop_names(self) -> Vec<String> {
        self.indices().iter().map(|i| format!("s{i}")).collect()
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.prop_names().join(","))
    }
}

impl Serialize for Choice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.indices().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Choice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let indices = Vec::<u32>::deserialize(d)?;
        let mut prev: Option<u32> = None;
        for &i in &indices {
            if i >= 32 {
                return Err(serde::de::Error::custom("literal index out of range"));
            }
            if prev.is_some_and(|p| p >= i) {
                return Err(serde::de::Error::custom("literal indices must be strictly ascending"));
            }
            prev = Some(i);
        }
        Ok(Choice::from_indices(&indices))
    }
}

/// A set of choices, kept sorted by choice pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reaction {
    pub choices: Vec<Choice>,
}

impl Reaction {
    pub fn new(mut choices: Vec<Choice>) -> Reaction {
        choices.sort();
        choices.dedup();
        Reaction { choices }
    }

    /// Bitset over choice patterns: bit `c` set iff `Choice(c)` is a member.
    pub fn mask(&self) -> u64 {
        self.choices.iter().fold(0, |m, c| m | 1 << c.0)
    }

    pub fn contains(&self, c: Choice) -> bool {
        self.choices.binary_search(&c).is_ok()
    }

    pub fn is_subset_of(&self, other: &Reaction) -> bool {
        self.mask() & other.mask() == self.mask()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReactionKind {
    /// All valid reactions.
    Vr,
    /// Minimal valid reactions (the antichain of subset-minimal ones).
    Mvr,
    /// A user-supplied reaction set.
    Custom,
}

/// The reaction alphabet: reactions sorted by their choice bitset, named
/// `e_0, e_1, ...` in that order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct ReactionTable {
    pub kind: ReactionKind,
    /// Source-syntax display of each literal, index-aligned with choices.
    pub literals: Vec<String>,
    pub reactions: Vec<Reaction>,
}

impl ReactionTable {
    pub fn n_literals(&self) -> usize {
        self.literals.len()
    }

    /// Canonical name of reaction `k`.
    pub fn name(k: usize) -> String {
        format!("e_{k}")
    }

    /// Index of the reaction whose choice set is exactly `choices`.
    pub fn find_exact(&self, choices: &[Choice]) -> Option<usize> {
        let r = Reaction::new(choices.to_vec());
        self.reactions.iter().position(|x| *x == r)
    }
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    kind: ReactionKind,
    literals: Vec<String>,
    reactions: Vec<ReactionRepr>,
}

#[derive(Serialize, Deserialize)]
struct ReactionRepr {
    e: String,
    choices: Vec<Choice>,
}

impl From<ReactionTable> for TableRepr {
    fn from(t: ReactionTable) -> TableRepr {
        TableRepr {
            kind: t.kind,
            literals: t.literals,
            reactions: t
                .reactions
                .into_iter()
                .enumerate()
                .map(|(k, r)| ReactionRepr { e: ReactionTable::name(k), choices: r.choices })
                .collect(),
        }
    }
}

impl TryFrom<TableRepr> for ReactionTable {
    type Error = String;

    fn try_from(repr: TableRepr) -> std::result::Result<ReactionTable, String> {
        let n = repr.literals.len();
        if n > 6 {
            return Err("more than 6 literals".into());
        }
        let mut reactions = Vec::new();
        let mut prev_mask: Option<u64> = None;
        for (k, r) in repr.reactions.into_iter().enumerate() {
            if r.e != ReactionTable::name(k) {
                return Err(format!("reaction {k} must be named `{}`", ReactionTable::name(k)));
            }
            if r.choices.is_empty() {
                return Err(format!("reaction {k} has no choices"));
            }
            let mut prev: Option<Choice> = None;
            for &c in &r.choices {
                if c.0 >> n != 0 {
                    return Err(format!("reaction {k} uses a literal index >= {n}"));
                }
                if prev.is_some_and(|p| p >= c) {
                    return Err(format!("choices of reaction {k} must be strictly ascending"));
                }
                prev = Some(c);
            }
            let reaction = Reaction { choices: r.choices };
            let mask = reaction.mask();
            if prev_mask.is_some_and(|p| p >= mask) {
                return Err("reactions must be strictly ascending by choice set".into());
            }
            prev_mask = Some(mask);
            reactions.push(reaction);
        }
        Ok(ReactionTable { kind: repr.kind, literals: repr.literals, reactions })
    }
}

/// Formula stating that literal `i` has truth value `want` (free variables:
/// the literal's own variables).
pub fn literal_formula(spec: &SpecT, i: usize, want: bool) -> Formula {
    let lit = &spec.literals[i];
    let atom = Formula::Atom(lit.canon.rel, lit.canon.lin.clone());
    if want == lit.canon_positive {
        atom
    } else {
        Formula::not(atom)
    }
}

/// Exact minterm formula of a choice: every literal pinned to its bit.
pub fn choice_formula(spec: &SpecT, c: Choice) -> Formula {
    Formula::and((0..spec.n_literals()).map(|i| literal_formula(spec, i, c.contains(i))).collect())
}

/// Over the inputs: every choice of `r` is achievable (free variables: env).
pub fn playable_formula(spec: &SpecT, r: &[Choice]) -> Formula {
    let ys = spec.sys_vars();
    Formula::and(
        r.iter().map(|&c| Formula::exists(ys.clone(), choice_formula(spec, c))).collect(),
    )
}

/// Over the inputs: the achievable set is exactly `r` — every choice of `r`
/// achievable, every other choice not (free variables: env).
pub fn reaction_formula(spec: &SpecT, r: &[Choice]) -> Formula {
    let ys = spec.sys_vars();
    let mut parts = Vec::new();
    for c in 0..spec.choice_count() {
        let c = Choice(c);
        if r.contains(&c) {
            parts.push(Formula::exists(ys.clone(), choice_formula(spec, c)));
        } else {
            parts.push(Formula::forall(ys.clone(), Formula::not(choice_formula(spec, c))));
        }
    }
    Formula::and(parts)
}

/// Tuning for the abstraction stage.
#[derive(Clone, Debug)]
pub struct AbstractionOptions {
    pub solver: SolverConfig,
    /// Worker threads for the per-candidate solver checks.
    pub jobs: usize,
    /// Hard cap on the literal count (the candidate space is doubly
    /// exponential in it).
    pub max_literals: usize,
    /// Hard cap on the number of achievable choices.
    pub max_achievable: usize,
}

impl Default for AbstractionOptions {
    fn default() -> Self {
        AbstractionOptions {
            solver: SolverConfig::default(),
            jobs: 1,
            max_literals: 5,
            max_achievable: 12,
        }
    }
}

/// Computes the set of valid reactions by candidate enumeration.
///
/// Candidates are subsets of the achievable choices, visited by increasing
/// cardinality; a candidate whose choices cannot all be offered by one input
/// (playability) rules out every superset, which keeps the enumeration far
/// below `2^|AC|` in practice.
pub fn compute_vr(spec: &SpecT, opts: &AbstractionOptions) -> Result<ReactionTable> {
    let n = spec.n_literals();
    if n > opts.max_literals {
        return Err(Error::Guard(format!(
            "{n} literals exceed the supported maximum of {} (the abstraction is doubly \
             exponential in the literal count)",
            opts.max_literals
        )));
    }
    let jobs = opts.jobs.max(1);
    let mut solvers: Vec<_> = (0..jobs).map(|_| opts.solver.build()).collect();

    // Achievable choices: some input admits an output realizing the minterm.
    // The input block stays outside the output block, matching the shape of
    // every other abstraction query.
    let env = spec.env_vars();
    let sys = spec.sys_vars();
    let mut achievable: Vec<Choice> = Vec::new();
    for c in 0..spec.choice_count() {
        let c = Choice(c);
        let q = QFormula::closed(Formula::exists(
            env.clone(),
            Formula::exists(sys.clone(), choice_formula(spec, c)),
        ));
        if solvers[0].check_validity(&q)? {
            achievable.push(c);
        }
    }
    if achievable.len() > opts.max_achievable {
        return Err(Error::Guard(format!(
            "{} achievable choices exceed the supported maximum of {}",
            achievable.len(),
            opts.max_achievable
        )));
    }

    // Subset enumeration, one cardinality wave at a time. `failed` holds
    // bitmasks (over achievable-choice indices) of unplayable candidates;
    // playability is monotone, so their supersets are skipped.
    let ac = achievable.len();
    let mut failed: Vec<u32> = Vec::new();
    let mut valid: Vec<Reaction> = Vec::new();
    for k in 1..=ac {
        let wave: Vec<u32> = subsets_of_size(ac, k)
            .into_iter()
            .filter(|bits| !failed.iter().any(|f| bits & f == *f))
            .collect();
        let candidates: Vec<Vec<Choice>> = wave
            .iter()
            .map(|bits| (0..ac).filter(|i| bits >> i & 1 == 1).map(|i| achievable[i]).collect())
            .collect();
        let results = check_wave(spec, &candidates, &mut solvers)?;
        for ((bits, cand), (playable, is_valid)) in
            wave.iter().zip(&candidates).zip(results)
        {
            if !playable {
                failed.push(*bits);
            } else if is_valid {
                valid.push(Reaction::new(cand.clone()));
            }
        }
    }
    valid.sort_by_key(Reaction::mask);
    Ok(ReactionTable {
        kind: ReactionKind::Vr,
        literals: (0..n).map(|i| spec.literals[i].display(true)).collect(),
        reactions: valid,
    })
}

/// All `k`-subsets of `0..n` as bitmasks, in lexicographic order.
fn subsets_of_size(n: usize, k: usize) -> Vec<u32> {
    let mut out = Vec::new();
    let mut stack: Vec<(u32, usize, usize)> = vec![(0, 0, k)];
    while let Some((bits, from, need)) = stack.pop() {
        if need == 0 {
            out.push(bits);
            continue;
        }
        // Push in reverse so smaller indices are explored first.
        for i in (from..=n - need).rev() {
            stack.push((bits | 1 << i, i + 1, need - 1));
        }
    }
    out
}

/// Checks one wave of candidates: `(playable, valid)` per candidate. The
/// wave is split over the available solver sessions; results are assembled
/// in candidate order, so the outcome does not depend on the worker count.
fn check_wave(
    spec: &SpecT,
    candidates: &[Vec<Choice>],
    solvers: &mut [crate::theory::Solver],
) -> Result<Vec<(bool, bool)>> {
    let env = spec.env_vars();
    let check_one = |solver: &mut crate::theory::Solver,
                     cand: &Vec<Choice>|
     -> Result<(bool, bool)> {
        let playable = QFormula::closed(Formula::exists(env.clone(), playable_formula(spec, cand)));
        if !solver.check_validity(&playable)? {
            return Ok((false, false));
        }
        let valid = QFormula::closed(Formula::exists(env.clone(), reaction_formula(spec, cand)));
        Ok((true, solver.check_validity(&valid)?))
    };

    if solvers.len() == 1 || candidates.len() <= 1 {
        let solver = &mut solvers[0];
        return candidates.iter().map(|c| check_one(solver, c)).collect();
    }

    let jobs = solvers.len();
    let mut results: Vec<Option<Result<(bool, bool)>>> = (0..candidates.len()).map(|_| None).collect();
    let chunks: Vec<&mut [Option<Result<(bool, bool)>>]> = {
        // Contiguous chunks, one per worker; each worker writes only its own
        // result slots, so assembly order equals candidate order.
        let mut v = Vec::new();
        let mut rest = results.as_mut_slice();
        let per = candidates.len().div_ceil(jobs);
        while !rest.is_empty() {
            let take = per.min(rest.len());
            let (a, b) = rest.split_at_mut(take);
            v.push(a);
            rest = b;
        }
        v
    };
    let check_ref = &check_one;
    std::thread::scope(|scope| {
        let mut offset = 0;
        for (chunk, solver) in chunks.into_iter().zip(solvers.iter_mut()) {
            let len = chunk.len();
            let cands = &candidates[offset..offset + len];
            scope.spawn(move || {
                for (slot, cand) in chunk.iter_mut().zip(cands) {
                    *slot = Some(check_ref(solver, cand));
                }
            });
            offset += len;
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("worker filled every slot"))
        .collect()
}

/// Filters a VR table down to its subset-minimal reactions.
pub fn compute_mvr(table: &ReactionTable) -> ReactionTable {
    let minimal: Vec<Reaction> = table
        .reactions
        .iter()
        .filter(|r| {
            !table.reactions.iter().any(|o| o.mask() != r.mask() && o.is_subset_of(r))
        })
        .cloned()
        .collect();
    ReactionTable { kind: ReactionKind::Mvr, literals: table.literals.clone(), reactions: minimal }
}

/// Why a reaction set can or cannot drive a shield.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict", content = "detail")]
pub enum Feasibility {
    Feasible,
    /// Reaction at this index is not a valid reaction.
    NotLegitimate(usize),
    /// Some input's achievable set contains no listed reaction.
    NotCovering,
}

impl fmt::Display for Feasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feasibility::Feasible => write!(f, "feasible"),
            Feasibility::NotLegitimate(k) => {
                write!(f, "not feasible: reaction e_{k} is not a valid reaction")
            }
            Feasibility::NotCovering => {
                write!(f, "not feasible: some input is covered by no reaction")
            }
        }
    }
}

/// A reaction set is feasible iff every member is valid (legitimacy) and
/// every input admits some member within its achievable set (covering);
/// equivalently, it lies between the MVR and the VR.
pub fn check_feasible(
    spec: &SpecT,
    reactions: &[Reaction],
    opts: &AbstractionOptions,
) -> Result<Feasibility> {
    let mut solver = opts.solver.build();
    let env = spec.env_vars();
    for (k, r) in reactions.iter().enumerate() {
        let q =
            QFormula::closed(Formula::exists(env.clone(), reaction_formula(spec, &r.choices)));
        if !solver.check_validity(&q)? {
            return Ok(Feasibility::NotLegitimate(k));
        }
    }
    let cover = Formula::or(
        reactions.iter().map(|r| playable_formula(spec, &r.choices)).collect(),
    );
    let q = QFormula::closed(Formula::forall(env, cover));
    if !solver.check_validity(&q)? {
        return Ok(Feasibility::NotCovering);
    }
    Ok(Feasibility::Feasible)
}

/// Strict covering: every input's achievable set is itself in the reaction
/// set, which holds exactly for the full VR.
pub fn check_strict_covering(
    spec: &SpecT,
    reactions: &[Reaction],
    opts: &AbstractionOptions,
) -> Result<bool> {
    let mut solver = opts.solver.build();
    let env = spec.env_vars();
    let exact = Formula::or(
        reactions.iter().map(|r| reaction_formula(spec, &r.choices)).collect(),
    );
    let q = QFormula::closed(Formula::forall(env, exact));
    Ok(solver.check_validity(&q)?)
}

/// Purely propositional formula over the abstraction's atoms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BExpr {
    Const(bool),
    /// Literal proposition `s{i}` at the current step.
    S(usize),
    /// Literal proposition `s{i}` at the next step.
    NextS(usize),
    /// Reaction proposition `e_{k}` (an input).
    E(usize),
    Not(Box<BExpr>),
    And(Vec<BExpr>),
    Or(Vec<BExpr>),
    Implies(Box<BExpr>, Box<BExpr>),
}

impl BExpr {
    fn minterm(c: Choice, n: usize) -> BExpr {
        BExpr::And(
            (0..n)
                .map(|i| {
                    if c.contains(i) {
                        BExpr::S(i)
                    } else {
                        BExpr::Not(Box::new(BExpr::S(i)))
                    }
                })
                .collect(),
        )
    }
}

/// The Boolean specification induced by a reaction table. Realizable iff the
/// original specification is realizable over the same table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoolSpec {
    /// `s{i}`, one per literal, controlled by the system.
    pub sys_props: Vec<String>,
    /// `e_{k}`, one per reaction, controlled by the environment.
    pub env_props: Vec<String>,
    /// The original guarantee clauses over `s`/`next_s`, each under an
    /// implicit always.
    pub guarantees: Vec<BExpr>,
    /// Environment assumption: exactly one reaction proposition per step.
    pub env_legal: BExpr,
    /// System obligation tying the played minterm to the announced reaction,
    /// one clause per reaction, each under an implicit always.
    pub linkage: Vec<BExpr>,
    pub table: ReactionTable,
}

fn body_to_bexpr(b: &BodyExpr) -> BExpr {
    match b {
        BodyExpr::Atom(a) => {
            let prop = if a.next { BExpr::NextS(a.lit) } else { BExpr::S(a.lit) };
            if a.positive {
                prop
            } else {
                BExpr::Not(Box::new(prop))
            }
        }
        BodyExpr::Not(f) => BExpr::Not(Box::new(body_to_bexpr(f))),
        BodyExpr::And(l, r) => BExpr::And(vec![body_to_bexpr(l), body_to_bexpr(r)]),
        BodyExpr::Or(l, r) => BExpr::Or(vec![body_to_bexpr(l), body_to_bexpr(r)]),
        BodyExpr::Implies(l, r) => {
            BExpr::Implies(Box::new(body_to_bexpr(l)), Box::new(body_to_bexpr(r)))
        }
    }
}

/// Rewrites the specification over the Boolean alphabet of the table.
pub fn booleanize(spec: &SpecT, table: &ReactionTable) -> BoolSpec {
    let n = spec.n_literals();
    let m = table.reactions.len();
    let guarantees = spec.guarantees.iter().map(|g| body_to_bexpr(&g.body)).collect();
    let one_of = BExpr::Or((0..m).map(BExpr::E).collect());
    let mut pairwise = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            pairwise.push(BExpr::Not(Box::new(BExpr::And(vec![BExpr::E(i), BExpr::E(j)]))));
        }
    }
    let env_legal = if pairwise.is_empty() {
        one_of
    } else {
        let mut parts = vec![one_of];
        parts.extend(pairwise);
        BExpr::And(parts)
    };
    let linkage = table
        .reactions
        .iter()
        .enumerate()
        .map(|(k, r)| {
            BExpr::Implies(
                Box::new(BExpr::E(k)),
                Box::new(BExpr::Or(r.choices.iter().map(|&c| BExpr::minterm(c, n)).collect())),
            )
        })
        .collect();
    BoolSpec {
        sys_props: (0..n).map(|i| format!("s{i}")).collect(),
        env_props: (0..m).map(ReactionTable::name).collect(),
        guarantees,
        env_legal,
        linkage,
        table: table.clone(),
    }
}
