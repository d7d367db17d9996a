//! Specification AST, literal canonicalization, and the trace monitor.
//!
//! A specification is a top-level conjunction of always-clauses. Clause
//! bodies are Boolean combinations of integer linear comparisons, where the
//! Next operator applies only directly to a comparison. Comparisons are
//! canonicalized so that equivalent atoms (and complements of atoms) share a
//! single literal table entry.

mod parse;

pub use parse::{parse_bool_expr, parse_spec, ParseError, RawExpr};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Ground assignment of integer values to variables.
pub type Valuation = BTreeMap<String, i64>;

/// The only sort in the theory: mathematical integers (desk-scale values).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sort {
    Int,
}

/// Who controls a variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Owner {
    /// Environment input, read by the system.
    Env,
    /// System output, chosen by the design (and possibly overridden).
    Sys,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub sort: Sort,
    pub owner: Owner,
}

/// Integer linear term: constants, variables, sums, differences, and
/// constant multiples.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Const(i64),
    Var(String),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    Mul(i64, Box<Term>),
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("variable `{0}` has no value")]
    MissingVar(String),
    #[error("integer overflow while evaluating a term")]
    Overflow,
}

impl Term {
    /// Evaluates in a widened domain so that 64-bit inputs cannot wrap.
    pub fn eval(&self, v: &Valuation) -> Result<i128, EvalError> {
        Ok(match self {
            Term::Const(c) => *c as i128,
            Term::Var(name) => *v.get(name).ok_or_else(|| EvalError::MissingVar(name.clone()))? as i128,
            Term::Add(a, b) => a.eval(v)? + b.eval(v)?,
            Term::Sub(a, b) => a.eval(v)? - b.eval(v)?,
            Term::Mul(c, t) => *c as i128 * t.eval(v)?,
        })
    }

    /// Linear normal form of the term. Fails on coefficient overflow.
    pub fn lin(&self) -> Result<LinExpr, EvalError> {
        Ok(match self {
            Term::Const(c) => LinExpr::constant(*c),
            Term::Var(name) => LinExpr::var(name),
            Term::Add(a, b) => a.lin()?.add(&b.lin()?)?,
            Term::Sub(a, b) => a.lin()?.sub(&b.lin()?)?,
            Term::Mul(c, t) => t.lin()?.scale(*c)?,
        })
    }

    pub fn vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Const(_) => {}
            Term::Var(name) => {
                out.insert(name.clone());
            }
            Term::Add(a, b) | Term::Sub(a, b) => {
                a.vars(out);
                b.vars(out);
            }
            Term::Mul(_, t) => t.vars(out),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{c}"),
            Term::Var(name) => write!(f, "{name}"),
            Term::Add(a, b) => write!(f, "{a} + {b}"),
            Term::Sub(a, b) => match b.as_ref() {
                Term::Add(..) | Term::Sub(..) => write!(f, "{a} - ({b})"),
                _ => write!(f, "{a} - {b}"),
            },
            Term::Mul(c, t) => write!(f, "{c} * {t}"),
        }
    }
}

/// Comparison operators as written in the source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl Cmp {
    /// The operator of the complemented comparison.
    pub fn negated(self) -> Cmp {
        match self {
            Cmp::Lt => Cmp::Ge,
            Cmp::Le => Cmp::Gt,
            Cmp::Gt => Cmp::Le,
            Cmp::Ge => Cmp::Lt,
            Cmp::Eq => Cmp::Ne,
            Cmp::Ne => Cmp::Eq,
        }
    }

    pub fn holds(self, lhs: i128, rhs: i128) -> bool {
        match self {
            Cmp::Lt => lhs < rhs,
            Cmp::Le => lhs <= rhs,
            Cmp::Gt => lhs > rhs,
            Cmp::Ge => lhs >= rhs,
            Cmp::Eq => lhs == rhs,
            Cmp::Ne => lhs != rhs,
        }
    }
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
            Cmp::Eq => "==",
            Cmp::Ne => "!=",
        };
        f.write_str(s)
    }
}

/// Sum of variable multiples plus a constant, with coefficients keyed by
/// variable name (so iteration order is the lexicographic variable order).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct LinExpr {
    pub coeffs: BTreeMap<String, i64>,
    pub constant: i64,
}

fn checked(v: Option<i64>) -> Result<i64, EvalError> {
    v.ok_or(EvalError::Overflow)
}

impl LinExpr {
    pub fn constant(c: i64) -> LinExpr {
        LinExpr { coeffs: BTreeMap::new(), constant: c }
    }

    pub fn var(name: &str) -> LinExpr {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(name.to_string(), 1);
        LinExpr { coeffs, constant: 0 }
    }

    fn combine(&self, other: &LinExpr, sign: i64) -> Result<LinExpr, EvalError> {
        let mut out = self.clone();
        for (name, c) in &other.coeffs {
            let entry = out.coeffs.entry(name.clone()).or_insert(0);
            *entry = checked(entry.checked_add(checked(c.checked_mul(sign))?))?;
        }
        out.constant = checked(out.constant.checked_add(checked(other.constant.checked_mul(sign))?))?;
        out.coeffs.retain(|_, c| *c != 0);
        Ok(out)
    }

    pub fn add(&self, other: &LinExpr) -> Result<LinExpr, EvalError> {
        self.combine(other, 1)
    }

    pub fn sub(&self, other: &LinExpr) -> Result<LinExpr, EvalError> {
        self.combine(other, -1)
    }

    pub fn scale(&self, k: i64) -> Result<LinExpr, EvalError> {
        let mut out = LinExpr::constant(checked(self.constant.checked_mul(k))?);
        for (name, c) in &self.coeffs {
            let scaled = checked(c.checked_mul(k))?;
            if scaled != 0 {
                out.coeffs.insert(name.clone(), scaled);
            }
        }
        Ok(out)
    }

    pub fn negate(&self) -> LinExpr {
        // Negation of in-range i64 coefficients cannot overflow here because
        // canonicalization rejects i64::MIN via the checked constructors.
        self.scale(-1).expect("negation overflow")
    }

    pub fn eval(&self, v: &Valuation) -> Result<i128, EvalError> {
        let mut acc = self.constant as i128;
        for (name, c) in &self.coeffs {
            let val = *v.get(name).ok_or_else(|| EvalError::MissingVar(name.clone()))? as i128;
            acc += *c as i128 * val;
        }
        Ok(acc)
    }

    /// Substitutes ground values for the given variables, folding them into
    /// the constant. Variables not mentioned stay symbolic.
    pub fn ground(&self, v: &Valuation) -> Result<LinExpr, EvalError> {
        let mut out = LinExpr::constant(self.constant);
        for (name, c) in &self.coeffs {
            match v.get(name) {
                Some(val) => {
                    let add = (*c as i128) * (*val as i128);
                    let folded = out.constant as i128 + add;
                    out.constant = i64::try_from(folded).map_err(|_| EvalError::Overflow)?;
                }
                None => {
                    out.coeffs.insert(name.clone(), *c);
                }
            }
        }
        Ok(out)
    }

    pub fn rename(&self, map: &BTreeMap<String, String>) -> LinExpr {
        let mut out = LinExpr::constant(self.constant);
        for (name, c) in &self.coeffs {
            let name = map.get(name).cloned().unwrap_or_else(|| name.clone());
            out.coeffs.insert(name, *c);
        }
        out
    }
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (name, c) in &self.coeffs {
            if *c < 0 {
                write!(f, "-")?;
            } else if !first {
                write!(f, "+")?;
            }
            let a = c.unsigned_abs();
            if a != 1 {
                write!(f, "{a}*")?;
            }
            write!(f, "{name}")?;
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)?;
        } else if self.constant != 0 {
            write!(f, "{:+}", self.constant)?;
        }
        Ok(())
    }
}

/// Relation of a canonical atom; {<,>,>=} are rewritten into <= over the
/// integers, and != is the negation of =.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CanonRel {
    Le,
    Eq,
}

/// Polarity-normalized comparison `lin <= 0` or `lin = 0`: all terms on the
/// left, coefficients gcd-reduced, and the leading coefficient positive.
/// Equal canonical atoms denote the same literal (possibly complemented).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonAtom {
    pub rel: CanonRel,
    pub lin: LinExpr,
}

impl CanonAtom {
    /// The trivially true atom `0 <= 0`; ground comparisons collapse onto it.
    pub fn top() -> CanonAtom {
        CanonAtom { rel: CanonRel::Le, lin: LinExpr::constant(0) }
    }

    pub fn canonical_key(&self) -> String {
        match self.rel {
            CanonRel::Le => format!("{}<=0", self.lin),
            CanonRel::Eq => format!("{}=0", self.lin),
        }
    }

    pub fn eval(&self, v: &Valuation) -> Result<bool, EvalError> {
        let lhs = self.lin.eval(v)?;
        Ok(match self.rel {
            CanonRel::Le => lhs <= 0,
            CanonRel::Eq => lhs == 0,
        })
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Canonicalizes `lhs cmp rhs` into a canonical atom plus the polarity of the
/// original comparison with respect to that atom. Complementary comparisons
/// (such as `x < 10` and `x >= 10`) map to the same atom with opposite
/// polarity, and scaled variants (such as `2*x <= 4` and `x <= 2`) coincide.
pub fn canonicalize(lhs: &Term, cmp: Cmp, rhs: &Term) -> Result<(CanonAtom, bool), EvalError> {
    let lin = lhs.lin()?.sub(&rhs.lin()?)?;
    let (rel, mut lin, mut pos) = match cmp {
        Cmp::Lt => (CanonRel::Le, lin.add(&LinExpr::constant(1))?, true),
        Cmp::Le => (CanonRel::Le, lin, true),
        Cmp::Gt => (CanonRel::Le, lin.negate().add(&LinExpr::constant(1))?, true),
        Cmp::Ge => (CanonRel::Le, lin.negate(), true),
        Cmp::Eq => (CanonRel::Eq, lin, true),
        Cmp::Ne => (CanonRel::Eq, lin, false),
    };
    if lin.coeffs.is_empty() {
        // Ground comparison: its truth value is fixed; fold onto the top atom.
        let truth = match rel {
            CanonRel::Le => lin.constant <= 0,
            CanonRel::Eq => lin.constant == 0,
        };
        return Ok((CanonAtom::top(), pos == truth));
    }
    let leading_negative = *lin.coeffs.values().next().unwrap() < 0;
    match rel {
        CanonRel::Eq => {
            if leading_negative {
                lin = lin.negate();
            }
            let g = lin.coeffs.values().fold(0u64, |g, c| gcd(g, c.unsigned_abs()));
            if g > 1 {
                if lin.constant.rem_euclid(g as i64) != 0 {
                    // No integer solutions: the equation is ground-false.
                    return Ok((CanonAtom::top(), !pos));
                }
                for c in lin.coeffs.values_mut() {
                    *c /= g as i64;
                }
                lin.constant /= g as i64;
            }
        }
        CanonRel::Le => {
            if leading_negative {
                // (lin <= 0) iff not (-lin + 1 <= 0)
                lin = lin.negate().add(&LinExpr::constant(1))?;
                pos = !pos;
            }
            let g = lin.coeffs.values().fold(0u64, |g, c| gcd(g, c.unsigned_abs()));
            if g > 1 {
                // sum(c*v) <= -k  iff  sum(c/g*v) <= floor(-k/g)
                let bound = (-(lin.constant as i128)).div_euclid(g as i128);
                for c in lin.coeffs.values_mut() {
                    *c /= g as i64;
                }
                lin.constant = i64::try_from(-bound).map_err(|_| EvalError::Overflow)?;
            }
        }
    }
    Ok((CanonAtom { rel, lin }, pos))
}

/// A comparison as first written in the source, together with its canonical
/// form. Literals are deduplicated by canonical atom: a later comparison with
/// the same atom reuses this entry, negated if its polarity differs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Literal {
    pub lhs: Term,
    pub cmp: Cmp,
    pub rhs: Term,
    pub canon: CanonAtom,
    /// Polarity of `lhs cmp rhs` relative to the canonical atom.
    pub canon_positive: bool,
}

impl Literal {
    pub fn new(lhs: Term, cmp: Cmp, rhs: Term) -> Result<Literal, EvalError> {
        let (canon, canon_positive) = canonicalize(&lhs, cmp, &rhs)?;
        Ok(Literal { lhs, cmp, rhs, canon, canon_positive })
    }

    /// Evaluates the comparison as written.
    pub fn eval(&self, v: &Valuation) -> Result<bool, EvalError> {
        Ok(self.cmp.holds(self.lhs.eval(v)?, self.rhs.eval(v)?))
    }

    /// Evaluates through the canonical form; must agree with [`Self::eval`].
    pub fn eval_canonical(&self, v: &Valuation) -> Result<bool, EvalError> {
        Ok(self.canon.eval(v)? == self.canon_positive)
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.lhs.vars(&mut out);
        self.rhs.vars(&mut out);
        out
    }

    /// Displays the literal or its complement using source-style operators.
    pub fn display(&self, positive: bool) -> String {
        let cmp = if positive { self.cmp } else { self.cmp.negated() };
        format!("{} {} {}", self.lhs, cmp, self.rhs)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.cmp, self.rhs)
    }
}

/// Reference to a literal table entry inside a clause body.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AtomRef {
    pub lit: usize,
    /// True when the atom is under the Next operator.
    pub next: bool,
    /// False when the source comparison is the complement of the table entry.
    pub positive: bool,
}

/// Boolean structure of a clause body over literal references.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BodyExpr {
    Atom(AtomRef),
    Not(Box<BodyExpr>),
    And(Box<BodyExpr>, Box<BodyExpr>),
    Or(Box<BodyExpr>, Box<BodyExpr>),
    Implies(Box<BodyExpr>, Box<BodyExpr>),
}

impl BodyExpr {
    /// Evaluates with literal truth taken from `cur` for plain atoms and
    /// `next` for Next atoms (bit i = literal i).
    pub fn eval(&self, cur: u32, next: u32) -> bool {
        match self {
            BodyExpr::Atom(a) => {
                let mask = if a.next { next } else { cur };
                ((mask >> a.lit) & 1 == 1) == a.positive
            }
            BodyExpr::Not(e) => !e.eval(cur, next),
            BodyExpr::And(a, b) => a.eval(cur, next) && b.eval(cur, next),
            BodyExpr::Or(a, b) => a.eval(cur, next) || b.eval(cur, next),
            BodyExpr::Implies(a, b) => !a.eval(cur, next) || b.eval(cur, next),
        }
    }

    pub fn atoms(&self, out: &mut Vec<AtomRef>) {
        match self {
            BodyExpr::Atom(a) => out.push(*a),
            BodyExpr::Not(e) => e.atoms(out),
            BodyExpr::And(a, b) | BodyExpr::Or(a, b) | BodyExpr::Implies(a, b) => {
                a.atoms(out);
                b.atoms(out);
            }
        }
    }

    fn fmt_prec(&self, spec: &SpecT, prec: u8, out: &mut String) {
        let my_prec = match self {
            BodyExpr::Implies(..) => 0,
            BodyExpr::Or(..) => 1,
            BodyExpr::And(..) => 2,
            BodyExpr::Not(..) | BodyExpr::Atom(_) => 3,
        };
        let parens = my_prec < prec;
        if parens {
            out.push('(');
        }
        match self {
            BodyExpr::Atom(a) => {
                let lit = &spec.literals[a.lit];
                if a.next {
                    out.push_str("X(");
                    out.push_str(&lit.display(a.positive));
                    out.push(')');
                } else {
                    out.push('(');
                    out.push_str(&lit.display(a.positive));
                    out.push(')');
                }
            }
            BodyExpr::Not(e) => {
                out.push_str("!(");
                e.fmt_prec(spec, 0, out);
                out.push(')');
            }
            BodyExpr::And(a, b) => {
                a.fmt_prec(spec, 2, out);
                out.push_str(" && ");
                b.fmt_prec(spec, 3, out);
            }
            BodyExpr::Or(a, b) => {
                a.fmt_prec(spec, 1, out);
                out.push_str(" || ");
                b.fmt_prec(spec, 2, out);
            }
            BodyExpr::Implies(a, b) => {
                a.fmt_prec(spec, 1, out);
                out.push_str(" -> ");
                b.fmt_prec(spec, 0, out);
            }
        }
        if parens {
            out.push(')');
        }
    }
}

/// One always-clause of the top-level conjunction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GuaranteeClause {
    pub body: BodyExpr,
}

/// A parsed specification: variable declarations, the deduplicated literal
/// table (in order of first occurrence), and the guarantee clauses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpecT {
    pub vars: Vec<VarDecl>,
    pub literals: Vec<Literal>,
    pub guarantees: Vec<GuaranteeClause>,
}

/// Verdict of the prefix monitor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorVerdict {
    Ok,
    ViolatedAt(usize),
}

impl fmt::Display for MonitorVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MonitorVerdict::Ok => write!(f, "ok"),
            MonitorVerdict::ViolatedAt(k) => write!(f, "violated at step {k}"),
        }
    }
}

impl SpecT {
    pub fn n_literals(&self) -> usize {
        self.literals.len()
    }

    /// Number of literal truth patterns (choices): `2^n`.
    pub fn choice_count(&self) -> u32 {
        1u32 << self.literals.len()
    }

    pub fn env_vars(&self) -> Vec<String> {
        self.vars.iter().filter(|d| d.owner == Owner::Env).map(|d| d.name.clone()).collect()
    }

    pub fn sys_vars(&self) -> Vec<String> {
        self.vars.iter().filter(|d| d.owner == Owner::Sys).map(|d| d.name.clone()).collect()
    }

    pub fn var(&self, name: &str) -> Option<&VarDecl> {
        self.vars.iter().find(|d| d.name == name)
    }

    /// Truth pattern of all literals at a joint valuation (bit i = literal i).
    pub fn literal_mask(&self, v: &Valuation) -> Result<u32, EvalError> {
        let mut mask = 0u32;
        for (i, lit) in self.literals.iter().enumerate() {
            if lit.eval(v)? {
                mask |= 1 << i;
            }
        }
        Ok(mask)
    }

    /// Set of next-step patterns (as a bitset over minterms) that keep every
    /// clause satisfied when the current pattern is `cur`. An empty result
    /// means the current pattern already dooms some clause.
    pub fn allowed_next(&self, cur: u32) -> u64 {
        let count = self.choice_count();
        let mut allowed = if count >= 64 { u64::MAX } else { (1u64 << count) - 1 };
        for clause in &self.guarantees {
            let mut ok = 0u64;
            for next in 0..count {
                if clause.body.eval(cur, next) {
                    ok |= 1u64 << next;
                }
            }
            allowed &= ok;
        }
        allowed
    }

    /// Checks a finite prefix of joint valuations (each containing every
    /// declared variable). Returns the first step at which some clause is
    /// irrevocably violated: before the final step a clause is checked
    /// outright with its Next atoms read from the following step; at the
    /// final step a clause is violated only if no next-step pattern could
    /// satisfy it, so pending Next obligations are not violations.
    pub fn monitor_prefix(&self, steps: &[Valuation]) -> Result<MonitorVerdict, EvalError> {
        let masks: Vec<u32> = steps.iter().map(|v| self.literal_mask(v)).collect::<Result<_, _>>()?;
        for t in 0..masks.len() {
            for clause in &self.guarantees {
                let violated = if t + 1 < masks.len() {
                    !clause.body.eval(masks[t], masks[t + 1])
                } else {
                    let count = self.choice_count();
                    (0..count).all(|next| !clause.body.eval(masks[t], next))
                };
                if violated {
                    return Ok(MonitorVerdict::ViolatedAt(t));
                }
            }
        }
        Ok(MonitorVerdict::Ok)
    }

    /// Prints the specification in the concrete syntax accepted by
    /// [`parse_spec`]. Reparsing yields a structurally identical value.
    pub fn print(&self) -> String {
        let mut out = String::new();
        let env: Vec<_> = self.vars.iter().filter(|d| d.owner == Owner::Env).collect();
        let sys: Vec<_> = self.vars.iter().filter(|d| d.owner == Owner::Sys).collect();
        for (kw, decls) in [("inputs", env), ("outputs", sys)] {
            if !decls.is_empty() {
                let list: Vec<String> = decls.iter().map(|d| format!("{}: Int", d.name)).collect();
                out.push_str(&format!("{kw}: {};\n", list.join(", ")));
            }
        }
        for clause in &self.guarantees {
            let mut body = String::new();
            clause.body.fmt_prec(self, 0, &mut body);
            out.push_str(&format!("guarantee: G( {body} );\n"));
        }
        out
    }
}
