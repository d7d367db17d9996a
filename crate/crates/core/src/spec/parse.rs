//! Hand-rolled lexer and recursive-descent parser for the specification
//! syntax:
//!
//! ```text
//! file      := (decl | guarantee)*
//! decl      := ("inputs" | "outputs") ":" ident ":" "Int" ("," ident ":" "Int")* ";"
//! guarantee := "guarantee" ":" "G" "(" body ")" ";"
//! body      := implication over comparisons, with && || ! -> and X(cmp)
//! term      := integer | ident | term ("+"|"-") term | integer "*" ident
//! ```
//!
//! `#` starts a comment that runs to the end of the line. Comparisons use
//! `< <= > >= == !=`. Errors carry line and column positions.

use super::{AtomRef, BodyExpr, Cmp, GuaranteeClause, Literal, Owner, Sort, SpecT, Term, VarDecl};
use std::collections::HashMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.col, self.msg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

impl Pos {
    fn err(self, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line, col: self.col, msg: msg.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    LParen,
    RParen,
    Comma,
    Colon,
    Semi,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    AndAnd,
    OrOr,
    Bang,
    Arrow,
    Plus,
    Minus,
    Star,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::Ge => write!(f, "`>=`"),
            Tok::EqEq => write!(f, "`==`"),
            Tok::Ne => write!(f, "`!=`"),
            Tok::AndAnd => write!(f, "`&&`"),
            Tok::OrOr => write!(f, "`||`"),
            Tok::Bang => write!(f, "`!`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let mut line = 1usize;
    let mut col = 1usize;
    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }
    loop {
        let pos = Pos { line, col };
        let c = match chars.peek().copied() {
            Some(c) => c,
            None => {
                out.push((Tok::Eof, pos));
                return Ok(out);
            }
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '(' => {
                bump!();
                out.push((Tok::LParen, pos));
            }
            ')' => {
                bump!();
                out.push((Tok::RParen, pos));
            }
            ',' => {
                bump!();
                out.push((Tok::Comma, pos));
            }
            ':' => {
                bump!();
                out.push((Tok::Colon, pos));
            }
            ';' => {
                bump!();
                out.push((Tok::Semi, pos));
            }
            '+' => {
                bump!();
                out.push((Tok::Plus, pos));
            }
            '*' => {
                bump!();
                out.push((Tok::Star, pos));
            }
            '-' => {
                bump!();
                if chars.peek() == Some(&'>') {
                    bump!();
                    out.push((Tok::Arrow, pos));
                } else {
                    out.push((Tok::Minus, pos));
                }
            }
            '<' => {
                bump!();
                if chars.peek() == Some(&'=') {
                    bump!();
                    out.push((Tok::Le, pos));
                } else {
                    out.push((Tok::Lt, pos));
                }
            }
            '>' => {
                bump!();
                if chars.peek() == Some(&'=') {
                    bump!();
                    out.push((Tok::Ge, pos));
                } else {
                    out.push((Tok::Gt, pos));
                }
            }
            '=' => {
                bump!();
                if chars.peek() == Some(&'=') {
                    bump!();
                    out.push((Tok::EqEq, pos));
                } else {
                    return Err(pos.err("expected `==` (single `=` is not an operator)"));
                }
            }
            '!' => {
                bump!();
                if chars.peek() == Some(&'=') {
                    bump!();
                    out.push((Tok::Ne, pos));
                } else {
                    out.push((Tok::Bang, pos));
                }
            }
            '&' => {
                bump!();
                if chars.peek() == Some(&'&') {
                    bump!();
                    out.push((Tok::AndAnd, pos));
                } else {
                    return Err(pos.err("expected `&&`"));
                }
            }
            '|' => {
                bump!();
                if chars.peek() == Some(&'|') {
                    bump!();
                    out.push((Tok::OrOr, pos));
                } else {
                    return Err(pos.err("expected `||`"));
                }
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        s.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                let n: i64 = s.parse().map_err(|_| pos.err("integer literal out of range"))?;
                out.push((Tok::Int(n), pos));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(s), pos));
            }
            c => return Err(pos.err(format!("unexpected character `{c}`"))),
        }
    }
}

/// Surface Boolean expression over comparisons (before literal extraction).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawExpr {
    Cmp(Term, Cmp, Term),
    Next(Term, Cmp, Term),
    Not(Box<RawExpr>),
    And(Box<RawExpr>, Box<RawExpr>),
    Or(Box<RawExpr>, Box<RawExpr>),
    Implies(Box<RawExpr>, Box<RawExpr>),
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    allow_next: bool,
}

const RESERVED: [&str; 6] = ["inputs", "outputs", "guarantee", "G", "X", "Int"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn next(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok) -> Result<Pos, ParseError> {
        let pos = self.pos();
        if self.peek() == want {
            self.next();
            Ok(pos)
        } else {
            Err(pos.err(format!("expected {want}, found {}", self.peek())))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Pos), ParseError> {
        let pos = self.pos();
        match self.next().0 {
            Tok::Ident(s) => Ok((s, pos)),
            t => Err(pos.err(format!("expected an identifier, found {t}"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<Pos, ParseError> {
        let pos = self.pos();
        match self.next().0 {
            Tok::Ident(s) if s == kw => Ok(pos),
            t => Err(pos.err(format!("expected `{kw}`, found {t}"))),
        }
    }

    // body := or ("->" body)?   (implication is right-associative)
    fn body(&mut self) -> Result<RawExpr, ParseError> {
        let lhs = self.or_expr()?;
        if self.peek() == &Tok::Arrow {
            self.next();
            let rhs = self.body()?;
            Ok(RawExpr::Implies(Box::new(lhs), Box::new(rhs)))
        } else {
            Ok(lhs)
        }
    }

    fn or_expr(&mut self) -> Result<RawExpr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.peek() == &Tok::OrOr {
            self.next();
            let rhs = self.and_expr()?;
            lhs = RawExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<RawExpr, ParseError> {
        let mut lhs = self.unary()?;
        while self.peek() == &Tok::AndAnd {
            self.next();
            let rhs = self.unary()?;
            lhs = RawExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<RawExpr, ParseError> {
        match self.peek() {
            Tok::Bang => {
                self.next();
                Ok(RawExpr::Not(Box::new(self.unary()?)))
            }
            Tok::LParen => {
                self.next();
                let inner = self.body()?;
                self.expect(&Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(s) if s == "X" => {
                let pos = self.pos();
                if !self.allow_next {
                    return Err(pos.err("temporal operator `X` is not allowed here"));
                }
                self.next();
                self.expect(&Tok::LParen)?;
                let (lhs, cmp, rhs) = self.comparison()?;
                self.expect(&Tok::RParen)?;
                Ok(RawExpr::Next(lhs, cmp, rhs))
            }
            _ => {
                let (lhs, cmp, rhs) = self.comparison()?;
                Ok(RawExpr::Cmp(lhs, cmp, rhs))
            }
        }
    }

    fn comparison(&mut self) -> Result<(Term, Cmp, Term), ParseError> {
        let lhs = self.term()?;
        let pos = self.pos();
        let cmp = match self.next().0 {
            Tok::Lt => Cmp::Lt,
            Tok::Le => Cmp::Le,
            Tok::Gt => Cmp::Gt,
            Tok::Ge => Cmp::Ge,
            Tok::EqEq => Cmp::Eq,
            Tok::Ne => Cmp::Ne,
            t => return Err(pos.err(format!("expected a comparison operator, found {t}"))),
        };
        let rhs = self.term()?;
        Ok((lhs, cmp, rhs))
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.next();
                    lhs = Term::Add(Box::new(lhs), Box::new(self.factor()?));
                }
                Tok::Minus => {
                    self.next();
                    lhs = Term::Sub(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // factor := ["-"] (integer ["*" ident] | ident)
    fn factor(&mut self) -> Result<Term, ParseError> {
        let negative = if self.peek() == &Tok::Minus {
            self.next();
            true
        } else {
            false
        };
        let pos = self.pos();
        match self.next().0 {
            Tok::Int(n) => {
                let n = if negative { -n } else { n };
                if self.peek() == &Tok::Star {
                    self.next();
                    let (name, npos) = self.expect_ident()?;
                    if RESERVED.contains(&name.as_str()) {
                        return Err(npos.err(format!("`{name}` is reserved")));
                    }
                    Ok(Term::Mul(n, Box::new(Term::Var(name))))
                } else {
                    Ok(Term::Const(n))
                }
            }
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                let v = Term::Var(s);
                Ok(if negative { Term::Mul(-1, Box::new(v)) } else { v })
            }
            t => Err(pos.err(format!("expected a term, found {t} (terms are linear: integers, variables, sums, differences, and integer multiples)"))),
        }
    }
}

struct Lowerer<'a> {
    vars: &'a [VarDecl],
    literals: Vec<Literal>,
    index: HashMap<super::CanonAtom, usize>,
}

impl<'a> Lowerer<'a> {
    fn check_vars(&self, t: &Term, pos: Pos) -> Result<(), ParseError> {
        let mut names = std::collections::BTreeSet::new();
        t.vars(&mut names);
        for name in names {
            if !self.vars.iter().any(|d| d.name == name) {
                return Err(pos.err(format!("variable `{name}` is not declared")));
            }
        }
        Ok(())
    }

    fn atom(&mut self, lhs: Term, cmp: Cmp, rhs: Term, next: bool, pos: Pos) -> Result<BodyExpr, ParseError> {
        self.check_vars(&lhs, pos)?;
        self.check_vars(&rhs, pos)?;
        let (canon, pol) = super::canonicalize(&lhs, cmp, &rhs)
            .map_err(|e| pos.err(format!("cannot canonicalize comparison: {e}")))?;
        let (lit, positive) = match self.index.get(&canon) {
            Some(&i) => (i, pol == self.literals[i].canon_positive),
            None => {
                let lit = Literal { lhs, cmp, rhs, canon: canon.clone(), canon_positive: pol };
                let i = self.literals.len();
                self.literals.push(lit);
                self.index.insert(canon, i);
                (i, true)
            }
        };
        Ok(BodyExpr::Atom(AtomRef { lit, next, positive }))
    }

    fn lower(&mut self, raw: RawExpr, pos: Pos) -> Result<BodyExpr, ParseError> {
        Ok(match raw {
            RawExpr::Cmp(l, c, r) => self.atom(l, c, r, false, pos)?,
            RawExpr::Next(l, c, r) => self.atom(l, c, r, true, pos)?,
            RawExpr::Not(e) => BodyExpr::Not(Box::new(self.lower(*e, pos)?)),
            RawExpr::And(a, b) => {
                BodyExpr::And(Box::new(self.lower(*a, pos)?), Box::new(self.lower(*b, pos)?))
            }
            RawExpr::Or(a, b) => {
                BodyExpr::Or(Box::new(self.lower(*a, pos)?), Box::new(self.lower(*b, pos)?))
            }
            RawExpr::Implies(a, b) => {
                BodyExpr::Implies(Box::new(self.lower(*a, pos)?), Box::new(self.lower(*b, pos)?))
            }
        })
    }
}

/// Parses a full specification file.
pub fn parse_spec(src: &str) -> Result<SpecT, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, at: 0, allow_next: true };
    let mut vars: Vec<VarDecl> = Vec::new();
    let mut bodies: Vec<(RawExpr, Pos)> = Vec::new();
    loop {
        let pos = p.pos();
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Ident(kw) if kw == "inputs" || kw == "outputs" => {
                p.next();
                p.expect(&Tok::Colon)?;
                let owner = if kw == "inputs" { Owner::Env } else { Owner::Sys };
                loop {
                    let (name, npos) = p.expect_ident()?;
                    if RESERVED.contains(&name.as_str()) {
                        return Err(npos.err(format!("`{name}` is reserved")));
                    }
                    if vars.iter().any(|d| d.name == name) {
                        return Err(npos.err(format!("variable `{name}` is declared twice")));
                    }
                    p.expect(&Tok::Colon)?;
                    p.keyword("Int")?;
                    vars.push(VarDecl { name, sort: Sort::Int, owner });
                    if p.peek() == &Tok::Comma {
                        p.next();
                    } else {
                        break;
                    }
                }
                p.expect(&Tok::Semi)?;
            }
            Tok::Ident(kw) if kw == "guarantee" => {
                p.next();
                p.expect(&Tok::Colon)?;
                p.keyword("G")?;
                p.expect(&Tok::LParen)?;
                let body_pos = p.pos();
                let body = p.body()?;
                p.expect(&Tok::RParen)?;
                p.expect(&Tok::Semi)?;
                bodies.push((body, body_pos));
            }
            t => {
                return Err(pos.err(format!(
                    "expected `inputs`, `outputs`, or `guarantee`, found {t}"
                )))
            }
        }
    }
    let mut lowerer = Lowerer { vars: &vars, literals: Vec::new(), index: HashMap::new() };
    let mut guarantees = Vec::new();
    for (body, pos) in bodies {
        let body = lowerer.lower(body, pos)?;
        guarantees.push(GuaranteeClause { body });
    }
    let literals = lowerer.literals;
    Ok(SpecT { vars, literals, guarantees })
}

/// Parses a standalone Boolean expression over comparisons (no temporal
/// operators); used for soft-constraint files.
pub fn parse_bool_expr(src: &str) -> Result<RawExpr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, at: 0, allow_next: false };
    let e = p.body()?;
    let pos = p.pos();
    match p.peek() {
        Tok::Eof => Ok(e),
        t => Err(pos.err(format!("unexpected trailing {t}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::super::Owner;
    use super::*;

    const RUNNING: &str = "\
# running example
inputs: x: Int;
outputs: y: Int;
guarantee: G( (x < 10) -> X(y > 9) );
guarantee: G( (x >= 10) -> (y <= x) );
";

    #[test]
    fn parses_running_example() {
        let spec = parse_spec(RUNNING).unwrap();
        assert_eq!(spec.vars.len(), 2);
        assert_eq!(spec.vars[0].owner, Owner::Env);
        assert_eq!(spec.vars[1].owner, Owner::Sys);
        // Literal table in first-occurrence order; (x >= 10) reuses entry 0.
        assert_eq!(spec.literals.len(), 3);
        assert_eq!(spec.literals[0].to_string(), "x < 10");
        assert_eq!(spec.literals[1].to_string(), "y > 9");
        assert_eq!(spec.literals[2].to_string(), "y <= x");
        // Second guarantee antecedent is the complement of literal 0.
        match &spec.guarantees[1].body {
            BodyExpr::Implies(a, _) => match a.as_ref() {
                BodyExpr::Atom(at) => {
                    assert_eq!(at.lit, 0);
                    assert!(!at.positive);
                    assert!(!at.next);
                }
                other => panic!("unexpected antecedent {other:?}"),
            },
            other => panic!("unexpected body {other:?}"),
        }
    }

    #[test]
    fn duplicate_literal_text_dedups() {
        let spec = parse_spec(
            "outputs: y: Int;\nguarantee: G( (y > 9) || (9 < y) );\n",
        )
        .unwrap();
        assert_eq!(spec.literals.len(), 1);
    }

    #[test]
    fn zero_guarantee_spec_parses() {
        let spec = parse_spec("inputs: x: Int;\n").unwrap();
        assert!(spec.guarantees.is_empty());
        assert!(spec.literals.is_empty());
    }

    #[test]
    fn undeclared_variable_is_positioned_error() {
        let err = parse_spec("inputs: x: Int;\nguarantee: G( z < 1 );\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.msg.contains("`z`"));
    }

    #[test]
    fn duplicate_declaration_rejected() {
        let err = parse_spec("inputs: x: Int;\noutputs: x: Int;\n").unwrap_err();
        assert!(err.msg.contains("declared twice"));
    }

    #[test]
    fn nonlinear_term_rejected() {
        let err = parse_spec("inputs: x: Int;\noutputs: y: Int;\nguarantee: G( x * y < 1 );\n")
            .unwrap_err();
        assert!(err.msg.contains("linear") || err.msg.contains("comparison"), "{err}");
    }

    #[test]
    fn roundtrip_running_example() {
        let spec = parse_spec(RUNNING).unwrap();
        let printed = spec.print();
        let reparsed = parse_spec(&printed).unwrap_or_else(|e| panic!("reparse failed: {e}\n{printed}"));
        assert_eq!(spec, reparsed);
    }

    #[test]
    fn negative_constants_parse() {
        let spec = parse_spec("outputs: y: Int;\nguarantee: G( y > -5 && -2 * y < 7 );\n").unwrap();
        assert_eq!(spec.literals.len(), 2);
    }

    #[test]
    fn monitor_example_single_step_pending_is_ok() {
        let spec = parse_spec(RUNNING).unwrap();
        let mut v = crate::spec::Valuation::new();
        v.insert("x".into(), 15);
        v.insert("y".into(), 6);
        assert_eq!(spec.monitor_prefix(&[v]).unwrap(), crate::spec::MonitorVerdict::Ok);
    }

    #[test]
    fn monitor_flags_first_irrevocable_violation() {
        let spec = parse_spec(RUNNING).unwrap();
        let xs = [15, 15, 7, 5, 10];
        let ys = [6, 5, 13, 16, 11];
        let steps: Vec<_> = xs
            .iter()
            .zip(ys.iter())
            .map(|(&x, &y)| {
                let mut v = crate::spec::Valuation::new();
                v.insert("x".into(), x);
                v.insert("y".into(), y);
                v
            })
            .collect();
        assert_eq!(
            spec.monitor_prefix(&steps).unwrap(),
            crate::spec::MonitorVerdict::ViolatedAt(4)
        );
    }
}
