//! SMT-LIB 2 subprocess backend.
//!
//! One solver process per session, driven over stdin/stdout with push/pop
//! framing. Optimizing objectives are computed exactly: binary search finds
//! the minimum distance, per-variable binary searches then tighten the model
//! to the lexicographically smallest optimum, and soft constraints are
//! resolved by enumerating constraint subsets in decreasing-weight order.
//!
//! Every public query runs under one wall-clock deadline. On timeout or any
//! protocol error the subprocess is killed; the next query respawns it.

use super::{distance, DistanceMetric, Formula, ObjectiveSpec, Quant, SoftConstraint, SolverError};
use crate::spec::{CanonRel, LinExpr, Valuation};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

/// Conventional stdin-mode arguments for well-known solvers, used when
/// `SHIELDMT_SMT_ARGS` is not set. z3 needs `-in -smt2`; cvc5 reads stdin by
/// default but wants incremental mode for push/pop.
pub fn default_args(bin: &str) -> Vec<String> {
    let base = std::path::Path::new(bin)
        .file_name()
        .map(|s| s.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    if base.contains("z3") {
        vec!["-in".into(), "-smt2".into()]
    } else if base.contains("cvc") {
        vec!["--incremental".into()]
    } else {
        Vec::new()
    }
}

pub struct SmtSolver {
    bin: String,
    args: Vec<String>,
    timeout: Duration,
    proc: Option<Proc>,
}

struct Proc {
    child: Child,
    stdin: ChildStdin,
    rx: Receiver<String>,
}

impl SmtSolver {
    /// Creates a session; the subprocess is spawned lazily on first use.
    pub fn new(bin: String, args: Vec<String>, timeout: Duration) -> SmtSolver {
        SmtSolver { bin, args, timeout, proc: None }
    }

    pub fn check_truth(&mut self, f: &Formula) -> Result<bool, SolverError> {
        let deadline = Instant::now() + self.timeout;
        self.ensure_proc()?;
        let r = self.check_truth_inner(f, deadline);
        if r.is_err() {
            self.reset();
        }
        r
    }

    pub fn find_model(
        &mut self,
        solve: &[String],
        body: &Formula,
        obj: &ObjectiveSpec,
    ) -> Result<Option<Valuation>, SolverError> {
        let mut names: Vec<String> = solve.to_vec();
        names.sort();
        names.dedup();
        let deadline = Instant::now() + self.timeout;
        self.ensure_proc()?;
        let r = self.find_model_inner(&names, body, obj, deadline);
        if r.is_err() {
            self.reset();
        }
        r
    }

    fn check_truth_inner(&mut self, f: &Formula, deadline: Instant) -> Result<bool, SolverError> {
        self.send("(push 1)")?;
        self.send(&format!("(assert {})", formula_sexpr(f)))?;
        let sat = self.check_sat(deadline)?;
        self.send("(pop 1)")?;
        Ok(sat)
    }

    fn find_model_inner(
        &mut self,
        names: &[String],
        body: &Formula,
        obj: &ObjectiveSpec,
        deadline: Instant,
    ) -> Result<Option<Valuation>, SolverError> {
        self.send("(push 1)")?;
        for n in names {
            self.send(&format!("(declare-const {} Int)", quote(n)))?;
        }
        self.send(&format!("(assert {})", formula_sexpr(body)))?;
        let out = match obj {
            ObjectiveSpec::None => {
                if self.check_sat(deadline)? {
                    Some(self.get_values(names, deadline)?)
                } else {
                    None
                }
            }
            ObjectiveSpec::MinimizeDistance { reference, metric } => {
                self.minimize_frame(names, reference, *metric, deadline)?.map(|(_, m)| m)
            }
            ObjectiveSpec::SoftConstraints { constraints, closest_to } => {
                self.soft_frame(names, constraints, closest_to, deadline)?
            }
        };
        self.send("(pop 1)")?;
        Ok(out)
    }

    /// Minimum-distance model of the current frame, ties broken toward the
    /// lexicographically smallest valuation. Asserts the optimum into the
    /// current frame (the caller pops it). `None` when the frame is unsat.
    fn minimize_frame(
        &mut self,
        names: &[String],
        reference: &Valuation,
        metric: DistanceMetric,
        deadline: Instant,
    ) -> Result<Option<(i128, Valuation)>, SolverError> {
        if !self.check_sat(deadline)? {
            return Ok(None);
        }
        let first = self.get_values(names, deadline)?;
        if reference.is_empty() {
            return Ok(Some((0, first)));
        }
        let d0 = distance(metric, &first, reference);

        // Aux variables t!i >= |var_i - r_i|; their names cannot clash with
        // parsed identifiers ('!' is not an identifier character).
        let refs: Vec<(&String, i64)> = reference.iter().map(|(k, v)| (k, *v)).collect();
        let mut ts = Vec::new();
        for (i, (name, r)) in refs.iter().enumerate() {
            let t = format!("|t!{i}|");
            self.send(&format!("(declare-const {t} Int)"))?;
            self.send(&format!("(assert (>= {t} (- {} {})))", quote(name), int_sexpr(*r)))?;
            self.send(&format!("(assert (>= {t} (- {} {})))", int_sexpr(*r), quote(name)))?;
            ts.push(t);
        }
        let dist_le = |k: i128| -> String {
            match metric {
                DistanceMetric::L1 => {
                    let sum = if ts.len() == 1 {
                        ts[0].clone()
                    } else {
                        format!("(+ {})", ts.join(" "))
                    };
                    format!("(<= {sum} {})", int_sexpr128(k))
                }
                DistanceMetric::Linf => {
                    let parts: Vec<String> =
                        ts.iter().map(|t| format!("(<= {t} {})", int_sexpr128(k))).collect();
                    if parts.len() == 1 {
                        parts.into_iter().next().unwrap()
                    } else {
                        format!("(and {})", parts.join(" "))
                    }
                }
            }
        };

        // Smallest k in [0, d0] with a model at distance <= k.
        let mut lo: i128 = 0;
        let mut hi: i128 = d0;
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            self.send("(push 1)")?;
            self.send(&format!("(assert {})", dist_le(mid)))?;
            let ok = self.check_sat(deadline)?;
            self.send("(pop 1)")?;
            if ok {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let dstar = lo;
        self.send(&format!("(assert {})", dist_le(dstar)))?;

        // Lexicographic tightening. Distance <= dstar already confines each
        // scored variable to [r - dstar, r + dstar], so the searches are
        // bounded; each optimum is pinned before moving to the next variable.
        for name in names {
            let Some(&r) = reference.get(name) else { continue };
            let mut lo = r as i128 - dstar;
            let mut hi = r as i128 + dstar;
            while lo < hi {
                let mid = lo + (hi - lo).div_euclid(2);
                self.send("(push 1)")?;
                self.send(&format!("(assert (<= {} {}))", quote(name), int_sexpr128(mid)))?;
                let ok = self.check_sat(deadline)?;
                self.send("(pop 1)")?;
                if ok {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            self.send(&format!("(assert (= {} {}))", quote(name), int_sexpr128(lo)))?;
        }
        if !self.check_sat(deadline)? {
            return Err(SolverError::Response("optimization lost satisfiability".into()));
        }
        let model = self.get_values(names, deadline)?;
        Ok(Some((dstar, model)))
    }

    /// Maximum-weight soft-constraint model of the current frame by subset
    /// enumeration in (weight desc, index asc) order; with a `closest_to`
    /// reference, every maximum-weight subset is minimized and the best
    /// (distance, lexicographic) witness wins.
    fn soft_frame(
        &mut self,
        names: &[String],
        constraints: &[SoftConstraint],
        closest_to: &Option<(Valuation, DistanceMetric)>,
        deadline: Instant,
    ) -> Result<Option<Valuation>, SolverError> {
        let m = constraints.len();
        if m > 16 {
            return Err(SolverError::Unsupported(
                "more than 16 soft constraints (subset enumeration)".into(),
            ));
        }
        let mut order: Vec<(u64, u32)> = (0..(1u32 << m))
            .map(|mask| {
                let w: u64 = (0..m)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| constraints[i].weight)
                    .sum();
                (w, mask)
            })
            .collect();
        order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

        let mut best: Option<(i128, Valuation)> = None;
        let mut wstar: Option<u64> = None;
        for (w, mask) in order {
            if wstar.is_some_and(|ws| w < ws) {
                break;
            }
            self.send("(push 1)")?;
            for i in 0..m {
                if mask >> i & 1 == 1 {
                    let f = constraints[i].formula.as_formula();
                    self.send(&format!("(assert {})", formula_sexpr(&f)))?;
                }
            }
            let found = match closest_to {
                None => {
                    if self.check_sat(deadline)? {
                        Some((0i128, self.get_values(names, deadline)?))
                    } else {
                        None
                    }
                }
                Some((reference, metric)) => {
                    self.minimize_frame(names, reference, *metric, deadline)?
                }
            };
            self.send("(pop 1)")?;
            if let Some((d, model)) = found {
                wstar = Some(w);
                let better = match &best {
                    None => true,
                    Some((bd, bm)) => d < *bd || (d == *bd && lex_less(&model, bm)),
                };
                if better {
                    best = Some((d, model));
                }
                if closest_to.is_none() {
                    break;
                }
            }
        }
        Ok(best.map(|(_, m)| m))
    }

    fn check_sat(&mut self, deadline: Instant) -> Result<bool, SolverError> {
        self.send("(check-sat)")?;
        let text = self.read_unit(deadline)?;
        match text.as_str() {
            "sat" => Ok(true),
            "unsat" => Ok(false),
            "unknown" => Err(SolverError::Unknown),
            other => Err(interpret_noise(other)),
        }
    }

    fn get_values(&mut self, names: &[String], deadline: Instant) -> Result<Valuation, SolverError> {
        let list: Vec<String> = names.iter().map(|n| quote(n)).collect();
        self.send(&format!("(get-value ({}))", list.join(" ")))?;
        let text = self.read_unit(deadline)?;
        parse_model(&text, names)
    }

    fn ensure_proc(&mut self) -> Result<(), SolverError> {
        if self.proc.is_some() {
            return Ok(());
        }
        let mut child = Command::new(&self.bin)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|source| SolverError::Spawn { bin: self.bin.clone(), source })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(l).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        let mut proc = Proc { child, stdin, rx };
        let prelude = "(set-option :print-success false)\n\
                       (set-option :produce-models true)\n\
                       (set-logic LIA)\n";
        if let Err(e) = proc.stdin.write_all(prelude.as_bytes()).and_then(|_| proc.stdin.flush()) {
            let _ = proc.child.kill();
            let _ = proc.child.wait();
            return Err(SolverError::Process(format!("cannot initialize solver: {e}")));
        }
        self.proc = Some(proc);
        Ok(())
    }

    /// Kills the subprocess; the next query respawns a fresh one.
    fn reset(&mut self) {
        if let Some(mut p) = self.proc.take() {
            let _ = writeln!(p.stdin, "(exit)");
            let _ = p.stdin.flush();
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
    }

    fn send(&mut self, cmd: &str) -> Result<(), SolverError> {
        let p = self.proc.as_mut().expect("live solver process");
        writeln!(p.stdin, "{cmd}")
            .and_then(|_| p.stdin.flush())
            .map_err(|e| SolverError::Process(format!("solver closed its input: {e}")))
    }

    /// Reads one complete response: a bare word or a balanced s-expression
    /// (parentheses inside string literals do not count).
    fn read_unit(&mut self, deadline: Instant) -> Result<String, SolverError> {
        let timeout_ms = self.timeout.as_millis() as u64;
        let p = self.proc.as_mut().expect("live solver process");
        let mut acc = String::new();
        let mut depth: i64 = 0;
        let mut in_str = false;
        let mut escaped = false;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return Err(SolverError::Timeout(timeout_ms));
            }
            let line = match p.rx.recv_timeout(remaining) {
                Ok(l) => l,
                Err(RecvTimeoutError::Timeout) => return Err(SolverError::Timeout(timeout_ms)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(SolverError::Process("solver exited unexpectedly".into()))
                }
            };
            for c in line.chars() {
                if in_str {
                    if escaped {
                        escaped = false;
                    } else if c == '\\' {
                        escaped = true;
                    } else if c == '"' {
                        in_str = false;
                    }
                } else {
                    match c {
                        '"' => in_str = true,
                        '(' => depth += 1,
                        ')' => depth -= 1,
                        _ => {}
                    }
                }
            }
            if !acc.is_empty() {
                acc.push(' ');
            }
            acc.push_str(&line);
            if depth <= 0 && !acc.trim().is_empty() {
                return Ok(acc.trim().to_string());
            }
        }
    }
}

impl Drop for SmtSolver {
    fn drop(&mut self) {
        self.reset();
    }
}

/// All emitted symbols are quoted, so identifiers never collide with SMT-LIB
/// reserved words.
fn quote(name: &str) -> String {
    format!("|{name}|")
}

fn int_sexpr128(n: i128) -> String {
    if n < 0 {
        format!("(- {})", n.unsigned_abs())
    } else {
        n.to_string()
    }
}

fn int_sexpr(n: i64) -> String {
    int_sexpr128(n as i128)
}

pub(crate) fn formula_sexpr(f: &Formula) -> String {
    let mut s = String::new();
    write_formula(f, &mut s);
    s
}

fn write_formula(f: &Formula, out: &mut String) {
    match f {
        Formula::Const(true) => out.push_str("true"),
        Formula::Const(false) => out.push_str("false"),
        Formula::Atom(rel, lin) => {
            out.push('(');
            out.push_str(match rel {
                CanonRel::Le => "<=",
                CanonRel::Eq => "=",
            });
            out.push(' ');
            write_lin(lin, out);
            out.push_str(" 0)");
        }
        Formula::Not(g) => {
            out.push_str("(not ");
            write_formula(g, out);
            out.push(')');
        }
        Formula::And(fs) => write_nary("and", true, fs, out),
        Formula::Or(fs) => write_nary("or", false, fs, out),
        Formula::Quantified(q, vars, body) => {
            out.push_str(match q {
                Quant::Exists => "(exists (",
                Quant::Forall => "(forall (",
            });
            for (i, v) in vars.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push('(');
                out.push_str(&quote(v));
                out.push_str(" Int)");
            }
            out.push_str(") ");
            write_formula(body, out);
            out.push(')');
        }
    }
}

fn write_nary(op: &str, neutral: bool, fs: &[Formula], out: &mut String) {
    match fs.len() {
        0 => out.push_str(if neutral { "true" } else { "false" }),
        1 => write_formula(&fs[0], out),
        _ => {
            out.push('(');
            out.push_str(op);
            for f in fs {
                out.push(' ');
                write_formula(f, out);
            }
            out.push(')');
        }
    }
}

fn write_lin(lin: &LinExpr, out: &mut String) {
    let mut parts: Vec<String> = Vec::new();
    for (name, c) in &lin.coeffs {
        match *c {
            0 => continue,
            1 => parts.push(quote(name)),
            -1 => parts.push(format!("(- {})", quote(name))),
            c => parts.push(format!("(* {} {})", int_sexpr(c), quote(name))),
        }
    }
    if lin.constant != 0 || parts.is_empty() {
        parts.push(int_sexpr(lin.constant));
    }
    if parts.len() == 1 {
        out.push_str(&parts[0]);
    } else {
        out.push_str("(+ ");
        out.push_str(&parts.join(" "));
        out.push(')');
    }
}

fn lex_less(a: &Valuation, b: &Valuation) -> bool {
    // Same key set by construction; BTreeMap iterates in name order.
    a.values().lt(b.values())
}

#[derive(Debug, PartialEq)]
enum SExpr {
    Atom(String),
    List(Vec<SExpr>),
}

fn tokenize(s: &str) -> Result<Vec<String>, String> {
    let mut toks = Vec::new();
    let mut it = s.chars().peekable();
    while let Some(c) = it.next() {
        match c {
            '(' => toks.push("(".to_string()),
            ')' => toks.push(")".to_string()),
            c if c.is_whitespace() => {}
            '"' => {
                let mut a = String::from("\"");
                let mut escaped = false;
                loop {
                    let Some(c) = it.next() else { return Err("unterminated string".into()) };
                    a.push(c);
                    if escaped {
                        escaped = false;
                    } else if c == '\\' {
                        escaped = true;
                    } else if c == '"' {
                        if it.peek() == Some(&'"') {
                            a.push(it.next().unwrap());
                        } else {
                            break;
                        }
                    }
                }
                toks.push(a);
            }
            '|' => {
                let mut a = String::new();
                loop {
                    let Some(c) = it.next() else { return Err("unterminated symbol".into()) };
                    if c == '|' {
                        break;
                    }
                    a.push(c);
                }
                toks.push(a);
            }
            c => {
                let mut a = String::new();
                a.push(c);
                while let Some(&n) = it.peek() {
                    if n == '(' || n == ')' || n == '|' || n == '"' || n.is_whitespace() {
                        break;
                    }
                    a.push(it.next().unwrap());
                }
                toks.push(a);
            }
        }
    }
    Ok(toks)
}

fn parse_sexpr(s: &str) -> Result<SExpr, String> {
    let toks = tokenize(s)?;
    let mut pos = 0usize;
    parse_at(&toks, &mut pos)
}

fn parse_at(toks: &[String], pos: &mut usize) -> Result<SExpr, String> {
    let Some(t) = toks.get(*pos) else { return Err("empty response".into()) };
    *pos += 1;
    if t == "(" {
        let mut items = Vec::new();
        loop {
            match toks.get(*pos) {
                None => return Err("unbalanced parentheses".into()),
                Some(t) if t == ")" => {
                    *pos += 1;
                    return Ok(SExpr::List(items));
                }
                Some(_) => items.push(parse_at(toks, pos)?),
            }
        }
    } else if t == ")" {
        Err("unexpected `)`".into())
    } else {
        Ok(SExpr::Atom(t.clone()))
    }
}

fn error_message(sx: &SExpr) -> Option<String> {
    if let SExpr::List(items) = sx {
        if items.first() == Some(&SExpr::Atom("error".into())) {
            let msg = match items.get(1) {
                Some(SExpr::Atom(a)) => a.trim_matches('"').to_string(),
                _ => String::new(),
            };
            return Some(msg);
        }
    }
    None
}

fn interpret_noise(text: &str) -> SolverError {
    if let Ok(sx) = parse_sexpr(text) {
        if let Some(msg) = error_message(&sx) {
            return SolverError::Process(msg);
        }
    }
    SolverError::Response(text.to_string())
}

fn parse_model(text: &str, names: &[String]) -> Result<Valuation, SolverError> {
    let sx = parse_sexpr(text).map_err(SolverError::Response)?;
    if let Some(msg) = error_message(&sx) {
        return Err(SolverError::Process(msg));
    }
    let SExpr::List(pairs) = sx else {
        return Err(SolverError::Response(format!("expected value list, got: {text}")));
    };
    let mut out = Valuation::new();
    for p in &pairs {
        let SExpr::List(kv) = p else {
            return Err(SolverError::Response(format!("malformed value pair in: {text}")));
        };
        let [SExpr::Atom(name), value] = kv.as_slice() else {
            return Err(SolverError::Response(format!("malformed value pair in: {text}")));
        };
        out.insert(name.clone(), int_of(value, text)?);
    }
    for n in names {
        if !out.contains_key(n) {
            return Err(SolverError::Response(format!("model is missing `{n}`: {text}")));
        }
    }
    Ok(out)
}

fn int_of(sx: &SExpr, ctx: &str) -> Result<i64, SolverError> {
    match sx {
        SExpr::Atom(a) => a
            .parse::<i64>()
            .map_err(|_| SolverError::Response(format!("non-integer value `{a}` in: {ctx}"))),
        SExpr::List(items) => {
            if let [SExpr::Atom(op), inner] = items.as_slice() {
                if op == "-" {
                    return int_of(inner, ctx).map(|v| v.wrapping_neg());
                }
            }
            Err(SolverError::Response(format!("non-integer value in: {ctx}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(pairs: &[(&str, i64)], k: i64) -> LinExpr {
        let mut l = LinExpr::constant(k);
        for (n, c) in pairs {
            l.coeffs.insert(n.to_string(), *c);
        }
        l
    }

    #[test]
    fn emits_canonical_atoms() {
        let f = Formula::atom_le(lin(&[("x", 1), ("y", 2)], -3));
        assert_eq!(formula_sexpr(&f), "(<= (+ |x| (* 2 |y|) (- 3)) 0)");
        let f = Formula::atom_eq(lin(&[("y", -1)], 0));
        assert_eq!(formula_sexpr(&f), "(= (- |y|) 0)");
        let f = Formula::atom_le(lin(&[], 5));
        assert_eq!(formula_sexpr(&f), "(<= 5 0)");
    }

    #[test]
    fn emits_nested_quantifiers() {
        let f = Formula::forall(
            vec!["x".into()],
            Formula::exists(
                vec!["y".into(), "z".into()],
                Formula::and(vec![
                    Formula::atom_le(lin(&[("x", 1), ("y", -1)], 0)),
                    Formula::not(Formula::atom_eq(lin(&[("z", 1)], -1))),
                ]),
            ),
        );
        assert_eq!(
            formula_sexpr(&f),
            "(forall ((|x| Int)) (exists ((|y| Int) (|z| Int)) \
             (and (<= (+ |x| (- |y|)) 0) (not (= (+ |z| (- 1)) 0)))))"
        );
    }

    #[test]
    fn parses_value_lists() {
        let names = vec!["x".to_string(), "y".to_string()];
        let m = parse_model("((x 2) (y (- 7)))", &names).unwrap();
        assert_eq!(m["x"], 2);
        assert_eq!(m["y"], -7);
        // quoted symbols come back bare
        let m = parse_model("((|x| 0) (|y| 10))", &names).unwrap();
        assert_eq!(m["y"], 10);
        // missing variable is a protocol error
        assert!(parse_model("((x 2))", &names).is_err());
    }

    #[test]
    fn surfaces_error_responses() {
        match interpret_noise("(error \"line 3: unknown constant\")") {
            SolverError::Process(msg) => assert!(msg.contains("unknown constant")),
            other => panic!("expected process error, got {other:?}"),
        }
        // parens inside the message do not confuse the parser
        match interpret_noise("(error \"mismatch (push)\")") {
            SolverError::Process(msg) => assert!(msg.contains("mismatch")),
            other => panic!("expected process error, got {other:?}"),
        }
    }

    #[test]
    fn lex_compare_is_by_name_then_value() {
        let mut a = Valuation::new();
        a.insert("y".into(), 1);
        a.insert("z".into(), 9);
        let mut b = Valuation::new();
        b.insert("y".into(), 1);
        b.insert("z".into(), 10);
        assert!(lex_less(&a, &b));
        assert!(!lex_less(&b, &a));
        assert!(!lex_less(&a, &a));
    }

    #[test]
    fn default_args_cover_known_solvers() {
        assert_eq!(default_args("/usr/bin/z3"), vec!["-in", "-smt2"]);
        assert_eq!(default_args("cvc5"), vec!["--incremental"]);
        assert!(default_args("mysolver").is_empty());
    }
}
