//! Environment and design policies: recorded traces, seeded uniform-random
//! streams, and inline scripted value lists.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shieldmt_core::shield::{DesignPolicy, EnvSource};
use shieldmt_core::Valuation;

/// Parsed form of an `--env` / `--design` argument.
#[derive(Clone, Debug, PartialEq)]
pub enum PolicySpec {
    /// JSONL file of valuations, one step per line.
    TraceFile(PathBuf),
    /// Independent uniform draws from `lo..=hi` per variable per step.
    UniformRandom { seed: u64, lo: i64, hi: i64 },
    /// Inline list of values for a single variable; ends when exhausted.
    Scripted(Vec<i64>),
}

impl PolicySpec {
    /// Parse `<path.jsonl>` | `random[:SEED[:LO..=HI]]` | `scripted:v1,v2,...`.
    ///
    /// `default_seed` fills in when `random` omits a seed; `default_range`
    /// when it omits a range.
    pub fn parse(arg: &str, default_seed: u64, default_range: (i64, i64)) -> Result<PolicySpec> {
        if let Some(rest) = arg.strip_prefix("random") {
            let rest = rest.strip_prefix(':').unwrap_or(rest);
            let (seed_part, range_part) = match rest.split_once(':') {
                Some((s, r)) => (s, Some(r)),
                None => (rest, None),
            };
            let seed = if seed_part.is_empty() {
                default_seed
            } else {
                seed_part.parse().with_context(|| format!("invalid seed `{seed_part}`"))?
            };
            let (lo, hi) = match range_part {
                Some(r) => parse_range(r)?,
                None => default_range,
            };
            const LIMIT: i64 = 1 << 31;
            if lo > hi || lo < -LIMIT || hi >= LIMIT {
                bail!("random range {lo}..={hi} must be non-empty and within [-2^31, 2^31)");
            }
            return Ok(PolicySpec::UniformRandom { seed, lo, hi });
        }
        if let Some(rest) = arg.strip_prefix("scripted:") {
            let values = rest
                .split(',')
                .map(|v| v.trim().parse().with_context(|| format!("invalid value `{v}`")))
                .collect::<Result<Vec<i64>>>()?;
            return Ok(PolicySpec::Scripted(values));
        }
        Ok(PolicySpec::TraceFile(PathBuf::from(arg)))
    }
}

/// Parse an inclusive range literal `LO..=HI`.
fn parse_range(s: &str) -> Result<(i64, i64)> {
    let (lo, hi) = s
        .split_once("..=")
        .with_context(|| format!("invalid range `{s}` (expected LO..=HI)"))?;
    Ok((
        lo.trim().parse().with_context(|| format!("invalid range bound `{lo}`"))?,
        hi.trim().parse().with_context(|| format!("invalid range bound `{hi}`"))?,
    ))
}

/// A [`PolicySpec`] instantiated for a fixed variable tuple. Serves as both
/// an environment source and a design policy: it emits one valuation of its
/// variables per step until the underlying stream ends.
pub struct Policy {
    vars: Vec<String>,
    kind: Kind,
}

enum Kind {
    Rows(Vec<Valuation>),
    Random { rng: ChaCha8Rng, lo: i64, hi: i64 },
}

impl Policy {
    /// Instantiate `spec` to produce valuations of exactly `vars`.
    pub fn new(spec: &PolicySpec, vars: &[String]) -> Result<Policy> {
        let kind = match spec {
            PolicySpec::TraceFile(path) => Kind::Rows(load_trace(path, vars)?),
            PolicySpec::UniformRandom { seed, lo, hi } => {
                Kind::Random { rng: ChaCha8Rng::seed_from_u64(*seed), lo: *lo, hi: *hi }
            }
            PolicySpec::Scripted(values) => {
                let [var] = vars else {
                    bail!(
                        "scripted policies carry values for exactly one variable, \
                         but this side declares {}",
                        vars.len()
                    );
                };
                Kind::Rows(
                    values.iter().map(|&v| Valuation::from([(var.clone(), v)])).collect(),
                )
            }
        };
        Ok(Policy { vars: vars.to_vec(), kind })
    }

    fn emit(&mut self, step: usize) -> Option<Valuation> {
        match &mut self.kind {
            Kind::Rows(rows) => rows.get(step).cloned(),
            Kind::Random { rng, lo, hi } => Some(
                self.vars.iter().map(|v| (v.clone(), rng.random_range(*lo..=*hi))).collect(),
            ),
        }
    }
}

impl EnvSource for Policy {
    fn next_input(&mut self, step: usize) -> Option<Valuation> {
        self.emit(step)
    }
}

impl DesignPolicy for Policy {
    fn propose(&mut self, step: usize, _v_x: &Valuation) -> Option<Valuation> {
        self.emit(step)
    }
}

/// Read a JSONL trace of flat valuations (`{"x": 15}`), keeping only `vars`
/// and requiring each line to assign all of them.
fn load_trace(path: &Path, vars: &[String]) -> Result<Vec<Valuation>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading trace {}", path.display()))?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let full: Valuation = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: expected an object of integers", path.display(), ln + 1))?;
        let mut row = Valuation::new();
        for v in vars {
            let value = full
                .get(v)
                .with_context(|| format!("{}:{}: missing variable `{v}`", path.display(), ln + 1))?;
            row.insert(v.clone(), *value);
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn vars(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_policy_strings() {
        assert_eq!(
            PolicySpec::parse("random:7", 0, (-20, 20)).unwrap(),
            PolicySpec::UniformRandom { seed: 7, lo: -20, hi: 20 }
        );
        assert_eq!(
            PolicySpec::parse("random:7:-5..=5", 0, (-20, 20)).unwrap(),
            PolicySpec::UniformRandom { seed: 7, lo: -5, hi: 5 }
        );
        assert_eq!(
            PolicySpec::parse("random", 3, (-1, 1)).unwrap(),
            PolicySpec::UniformRandom { seed: 3, lo: -1, hi: 1 }
        );
        assert_eq!(
            PolicySpec::parse("scripted:15, 15,7", 0, (0, 0)).unwrap(),
            PolicySpec::Scripted(vec![15, 15, 7])
        );
        assert_eq!(
            PolicySpec::parse("runs/env.jsonl", 0, (0, 0)).unwrap(),
            PolicySpec::TraceFile(PathBuf::from("runs/env.jsonl"))
        );
        assert!(PolicySpec::parse("random:1:9..=3", 0, (0, 0)).is_err());
        assert!(PolicySpec::parse("scripted:1,x", 0, (0, 0)).is_err());
    }

    #[test]
    fn scripted_policy_ends_when_exhausted() {
        let spec = PolicySpec::Scripted(vec![15, 15, 7]);
        let mut p = Policy::new(&spec, &vars(&["x"])).unwrap();
        assert_eq!(p.next_input(0), Some(Valuation::from([("x".into(), 15)])));
        assert_eq!(p.next_input(2), Some(Valuation::from([("x".into(), 7)])));
        assert_eq!(p.next_input(3), None);
        assert!(Policy::new(&spec, &vars(&["x", "y"])).is_err());
    }

    #[test]
    fn random_policy_is_reproducible_and_in_range() {
        let spec = PolicySpec::UniformRandom { seed: 42, lo: -5, hi: 5 };
        let mut a = Policy::new(&spec, &vars(&["x", "z"])).unwrap();
        let mut b = Policy::new(&spec, &vars(&["x", "z"])).unwrap();
        for t in 0..100 {
            let va = a.next_input(t).unwrap();
            assert_eq!(va, b.next_input(t).unwrap());
            assert!(va.values().all(|v| (-5..=5).contains(v)));
        }
    }

    #[test]
    fn trace_policy_reads_jsonl_and_validates() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{\"x\": 15, \"extra\": 1}}\n{{\"x\": -3}}").unwrap();
        let spec = PolicySpec::TraceFile(f.path().to_path_buf());
        let mut p = Policy::new(&spec, &vars(&["x"])).unwrap();
        assert_eq!(p.next_input(0), Some(Valuation::from([("x".into(), 15)])));
        assert_eq!(p.next_input(1), Some(Valuation::from([("x".into(), -3)])));
        assert_eq!(p.next_input(2), None);
        assert!(Policy::new(&spec, &vars(&["missing"])).is_err());
    }
}
