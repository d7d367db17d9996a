//! Parser for `--objective` arguments, including the soft-constraints file
//! format: one constraint per line, `WEIGHT : COMPARISON`, where the
//! comparison ranges over the specification's output variables. Blank lines
//! and `#` comments are ignored.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use shieldmt_core::spec::{canonicalize, parse_bool_expr, CanonRel, RawExpr};
use shieldmt_core::theory::{Formula, QFormula, SoftConstraint};
use shieldmt_core::{DistanceMetric, ObjectiveSpec, SpecT, Valuation};

/// Parse `none` | `closest[:l1|:linf]` | `soft:<file>` into an objective.
///
/// `closest` minimizes the distance between the emitted output and the
/// design's proposal. `soft:<file>` maximizes the total weight of satisfied
/// soft constraints and breaks ties by L1 closeness to the proposal.
pub fn parse_objective(arg: &str, spec: &SpecT) -> Result<ObjectiveSpec> {
    let zero_reference: Valuation = spec.sys_vars().into_iter().map(|v| (v, 0)).collect();
    match arg {
        "none" => Ok(ObjectiveSpec::None),
        "closest" | "closest:l1" => Ok(ObjectiveSpec::MinimizeDistance {
            reference: zero_reference,
            metric: DistanceMetric::L1,
        }),
        "closest:linf" => Ok(ObjectiveSpec::MinimizeDistance {
            reference: zero_reference,
            metric: DistanceMetric::Linf,
        }),
        other => match other.strip_prefix("soft:") {
            Some(path) => {
                let constraints = parse_soft_file(Path::new(path), spec)?;
                Ok(ObjectiveSpec::SoftConstraints {
                    constraints,
                    closest_to: Some((zero_reference, DistanceMetric::L1)),
                })
            }
            None => bail!("unknown objective `{other}` (expected none, closest, or soft:<file>)"),
        },
    }
}

fn parse_soft_file(path: &Path, spec: &SpecT) -> Result<Vec<SoftConstraint>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading soft-constraints file {}", path.display()))?;
    let sys: BTreeSet<String> = spec.sys_vars().into_iter().collect();
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = || format!("{}:{}", path.display(), ln + 1);
        let (weight, body) = line
            .split_once(':')
            .with_context(|| format!("{}: expected `WEIGHT : COMPARISON`", at()))?;
        let weight: u64 = weight
            .trim()
            .parse()
            .with_context(|| format!("{}: invalid weight `{}`", at(), weight.trim()))?;
        let expr = parse_bool_expr(body.trim()).with_context(at)?;
        let formula = lower(&expr).with_context(at)?;
        if let Some(free) = formula.free_vars().iter().find(|v| !sys.contains(*v)) {
            bail!("{}: `{free}` is not an output variable of the specification", at());
        }
        out.push(SoftConstraint { formula: QFormula::closed(formula), weight });
    }
    if out.is_empty() {
        bail!("{}: no soft constraints found", path.display());
    }
    Ok(out)
}

/// Lower a parsed Boolean expression over comparisons to a theory formula.
fn lower(e: &RawExpr) -> Result<Formula> {
    Ok(match e {
        RawExpr::Cmp(l, c, r) => {
            let (atom, positive) = canonicalize(l, *c, r)?;
            let f = match atom.rel {
                CanonRel::Le => Formula::atom_le(atom.lin),
                CanonRel::Eq => Formula::atom_eq(atom.lin),
            };
            if positive {
                f
            } else {
                Formula::not(f)
            }
        }
        RawExpr::Next(..) => bail!("the Next operator is not allowed in soft constraints"),
        RawExpr::Not(a) => Formula::not(lower(a)?),
        RawExpr::And(a, b) => Formula::and(vec![lower(a)?, lower(b)?]),
        RawExpr::Or(a, b) => Formula::or(vec![lower(a)?, lower(b)?]),
        RawExpr::Implies(a, b) => Formula::or(vec![Formula::not(lower(a)?), lower(b)?]),
    })
}
