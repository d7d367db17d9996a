//! Slot-compiled formula evaluation for the bounded backend.
//!
//! Variables are resolved to dense slot indices once, then evaluation runs on
//! a flat `i64` slice. Quantifier nodes enumerate only their own slots, so a
//! conjunction of independently quantified blocks costs the sum of the block
//! sizes rather than their product.
//!
//! The box widens with quantifier depth: variables at nesting depth `d` range
//! over `[-B * 2^d, B * 2^d]` (solved/free variables are depth 0). Inner
//! witnesses — typically system responses to an outer input — thereby get
//! headroom over outer values, so facts like "for every input there is a
//! strictly larger output" hold inside the box instead of failing at its
//! edge.

use super::{Formula, Quant, SolverError};
use crate::spec::CanonRel;

pub(crate) struct Compiled {
    pub n_slots: usize,
    root: Node,
}

enum Node {
    Const(bool),
    Atom { rel: CanonRel, terms: Vec<(usize, i64)>, constant: i64 },
    Not(Box<Node>),
    And(Vec<Node>),
    Or(Vec<Node>),
    Quant { q: Quant, first_slot: usize, count: usize, depth: u32, body: Box<Node> },
}

struct Ctx {
    scope: Vec<(String, usize)>,
    next_slot: usize,
    max_slots: usize,
    depth: u32,
}

/// Enumeration range of a quantifier block at `depth`.
pub(crate) fn depth_bound(bound: i64, depth: u32) -> i64 {
    bound.saturating_mul(1i64.checked_shl(depth.min(32)).unwrap_or(i64::MAX))
}

impl Compiled {
    /// Compiles with `free` pre-assigned to slots `0..free.len()`. When there
    /// are free variables they play the role of a depth-0 block, so the
    /// formula's own quantifiers start at depth 1; a closed formula's
    /// outermost quantifiers are depth 0.
    pub fn compile(f: &Formula, free: &[String]) -> Result<Compiled, SolverError> {
        let mut ctx = Ctx {
            scope: free.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect(),
            next_slot: free.len(),
            max_slots: free.len(),
            depth: if free.is_empty() { 0 } else { 1 },
        };
        let root = compile_node(f, &mut ctx)?;
        Ok(Compiled { n_slots: ctx.max_slots, root })
    }

    /// Evaluates with the free slots already set in `slots[0..free.len()]`.
    pub fn eval(&self, slots: &mut [i64], bound: i64) -> bool {
        eval_node(&self.root, slots, bound)
    }
}

fn compile_node(f: &Formula, ctx: &mut Ctx) -> Result<Node, SolverError> {
    Ok(match f {
        Formula::Const(b) => Node::Const(*b),
        Formula::Atom(rel, lin) => {
            let mut terms = Vec::with_capacity(lin.coeffs.len());
            for (name, c) in &lin.coeffs {
                let slot = ctx
                    .scope
                    .iter()
                    .rev()
                    .find(|(n, _)| n == name)
                    .map(|(_, s)| *s)
                    .ok_or_else(|| {
                        SolverError::Unsupported(format!("unbound variable `{name}` in query"))
                    })?;
                terms.push((slot, *c));
            }
            Node::Atom { rel: *rel, terms, constant: lin.constant }
        }
        Formula::Not(f) => Node::Not(Box::new(compile_node(f, ctx)?)),
        Formula::And(fs) => Node::And(fs.iter().map(|f| compile_node(f, ctx)).collect::<Result<_, _>>()?),
        Formula::Or(fs) => Node::Or(fs.iter().map(|f| compile_node(f, ctx)).collect::<Result<_, _>>()?),
        Formula::Quantified(q, vars, body) => {
            let first_slot = ctx.next_slot;
            let scope_depth = ctx.scope.len();
            for (i, v) in vars.iter().enumerate() {
                ctx.scope.push((v.clone(), first_slot + i));
            }
            ctx.next_slot += vars.len();
            ctx.max_slots = ctx.max_slots.max(ctx.next_slot);
            let depth = ctx.depth;
            ctx.depth += 1;
            let body = compile_node(body, ctx)?;
            ctx.depth = depth;
            ctx.scope.truncate(scope_depth);
            ctx.next_slot = first_slot;
            Node::Quant { q: *q, first_slot, count: vars.len(), depth, body: Box::new(body) }
        }
    })
}

fn eval_node(node: &Node, slots: &mut [i64], bound: i64) -> bool {
    match node {
        Node::Const(b) => *b,
        Node::Atom { rel, terms, constant } => {
            let mut acc = *constant as i128;
            for (slot, c) in terms {
                acc += *c as i128 * slots[*slot] as i128;
            }
            match rel {
                CanonRel::Le => acc <= 0,
                CanonRel::Eq => acc == 0,
            }
        }
        Node::Not(f) => !eval_node(f, slots, bound),
        Node::And(fs) => fs.iter().all(|f| eval_node(f, slots, bound)),
        Node::Or(fs) => fs.iter().any(|f| eval_node(f, slots, bound)),
        Node::Quant { q, first_slot, count, depth, body } => {
            enumerate(*q, *first_slot, *count, depth_bound(bound, *depth), body, slots, bound)
        }
    }
}

fn enumerate(
    q: Quant,
    slot: usize,
    count: usize,
    range: i64,
    body: &Node,
    slots: &mut [i64],
    bound: i64,
) -> bool {
    if count == 0 {
        return eval_node(body, slots, bound);
    }
    let mut v = -range;
    loop {
        slots[slot] = v;
        let sub = enumerate(q, slot + 1, count - 1, range, body, slots, bound);
        match q {
            Quant::Exists if sub => return true,
            Quant::Forall if !sub => return false,
            _ => {}
        }
        if v == range {
            break;
        }
        v += 1;
    }
    q == Quant::Forall
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::LinExpr;

    fn lin(pairs: &[(&str, i64)], k: i64) -> LinExpr {
        let mut l = LinExpr::constant(k);
        for (n, c) in pairs {
            l.coeffs.insert(n.to_string(), *c);
        }
        l
    }

    #[test]
    fn independent_blocks_do_not_multiply() {
        // exists a. (a = 40) and exists b. (b = -40): both inside the box.
        let f = Formula::and(vec![
            Formula::exists(vec!["a".into()], Formula::atom_eq(lin(&[("a", 1)], -40))),
            Formula::exists(vec!["b".into()], Formula::atom_eq(lin(&[("b", 1)], 40))),
        ]);
        let c = Compiled::compile(&f, &[]).unwrap();
        // Sibling blocks reuse slots.
        assert_eq!(c.n_slots, 1);
        let mut slots = vec![0; c.n_slots];
        assert!(c.eval(&mut slots, 64));
        assert!(!c.eval(&mut slots, 30));
    }

    #[test]
    fn inner_blocks_get_headroom() {
        // forall x. exists y. y > x holds in the box because the inner block
        // ranges twice as far as the outer one; forall x. exists y. y >= 3x
        // still fails at the edge (x = 8 needs y = 24 > 16).
        let gt = Formula::forall(
            vec!["x".into()],
            Formula::exists(vec!["y".into()], Formula::atom_le(lin(&[("x", 1), ("y", -1)], 1))),
        );
        let triple = Formula::forall(
            vec!["x".into()],
            Formula::exists(vec!["y".into()], Formula::atom_le(lin(&[("x", 3), ("y", -1)], 0))),
        );
        let cgt = Compiled::compile(&gt, &[]).unwrap();
        let ctr = Compiled::compile(&triple, &[]).unwrap();
        assert!(cgt.eval(&mut vec![0; cgt.n_slots], 8));
        assert!(!ctr.eval(&mut vec![0; ctr.n_slots], 8));
    }

    #[test]
    fn depth_bound_scales_and_saturates() {
        assert_eq!(depth_bound(64, 0), 64);
        assert_eq!(depth_bound(64, 1), 128);
        assert_eq!(depth_bound(64, 2), 256);
        assert_eq!(depth_bound(i64::MAX / 2, 40), i64::MAX);
    }

    #[test]
    fn shadowing_resolves_to_innermost() {
        // free y, and exists y. y = 7; the inner y wins inside the block.
        let f = Formula::and(vec![
            Formula::atom_eq(lin(&[("y", 1)], -1)),
            Formula::exists(vec!["y".into()], Formula::atom_eq(lin(&[("y", 1)], -7))),
        ]);
        let c = Compiled::compile(&f, &["y".to_string()]).unwrap();
        let mut slots = vec![0; c.n_slots];
        slots[0] = 1;
        assert!(c.eval(&mut slots, 10));
        slots[0] = 2;
        assert!(!c.eval(&mut slots, 10));
    }
}
