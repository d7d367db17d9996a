//! Safety-game synthesis over the Boolean abstraction.
//!
//! Game positions are *obligations*: the set of literal patterns (minterms)
//! the system is still allowed to play now, as imposed by the Next atoms of
//! the previous step. Each round the environment announces a reaction from
//! the table, the system answers with a choice of that reaction which the
//! obligation permits, and the next obligation is the set of patterns
//! keeping every clause satisfied. The system wins by playing forever; the
//! greatest fixpoint of "some move leads to a surviving obligation for every
//! reaction" yields the maximally permissive winning region, and picking one
//! move per position yields a deterministic controller.

use crate::boolabs::{Choice, ReactionTable};
use crate::spec::SpecT;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// A set of minterms (bit `m` = pattern `m` allowed now).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Obligation(pub u64);

impl Obligation {
    /// The unconstrained obligation over `n` literals.
    pub fn full(n_literals: usize) -> Obligation {
        let count = 1u32 << n_literals;
        Obligation(if count >= 64 { u64::MAX } else { (1u64 << count) - 1 })
    }

    pub fn contains(self, c: Choice) -> bool {
        self.0 >> c.0 & 1 == 1
    }

    pub fn minterms(self) -> Vec<Choice> {
        (0..64).filter(|i| self.0 >> i & 1 == 1).map(Choice).collect()
    }
}

impl Serialize for Obligation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.minterms().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Obligation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let minterms = Vec::<Choice>::deserialize(d)?;
        let mut bits = 0u64;
        let mut prev: Option<Choice> = None;
        for c in minterms {
            if c.0 >= 64 {
                return Err(serde::de::Error::custom("minterm out of range"));
            }
            if prev.is_some_and(|p| p >= c) {
                return Err(serde::de::Error::custom("minterms must be strictly ascending"));
            }
            prev = Some(c);
            bits |= 1 << c.0;
        }
        Ok(Obligation(bits))
    }
}

/// One system move: answer `choice`, proceed to state `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub choice: Choice,
    pub to: usize,
}

/// The full game graph. State 0 is the initial (unconstrained) obligation;
/// `moves[state][reaction]` lists the permitted system answers (choices the
/// obligation allows whose successor obligation is nonempty).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SafetyGame {
    pub table: ReactionTable,
    pub states: Vec<Obligation>,
    pub moves: Vec<Vec<Vec<Move>>>,
}

/// The winning states of the game, pruned to those reachable from the
/// initial state, with every surviving move. This is the maximally
/// permissive memory structure: a shield may allow any listed move.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinningRegion {
    pub table: ReactionTable,
    pub states: Vec<Obligation>,
    pub transitions: Vec<Vec<Vec<Move>>>,
}

/// A deterministic strategy: exactly one move per state and reaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub table: ReactionTable,
    pub states: Vec<Obligation>,
    pub delta: Vec<Vec<Move>>,
}

/// Builds the game graph for a specification and a reaction table over the
/// same literals. Obligations are explored from the unconstrained one; the
/// successor of a choice does not depend on the current state, so at most
/// `2^n + 1` states exist.
pub fn build_game(spec: &SpecT, table: &ReactionTable) -> Result<SafetyGame> {
    let n = spec.n_literals();
    if table.n_literals() != n {
        return Err(Error::Guard(format!(
            "reaction table is over {} literals but the specification has {n}",
            table.n_literals()
        )));
    }
    if n > 6 {
        return Err(Error::Guard(format!(
            "{n} literals exceed the supported maximum of 6 for synthesis"
        )));
    }
    let count = spec.choice_count();
    let successor: Vec<u64> = (0..count).map(|c| spec.allowed_next(c)).collect();

    let initial = Obligation::full(n);
    let mut states = vec![initial];
    let mut index: HashMap<u64, usize> = HashMap::from([(initial.0, 0)]);
    let mut moves: Vec<Vec<Vec<Move>>> = Vec::new();
    let mut at = 0;
    while at < states.len() {
        let q = states[at];
        let mut per_reaction = Vec::with_capacity(table.reactions.len());
        for r in &table.reactions {
            let mut mv = Vec::new();
            for &c in &r.choices {
                if !q.contains(c) {
                    continue;
                }
                let succ = successor[c.0 as usize];
                if succ == 0 {
                    continue;
                }
                let to = match index.get(&succ) {
                    Some(&i) => i,
                    None => {
                        states.push(Obligation(succ));
                        index.insert(succ, states.len() - 1);
                        states.len() - 1
                    }
                };
                mv.push(Move { choice: c, to });
            }
            per_reaction.push(mv);
        }
        moves.push(per_reaction);
        at += 1;
    }
    Ok(SafetyGame { table: table.clone(), states, moves })
}

/// Solves the game by the greatest fixpoint: a state dies when some reaction
/// leaves no move into a surviving state. Returns the reachable winning
/// region, or `None` when the initial state dies (unrealizable).
pub fn solve_game(game: &SafetyGame) -> Option<WinningRegion> {
    let n_states = game.states.len();
    let mut alive = vec![true; n_states];
    loop {
        let mut changed = false;
        for s in 0..n_states {
            if !alive[s] {
                continue;
            }
            let dead =
                game.moves[s].iter().any(|mv| !mv.iter().any(|m| alive[m.to]));
            if dead {
                alive[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if !alive[0] {
        return None;
    }

    // Prune to states reachable from the initial one through surviving moves
    // and renumber in discovery order.
    let renumber = breadth_first(n_states, 0, |s, visit| {
        for mv in &game.moves[s] {
            for m in mv {
                if alive[m.to] {
                    visit(m.to);
                }
            }
        }
    });
    let order = ordered(&renumber);
    let states = order.iter().map(|&s| game.states[s]).collect();
    let transitions = order
        .iter()
        .map(|&s| {
            game.moves[s]
                .iter()
                .map(|mv| {
                    mv.iter()
                        .filter(|m| alive[m.to])
                        .map(|m| Move { choice: m.choice, to: renumber[m.to] })
                        .collect()
                })
                .collect()
        })
        .collect();
    Some(WinningRegion { table: game.table.clone(), states, transitions })
}

/// Picks the lexicographically smallest choice per state and reaction, then
/// prunes to the states the strategy actually visits.
pub fn extract_controller(wr: &WinningRegion) -> Result<Controller> {
    let mut chosen: Vec<Vec<Move>> = Vec::with_capacity(wr.states.len());
    for (s, per_reaction) in wr.transitions.iter().enumerate() {
        let mut row = Vec::with_capacity(per_reaction.len());
        for (e, mv) in per_reaction.iter().enumerate() {
            let m = mv.iter().min_by_key(|m| m.choice).ok_or_else(|| {
                Error::Internal(format!(
                    "winning region state {s} has no move for reaction e_{e}"
                ))
            })?;
            row.push(*m);
        }
        chosen.push(row);
    }
    let renumber = breadth_first(wr.states.len(), 0, |s, visit| {
        for m in &chosen[s] {
            visit(m.to);
        }
    });
    let order = ordered(&renumber);
    let states = order.iter().map(|&s| wr.states[s]).collect();
    let delta = order
        .iter()
        .map(|&s| {
            chosen[s].iter().map(|m| Move { choice: m.choice, to: renumber[m.to] }).collect()
        })
        .collect();
    Ok(Controller { table: wr.table.clone(), states, delta })
}

/// Whether the specification is realizable over the given reaction table.
pub fn is_realizable(spec: &SpecT, table: &ReactionTable) -> Result<bool> {
    Ok(solve_game(&build_game(spec, table)?).is_some())
}

/// BFS numbering from `start`: `result[s]` is the discovery index, or
/// `usize::MAX` when unreachable.
fn breadth_first(
    n: usize,
    start: usize,
    mut successors: impl FnMut(usize, &mut dyn FnMut(usize)),
) -> Vec<usize> {
    let mut map = vec![usize::MAX; n];
    let mut order = vec![start];
    map[start] = 0;
    let mut at = 0;
    while at < order.len() {
        let s = order[at];
        let mut next = Vec::new();
        successors(s, &mut |t| next.push(t));
        for t in next {
            if map[t] == usize::MAX {
                map[t] = order.len();
                order.push(t);
            }
        }
        at += 1;
    }
    map
}

/// Inverse of a BFS numbering: old state index per new index.
fn ordered(renumber: &[usize]) -> Vec<usize> {
    let reachable = renumber.iter().filter(|&&i| i != usize::MAX).count();
    let mut order = vec![usize::MAX; reachable];
    for (old, &new) in renumber.iter().enumerate() {
        if new != usize::MAX {
            order[new] = old;
        }
    }
    order
}

impl WinningRegion {
    /// Structural sanity of a loaded artifact.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n_states = self.states.len();
        let n_reactions = self.table.reactions.len();
        if n_states == 0 {
            return Err("no states".into());
        }
        if self.transitions.len() != n_states {
            return Err("transition rows do not match states".into());
        }
        for (s, per_reaction) in self.transitions.iter().enumerate() {
            if per_reaction.len() != n_reactions {
                return Err(format!("state {s} does not cover every reaction"));
            }
            for (e, mv) in per_reaction.iter().enumerate() {
                if mv.is_empty() {
                    return Err(format!("state {s} has no move for reaction e_{e}"));
                }
                for m in mv {
                    if m.to >= n_states {
                        return Err(format!("state {s} has a move to unknown state {}", m.to));
                    }
                    if !self.table.reactions[e].contains(m.choice) {
                        return Err(format!(
                            "state {s} answers reaction e_{e} with a choice outside it"
                        ));
                    }
                    if !self.states[s].contains(m.choice) {
                        return Err(format!(
                            "state {s} answers with a choice its obligation forbids"
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

impl Controller {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n_states = self.states.len();
        let n_reactions = self.table.reactions.len();
        if n_states == 0 {
            return Err("no states".into());
        }
        if self.delta.len() != n_states {
            return Err("delta rows do not match states".into());
        }
        for (s, row) in self.delta.iter().enumerate() {
            if row.len() != n_reactions {
                return Err(format!("state {s} does not cover every reaction"));
            }
            for (e, m) in row.iter().enumerate() {
                if m.to >= n_states {
                    return Err(format!("state {s} has a move to unknown state {}", m.to));
                }
                if !self.table.reactions[e].contains(m.choice) {
                    return Err(format!(
                        "state {s} answers reaction e_{e} with a choice outside it"
                    ));
                }
                if !self.states[s].contains(m.choice) {
                    return Err(format!("state {s} answers with a choice its obligation forbids"));
                }
            }
        }
        Ok(())
    }
}
