//! Runtime enforcement.
//!
//! A [`ShieldSession`] sits between an external design and the plant: each
//! step it receives the environment input and the design's proposed output,
//! decides whether that output keeps the specification satisfiable forever,
//! and if not overrides it with a safe output produced by the theory solver.
//!
//! Two architectures are supported. The *controller-based* shield follows
//! one fixed synthesized controller and overrides whenever the design's
//! Boolean move differs from the controller's — simple but intrusive, since
//! a safe-but-different output is still rewritten. The *winning-region*
//! shield tracks the set of game states compatible with the observed run and
//! passes any output whose Boolean move survives from some current state, so
//! it intervenes only when the design is actually about to lose the game.

use crate::boolabs::{choice_formula, Choice, Reaction, ReactionTable};
use crate::spec::{SpecT, Valuation};
use crate::synth::{Controller, Move, WinningRegion};
use crate::theory::{distance, ObjectiveSpec, QFormula, Solver};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    ControllerBased,
    WinningRegionBased,
}

/// How the session corrects unsafe outputs and how much history it keeps.
#[derive(Clone, Debug)]
pub struct ShieldConfig {
    pub architecture: Architecture,
    /// Correction objective. Distance references inside are placeholders:
    /// at runtime the reference is always the design's current output.
    pub objective: ObjectiveSpec,
    /// Ring-buffer capacity for retained step records.
    pub record_capacity: usize,
}

impl Default for ShieldConfig {
    fn default() -> ShieldConfig {
        ShieldConfig {
            architecture: Architecture::WinningRegionBased,
            objective: ObjectiveSpec::None,
            record_capacity: 100_000,
        }
    }
}

/// The synthesized strategy artifact driving a session.
#[derive(Clone, Debug)]
pub enum ShieldArtifact {
    Controller(Controller),
    WinningRegion(WinningRegion),
}

/// One enforced step, as emitted to run logs (stable field order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub x: Valuation,
    pub y_design: Valuation,
    pub y_out: Valuation,
    pub overridden: bool,
    pub reaction: String,
    pub choice_design: Vec<String>,
    pub choice_out: Vec<String>,
}

/// A step record plus data the log does not carry: the emitted Boolean move
/// and the wall-clock split between Boolean bookkeeping and theory queries.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub record: StepRecord,
    pub choice_out: Choice,
    pub boolean_ns: u64,
    pub theory_ns: u64,
}

/// Supplies environment inputs; `None` ends the run early.
pub trait EnvSource {
    fn next_input(&mut self, step: usize) -> Option<Valuation>;
}

impl<F: FnMut(usize) -> Option<Valuation>> EnvSource for F {
    fn next_input(&mut self, step: usize) -> Option<Valuation> {
        self(step)
    }
}

/// The external design under enforcement; `None` ends the run early.
pub trait DesignPolicy {
    fn propose(&mut self, step: usize, v_x: &Valuation) -> Option<Valuation>;
}

impl<F: FnMut(usize, &Valuation) -> Option<Valuation>> DesignPolicy for F {
    fn propose(&mut self, step: usize, v_x: &Valuation) -> Option<Valuation> {
        self(step, v_x)
    }
}

enum ArchState {
    Ctrl { ctrl: Controller, state: usize },
    Wr { wr: WinningRegion, q_now: Vec<usize> },
}

pub struct ShieldSession {
    spec: SpecT,
    arch: ArchState,
    objective: ObjectiveSpec,
    record_capacity: usize,
    solver: Solver,
    env_names: Vec<String>,
    sys_names: Vec<String>,
    /// Environment values (in `env_names` order) → resolved reaction index;
    /// `None` caches a no-reaction outcome. Survives `reset`.
    partition_cache: HashMap<Vec<i64>, Option<usize>>,
    records: VecDeque<StepRecord>,
    step_count: usize,
    theory_ns_acc: u64,
}

impl ShieldSession {
    pub fn new(
        spec: SpecT,
        artifact: ShieldArtifact,
        config: ShieldConfig,
        solver: Solver,
    ) -> Result<ShieldSession> {
        let arch = match (config.architecture, artifact) {
            (Architecture::ControllerBased, ShieldArtifact::Controller(ctrl)) => {
                ctrl.validate().map_err(|m| Error::Guard(format!("invalid controller: {m}")))?;
                ArchState::Ctrl { ctrl, state: 0 }
            }
            (Architecture::WinningRegionBased, ShieldArtifact::WinningRegion(wr)) => {
                wr.validate().map_err(|m| Error::Guard(format!("invalid winning region: {m}")))?;
                ArchState::Wr { wr, q_now: vec![0] }
            }
            (Architecture::ControllerBased, _) => {
                return Err(Error::Guard(
                    "a controller-based shield requires a controller artifact".into(),
                ))
            }
            (Architecture::WinningRegionBased, _) => {
                return Err(Error::Guard(
                    "a winning-region shield requires a winning-region artifact".into(),
                ))
            }
        };
        let session = ShieldSession {
            env_names: spec.env_vars(),
            sys_names: spec.sys_vars(),
            spec,
            arch,
            objective: config.objective,
            record_capacity: config.record_capacity.max(1),
            solver,
            partition_cache: HashMap::new(),
            records: VecDeque::new(),
            step_count: 0,
            theory_ns_acc: 0,
        };
        let expected: Vec<String> =
            (0..session.spec.n_literals()).map(|i| session.spec.literals[i].display(true)).collect();
        if session.table().literals != expected {
            return Err(Error::Guard(
                "the artifact's literals do not match the specification".into(),
            ));
        }
        Ok(session)
    }

    pub fn architecture(&self) -> Architecture {
        match self.arch {
            ArchState::Ctrl { .. } => Architecture::ControllerBased,
            ArchState::Wr { .. } => Architecture::WinningRegionBased,
        }
    }

    pub fn table(&self) -> &ReactionTable {
        match &self.arch {
            ArchState::Ctrl { ctrl, .. } => &ctrl.table,
            ArchState::Wr { wr, .. } => &wr.table,
        }
    }

    pub fn spec(&self) -> &SpecT {
        &self.spec
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    /// Retained step records, oldest first (bounded ring buffer).
    pub fn records(&self) -> &VecDeque<StepRecord> {
        &self.records
    }

    /// Rewinds to the initial strategy state and clears the history; the
    /// partition cache is kept, as it depends only on the specification.
    pub fn reset(&mut self) {
        match &mut self.arch {
            ArchState::Ctrl { state, .. } => *state = 0,
            ArchState::Wr { q_now, .. } => *q_now = vec![0],
        }
        self.records.clear();
        self.step_count = 0;
    }

    /// Maps a concrete environment input to its reaction: the table entry
    /// equal to the achievable-choice set if present, otherwise the
    /// subset-minimal playable entry (smallest index on ties).
    pub fn partitioner(&mut self, v_x: &Valuation) -> Result<usize> {
        self.check_schema(v_x, true)?;
        let key: Vec<i64> = self.env_names.iter().map(|n| v_x[n]).collect();
        if let Some(&cached) = self.partition_cache.get(&key) {
            return cached.ok_or(Error::NoReaction);
        }
        let mut achievable = 0u64;
        for c in 0..self.spec.choice_count() {
            let body = choice_formula(&self.spec, Choice(c)).ground(v_x)?;
            let query = QFormula::exists(self.sys_names.clone(), body);
            let t0 = Instant::now();
            let sat = self.solver.check_validity(&query)?;
            self.theory_ns_acc += t0.elapsed().as_nanos() as u64;
            if sat {
                achievable |= 1 << c;
            }
        }
        let resolved = resolve_reaction(self.table(), achievable);
        self.partition_cache.insert(key, resolved);
        resolved.ok_or(Error::NoReaction)
    }

    /// The Boolean move a joint valuation takes: the set of literals it
    /// makes true.
    pub fn getchoice(&self, v_x: &Valuation, v_y: &Valuation) -> Result<Choice> {
        self.check_schema(v_x, true)?;
        self.check_schema(v_y, false)?;
        let mut joint = v_x.clone();
        joint.extend(v_y.iter().map(|(k, v)| (k.clone(), *v)));
        Ok(Choice(self.spec.literal_mask(&joint)?))
    }

    /// Produces a concrete output realizing choice `c` under `v_x`, honoring
    /// the session objective with `v_y_ref` (the design's output) as the
    /// distance reference. The choice must be playable, so unsatisfiability
    /// is an internal error.
    pub fn provider(&mut self, c: Choice, v_x: &Valuation, v_y_ref: &Valuation) -> Result<Valuation> {
        let body = choice_formula(&self.spec, c).ground(v_x)?;
        let query = QFormula::exists(self.sys_names.clone(), body);
        let objective = self.objective_for(v_y_ref);
        let t0 = Instant::now();
        let model = self.solver.find_model(&query, &objective)?;
        self.theory_ns_acc += t0.elapsed().as_nanos() as u64;
        model.ok_or_else(|| {
            Error::Internal(format!("provider found no output for playable choice {c}"))
        })
    }

    /// Enforces one step: passes the design output through when its Boolean
    /// move is acceptable, otherwise overrides it with a provider model.
    pub fn step(&mut self, v_x: &Valuation, v_y: &Valuation) -> Result<StepOutcome> {
        let start = Instant::now();
        self.theory_ns_acc = 0;
        let e = self.partitioner(v_x)?;
        let c = self.getchoice(v_x, v_y)?;

        // Extract owned data first so the provider can borrow the session.
        enum Plan {
            Ctrl(Move),
            Wr(Vec<Move>),
        }
        let plan = match &self.arch {
            ArchState::Ctrl { ctrl, state } => Plan::Ctrl(ctrl.delta[*state][e]),
            ArchState::Wr { wr, q_now } => {
                // Every move available from some compatible state.
                let mut legal: Vec<Move> = q_now
                    .iter()
                    .flat_map(|&q| wr.transitions[q][e].iter().copied())
                    .collect();
                legal.sort_by_key(|m| (m.choice, m.to));
                legal.dedup();
                Plan::Wr(legal)
            }
        };
        let (overridden, c_out, y_out) = match plan {
            Plan::Ctrl(m) => {
                // The controller's move stands regardless of the design: its
                // state advances by its own choice, and any deviation — even
                // a safe one — is overridden.
                let result = if c == m.choice {
                    (false, c, v_y.clone())
                } else {
                    (true, m.choice, self.provider(m.choice, v_x, v_y)?)
                };
                let ArchState::Ctrl { state, .. } = &mut self.arch else { unreachable!() };
                *state = m.to;
                result
            }
            Plan::Wr(legal) => {
                let result = if legal.iter().any(|m| m.choice == c) {
                    (false, c, v_y.clone())
                } else {
                    let (c_new, model) = self.select_safe_choice(&legal, v_x, v_y)?;
                    (true, c_new, model)
                };
                let targets: Vec<usize> =
                    legal.iter().filter(|m| m.choice == result.1).map(|m| m.to).collect();
                let ArchState::Wr { q_now, .. } = &mut self.arch else { unreachable!() };
                *q_now = targets;
                result
            }
        };

        debug_assert_eq!(self.getchoice(v_x, &y_out)?, c_out);
        let record = StepRecord {
            step: self.step_count,
            x: v_x.clone(),
            y_design: v_y.clone(),
            y_out,
            overridden,
            reaction: ReactionTable::name(e),
            choice_design: c.prop_names(),
            choice_out: c_out.prop_names(),
        };
        if self.records.len() == self.record_capacity {
            self.records.pop_front();
        }
        self.records.push_back(record.clone());
        self.step_count += 1;

        let theory_ns = self.theory_ns_acc;
        let total = start.elapsed().as_nanos() as u64;
        Ok(StepOutcome {
            record,
            choice_out: c_out,
            boolean_ns: total.saturating_sub(theory_ns),
            theory_ns,
        })
    }

    /// Runs the closed loop for up to `steps` steps (fewer when a source is
    /// exhausted), re-checking after each step that the emitted trace stays
    /// extendable — a failure there is a bug, not an input error.
    pub fn run(
        &mut self,
        env: &mut dyn EnvSource,
        design: &mut dyn DesignPolicy,
        steps: usize,
        mut sink: impl FnMut(&StepOutcome),
    ) -> Result<Vec<StepRecord>> {
        let mut out = Vec::with_capacity(steps.min(4096));
        let mut prev: Option<u32> = None;
        for t in 0..steps {
            let Some(v_x) = env.next_input(t) else { break };
            let Some(v_y) = design.propose(t, &v_x) else { break };
            let outcome = self.step(&v_x, &v_y)?;
            let mask = outcome.choice_out.0;
            if let Some(p) = prev {
                if let Some(i) =
                    self.spec.guarantees.iter().position(|cl| !cl.body.eval(p, mask))
                {
                    return Err(Error::Internal(format!(
                        "emitted step {t} violates guarantee {i}"
                    )));
                }
            }
            if self.spec.allowed_next(mask) == 0 {
                return Err(Error::Internal(format!("emitted step {t} is a dead end")));
            }
            sink(&outcome);
            out.push(outcome.record);
            prev = Some(mask);
        }
        Ok(out)
    }

    /// Picks the replacement choice among the legal moves: under a distance
    /// objective, the choice whose optimal model is globally closest to the
    /// design output (ties to the smallest bitmask); otherwise the smallest
    /// bitmask. Returns the choice with its concrete model.
    fn select_safe_choice(
        &mut self,
        legal: &[Move],
        v_x: &Valuation,
        v_y: &Valuation,
    ) -> Result<(Choice, Valuation)> {
        let mut choices: Vec<Choice> = legal.iter().map(|m| m.choice).collect();
        choices.dedup();
        if choices.is_empty() {
            return Err(Error::Internal(
                "winning region offers no move for the current reaction".into(),
            ));
        }
        if let ObjectiveSpec::MinimizeDistance { metric, .. } = &self.objective {
            let metric = *metric;
            let mut best: Option<(i128, Choice, Valuation)> = None;
            for &c in &choices {
                let model = self.provider(c, v_x, v_y)?;
                let d = distance(metric, &model, v_y);
                if best.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
                    best = Some((d, c, model));
                }
            }
            let (_, c, model) = best.expect("nonempty choice list");
            Ok((c, model))
        } else {
            let c = choices[0];
            let model = self.provider(c, v_x, v_y)?;
            Ok((c, model))
        }
    }

    /// The session objective with the distance reference pointed at the
    /// design's current output.
    fn objective_for(&self, v_y: &Valuation) -> ObjectiveSpec {
        match &self.objective {
            ObjectiveSpec::None => ObjectiveSpec::None,
            ObjectiveSpec::MinimizeDistance { metric, .. } => {
                ObjectiveSpec::MinimizeDistance { reference: v_y.clone(), metric: *metric }
            }
            ObjectiveSpec::SoftConstraints { constraints, closest_to } => {
                ObjectiveSpec::SoftConstraints {
                    constraints: constraints.clone(),
                    closest_to: closest_to.as_ref().map(|(_, m)| (v_y.clone(), *m)),
                }
            }
        }
    }

    fn check_schema(&self, v: &Valuation, env: bool) -> Result<()> {
        let names = if env { &self.env_names } else { &self.sys_names };
        if v.len() == names.len() && names.iter().all(|n| v.contains_key(n)) {
            Ok(())
        } else {
            let what = if env { "environment input" } else { "design output" };
            Err(Error::Guard(format!(
                "{what} must assign exactly these variables: {}",
                names.join(", ")
            )))
        }
    }
}

/// Resolves an achievable-choice set against the table: the exact entry if
/// present, else the subset-minimal playable entry with the smallest index.
fn resolve_reaction(table: &ReactionTable, achievable: u64) -> Option<usize> {
    if achievable == 0 {
        return None;
    }
    if let Some(k) = table.reactions.iter().position(|r| r.mask() == achievable) {
        return Some(k);
    }
    let playable = |r: &Reaction| r.mask() & !achievable == 0;
    let strict_subset = |a: u64, b: u64| a & !b == 0 && a != b;
    table.reactions.iter().enumerate().position(|(_, r)| {
        playable(r)
            && !table
                .reactions
                .iter()
                .any(|o| playable(o) && strict_subset(o.mask(), r.mask()))
    })
}
