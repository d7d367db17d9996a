//! Aggregate statistics for a shielded run: interventions, reaction
//! histogram, independent monitor verdict, and the per-step wall-clock of
//! the Boolean phase versus the theory phase.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use shieldmt_core::{MonitorVerdict, StepRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub steps: usize,
    pub interventions: Interventions,
    /// `interventions.count / steps` (0 for an empty run).
    pub intervention_rate: f64,
    /// Verdict of the trace monitor re-run over the emitted joint trace.
    pub monitor: MonitorVerdict,
    /// Occurrences of each reaction name over the run.
    pub reactions: BTreeMap<String, usize>,
    /// Wall-clock statistics; everything above this field is deterministic
    /// for fixed seeds, timing necessarily is not.
    pub timing: Timing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interventions {
    pub count: usize,
    /// Step indices (0-based) where the shield overrode the design.
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub boolean_ns: PhaseStats,
    pub theory_ns: PhaseStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub mean: u64,
    pub median: u64,
    pub max: u64,
}

impl PhaseStats {
    pub fn from_samples(samples: &[u64]) -> PhaseStats {
        if samples.is_empty() {
            return PhaseStats { mean: 0, median: 0, max: 0 };
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let median =
            if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2 };
        PhaseStats {
            mean: (sorted.iter().map(|&x| x as u128).sum::<u128>() / n as u128) as u64,
            median,
            max: sorted[n - 1],
        }
    }
}

impl RunReport {
    /// Aggregate a run. `phases` holds one `(boolean_ns, theory_ns)` pair
    /// per step, index-aligned with `records`.
    pub fn new(records: &[StepRecord], phases: &[(u64, u64)], monitor: MonitorVerdict) -> RunReport {
        let indices: Vec<usize> =
            records.iter().filter(|r| r.overridden).map(|r| r.step).collect();
        let mut reactions = BTreeMap::new();
        for r in records {
            *reactions.entry(r.reaction.clone()).or_insert(0) += 1;
        }
        let steps = records.len();
        let rate = if steps == 0 { 0.0 } else { indices.len() as f64 / steps as f64 };
        let bools: Vec<u64> = phases.iter().map(|p| p.0).collect();
        let theos: Vec<u64> = phases.iter().map(|p| p.1).collect();
        RunReport {
            steps,
            intervention_rate: rate,
            interventions: Interventions { count: indices.len(), indices },
            monitor,
            reactions,
            timing: Timing {
                boolean_ns: PhaseStats::from_samples(&bools),
                theory_ns: PhaseStats::from_samples(&theos),
            },
        }
    }

    /// Human-readable rendering (the default, non-`--json` output).
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "steps:             {}", self.steps);
        let _ = writeln!(
            s,
            "interventions:     {} (rate {:.2}) at {:?}",
            self.interventions.count, self.intervention_rate, self.interventions.indices
        );
        let _ = writeln!(s, "monitor:           {}", self.monitor);
        let hist = self
            .reactions
            .iter()
            .map(|(name, n)| format!("{name} x{n}"))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(s, "reactions:         {}", if hist.is_empty() { "-" } else { &hist });
        for (label, p) in
            [("boolean phase", &self.timing.boolean_ns), ("theory phase", &self.timing.theory_ns)]
        {
            let _ = writeln!(
                s,
                "{label:<14}ns: mean {} / median {} / max {}",
                p.mean, p.median, p.max
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use shieldmt_core::Valuation;

    fn record(step: usize, overridden: bool, reaction: &str) -> StepRecord {
        StepRecord {
            step,
            x: Valuation::from([("x".into(), 0)]),
            y_design: Valuation::from([("y".into(), 0)]),
            y_out: Valuation::from([("y".into(), 0)]),
            overridden,
            reaction: reaction.to_string(),
            choice_design: vec![],
            choice_out: vec![],
        }
    }

    #[test]
    fn empty_run_has_zero_counts() {
        let r = RunReport::new(&[], &[], MonitorVerdict::Ok);
        assert_eq!(r.steps, 0);
        assert_eq!(r.interventions.count, 0);
        assert_eq!(r.intervention_rate, 0.0);
        assert_eq!(r.timing.boolean_ns, PhaseStats { mean: 0, median: 0, max: 0 });
        assert!(r.reactions.is_empty());
    }

    #[test]
    fn one_override_in_five_steps_rates_point_two() {
        let records = vec![
            record(0, false, "e_2"),
            record(1, false, "e_2"),
            record(2, false, "e_1"),
            record(3, false, "e_1"),
            record(4, true, "e_2"),
        ];
        let phases = vec![(100, 1000); 5];
        let r = RunReport::new(&records, &phases, MonitorVerdict::Ok);
        assert_eq!(r.intervention_rate, 0.2);
        assert_eq!(r.interventions.indices, vec![4]);
        assert_eq!(r.reactions["e_2"], 3);
        assert_eq!(r.reactions["e_1"], 2);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["intervention_rate"], serde_json::json!(0.2));
        assert_eq!(json["monitor"], serde_json::json!("ok"));
        let text = r.render_text();
        assert!(text.contains("interventions:     1 (rate 0.20) at [4]"));
    }

    #[test]
    fn phase_stats_mean_median_max() {
        let s = PhaseStats::from_samples(&[5, 1, 3]);
        assert_eq!(s, PhaseStats { mean: 3, median: 3, max: 5 });
        let s = PhaseStats::from_samples(&[4, 1, 3, 2]);
        assert_eq!(s, PhaseStats { mean: 2, median: 2, max: 4 });
    }
}
