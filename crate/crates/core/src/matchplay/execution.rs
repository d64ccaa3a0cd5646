use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsl::{evaluate_extended, Assertion, TraceId};
use crate::game::{replay, Game, Trace};
use crate::mutation::{self, Mutant};

use super::MatchConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantResult {
    pub mutant: Mutant,
    pub killed: bool,
    /// Canonical text of the first assertion that detected the mutant.
    pub killing_assertion: Option<String>,
    /// Trace whose replay is shown: the killing one, else the latest.
    pub trace_id: Option<TraceId>,
    pub mutant_trace: Option<Trace>,
    pub mutated_steps: BTreeSet<usize>,
}

/// A recorded trace paired with the assertions placed on it.
#[derive(Debug, Clone, Copy)]
pub struct Defence<'a> {
    pub trace_id: TraceId,
    pub trace: &'a Trace,
    pub assertions: &'a [Assertion],
}

/// Replays every defence on every mutant. A mutant is killed when an
/// assertion is violated on the replay of its own source trace.
pub fn execute(game: &Game, mutants: &[Mutant], defences: &[Defence<'_>]) -> Vec<MutantResult> {
    mutants.par_iter().map(|m| execute_one(game, m, defences)).collect()
}

fn execute_one(game: &Game, m: &Mutant, defences: &[Defence<'_>]) -> MutantResult {
    let script = mutation::apply(&game.script, m).expect("round mutants come from the match script");
    let mutant_game = game.with_script(script);
    let mut shown: Option<(TraceId, Trace)> = None;
    for d in defences {
        let replayed = replay(&mutant_game, d.trace.seed, &d.trace.actions);
        let killer = d
            .assertions
            .iter()
            .find(|a| evaluate_extended(a, &replayed).map(|v| v.is_violated()).unwrap_or(false));
        if let Some(a) = killer {
            return MutantResult {
                mutant: m.clone(),
                killed: true,
                killing_assertion: Some(a.to_text()),
                trace_id: Some(d.trace_id),
                mutated_steps: mutation::mutated_steps(&replayed, m),
                mutant_trace: Some(replayed),
            };
        }
        shown = Some((d.trace_id, replayed));
    }
    let mutated_steps = shown.as_ref().map(|(_, t)| mutation::mutated_steps(t, m)).unwrap_or_default();
    MutantResult {
        mutant: m.clone(),
        killed: false,
        killing_assertion: None,
        trace_id: shown.as_ref().map(|(id, _)| *id),
        mutant_trace: shown.map(|(_, t)| t),
        mutated_steps,
    }
}

/// Damage a defender takes from `survivors` mutants. Armour is subtracted
/// from every surviving mutant's hit, never below zero.
pub fn damage(cfg: &MatchConfig, survivors: u32, attacker_attack: u32, defender_armour: u32) -> u32 {
    let per_hit = (cfg.base_damage + attacker_attack * cfg.attack_step).saturating_sub(defender_armour * cfg.armour_step);
    survivors * per_hit
}

/// Action points for a cycle given the player's coverage in `[0, 1]`.
pub fn award_for_coverage(cfg: &MatchConfig, coverage: f64) -> u32 {
    cfg.default_ap + (coverage.clamp(0.0, 1.0) * cfg.coverage_ap_max as f64).round() as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse, reference_assertions};
    use crate::game::{default_game, statement_ids, Action};
    use crate::mutation::{enumerate_mutants, Detail, Operator};

    fn bomb_run() -> Vec<Action> {
        let mut a = crate::game::parse_actions("Right,Right,Right,Right,Right,Right,Jump,Right,Right").unwrap();
        a.extend([Action::Right; 20]);
        a
    }

    #[test]
    fn damage_examples() {
        let cfg = MatchConfig::default();
        assert_eq!(damage(&cfg, 0, 3, 0), 0);
        assert_eq!(damage(&cfg, 3, 0, 0), 15);
        assert_eq!(damage(&cfg, 2, 1, 0), 14);
        assert_eq!(damage(&cfg, 2, 0, 1), 4);
        assert_eq!(damage(&cfg, 4, 0, 5), 0);
    }

    #[test]
    fn award_examples() {
        let cfg = MatchConfig::default();
        assert_eq!(award_for_coverage(&cfg, 0.0), 10);
        assert_eq!(award_for_coverage(&cfg, 1.0), 20);
        assert_eq!(award_for_coverage(&cfg, 0.44), 14);
    }

    #[test]
    fn deleting_the_bomb_statement_is_caught_by_a_bomb_trace() {
        let game = default_game();
        let ids = statement_ids();
        let trace = replay(&game, 7, &bomb_run());
        assert!(trace.is_terminal());
        let bomb = reference_assertions().remove(0);
        let sd = enumerate_mutants(&game.script)
            .into_iter()
            .find(|m| m.operator == Operator::Sd && m.target_statement == ids.bomb)
            .unwrap();
        let results = execute(&game, &[sd], &[Defence { trace_id: 4, trace: &trace, assertions: std::slice::from_ref(&bomb) }]);
        assert!(results[0].killed);
        assert_eq!(results[0].killing_assertion.as_deref(), Some(bomb.to_text().as_str()));
        assert_eq!(results[0].trace_id, Some(4));
        assert!(!results[0].mutated_steps.is_empty());
    }

    #[test]
    fn assertions_only_run_on_their_own_trace() {
        let game = default_game();
        let ids = statement_ids();
        let bomb_trace = replay(&game, 7, &bomb_run());
        let idle = replay(&game, 1, &[Action::NoOp; 3]);
        let sd = enumerate_mutants(&game.script)
            .into_iter()
            .find(|m| m.operator == Operator::Sd && m.target_statement == ids.bomb)
            .unwrap();
        let bomb = parse("GLOBAL IF Touching(Player, Bomb) THEN GameOver").unwrap();
        let defences = [
            Defence { trace_id: 0, trace: &idle, assertions: std::slice::from_ref(&bomb) },
            Defence { trace_id: 1, trace: &bomb_trace, assertions: &[] },
        ];
        let r = &execute(&game, &[sd], &defences)[0];
        assert!(!r.killed);
        assert_eq!(r.trace_id, Some(1));
        assert!(matches!(r.mutant.detail, Detail::Delete { .. }));
    }
}
