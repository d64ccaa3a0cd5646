//! Assertion semantics over recorded traces.
//!
//! For each step in scope the condition is checked on that step's frame. A
//! step where it holds is a trigger, and the outcome is then checked:
//!
//! * `GameOver`: the game is over at `t` or at `t + 1`;
//! * `ScoreIncreases`: `score(t + 1) > score(t)`;
//! * `AttributeIs`: the comparison holds at `t`.
//!
//! Once a game is over its world is frozen, so steps past the end of a
//! terminal trace observe the terminal frame. A trigger whose outcome needs
//! `t + 1` beyond the end of a non-terminal trace is inconclusive and skipped.

use serde::{Deserialize, Serialize};

use super::{Assertion, Attr, Block, BlockKind, CmpOp, DslError, Literal, Scope};
use crate::game::{ActorKind, ObservationFrame, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictStatus {
    Holds,
    Violated,
    NeverTriggered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub violated_at: Option<usize>,
    pub triggered_steps: Vec<usize>,
}

impl Verdict {
    pub fn is_violated(&self) -> bool {
        self.status == VerdictStatus::Violated
    }
}

fn scope_steps(scope: Scope, length: usize) -> (usize, usize) {
    match scope {
        Scope::AtStep(t) => (t, t),
        Scope::Window(a, b) => (a, b),
        Scope::Global => (0, length),
    }
}

fn check_schema(a: &Assertion, trace: &Trace) -> Result<(), DslError> {
    let mut blocks = Vec::new();
    a.root.walk(&mut blocks);
    for b in blocks {
        if let BlockKind::Actor(kind) = b.kind {
            if !trace.initial.actors.iter().any(|o| o.kind == kind) {
                return Err(DslError::UnknownActor(kind));
            }
        }
    }
    Ok(())
}

/// Evaluates `a` on `trace`. The scope must lie within `0..=trace.len()`.
pub fn evaluate(a: &Assertion, trace: &Trace) -> Result<Verdict, DslError> {
    let (_, last) = scope_steps(a.scope, trace.len());
    if last > trace.len() {
        return Err(DslError::ScopeOutOfRange { scope: a.scope.to_string(), length: trace.len() });
    }
    evaluate_extended(a, trace)
}

/// Like [`evaluate`], but scope steps past the end of the trace are allowed.
/// They observe the frozen terminal frame when the trace ended in a game
/// over and are ignored otherwise. Used for replays on mutants, which can end
/// earlier than the trace the assertion was written against.
pub fn evaluate_extended(a: &Assertion, trace: &Trace) -> Result<Verdict, DslError> {
    check_schema(a, trace)?;
    let (first, last) = scope_steps(a.scope, trace.len());
    let last = if trace.is_terminal() { last } else { last.min(trace.len()) };
    let mut triggered = Vec::new();
    for t in first..=last {
        let Some(frame) = observe(trace, t) else { continue };
        if !condition_holds(a.condition(), frame) {
            continue;
        }
        match outcome_holds(a.outcome(), trace, t) {
            None => continue,
            Some(true) => triggered.push(t),
            Some(false) => {
                triggered.push(t);
                return Ok(Verdict { status: VerdictStatus::Violated, violated_at: Some(t), triggered_steps: triggered });
            }
        }
    }
    let status = if triggered.is_empty() { VerdictStatus::NeverTriggered } else { VerdictStatus::Holds };
    Ok(Verdict { status, violated_at: None, triggered_steps: triggered })
}

fn observe(trace: &Trace, step: usize) -> Option<&ObservationFrame> {
    match trace.observation(step) {
        Some(f) => Some(f),
        None if trace.is_terminal() => Some(trace.last_observation()),
        None => None,
    }
}

fn compare(op: CmpOp, lhs: i64, rhs: &Literal) -> bool {
    match rhs {
        Literal::Int(v) => match op {
            CmpOp::Less => lhs < *v,
            CmpOp::Greater => lhs > *v,
            CmpOp::Equal => lhs == *v,
        },
        // No attribute is textual.
        Literal::Str(_) => false,
    }
}

/// True if some actor of `kind` satisfies `attr op value`. Positions of dead
/// actors are ignored; `alive` ranges over every actor of the kind.
fn attribute_matches(frame: &ObservationFrame, kind: ActorKind, attr: Attr, op: CmpOp, value: &Literal) -> bool {
    if attr == Attr::Score {
        return compare(op, frame.score, value);
    }
    frame.actors.iter().filter(|o| o.kind == kind).any(|o| match attr {
        Attr::X => o.alive && compare(op, o.x, value),
        Attr::Y => o.alive && compare(op, o.y, value),
        Attr::Alive => compare(op, i64::from(o.alive), value),
        Attr::Score => unreachable!(),
    })
}

fn compare_block(block: &Block, frame: &ObservationFrame) -> bool {
    let BlockKind::Compare(op) = block.kind else { return false };
    let attr_block = &block.children[0];
    let (BlockKind::Attribute(attr), Some(BlockKind::Actor(kind))) =
        (attr_block.kind, attr_block.children.first().map(|c| c.kind))
    else {
        return false;
    };
    let Some(value) = &block.children[1].payload else { return false };
    attribute_matches(frame, kind, attr, op, value)
}

fn condition_holds(block: &Block, frame: &ObservationFrame) -> bool {
    match block.kind {
        BlockKind::Compare(_) => compare_block(block, frame),
        BlockKind::Touching => {
            let (BlockKind::Actor(a), BlockKind::Actor(b)) = (block.children[0].kind, block.children[1].kind) else {
                return false;
            };
            frame.actors.iter().enumerate().any(|(i, x)| {
                x.alive
                    && x.kind == a
                    && frame
                        .actors
                        .iter()
                        .enumerate()
                        .any(|(j, y)| j != i && y.alive && y.kind == b && y.x == x.x && y.y == x.y)
            })
        }
        _ => false,
    }
}

/// `None` when the outcome cannot be decided from the trace.
fn outcome_holds(block: &Block, trace: &Trace, t: usize) -> Option<bool> {
    let now = observe(trace, t)?;
    match block.kind {
        BlockKind::GameOver => {
            if now.game_over {
                Some(true)
            } else {
                observe(trace, t + 1).map(|next| next.game_over)
            }
        }
        BlockKind::ScoreIncreases => observe(trace, t + 1).map(|next| next.score > now.score),
        BlockKind::AttributeIs => Some(compare_block(&block.children[0], now)),
        _ => Some(false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;
    use crate::game::{default_game, replay, Action, ActorObs};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn frame(tick: u64, score: i64, over: bool, player: (i64, i64), bomb: (i64, i64)) -> ObservationFrame {
        ObservationFrame {
            tick,
            score,
            game_over: over,
            actors: vec![
                ActorObs { kind: ActorKind::Player, x: player.0, y: player.1, alive: true },
                ActorObs { kind: ActorKind::Bomb, x: bomb.0, y: bomb.1, alive: true },
                ActorObs { kind: ActorKind::Coin, x: 9, y: 9, alive: true },
            ],
        }
    }

    fn crafted(frames: Vec<ObservationFrame>) -> Trace {
        let n = frames.len() - 1;
        Trace {
            script_hash: "test".into(),
            seed: 0,
            actions: vec![Action::NoOp; n],
            initial: frames[0].clone(),
            frames: frames[1..].to_vec(),
            covered: vec![BTreeSet::new(); n],
        }
    }

    #[test]
    fn bomb_assertion_holds_when_game_ends() {
        let a = parse("GLOBAL IF Touching(Player, Bomb) THEN GameOver").unwrap();
        let t = crafted(vec![
            frame(0, 0, false, (1, 1), (4, 1)),
            frame(1, 0, false, (2, 1), (3, 1)),
            frame(2, 0, false, (3, 1), (3, 1)),
            frame(3, 0, true, (3, 1), (3, 1)),
        ]);
        let v = evaluate(&a, &t).unwrap();
        assert_eq!(v.status, VerdictStatus::Holds);
        assert_eq!(v.triggered_steps, vec![2, 3]);
    }

    #[test]
    fn bomb_assertion_violated_when_game_continues() {
        let a = parse("GLOBAL IF Touching(Player, Bomb) THEN GameOver").unwrap();
        let t = crafted(vec![
            frame(0, 0, false, (1, 1), (4, 1)),
            frame(1, 0, false, (3, 1), (3, 1)),
            frame(2, 0, false, (4, 1), (3, 1)),
            frame(3, 0, false, (5, 1), (3, 1)),
        ]);
        let v = evaluate(&a, &t).unwrap();
        assert_eq!(v.status, VerdictStatus::Violated);
        assert_eq!(v.violated_at, Some(1));
    }

    #[test]
    fn never_triggered_and_out_of_range() {
        let a = parse("GLOBAL IF Touching(Player, Bomb) THEN GameOver").unwrap();
        let t = crafted(vec![frame(0, 0, false, (1, 1), (4, 1)), frame(1, 0, false, (2, 1), (5, 1))]);
        let v = evaluate(&a, &t).unwrap();
        assert_eq!(v.status, VerdictStatus::NeverTriggered);
        assert!(v.triggered_steps.is_empty());

        let at5 = parse("AT 5 IF Compare(Attr(Player, x), >, 0) THEN GameOver").unwrap();
        let three = crafted((0..4).map(|i| frame(i, 0, false, (1, 1), (4, 1))).collect());
        assert!(matches!(evaluate(&at5, &three), Err(DslError::ScopeOutOfRange { .. })));
    }

    #[test]
    fn unknown_actor_is_a_schema_error() {
        let a = parse("GLOBAL IF Touching(Player, Goal) THEN GameOver").unwrap();
        let t = crafted(vec![frame(0, 0, false, (1, 1), (4, 1))]);
        assert_eq!(evaluate(&a, &t), Err(DslError::UnknownActor(ActorKind::Goal)));
    }

    #[test]
    fn trailing_score_trigger_is_inconclusive() {
        let a = parse("GLOBAL IF Compare(Attr(Player, x), ==, 2) THEN ScoreIncreases").unwrap();
        let t = crafted(vec![frame(0, 0, false, (1, 1), (4, 1)), frame(1, 0, false, (2, 1), (4, 1))]);
        assert_eq!(evaluate(&a, &t).unwrap().status, VerdictStatus::NeverTriggered);
    }

    #[test]
    fn extended_scope_reads_the_frozen_terminal_frame() {
        let a = parse("AT 6 IF Compare(Attr(Player, x), ==, 3) THEN AttributeIs(Player, y, ==, 0)").unwrap();
        let t = crafted(vec![frame(0, 0, false, (1, 1), (4, 1)), frame(1, 0, true, (3, 1), (4, 1))]);
        assert!(evaluate(&a, &t).is_err());
        let v = evaluate_extended(&a, &t).unwrap();
        assert_eq!(v.violated_at, Some(6));
        // A non-terminal trace has nothing to say about steps past its end.
        let open = crafted(vec![frame(0, 0, false, (1, 1), (4, 1)), frame(1, 0, false, (3, 1), (4, 1))]);
        assert_eq!(evaluate_extended(&a, &open).unwrap().status, VerdictStatus::NeverTriggered);
    }

    #[test]
    fn reference_assertions_hold_on_a_coin_run() {
        let game = default_game();
        let t = replay(&game, 0, &[Action::Right; 7]);
        let coin = parse("GLOBAL IF Touching(Player, Coin) THEN ScoreIncreases").unwrap();
        assert_eq!(evaluate(&coin, &t).unwrap().status, VerdictStatus::Holds);
        let hole = parse("GLOBAL IF Compare(Attr(Player, y), <, 0) THEN GameOver").unwrap();
        assert_ne!(evaluate(&hole, &t).unwrap().status, VerdictStatus::Violated);
    }

    // --- brute-force oracle --------------------------------------------------

    /// Straight-line re-statement of the semantics over an explicit frame list
    /// (`frames[0]` is the initial frame).
    fn brute_force(a: &Assertion, frames: &[ObservationFrame]) -> (VerdictStatus, Option<usize>) {
        let n = frames.len() - 1;
        let terminal = frames[n].game_over;
        let at = |t: usize| -> Option<&ObservationFrame> {
            if t <= n {
                Some(&frames[t])
            } else if terminal {
                Some(&frames[n])
            } else {
                None
            }
        };
        let steps: Vec<usize> = match a.scope {
            Scope::Global => (0..=n).collect(),
            Scope::AtStep(t) => vec![t],
            Scope::Window(x, y) => (x..=y).collect(),
        };
        let text = a.to_text();
        let cond = text.split(" IF ").nth(1).unwrap().split(" THEN ").next().unwrap().to_string();
        let outcome = text.split(" THEN ").nth(1).unwrap().to_string();
        let num = |s: &str| s.trim().trim_end_matches(')').parse::<i64>().unwrap();
        let sat = |v: i64, op: &str, k: i64| match op {
            "<" => v < k,
            ">" => v > k,
            _ => v == k,
        };
        let attr_any = |f: &ObservationFrame, actor: &str, attr: &str, op: &str, k: i64| -> bool {
            if attr == "score" {
                return sat(f.score, op, k);
            }
            f.actors.iter().filter(|o| o.kind.block_name() == actor).any(|o| match attr {
                "x" => o.alive && sat(o.x, op, k),
                "y" => o.alive && sat(o.y, op, k),
                _ => sat(o.alive as i64, op, k),
            })
        };
        let mut any = false;
        for t in steps {
            let Some(f) = at(t) else { continue };
            let holds = if let Some(rest) = cond.strip_prefix("Touching(") {
                let parts: Vec<&str> = rest.trim_end_matches(')').split(", ").collect();
                let mut hit = false;
                for (i, p) in f.actors.iter().enumerate() {
                    for (j, q) in f.actors.iter().enumerate() {
                        if i != j && p.alive && q.alive && p.kind.block_name() == parts[0] && q.kind.block_name() == parts[1] && p.x == q.x && p.y == q.y {
                            hit = true;
                        }
                    }
                }
                hit
            } else {
                let rest = cond.strip_prefix("Compare(Attr(").unwrap();
                let (ref_part, tail) = rest.split_once("), ").unwrap();
                let (actor, attr) = ref_part.split_once(", ").unwrap();
                let (op, k) = tail.split_once(", ").unwrap();
                attr_any(f, actor, attr, op, num(k))
            };
            if !holds {
                continue;
            }
            let ok = if outcome == "GameOver" {
                if f.game_over {
                    Some(true)
                } else {
                    at(t + 1).map(|g| g.game_over)
                }
            } else if outcome == "ScoreIncreases" {
                at(t + 1).map(|g| g.score > f.score)
            } else {
                let inner = outcome.strip_prefix("AttributeIs(").unwrap();
                let parts: Vec<&str> = inner.split(", ").collect();
                Some(attr_any(f, parts[0], parts[1], parts[2], num(parts[3])))
            };
            match ok {
                None => {}
                Some(true) => any = true,
                Some(false) => return (VerdictStatus::Violated, Some(t)),
            }
        }
        (if any { VerdictStatus::Holds } else { VerdictStatus::NeverTriggered }, None)
    }

    fn small_frame() -> impl Strategy<Value = ObservationFrame> {
        (-2i64..=2, -2i64..=2, -2i64..=2, -2i64..=2, any::<bool>(), -2i64..=2, -2i64..=2, any::<bool>(), 0i64..=2)
            .prop_map(|(px, py, bx, by, balive, cx, cy, calive, score)| ObservationFrame {
                tick: 0,
                score,
                game_over: false,
                actors: vec![
                    ActorObs { kind: ActorKind::Player, x: px, y: py, alive: true },
                    ActorObs { kind: ActorKind::Bomb, x: bx, y: by, alive: balive },
                    ActorObs { kind: ActorKind::Coin, x: cx, y: cy, alive: calive },
                    ActorObs { kind: ActorKind::Goal, x: 2, y: 2, alive: true },
                ],
            })
    }

    fn small_trace() -> impl Strategy<Value = Vec<ObservationFrame>> {
        (prop::collection::vec(small_frame(), 1..=11), any::<bool>()).prop_map(|(mut frames, terminal)| {
            for (i, f) in frames.iter_mut().enumerate() {
                f.tick = i as u64;
            }
            if terminal {
                frames.last_mut().unwrap().game_over = true;
            }
            frames
        })
    }

    fn small_assertion(max_step: usize) -> impl Strategy<Value = String> {
        let actor = prop::sample::select(vec!["Player", "Coin", "Bomb", "Goal"]);
        let actor2 = prop::sample::select(vec!["Player", "Coin", "Bomb", "Goal"]);
        let attr = prop::sample::select(vec!["x", "y", "alive"]);
        let attr2 = prop::sample::select(vec!["x", "y", "score", "alive"]);
        let op = prop::sample::select(vec!["<", ">", "=="]);
        let op2 = prop::sample::select(vec!["<", ">", "=="]);
        (
            prop_oneof![
                Just("GLOBAL".to_string()),
                (0..=max_step + 2).prop_map(|t| format!("AT {t}")),
                (0..=max_step, 0..=max_step).prop_map(|(a, b)| format!("WINDOW {} {}", a.min(b), a.max(b))),
            ],
            any::<bool>(),
            actor,
            actor2,
            attr,
            op,
            -2i64..=2,
            0..3,
            attr2,
            op2,
            -2i64..=2,
        )
            .prop_map(|(scope, touching, a, b, at, op, v, out, at2, op2, v2)| {
                let cond = if touching { format!("Touching({a}, {b})") } else { format!("Compare(Attr({a}, {at}), {op}, {v})") };
                let outcome = match out {
                    0 => "GameOver".to_string(),
                    1 => "ScoreIncreases".to_string(),
                    _ => format!("AttributeIs(Player, {at2}, {op2}, {v2})"),
                };
                format!("{scope} IF {cond} THEN {outcome}")
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn matches_brute_force(frames in small_trace(), text in small_assertion(10)) {
            let a = parse(&text).unwrap();
            let trace = crafted(frames.clone());
            let expected = brute_force(&a, &frames);
            let got = evaluate_extended(&a, &trace).unwrap();
            prop_assert_eq!((got.status, got.violated_at), expected);
            match evaluate(&a, &trace) {
                Ok(strict) => prop_assert_eq!(strict, got),
                Err(DslError::ScopeOutOfRange { .. }) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn evaluation_is_pure(frames in small_trace(), text in small_assertion(10)) {
            let a = parse(&text).unwrap();
            let trace = crafted(frames);
            prop_assert_eq!(evaluate_extended(&a, &trace), evaluate_extended(&a, &trace));
        }
    }
}
