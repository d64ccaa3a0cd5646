//! Scripted opponents: a random player and a greedy coin collector.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsl::{blocks_equal, evaluate, parse, Assertion, BlockKind, PlayerId, VerdictStatus};
use crate::game::{statement_ids, Action, Game, StatementId, Trace, WorldState};
use crate::matchplay::{Command, Item, MatchConfig, MatchError, MatchState, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Difficulty {
    Random,
    Greedy,
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Random => "random",
            Difficulty::Greedy => "greedy",
        })
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(Difficulty::Random),
            "greedy" => Ok(Difficulty::Greedy),
            other => Err(format!("unknown bot `{other}` (expected random or greedy)")),
        }
    }
}

const SEARCH_LIMIT: usize = 20_000;

/// Shortest action sequence from `start` to a step that executes one of
/// `targets` without the game ending first. Worlds are deduplicated by
/// player position and jump counter.
fn search(game: &Game, start: &WorldState, targets: &[StatementId], budget: usize) -> Option<(Vec<Action>, WorldState)> {
    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert((start.player().x, start.player().y, start.jump));
    queue.push_back((start.clone(), Vec::new()));
    let mut expanded = 0;
    while let Some((world, path)) = queue.pop_front() {
        if path.len() >= budget || expanded >= SEARCH_LIMIT {
            continue;
        }
        expanded += 1;
        for action in Action::ALL {
            let mut next = world.clone();
            let Ok(executed) = game.step_in_place(&mut next, action) else { continue };
            let mut p = path.clone();
            p.push(action);
            let hit = executed.iter().any(|s| targets.contains(s));
            if hit {
                return Some((p, next));
            }
            if next.game_over || !seen.insert((next.player().x, next.player().y, next.jump)) {
                continue;
            }
            queue.push_back((next, p));
        }
    }
    None
}

/// A playthrough that repeatedly walks to the nearest coin, then heads for
/// the goal, within `budget` ticks.
pub fn coin_seeking_path(game: &Game, seed: u64, budget: usize) -> Vec<Action> {
    let ids = statement_ids();
    let mut world = game.new_world(seed);
    let mut actions = Vec::new();
    while actions.len() < budget && !world.game_over {
        let left = budget - actions.len();
        let leg = search(game, &world, &[ids.coin_score], left).or_else(|| search(game, &world, &[ids.goal_end], left));
        match leg {
            Some((path, next)) => {
                actions.extend(path);
                world = next;
            }
            None => break,
        }
    }
    actions
}

/// Assertions a bot can place on `trace`: the reference oracles, goal
/// oracles, and pins of the player, score and bomb at the last and middle
/// steps. Only the ones that are not violated on the trace are returned.
pub fn template_pool(trace: &Trace) -> Vec<Assertion> {
    let mut texts: Vec<String> = [
        "GLOBAL IF Touching(Player, Coin) THEN ScoreIncreases",
        "GLOBAL IF Touching(Player, Bomb) THEN GameOver",
        "GLOBAL IF Compare(Attr(Player, y), <, 0) THEN GameOver",
        "GLOBAL IF Touching(Player, Goal) THEN ScoreIncreases",
        "GLOBAL IF Touching(Player, Goal) THEN GameOver",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let len = trace.len();
    for step in [len, len / 2] {
        let Some(f) = trace.observation(step) else { continue };
        let p = f.player();
        let when = format!("AT {step} IF Compare(Attr(Player, alive), ==, 1) THEN");
        texts.push(format!("{when} AttributeIs(Player, x, ==, {})", p.x));
        texts.push(format!("{when} AttributeIs(Player, y, ==, {})", p.y));
        texts.push(format!("{when} AttributeIs(Player, score, ==, {})", f.score));
        if let Some(b) = f.actors.iter().find(|a| a.kind == crate::game::ActorKind::Bomb && a.alive) {
            texts.push(format!("{when} AttributeIs(Bomb, x, ==, {})", b.x));
        }
    }
    texts
        .iter()
        .map(|t| parse(t).expect("template parses"))
        .filter(|a| evaluate(a, trace).map(|v| v.status != VerdictStatus::Violated).unwrap_or(false))
        .collect()
}

fn trigger_count(a: &Assertion, trace: &Trace) -> usize {
    evaluate(a, trace).map(|v| v.triggered_steps.len()).unwrap_or(0)
}

/// The pool entry with the most triggers on `trace` that the player has not
/// placed yet; ties go to the earlier entry.
pub fn best_template(trace: &Trace, placed: &[Assertion]) -> Option<Assertion> {
    let pool = template_pool(trace);
    let mut best: Option<(usize, Assertion)> = None;
    for a in pool.into_iter().filter(|a| !placed.iter().any(|p| blocks_equal(p, a))) {
        let n = trigger_count(&a, trace);
        if best.as_ref().is_none_or(|(m, _)| n > *m) {
            best = Some((n, a));
        }
    }
    best.map(|(_, a)| a)
}

const IF_THEN: Item = Item::Construct(BlockKind::IfThen);

/// The next command a bot playing `player` issues, or `None` when it has
/// nothing to do in the current phase.
pub fn bot_command(m: &MatchState, player: PlayerId, difficulty: Difficulty, rng: &mut ChaCha8Rng) -> Option<Command> {
    let me = &m.players[player];
    if m.phase == Phase::Finished || me.confirmed {
        return None;
    }
    if m.phase == Phase::Execution {
        return Some(Command::Confirm { player });
    }
    match difficulty {
        Difficulty::Greedy => greedy(m, player, rng),
        Difficulty::Random => random(m, player, rng),
    }
}

fn latest_trace(m: &MatchState, player: PlayerId) -> Option<(u32, &Trace)> {
    let id = *m.players[player].traces.last()?;
    Some((id, &m.traces[&id].trace))
}

fn greedy(m: &MatchState, player: PlayerId, rng: &mut ChaCha8Rng) -> Option<Command> {
    let me = &m.players[player];
    if !me.recorded_this_phase {
        let seed = rng.next_u64();
        let actions = coin_seeking_path(&m.game, seed, me.playthrough_time as usize);
        return Some(Command::Record { player, seed, actions });
    }
    let (trace_id, trace) = latest_trace(m, player)?;
    let fresh = me.assertions.iter().all(|a| a.source_trace != trace_id) || me.purchased_constructs > 0;
    if fresh {
        if let Some(assertion) = best_template(trace, &me.assertions) {
            if me.purchased_constructs > 0 {
                return Some(Command::Place { player, trace: trace_id, assertion });
            }
            if me.action_points >= m.config.construct_price && !me.assertions.iter().any(|a| a.source_trace == trace_id) {
                return Some(Command::Purchase { player, item: IF_THEN });
            }
        }
    }
    Some(Command::Confirm { player })
}

fn random(m: &MatchState, player: PlayerId, rng: &mut ChaCha8Rng) -> Option<Command> {
    let me = &m.players[player];
    let mut options: Vec<Command> = vec![Command::Confirm { player }];
    if !me.recorded_this_phase {
        let len = rng.gen_range(0..=me.playthrough_time as usize);
        let actions = (0..len).map(|_| *Action::ALL.choose(rng).expect("non-empty")).collect();
        options.push(Command::Record { player, seed: rng.next_u64(), actions });
    }
    for item in [IF_THEN, Item::Attack, Item::Armour, Item::PlaythroughTime, Item::MutantCount] {
        if item.price(&m.config).is_ok_and(|p| p <= me.action_points) {
            options.push(Command::Purchase { player, item });
        }
    }
    if me.purchased_constructs > 0 {
        if let Some((trace_id, trace)) = latest_trace(m, player) {
            if let Some(assertion) = template_pool(trace).choose(rng).cloned() {
                options.push(Command::Place { player, trace: trace_id, assertion });
            }
        }
    }
    options.choose(rng).cloned()
}

/// A headless match between two bots. Returns the final state and the log
/// of accepted commands.
pub fn run_bot_match(
    id: &str,
    config: MatchConfig,
    game: Game,
    seed: u64,
    bots: [Difficulty; 2],
) -> Result<(MatchState, Vec<Command>), MatchError> {
    let mut m = MatchState::start(id, config, game, seed)?;
    let mut rngs = [0u64, 1].map(|p| ChaCha8Rng::seed_from_u64(seed.wrapping_mul(2).wrapping_add(p)));
    let mut log = Vec::new();
    let mut guard = 0usize;
    while m.phase != Phase::Finished {
        let mut acted = false;
        for p in 0..2 {
            while let Some(cmd) = bot_command(&m, p, bots[p], &mut rngs[p]) {
                guard += 1;
                assert!(guard < 1_000_000, "bot match does not terminate");
                m.apply(&cmd)?;
                log.push(cmd);
                acted = true;
                if m.phase == Phase::Finished || m.players[p].confirmed {
                    break;
                }
            }
        }
        assert!(acted, "bots stalled in {}", m.phase);
    }
    Ok((m, log))
}
