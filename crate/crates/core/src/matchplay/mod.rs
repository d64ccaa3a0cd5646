//! The Play module: two players alternate between planning (record a
//! playthrough, buy constructs and upgrades, place assertions) and execution
//! (their assertions face the round's mutants; survivors cost life).

mod command;
mod config;
mod execution;

use std::collections::BTreeMap;
use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsl::{evaluate, Assertion, BlockKind, Category, DslError, PlayerId, TraceId, VerdictStatus};
use crate::game::{coverage, replay, Action, Game, Trace};
use crate::mutation::select_round_mutants;

pub use command::{Command, CommandOutcome};
pub use config::MatchConfig;
pub use execution::{award_for_coverage, damage, execute, Defence, MutantResult};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("`{op}` is not allowed during {phase}")]
    WrongPhase { op: &'static str, phase: Phase },
    #[error("no such player {0}")]
    UnknownPlayer(PlayerId),
    #[error("already recorded a playthrough this phase")]
    AlreadyRecorded,
    #[error("playthrough of {len} ticks exceeds the budget of {budget}")]
    TooLong { len: usize, budget: u32 },
    #[error("price {price} exceeds {available} action points")]
    InsufficientAp { price: u32, available: u32 },
    #[error("{0:?} blocks are free and cannot be purchased")]
    NotPurchasable(BlockKind),
    #[error("no purchased IfThen construct left")]
    NoConstruct,
    #[error("no such trace {0}")]
    UnknownTrace(TraceId),
    #[error("trace {0} belongs to the other player")]
    NotOwner(TraceId),
    #[error("assertion is violated on its own trace at step {0}")]
    InvalidOracle(usize),
    #[error(transparent)]
    Assertion(#[from] DslError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Planning,
    Execution,
    Finished,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Planning => "Planning",
            Phase::Execution => "Execution",
            Phase::Finished => "Finished",
        })
    }
}

/// Things a player can spend action points on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Item {
    Construct(BlockKind),
    Attack,
    Armour,
    PlaythroughTime,
    MutantCount,
}

impl Item {
    pub fn name(self) -> String {
        match self {
            Item::Construct(BlockKind::IfThen) => "IfThen".into(),
            Item::Construct(k) => format!("{k:?}"),
            Item::Attack => "Attack".into(),
            Item::Armour => "Armour".into(),
            Item::PlaythroughTime => "PlaythroughTime".into(),
            Item::MutantCount => "MutantCount".into(),
        }
    }

    pub fn from_name(s: &str) -> Option<Item> {
        Some(match s {
            "IfThen" => Item::Construct(BlockKind::IfThen),
            "Attack" => Item::Attack,
            "Armour" => Item::Armour,
            "PlaythroughTime" => Item::PlaythroughTime,
            "MutantCount" => Item::MutantCount,
            _ => return None,
        })
    }

    pub fn price(self, cfg: &MatchConfig) -> Result<u32, MatchError> {
        match self {
            Item::Construct(k) if k.category() == Category::Construct => Ok(cfg.construct_price),
            Item::Construct(k) => Err(MatchError::NotPurchasable(k)),
            _ => Ok(cfg.upgrade_price),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerState {
    pub life: u32,
    pub action_points: u32,
    pub attack: u32,
    pub armour: u32,
    /// Playthrough budget in ticks.
    pub playthrough_time: u32,
    pub mutant_count_attr: u32,
    pub traces: Vec<TraceId>,
    pub assertions: Vec<Assertion>,
    /// Unplaced IfThen constructs.
    pub purchased_constructs: u32,
    pub recorded_this_phase: bool,
    pub confirmed: bool,
}

impl PlayerState {
    fn new(cfg: &MatchConfig) -> Self {
        PlayerState {
            life: cfg.starting_life,
            action_points: cfg.starting_ap,
            attack: 0,
            armour: 0,
            playthrough_time: cfg.playthrough_time,
            mutant_count_attr: 0,
            traces: Vec::new(),
            assertions: Vec::new(),
            purchased_constructs: 0,
            recorded_this_phase: false,
            confirmed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredTrace {
    pub owner: PlayerId,
    pub trace: Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Winner(PlayerId),
    Draw,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerReport {
    pub mutants: Vec<MutantResult>,
    pub damage_taken: u32,
    pub action_points_awarded: u32,
}

impl PlayerReport {
    pub fn survivors(&self) -> usize {
        self.mutants.iter().filter(|r| !r.killed).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub round: u32,
    pub round_seed: u64,
    pub players: [PlayerReport; 2],
}

/// Seed of a round's mutant selection, a pure function of the match seed.
pub fn round_seed(match_seed: u64, round: u32) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(match_seed);
    rng.set_stream(round as u64);
    rng.next_u64()
}

/// Winner by life: nobody at zero means the match goes on.
pub fn winner_by_life(life: [u32; 2]) -> Option<Outcome> {
    match life {
        [0, 0] => Some(Outcome::Draw),
        [0, _] => Some(Outcome::Winner(1)),
        [_, 0] => Some(Outcome::Winner(0)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchState {
    pub id: String,
    pub config: MatchConfig,
    pub game: Game,
    pub match_seed: u64,
    pub players: [PlayerState; 2],
    pub phase: Phase,
    pub round: u32,
    pub round_seed: u64,
    /// Milliseconds spent in the current phase.
    pub phase_clock_ms: u64,
    pub phase_deadline_ms: u64,
    pub traces: BTreeMap<TraceId, StoredTrace>,
    pub next_trace: TraceId,
    pub outcome: Option<Outcome>,
    pub last_report: Option<ExecutionReport>,
}

impl MatchState {
    pub fn start(id: impl Into<String>, config: MatchConfig, game: Game, match_seed: u64) -> Result<Self, MatchError> {
        if config.starting_life == 0 {
            return Err(MatchError::InvalidConfig("starting_life must be positive".into()));
        }
        if config.max_rounds == 0 {
            return Err(MatchError::InvalidConfig("max_rounds must be positive".into()));
        }
        let player = PlayerState::new(&config);
        Ok(MatchState {
            id: id.into(),
            players: [player.clone(), player],
            phase: Phase::Planning,
            round: 1,
            round_seed: round_seed(match_seed, 1),
            phase_clock_ms: 0,
            phase_deadline_ms: config.planning_ms,
            traces: BTreeMap::new(),
            next_trace: 0,
            outcome: None,
            last_report: None,
            config,
            game,
            match_seed,
        })
    }

    pub fn winner(&self) -> Option<PlayerId> {
        match self.outcome {
            Some(Outcome::Winner(p)) => Some(p),
            _ => None,
        }
    }

    pub fn trace(&self, id: TraceId) -> Option<&StoredTrace> {
        self.traces.get(&id)
    }

    pub fn player_traces(&self, player: PlayerId) -> Vec<&Trace> {
        self.players[player].traces.iter().filter_map(|id| self.traces.get(id)).map(|s| &s.trace).collect()
    }

    /// Hex SHA-256 of the JSON serialization.
    pub fn state_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("match state serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn require(&self, op: &'static str, phase: Phase) -> Result<(), MatchError> {
        if self.phase == phase {
            Ok(())
        } else {
            Err(MatchError::WrongPhase { op, phase: self.phase })
        }
    }

    fn player_mut(&mut self, p: PlayerId) -> Result<&mut PlayerState, MatchError> {
        self.players.get_mut(p).ok_or(MatchError::UnknownPlayer(p))
    }

    fn enter(&mut self, phase: Phase) {
        debug_assert!(matches!(
            (self.phase, phase),
            (Phase::Planning, Phase::Execution) | (Phase::Execution, Phase::Planning) | (_, Phase::Finished)
        ));
        self.phase = phase;
        self.phase_clock_ms = 0;
        self.phase_deadline_ms = match phase {
            Phase::Planning => self.config.planning_ms,
            Phase::Execution => self.config.execution_ms,
            Phase::Finished => 0,
        };
        for p in &mut self.players {
            p.confirmed = false;
        }
    }

    pub fn record_playthrough(&mut self, player: PlayerId, actions: &[Action], trace_seed: u64) -> Result<TraceId, MatchError> {
        self.require("record", Phase::Planning)?;
        let p = self.player_mut(player)?;
        if p.recorded_this_phase {
            return Err(MatchError::AlreadyRecorded);
        }
        if actions.len() > p.playthrough_time as usize {
            return Err(MatchError::TooLong { len: actions.len(), budget: p.playthrough_time });
        }
        let trace = replay(&self.game, trace_seed, actions);
        let id = self.next_trace;
        self.next_trace += 1;
        let p = &mut self.players[player];
        p.recorded_this_phase = true;
        p.traces.push(id);
        self.traces.insert(id, StoredTrace { owner: player, trace });
        Ok(id)
    }

    pub fn purchase(&mut self, player: PlayerId, item: Item) -> Result<(), MatchError> {
        self.require("purchase", Phase::Planning)?;
        let price = item.price(&self.config)?;
        let time_upgrade = self.config.time_upgrade;
        let p = self.player_mut(player)?;
        if price > p.action_points {
            return Err(MatchError::InsufficientAp { price, available: p.action_points });
        }
        p.action_points -= price;
        match item {
            Item::Construct(_) => p.purchased_constructs += 1,
            Item::Attack => p.attack += 1,
            Item::Armour => p.armour += 1,
            Item::PlaythroughTime => p.playthrough_time += time_upgrade,
            Item::MutantCount => p.mutant_count_attr += 1,
        }
        Ok(())
    }

    /// Attaches `assertion` to one of the player's traces, consuming a
    /// construct. It must fit the trace and must not be violated on it.
    pub fn place_assertion(&mut self, player: PlayerId, trace_id: TraceId, mut assertion: Assertion) -> Result<(), MatchError> {
        self.require("place", Phase::Planning)?;
        if player > 1 {
            return Err(MatchError::UnknownPlayer(player));
        }
        let stored = self.traces.get(&trace_id).ok_or(MatchError::UnknownTrace(trace_id))?;
        if stored.owner != player {
            return Err(MatchError::NotOwner(trace_id));
        }
        if self.players[player].purchased_constructs == 0 {
            return Err(MatchError::NoConstruct);
        }
        let verdict = evaluate(&assertion, &stored.trace)?;
        if verdict.status == VerdictStatus::Violated {
            return Err(MatchError::InvalidOracle(verdict.violated_at.unwrap_or(0)));
        }
        assertion.owner = player;
        assertion.source_trace = trace_id;
        let p = &mut self.players[player];
        p.purchased_constructs -= 1;
        p.assertions.push(assertion);
        Ok(())
    }

    /// Marks the player done with the current phase. Once both are, the
    /// phase ends; a finished planning phase yields the execution report.
    pub fn confirm(&mut self, player: PlayerId) -> Result<Option<ExecutionReport>, MatchError> {
        if self.phase == Phase::Finished {
            return Err(MatchError::WrongPhase { op: "confirm", phase: self.phase });
        }
        self.player_mut(player)?.confirmed = true;
        if !self.players.iter().all(|p| p.confirmed) {
            return Ok(None);
        }
        match self.phase {
            Phase::Planning => self.end_planning().map(Some),
            _ => self.end_execution().map(|_| None),
        }
    }

    /// Advances the phase clock. Reaching the deadline ends the phase.
    pub fn advance_clock(&mut self, ms: u64) -> Result<Option<ExecutionReport>, MatchError> {
        if self.phase == Phase::Finished {
            return Err(MatchError::WrongPhase { op: "tick", phase: self.phase });
        }
        self.phase_clock_ms = self.phase_clock_ms.saturating_add(ms);
        if self.phase_clock_ms < self.phase_deadline_ms {
            return Ok(None);
        }
        match self.phase {
            Phase::Planning => self.end_planning().map(Some),
            _ => self.end_execution().map(|_| None),
        }
    }

    /// Runs the round's mutants against both players, applies damage and
    /// moves to the execution phase (or ends the match).
    pub fn end_planning(&mut self) -> Result<ExecutionReport, MatchError> {
        self.require("end_planning", Phase::Planning)?;
        let cfg = &self.config;
        let mut reports = Vec::with_capacity(2);
        for me in 0..2 {
            let them = 1 - me;
            let n = cfg.base_mutants + self.players[them].mutant_count_attr * cfg.mutants_per_level;
            let mutants = select_round_mutants(&self.game.script, n as usize, self.round_seed);
            let grouped = self.grouped_assertions(me);
            let defences: Vec<Defence<'_>> = self.players[me]
                .traces
                .iter()
                .map(|id| Defence { trace_id: *id, trace: &self.traces[id].trace, assertions: &grouped[id] })
                .collect();
            let results = execute(&self.game, &mutants, &defences);
            let survivors = results.iter().filter(|r| !r.killed).count() as u32;
            let dmg = damage(cfg, survivors, self.players[them].attack, self.players[me].armour);
            let traces = self.player_traces(me).into_iter().cloned().collect::<Vec<_>>();
            let cov = coverage(&traces, &self.game.script).unwrap_or(0.0);
            reports.push(PlayerReport {
                mutants: results,
                damage_taken: dmg,
                action_points_awarded: award_for_coverage(cfg, cov),
            });
        }
        for (p, r) in self.players.iter_mut().zip(&reports) {
            p.life = p.life.saturating_sub(r.damage_taken);
        }
        let [a, b]: [PlayerReport; 2] = reports.try_into().expect("two players");
        let report = ExecutionReport { round: self.round, round_seed: self.round_seed, players: [a, b] };
        self.last_report = Some(report.clone());
        self.enter(Phase::Execution);
        if let Some(outcome) = self.check_winner() {
            self.outcome = Some(outcome);
            self.enter(Phase::Finished);
        }
        Ok(report)
    }

    fn grouped_assertions(&self, player: PlayerId) -> BTreeMap<TraceId, Vec<Assertion>> {
        let p = &self.players[player];
        let mut out: BTreeMap<TraceId, Vec<Assertion>> = p.traces.iter().map(|id| (*id, Vec::new())).collect();
        for a in &p.assertions {
            out.entry(a.source_trace).or_default().push(a.clone());
        }
        out
    }

    /// Outcome after damage: a life at zero decides the match; otherwise
    /// the round cap decides by remaining life.
    pub fn check_winner(&self) -> Option<Outcome> {
        let life = [self.players[0].life, self.players[1].life];
        winner_by_life(life).or_else(|| {
            (self.round >= self.config.max_rounds).then(|| match life[0].cmp(&life[1]) {
                std::cmp::Ordering::Greater => Outcome::Winner(0),
                std::cmp::Ordering::Less => Outcome::Winner(1),
                std::cmp::Ordering::Equal => Outcome::Draw,
            })
        })
    }

    /// Pays each player's coverage award and grows playthrough budgets.
    /// Runs once per cycle, as part of [`MatchState::end_execution`].
    fn award_action_points(&mut self) -> Result<[u32; 2], MatchError> {
        self.require("award", Phase::Execution)?;
        let mut awarded = [0; 2];
        for (p, slot) in awarded.iter_mut().enumerate() {
            let traces = self.player_traces(p).into_iter().cloned().collect::<Vec<_>>();
            let cov = coverage(&traces, &self.game.script).unwrap_or(0.0);
            *slot = award_for_coverage(&self.config, cov);
        }
        for (p, a) in self.players.iter_mut().zip(awarded) {
            p.action_points += a;
            p.playthrough_time += self.config.time_growth;
        }
        Ok(awarded)
    }

    /// Leaves the execution phase: awards, then the next round's planning.
    pub fn end_execution(&mut self) -> Result<(), MatchError> {
        self.require("end_execution", Phase::Execution)?;
        self.award_action_points()?;
        self.round += 1;
        self.round_seed = round_seed(self.match_seed, self.round);
        for p in &mut self.players {
            p.recorded_this_phase = false;
        }
        self.enter(Phase::Planning);
        Ok(())
    }

    /// The player leaves; the opponent wins.
    pub fn forfeit(&mut self, player: PlayerId) -> Result<(), MatchError> {
        if self.phase == Phase::Finished {
            return Err(MatchError::WrongPhase { op: "forfeit", phase: self.phase });
        }
        if player > 1 {
            return Err(MatchError::UnknownPlayer(player));
        }
        self.outcome = Some(Outcome::Winner(1 - player));
        self.enter(Phase::Finished);
        Ok(())
    }

    /// Applies one logged command.
    pub fn apply(&mut self, cmd: &Command) -> Result<CommandOutcome, MatchError> {
        command::apply(self, cmd)
    }
}

#[cfg(test)]
mod tests;
