//! GridTux: a small deterministic grid platformer whose rules live in a
//! [`RuleScript`], so that statement coverage and mutation are meaningful.
//!
//! One [`Action`] is consumed per tick. The display convention is
//! [`TICKS_PER_SECOND`] ticks to a second of playthrough time. The only
//! source of randomness is the seeded world generator (bomb patrol flips).
//!
//! Contacts are resolved at the start of the tick after they happen: the
//! bundled script lists its interaction statements (coins, bombs, holes,
//! goal) before its movement statements.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod script;
pub mod trace;
pub mod world;

pub use script::{RuleScript, RuleStatement, StatementId};
pub use trace::{coverage, replay, ActorObs, ObservationFrame, Trace};
pub use world::{new_world, Actor, ActorSpawn, Game, Level, WorldState};

pub const TICKS_PER_SECOND: u64 = 10;

pub const DEFAULT_SCRIPT: &str = include_str!("../../assets/gridtux.rules");
pub const DEFAULT_LEVEL: &str = include_str!("../../assets/gridtux.level");

/// Player input for one tick. Variants are declared in their canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Left,
    Right,
    Jump,
    NoOp,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Left, Action::Right, Action::Jump, Action::NoOp];

    pub fn name(self) -> &'static str {
        match self {
            Action::Left => "Left",
            Action::Right => "Right",
            Action::Jump => "Jump",
            Action::NoOp => "NoOp",
        }
    }

    pub fn ordinal(self) -> i64 {
        self as i64
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(s: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.name() == s)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a comma-separated action list; the empty string is the empty list.
pub fn parse_actions(s: &str) -> Option<Vec<Action>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(Action::from_name).collect()
}

pub fn format_actions(actions: &[Action]) -> String {
    actions.iter().map(|a| a.name()).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActorKind {
    Player,
    Coin,
    Bomb,
    Goal,
}

impl ActorKind {
    pub const ALL: [ActorKind; 4] = [ActorKind::Player, ActorKind::Coin, ActorKind::Bomb, ActorKind::Goal];

    /// Lower-case name used in rule scripts and trace files.
    pub fn script_name(self) -> &'static str {
        match self {
            ActorKind::Player => "player",
            ActorKind::Coin => "coin",
            ActorKind::Bomb => "bomb",
            ActorKind::Goal => "goal",
        }
    }

    /// Capitalised name used by assertion blocks.
    pub fn block_name(self) -> &'static str {
        match self {
            ActorKind::Player => "Player",
            ActorKind::Coin => "Coin",
            ActorKind::Bomb => "Bomb",
            ActorKind::Goal => "Goal",
        }
    }

    pub fn from_script_name(s: &str) -> Option<ActorKind> {
        ActorKind::ALL.into_iter().find(|k| k.script_name() == s)
    }

    pub fn from_block_name(s: &str) -> Option<ActorKind> {
        ActorKind::ALL.into_iter().find(|k| k.block_name() == s)
    }
}

pub fn default_script() -> RuleScript {
    RuleScript::parse(DEFAULT_SCRIPT).expect("bundled script parses")
}

pub fn default_level() -> Level {
    Level::parse(DEFAULT_LEVEL).expect("bundled level parses")
}

pub fn default_game() -> Game {
    Game::new(default_script(), default_level())
}

/// Statement ids of the bundled script, by role.
#[derive(Debug, Clone, Copy)]
pub struct StatementIds {
    pub coin_score: StatementId,
    pub coin_collect: StatementId,
    pub bomb: StatementId,
    pub hole: StatementId,
    pub goal_score: StatementId,
    pub goal_end: StatementId,
    pub left: StatementId,
    pub right: StatementId,
    pub jump: StatementId,
    pub head_bump: StatementId,
    pub rise: StatementId,
    pub jump_decay: StatementId,
    pub gravity: StatementId,
    pub bomb_flip: StatementId,
    pub bomb_patrol: StatementId,
}

pub fn statement_ids() -> StatementIds {
    StatementIds {
        coin_score: 0,
        coin_collect: 1,
        bomb: 2,
        hole: 3,
        goal_score: 4,
        goal_end: 5,
        left: 6,
        right: 7,
        jump: 8,
        head_bump: 9,
        rise: 10,
        jump_decay: 11,
        gravity: 12,
        bomb_flip: 13,
        bomb_patrol: 14,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_assets_load() {
        let script = default_script();
        assert_eq!(script.len(), 15);
        assert_eq!(script.to_canonical(), DEFAULT_SCRIPT);
        let level = default_level();
        assert_eq!((level.width(), level.height()), (32, 8));
        assert_eq!(level.spawns()[0].kind, ActorKind::Player);
    }

    #[test]
    fn statement_roles_match_script() {
        let s = default_script();
        let ids = statement_ids();
        assert_eq!(s.statement(ids.hole).unwrap().to_string(), "3: IF y < 0 THEN game_over");
        assert_eq!(s.statement(ids.bomb).unwrap().to_string(), "2: IF touch(bomb) THEN game_over");
        assert!(s.statement(ids.coin_score).unwrap().to_string().contains("score = score + 10"));
        assert!(s.statement(ids.bomb_patrol).unwrap().to_string().contains("patrol(bomb)"));
    }

    #[test]
    fn actions_are_totally_ordered() {
        assert!(Action::Left < Action::Right && Action::Right < Action::Jump && Action::Jump < Action::NoOp);
        assert_eq!(parse_actions("Left,NoOp"), Some(vec![Action::Left, Action::NoOp]));
        assert_eq!(parse_actions(""), Some(vec![]));
        assert_eq!(parse_actions("Up"), None);
        assert_eq!(format_actions(&[Action::Jump, Action::Right]), "Jump,Right");
    }
}
