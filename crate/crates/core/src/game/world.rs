use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, LayoutError};
use crate::game::script::{Arith, Effect, Guard, Operand, RuleScript, StatementId, Var};
use crate::game::{Action, ActorKind, ObservationFrame, ActorObs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorSpawn {
    pub kind: ActorKind,
    pub x: i64,
    pub y: i64,
}

/// Static tile grid plus actor spawn points. Row `0` is the bottom row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    width: i64,
    height: i64,
    solid: Vec<bool>,
    spawns: Vec<ActorSpawn>,
}

impl Level {
    /// `spawns[0]` must be the only player.
    pub fn new(width: i64, height: i64, solid: Vec<bool>, spawns: Vec<ActorSpawn>) -> Result<Self, LayoutError> {
        if width <= 0 || height <= 0 || solid.len() as i64 != width * height {
            return Err(LayoutError::Dimensions { width, height, tiles: solid.len() });
        }
        match spawns.first() {
            Some(s) if s.kind == ActorKind::Player => {}
            _ => return Err(LayoutError::MissingPlayer),
        }
        if spawns.iter().filter(|s| s.kind == ActorKind::Player).count() != 1 {
            return Err(LayoutError::MultiplePlayers);
        }
        let level = Level { width, height, solid, spawns };
        for (i, s) in level.spawns.iter().enumerate() {
            if s.x < 0 || s.x >= width || s.y < 0 || s.y >= height {
                return Err(LayoutError::OutOfBounds { kind: s.kind, x: s.x, y: s.y });
            }
            if level.solid_at(s.x, s.y) {
                return Err(LayoutError::InsideSolid { kind: s.kind, x: s.x, y: s.y });
            }
            if level.spawns[..i].iter().any(|o| o.x == s.x && o.y == s.y) {
                return Err(LayoutError::Overlap { x: s.x, y: s.y });
            }
        }
        Ok(level)
    }

    /// ASCII layout, top row first: `#` solid, `.` empty, `P` player,
    /// `c` coin, `B` bomb, `G` goal.
    pub fn parse(text: &str) -> Result<Self, LayoutError> {
        let rows: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let height = rows.len() as i64;
        let width = rows.first().map_or(0, |r| r.len()) as i64;
        let mut solid = vec![false; (width * height).max(0) as usize];
        let mut player = Vec::new();
        let mut others = Vec::new();
        for (row_index, row) in rows.iter().enumerate() {
            if row.len() as i64 != width {
                return Err(LayoutError::RaggedRow { row: row_index });
            }
            let y = height - 1 - row_index as i64;
            for (x, c) in row.chars().enumerate() {
                let x = x as i64;
                let kind = match c {
                    '#' => {
                        solid[(y * width + x) as usize] = true;
                        continue;
                    }
                    '.' => continue,
                    'P' => ActorKind::Player,
                    'c' => ActorKind::Coin,
                    'B' => ActorKind::Bomb,
                    'G' => ActorKind::Goal,
                    other => return Err(LayoutError::UnknownTile(other)),
                };
                let spawn = ActorSpawn { kind, x, y };
                if kind == ActorKind::Player {
                    player.push(spawn);
                } else {
                    others.push(spawn);
                }
            }
        }
        // Actor ids: player first, then the others bottom-up, left to right.
        others.sort_by_key(|s| (s.y, s.x));
        player.extend(others);
        Level::new(width, height, solid, player)
    }

    /// Inverse of [`Level::parse`] for levels whose spawn order is the
    /// parsed one.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                let c = match self.spawns.iter().find(|s| s.x == x && s.y == y).map(|s| s.kind) {
                    Some(ActorKind::Player) => 'P',
                    Some(ActorKind::Coin) => 'c',
                    Some(ActorKind::Bomb) => 'B',
                    Some(ActorKind::Goal) => 'G',
                    None if self.solid_at(x, y) => '#',
                    None => '.',
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }

    pub fn width(&self) -> i64 {
        self.width
    }

    pub fn height(&self) -> i64 {
        self.height
    }

    pub fn spawns(&self) -> &[ActorSpawn] {
        &self.spawns
    }

    /// Out-of-bounds tiles are solid on the sides and top; below the bottom
    /// row is open so the player can fall out of the level.
    pub fn solid_at(&self, x: i64, y: i64) -> bool {
        if y < 0 {
            return false;
        }
        if x < 0 || x >= self.width || y >= self.height {
            return true;
        }
        self.solid[(y * self.width + x) as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub kind: ActorKind,
    pub x: i64,
    pub y: i64,
    pub alive: bool,
    /// Patrol direction, `1` or `-1`.
    pub dir: i64,
}

/// Full mutable state of one game. The actor id is the index into `actors`;
/// the player is always actor `0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub actors: Vec<Actor>,
    pub jump: i64,
    pub score: i64,
    pub game_over: bool,
    pub tick: u64,
    pub rng: ChaCha8Rng,
}

impl WorldState {
    pub fn player(&self) -> &Actor {
        &self.actors[0]
    }

    pub fn observe(&self) -> ObservationFrame {
        ObservationFrame {
            tick: self.tick,
            score: self.score,
            game_over: self.game_over,
            actors: self
                .actors
                .iter()
                .map(|a| ActorObs { kind: a.kind, x: a.x, y: a.y, alive: a.alive })
                .collect(),
        }
    }
}

/// A script bound to a level: everything needed to run the game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Game {
    pub script: RuleScript,
    pub level: Level,
}

impl Game {
    pub fn new(script: RuleScript, level: Level) -> Self {
        Game { script, level }
    }

    pub fn with_script(&self, script: RuleScript) -> Self {
        Game { script, level: self.level.clone() }
    }

    pub fn new_world(&self, seed: u64) -> WorldState {
        let actors = self
            .level
            .spawns()
            .iter()
            .map(|s| Actor { kind: s.kind, x: s.x, y: s.y, alive: true, dir: 1 })
            .collect();
        WorldState { actors, jump: 0, score: 0, game_over: false, tick: 0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Advances one tick. Returns the ids of the statements whose guards held,
    /// in script order.
    pub fn step(&self, state: &WorldState, action: Action) -> Result<(WorldState, Vec<StatementId>), EngineError> {
        let mut next = state.clone();
        let executed = self.step_in_place(&mut next, action)?;
        Ok((next, executed))
    }

    pub fn step_in_place(&self, state: &mut WorldState, action: Action) -> Result<Vec<StatementId>, EngineError> {
        if state.game_over {
            return Err(EngineError::Terminal { tick: state.tick });
        }
        let mut executed = Vec::new();
        for stmt in self.script.statements() {
            let mut ctx = Ctx { level: &self.level, state: &mut *state, action };
            if ctx.guard(&stmt.guard) {
                executed.push(stmt.id);
                ctx.effect(&stmt.effect);
            }
        }
        state.tick += 1;
        Ok(executed)
    }
}

/// Validates the level against the script's world schema and builds the
/// initial state.
pub fn new_world(script: &RuleScript, level: &Level, seed: u64) -> Result<WorldState, LayoutError> {
    let checked = Level::new(level.width, level.height, level.solid.clone(), level.spawns.clone())?;
    Ok(Game::new(script.clone(), checked).new_world(seed))
}

struct Ctx<'a> {
    level: &'a Level,
    state: &'a mut WorldState,
    action: Action,
}

impl Ctx<'_> {
    fn operand(&mut self, op: &Operand) -> i64 {
        match op {
            Operand::Lit(v) => *v,
            Operand::Action(a) => a.ordinal(),
            Operand::Rand(n) => {
                let draw = self.state.rng.next_u64();
                if *n > 0 {
                    (draw % *n as u64) as i64
                } else {
                    0
                }
            }
            Operand::Var(var) => match var {
                Var::X => self.state.actors[0].x,
                Var::Y => self.state.actors[0].y,
                Var::Jump => self.state.jump,
                Var::Score => self.state.score,
                Var::Tick => self.state.tick as i64,
                Var::Action => self.action.ordinal(),
            },
        }
    }

    fn arith(&mut self, a: &Arith) -> i64 {
        let lhs = self.operand(&a.lhs);
        match &a.rhs {
            Some((op, rhs)) => {
                let rhs = self.operand(rhs);
                op.apply(lhs, rhs)
            }
            None => lhs,
        }
    }

    fn guard(&mut self, g: &Guard) -> bool {
        match g {
            Guard::True => true,
            Guard::Cmp(lhs, op, rhs) => {
                let l = self.arith(lhs);
                let r = self.arith(rhs);
                op.holds(l, r)
            }
            Guard::Solid(dx, dy) => {
                let p = &self.state.actors[0];
                self.level.solid_at(p.x.wrapping_add(*dx), p.y.wrapping_add(*dy))
            }
            Guard::Touch(kind) => {
                let (px, py) = (self.state.actors[0].x, self.state.actors[0].y);
                self.state.actors[1..].iter().any(|a| a.alive && a.kind == *kind && a.x == px && a.y == py)
            }
            Guard::Not(inner) => !self.guard(inner),
            // Both sides are always evaluated so `rand` draws do not depend on
            // the left operand.
            Guard::And(a, b) => {
                let l = self.guard(a);
                let r = self.guard(b);
                l && r
            }
        }
    }

    fn effect(&mut self, e: &Effect) {
        match e {
            Effect::GameOver => self.state.game_over = true,
            Effect::Skip => {}
            Effect::Assign(var, value) => {
                let v = self.arith(value);
                match var {
                    Var::X => self.state.actors[0].x = v,
                    Var::Y => self.state.actors[0].y = v,
                    Var::Jump => self.state.jump = v,
                    Var::Score => self.state.score = v,
                    Var::Tick | Var::Action => unreachable!("validated at script construction"),
                }
            }
            Effect::Collect(kind) => {
                let (px, py) = (self.state.actors[0].x, self.state.actors[0].y);
                for a in self.state.actors[1..].iter_mut() {
                    if a.alive && a.kind == *kind && a.x == px && a.y == py {
                        a.alive = false;
                    }
                }
            }
            Effect::Flip(kind) => {
                for a in self.state.actors[1..].iter_mut() {
                    if a.alive && a.kind == *kind {
                        a.dir = -a.dir;
                    }
                }
            }
            Effect::Patrol(kind) => {
                for a in self.state.actors[1..].iter_mut() {
                    if !(a.alive && a.kind == *kind) {
                        continue;
                    }
                    let nx = a.x + a.dir;
                    if !self.level.solid_at(nx, a.y) && self.level.solid_at(nx, a.y - 1) {
                        a.x = nx;
                    } else {
                        a.dir = -a.dir;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{default_game, default_level, default_script, statement_ids};

    #[test]
    fn initial_state_by_construction() {
        let game = default_game();
        let s = game.new_world(0);
        let spawn = game.level.spawns()[0];
        assert_eq!((s.player().x, s.player().y), (spawn.x, spawn.y));
        assert_eq!(s.score, 0);
        assert!(!s.game_over);
        assert_eq!(s.tick, 0);
        assert_eq!(s, game.new_world(0));
    }

    #[test]
    fn seeds_only_change_the_generator() {
        let game = default_game();
        let mut a = game.new_world(7);
        let b = game.new_world(8);
        assert_ne!(a, b);
        a.rng = b.rng.clone();
        assert_eq!(a, b);
    }

    #[test]
    fn level_text_round_trip() {
        let level = default_level();
        assert_eq!(level.to_text().trim(), crate::game::DEFAULT_LEVEL.trim());
        assert_eq!(Level::parse(&level.to_text()).unwrap(), level);
    }

    #[test]
    fn free_function_validates_layout() {
        let level = default_level();
        assert!(new_world(&default_script(), &level, 3).is_ok());
    }

    #[test]
    fn layout_errors() {
        assert!(matches!(Level::parse("..\n.."), Err(LayoutError::MissingPlayer)));
        assert!(matches!(Level::parse("P.\n.P"), Err(LayoutError::MultiplePlayers)));
        assert!(matches!(Level::parse("P.\n..."), Err(LayoutError::RaggedRow { .. })));
        assert!(matches!(Level::parse("P?"), Err(LayoutError::UnknownTile('?'))));
        let solid = vec![true, false];
        let spawns = vec![ActorSpawn { kind: ActorKind::Player, x: 0, y: 0 }];
        assert!(matches!(Level::new(2, 1, solid, spawns), Err(LayoutError::InsideSolid { .. })));
        let spawns = vec![
            ActorSpawn { kind: ActorKind::Player, x: 1, y: 0 },
            ActorSpawn { kind: ActorKind::Coin, x: 1, y: 0 },
        ];
        assert!(matches!(Level::new(2, 1, vec![false, false], spawns), Err(LayoutError::Overlap { .. })));
    }

    #[test]
    fn stepping_a_finished_game_fails() {
        let game = default_game();
        let mut s = game.new_world(0);
        s.game_over = true;
        assert!(matches!(game.step(&s, Action::NoOp), Err(EngineError::Terminal { .. })));
    }

    #[test]
    fn idle_step_keeps_player_in_place() {
        let game = default_game();
        let s = game.new_world(0);
        let (next, executed) = game.step(&s, Action::NoOp).unwrap();
        assert_eq!(next.tick, 1);
        assert_eq!(next.player(), s.player());
        let ids = statement_ids();
        for id in &executed {
            assert!([ids.bomb_flip, ids.bomb_patrol].contains(id), "statement {id} fired on idle step");
        }
    }

    #[test]
    fn walking_onto_a_coin_collects_it_next_tick() {
        let game = default_game();
        let ids = statement_ids();
        let coin = game.level.spawns().iter().position(|s| s.kind == ActorKind::Coin).unwrap();
        let spawn = game.level.spawns()[coin];
        // Put the player directly left of the coin.
        let mut s = game.new_world(0);
        s.actors[0].x = spawn.x - 1;
        s.actors[0].y = spawn.y;
        let (s1, ex1) = game.step(&s, Action::Right).unwrap();
        assert_eq!((s1.player().x, s1.player().y), (spawn.x, spawn.y));
        assert!(!ex1.contains(&ids.coin_score));
        let (s2, ex2) = game.step(&s1, Action::NoOp).unwrap();
        assert!(ex2.contains(&ids.coin_score) && ex2.contains(&ids.coin_collect));
        assert_eq!(s2.score, s.score + 10);
        assert!(!s2.actors[coin].alive);
    }

    #[test]
    fn falling_into_a_hole_ends_the_game() {
        let game = default_game();
        let hole_x = (0..game.level.width()).find(|&x| !game.level.solid_at(x, 0)).unwrap();
        let mut s = game.new_world(0);
        s.actors[0].x = hole_x;
        s.actors[0].y = 1;
        let mut steps = 0;
        while !s.game_over {
            s = game.step(&s, Action::NoOp).unwrap().0;
            steps += 1;
            assert!(steps <= 4, "fell for too long");
        }
        assert!(s.player().y < 0);
    }

    #[test]
    fn touching_a_bomb_ends_the_game() {
        let game = default_game();
        let bomb = game.level.spawns().iter().position(|s| s.kind == ActorKind::Bomb).unwrap();
        let mut s = game.new_world(0);
        s.actors[0].x = s.actors[bomb].x;
        s.actors[0].y = s.actors[bomb].y;
        let (next, executed) = game.step(&s, Action::NoOp).unwrap();
        assert!(next.game_over);
        assert!(executed.contains(&statement_ids().bomb));
    }
}
