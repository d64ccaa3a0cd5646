use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{FormatError, IntegrityError};
use crate::game::script::{RuleScript, StatementId};
use crate::game::{Action, ActorKind, Game};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActorObs {
    pub kind: ActorKind,
    pub x: i64,
    pub y: i64,
    pub alive: bool,
}

/// What a renderer or an assertion sees of the world after a tick.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObservationFrame {
    pub tick: u64,
    pub score: i64,
    pub game_over: bool,
    pub actors: Vec<ActorObs>,
}

impl ObservationFrame {
    pub fn player(&self) -> &ActorObs {
        &self.actors[0]
    }
}

/// A recorded playthrough.
///
/// Steps are numbered `0..=len()`: step `0` is the initial frame and step `k`
/// is the frame after the `k`-th action. `frames[k - 1]` and `covered[k - 1]`
/// belong to step `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub script_hash: String,
    pub seed: u64,
    pub actions: Vec<Action>,
    pub initial: ObservationFrame,
    pub frames: Vec<ObservationFrame>,
    pub covered: Vec<BTreeSet<StatementId>>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Observation at step `step` (`0` is the initial frame).
    pub fn observation(&self, step: usize) -> Option<&ObservationFrame> {
        if step == 0 {
            Some(&self.initial)
        } else {
            self.frames.get(step - 1)
        }
    }

    pub fn last_observation(&self) -> &ObservationFrame {
        self.frames.last().unwrap_or(&self.initial)
    }

    /// True when the trace ended because the game did.
    pub fn is_terminal(&self) -> bool {
        self.last_observation().game_over
    }

    /// Statement ids executed at step `step` (empty for step 0).
    pub fn covered_at(&self, step: usize) -> Option<&BTreeSet<StatementId>> {
        if step == 0 {
            None
        } else {
            self.covered.get(step - 1)
        }
    }

    /// Union of all covered statement ids.
    pub fn covered_union(&self) -> BTreeSet<StatementId> {
        self.covered.iter().flatten().copied().collect()
    }

    /// First step at which `statement` executed.
    pub fn first_coverage_of(&self, statement: StatementId) -> Option<usize> {
        self.covered.iter().position(|c| c.contains(&statement)).map(|i| i + 1)
    }

    pub fn check_invariants(&self) -> Result<(), IntegrityError> {
        let n = self.actions.len();
        if self.frames.len() != n || self.covered.len() != n {
            return Err(IntegrityError::TraceShape { actions: n, frames: self.frames.len(), covered: self.covered.len() });
        }
        if let Some(pos) = self.frames.iter().position(|f| f.game_over) {
            if pos + 1 != n {
                return Err(IntegrityError::FrameAfterGameOver { step: pos + 1 });
            }
        }
        Ok(())
    }

    /// Tab-separated text form: header, actor kinds, actions, then the
    /// initial frame and one line per step.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "TRACE\t{}\t{}\t{}", self.script_hash, self.seed, self.len());
        out.push_str("ACTORS");
        for a in &self.initial.actors {
            out.push('\t');
            out.push_str(a.kind.script_name());
        }
        out.push('\n');
        out.push_str("ACTIONS");
        for a in &self.actions {
            out.push('\t');
            out.push_str(a.name());
        }
        out.push('\n');
        write_frame(&mut out, "INIT", &self.initial, None);
        for (frame, covered) in self.frames.iter().zip(&self.covered) {
            write_frame(&mut out, "FRAME", frame, Some(covered));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Trace, FormatError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.is_empty());
        let mut next = |what: &str| lines.next().ok_or_else(|| FormatError::new(0, format!("missing {what} line")));

        let (ln, header) = next("TRACE")?;
        let h: Vec<&str> = header.split('\t').collect();
        if h.len() != 4 || h[0] != "TRACE" {
            return Err(FormatError::new(ln + 1, "expected `TRACE<TAB>hash<TAB>seed<TAB>length`"));
        }
        let script_hash = h[1].to_string();
        let seed = parse_num::<u64>(h[2], ln)?;
        let length = parse_num::<usize>(h[3], ln)?;

        let (ln, kinds_line) = next("ACTORS")?;
        let mut kinds_fields = kinds_line.split('\t');
        if kinds_fields.next() != Some("ACTORS") {
            return Err(FormatError::new(ln + 1, "expected ACTORS line"));
        }
        let kinds = kinds_fields
            .map(|k| ActorKind::from_script_name(k).ok_or_else(|| FormatError::new(ln + 1, format!("unknown actor `{k}`"))))
            .collect::<Result<Vec<_>, _>>()?;

        let (ln, actions_line) = next("ACTIONS")?;
        let mut action_fields = actions_line.split('\t');
        if action_fields.next() != Some("ACTIONS") {
            return Err(FormatError::new(ln + 1, "expected ACTIONS line"));
        }
        let actions = action_fields
            .map(|a| Action::from_name(a).ok_or_else(|| FormatError::new(ln + 1, format!("unknown action `{a}`"))))
            .collect::<Result<Vec<_>, _>>()?;

        let (ln, init_line) = next("INIT")?;
        let (initial, _) = read_frame(init_line, "INIT", &kinds, ln)?;
        let mut frames = Vec::with_capacity(length);
        let mut covered = Vec::with_capacity(length);
        for _ in 0..length {
            let (ln, line) = next("FRAME")?;
            let (frame, cov) = read_frame(line, "FRAME", &kinds, ln)?;
            frames.push(frame);
            covered.push(cov);
        }
        let trace = Trace { script_hash, seed, actions, initial, frames, covered };
        trace.check_invariants().map_err(|e| FormatError::new(0, e.to_string()))?;
        Ok(trace)
    }
}

fn write_frame(out: &mut String, tag: &str, frame: &ObservationFrame, covered: Option<&BTreeSet<StatementId>>) {
    let cov = match covered {
        Some(c) if !c.is_empty() => c.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(","),
        _ => "-".to_string(),
    };
    let _ = write!(out, "{tag}\t{}\t{}\t{}\t{cov}", frame.tick, frame.score, u8::from(frame.game_over));
    for a in &frame.actors {
        let _ = write!(out, "\t{}\t{}\t{}", a.x, a.y, u8::from(a.alive));
    }
    out.push('\n');
}

fn parse_num<T: std::str::FromStr>(s: &str, ln: usize) -> Result<T, FormatError> {
    s.parse::<T>().map_err(|_| FormatError::new(ln + 1, format!("bad number `{s}`")))
}

fn parse_flag(s: &str, ln: usize) -> Result<bool, FormatError> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(FormatError::new(ln + 1, format!("bad flag `{s}`"))),
    }
}

fn read_frame(
    line: &str,
    tag: &str,
    kinds: &[ActorKind],
    ln: usize,
) -> Result<(ObservationFrame, BTreeSet<StatementId>), FormatError> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.first() != Some(&tag) || f.len() != 5 + 3 * kinds.len() {
        return Err(FormatError::new(ln + 1, format!("malformed {tag} line")));
    }
    let covered = if f[4] == "-" {
        BTreeSet::new()
    } else {
        f[4].split(',').map(|id| parse_num::<StatementId>(id, ln)).collect::<Result<_, _>>()?
    };
    let mut actors = Vec::with_capacity(kinds.len());
    for (i, kind) in kinds.iter().enumerate() {
        let base = 5 + 3 * i;
        actors.push(ActorObs {
            kind: *kind,
            x: parse_num(f[base], ln)?,
            y: parse_num(f[base + 1], ln)?,
            alive: parse_flag(f[base + 2], ln)?,
        });
    }
    let frame = ObservationFrame {
        tick: parse_num(f[1], ln)?,
        score: parse_num(f[2], ln)?,
        game_over: parse_flag(f[3], ln)?,
        actors,
    };
    Ok((frame, covered))
}

/// Re-executes `actions` from a fresh world seeded with `seed`. Stops early,
/// recording the terminal frame, when the game ends.
pub fn replay(game: &Game, seed: u64, actions: &[Action]) -> Trace {
    let mut state = game.new_world(seed);
    let initial = state.observe();
    let mut frames = Vec::with_capacity(actions.len());
    let mut covered = Vec::with_capacity(actions.len());
    let mut taken = Vec::with_capacity(actions.len());
    for &action in actions {
        let executed = game.step_in_place(&mut state, action).expect("replay never steps a finished game");
        taken.push(action);
        frames.push(state.observe());
        covered.push(executed.into_iter().collect());
        if state.game_over {
            break;
        }
    }
    Trace { script_hash: game.script.hash(), seed, actions: taken, initial, frames, covered }
}

/// Fraction of the script's statements executed by at least one trace.
pub fn coverage(traces: &[Trace], script: &RuleScript) -> Result<f64, IntegrityError> {
    let mut union = BTreeSet::new();
    for trace in traces {
        for id in trace.covered.iter().flatten() {
            if *id >= script.len() {
                return Err(IntegrityError::UnknownStatement(*id));
            }
            union.insert(*id);
        }
    }
    if script.is_empty() {
        return Ok(0.0);
    }
    Ok(union.len() as f64 / script.len() as f64)
}
