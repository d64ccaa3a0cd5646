use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsl::{parse, Assertion, PlayerId, TraceId};
use crate::error::FormatError;
use crate::game::{format_actions, parse_actions, Action};

use super::{ExecutionReport, Item, MatchError, MatchState};

/// One state change of a match. A match is the fold of its command log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    Record { player: PlayerId, seed: u64, actions: Vec<Action> },
    Purchase { player: PlayerId, item: Item },
    Place { player: PlayerId, trace: TraceId, assertion: Assertion },
    Confirm { player: PlayerId },
    Tick { ms: u64 },
    Forfeit { player: PlayerId },
    EndPlanning,
    EndExecution,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommandOutcome {
    Done,
    Recorded(TraceId),
    Executed(Box<ExecutionReport>),
}

pub(super) fn apply(m: &mut MatchState, cmd: &Command) -> Result<CommandOutcome, MatchError> {
    let report = |r: Option<ExecutionReport>| r.map_or(CommandOutcome::Done, |r| CommandOutcome::Executed(Box::new(r)));
    Ok(match cmd {
        Command::Record { player, seed, actions } => CommandOutcome::Recorded(m.record_playthrough(*player, actions, *seed)?),
        Command::Purchase { player, item } => {
            m.purchase(*player, *item)?;
            CommandOutcome::Done
        }
        Command::Place { player, trace, assertion } => {
            m.place_assertion(*player, *trace, assertion.clone())?;
            CommandOutcome::Done
        }
        Command::Confirm { player } => report(m.confirm(*player)?),
        Command::Tick { ms } => report(m.advance_clock(*ms)?),
        Command::Forfeit { player } => {
            m.forfeit(*player)?;
            CommandOutcome::Done
        }
        Command::EndPlanning => CommandOutcome::Executed(Box::new(m.end_planning()?)),
        Command::EndExecution => {
            m.end_execution()?;
            CommandOutcome::Done
        }
    })
}

/// Tab-separated, one command per line.
impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Record { player, seed, actions } => write!(f, "record\t{player}\t{seed}\t{}", format_actions(actions)),
            Command::Purchase { player, item } => write!(f, "purchase\t{player}\t{}", item.name()),
            Command::Place { player, trace, assertion } => write!(f, "place\t{player}\t{trace}\t{}", assertion.to_text()),
            Command::Confirm { player } => write!(f, "confirm\t{player}"),
            Command::Tick { ms } => write!(f, "tick\t{ms}"),
            Command::Forfeit { player } => write!(f, "forfeit\t{player}"),
            Command::EndPlanning => f.write_str("end-planning"),
            Command::EndExecution => f.write_str("end-execution"),
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.split('\t').collect();
        let num = |i: usize| -> Result<u64, String> {
            f.get(i).ok_or_else(|| format!("missing field {i}"))?.parse().map_err(|_| format!("bad number in field {i}"))
        };
        let arity = |n: usize| if f.len() == n { Ok(()) } else { Err(format!("`{}` takes {} fields", f[0], n - 1)) };
        let cmd = match f[0] {
            "record" => {
                arity(4)?;
                let actions = parse_actions(f[3]).ok_or("bad action list")?;
                Command::Record { player: num(1)? as PlayerId, seed: num(2)?, actions }
            }
            "purchase" => {
                arity(3)?;
                Command::Purchase { player: num(1)? as PlayerId, item: Item::from_name(f[2]).ok_or("unknown item")? }
            }
            "place" => {
                arity(4)?;
                let assertion = parse(f[3]).map_err(|e| e.to_string())?;
                Command::Place { player: num(1)? as PlayerId, trace: num(2)? as TraceId, assertion }
            }
            "confirm" => {
                arity(2)?;
                Command::Confirm { player: num(1)? as PlayerId }
            }
            "tick" => {
                arity(2)?;
                Command::Tick { ms: num(1)? }
            }
            "forfeit" => {
                arity(2)?;
                Command::Forfeit { player: num(1)? as PlayerId }
            }
            "end-planning" => {
                arity(1)?;
                Command::EndPlanning
            }
            "end-execution" => {
                arity(1)?;
                Command::EndExecution
            }
            other => return Err(format!("unknown command `{other}`")),
        };
        Ok(cmd)
    }
}

impl Command {
    pub fn parse_log(text: &str) -> Result<Vec<Command>, FormatError> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| l.parse().map_err(|e: String| FormatError::new(i + 1, e)))
            .collect()
    }
}
