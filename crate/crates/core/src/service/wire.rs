//! Length-prefixed text messages between the server and its clients.
//!
//! A frame is a 4-byte big-endian length followed by that many bytes of
//! UTF-8:
//!
//! ```text
//! <kind>
//! match<TAB><id>
//! token<TAB><token>
//! seq<TAB><n>
//!
//! <payload lines>
//! ```

use std::fmt::{self, Write as _};
use std::io::{self, Read, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::dsl::{parse as parse_assertion, PlayerId, TraceId};
use crate::game::{format_actions, parse_actions, Trace};
use crate::matchplay::{Command, ExecutionReport, Item, MatchState, Outcome, Phase};

pub const MAX_FRAME: usize = 16 << 20;

#[derive(Debug, Error)]
pub enum WireError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("frame is not UTF-8")]
    Utf8,
    #[error("malformed message: {0}")]
    Malformed(String),
}

fn malformed(msg: impl Into<String>) -> WireError {
    WireError::Malformed(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Join,
    StateSnapshot,
    RecordActions,
    Purchase,
    PlaceAssertion,
    ConfirmDone,
    ExecutionReport,
    Error,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::Join,
        Kind::StateSnapshot,
        Kind::RecordActions,
        Kind::Purchase,
        Kind::PlaceAssertion,
        Kind::ConfirmDone,
        Kind::ExecutionReport,
        Kind::Error,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Join => "join",
            Kind::StateSnapshot => "state_snapshot",
            Kind::RecordActions => "record_actions",
            Kind::Purchase => "purchase",
            Kind::PlaceAssertion => "place_assertion",
            Kind::ConfirmDone => "confirm_done",
            Kind::ExecutionReport => "execution_report",
            Kind::Error => "error",
        }
    }

    /// Kinds a client may send.
    pub fn client_originated(self) -> bool {
        matches!(self, Kind::Join | Kind::RecordActions | Kind::Purchase | Kind::PlaceAssertion | Kind::ConfirmDone)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = WireError;

    fn from_str(s: &str) -> Result<Self, WireError> {
        Kind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| malformed(format!("unknown kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub kind: Kind,
    pub match_id: String,
    pub token: String,
    pub seq: u64,
    pub payload: String,
}

impl WireMessage {
    pub fn new(kind: Kind, match_id: impl Into<String>, token: impl Into<String>, seq: u64, payload: impl Into<String>) -> Self {
        WireMessage { kind, match_id: match_id.into(), token: token.into(), seq, payload: payload.into() }
    }

    pub fn to_text(&self) -> String {
        format!(
            "{}\nmatch\t{}\ntoken\t{}\nseq\t{}\n\n{}",
            self.kind, self.match_id, self.token, self.seq, self.payload
        )
    }

    pub fn parse(text: &str) -> Result<WireMessage, WireError> {
        let (head, payload) = text.split_once("\n\n").ok_or_else(|| malformed("missing blank line after headers"))?;
        let mut lines = head.lines();
        let kind: Kind = lines.next().unwrap_or_default().parse()?;
        let mut header = |name: &str| -> Result<String, WireError> {
            let line = lines.next().ok_or_else(|| malformed(format!("missing `{name}` header")))?;
            match line.split_once('\t') {
                Some((k, v)) if k == name && !v.contains('\t') => Ok(v.to_string()),
                _ => Err(malformed(format!("expected `{name}` header, got `{line}`"))),
            }
        };
        let match_id = header("match")?;
        let token = header("token")?;
        let seq = header("seq")?.parse().map_err(|_| malformed("bad sequence number"))?;
        if lines.next().is_some() {
            return Err(malformed("unexpected header line"));
        }
        Ok(WireMessage { kind, match_id, token, seq, payload: payload.to_string() })
    }

    pub fn encode(&self) -> Vec<u8> {
        let body = self.to_text().into_bytes();
        let mut out = Vec::with_capacity(body.len() + 4);
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }
}

pub fn write_message(w: &mut impl Write, msg: &WireMessage) -> Result<(), WireError> {
    w.write_all(&msg.encode())?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. `Ok(None)` on a clean end of stream before a frame
/// starts. Frame-level failures after the body was read still consume it,
/// so the stream stays in sync.
pub fn read_message(r: &mut impl Read) -> Result<Option<WireMessage>, WireError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(WireError::TooLarge(n));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body)?;
    let text = String::from_utf8(body).map_err(|_| WireError::Utf8)?;
    WireMessage::parse(&text).map(Some)
}

fn field<'a>(payload: &'a str, name: &str) -> Result<&'a str, WireError> {
    payload
        .lines()
        .find_map(|l| l.split_once('\t').filter(|(k, _)| *k == name).map(|(_, v)| v))
        .ok_or_else(|| malformed(format!("missing `{name}` field")))
}

/// Payloads of the client-originated command kinds.
pub fn command_payload(cmd: &Command) -> Option<(Kind, String)> {
    Some(match cmd {
        Command::Record { seed, actions, .. } => {
            (Kind::RecordActions, format!("seed\t{seed}\nactions\t{}\n", format_actions(actions)))
        }
        Command::Purchase { item, .. } => (Kind::Purchase, format!("item\t{}\n", item.name())),
        Command::Place { trace, assertion, .. } => {
            (Kind::PlaceAssertion, format!("trace\t{trace}\nassertion\t{}\n", assertion.to_text()))
        }
        Command::Confirm { .. } => (Kind::ConfirmDone, String::new()),
        _ => return None,
    })
}

/// The match command a client message asks for, on behalf of `player`.
pub fn to_command(msg: &WireMessage, player: PlayerId) -> Result<Command, WireError> {
    let p = msg.payload.as_str();
    Ok(match msg.kind {
        Kind::RecordActions => Command::Record {
            player,
            seed: field(p, "seed")?.parse().map_err(|_| malformed("bad seed"))?,
            actions: parse_actions(field(p, "actions")?).ok_or_else(|| malformed("bad action list"))?,
        },
        Kind::Purchase => {
            let name = field(p, "item")?;
            Command::Purchase { player, item: Item::from_name(name).ok_or_else(|| malformed(format!("unknown item `{name}`")))? }
        }
        Kind::PlaceAssertion => Command::Place {
            player,
            trace: field(p, "trace")?.parse().map_err(|_| malformed("bad trace id"))?,
            assertion: parse_assertion(field(p, "assertion")?).map_err(|e| malformed(e.to_string()))?,
        },
        Kind::ConfirmDone => Command::Confirm { player },
        other => return Err(malformed(format!("`{other}` is not a command"))),
    })
}

fn push_block(out: &mut String, tag: &str, id: u64, body: &str) {
    let _ = writeln!(out, "BEGIN\t{tag}\t{id}");
    out.push_str(body);
    if !body.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("END\n");
}

/// Tag, id and body of a `BEGIN`/`END` block.
type Block = (String, u64, String);

/// Splits payload text into plain lines and `BEGIN`/`END` blocks.
fn split_blocks(payload: &str) -> Result<(Vec<&str>, Vec<Block>), WireError> {
    let mut plain = Vec::new();
    let mut blocks = Vec::new();
    let mut lines = payload.lines();
    while let Some(l) = lines.next() {
        if let Some(rest) = l.strip_prefix("BEGIN\t") {
            let (tag, id) = rest.split_once('\t').ok_or_else(|| malformed("bad BEGIN line"))?;
            let id = id.parse().map_err(|_| malformed("bad block id"))?;
            let mut body = String::new();
            loop {
                match lines.next() {
                    Some("END") => break,
                    Some(b) => {
                        body.push_str(b);
                        body.push('\n');
                    }
                    None => return Err(malformed("unterminated block")),
                }
            }
            blocks.push((tag.to_string(), id, body));
        } else if !l.is_empty() {
            plain.push(l);
        }
    }
    Ok((plain, blocks))
}

fn parse_phase(s: &str) -> Result<Phase, WireError> {
    [Phase::Planning, Phase::Execution, Phase::Finished]
        .into_iter()
        .find(|p| p.to_string() == s)
        .ok_or_else(|| malformed(format!("unknown phase `{s}`")))
}

fn fmt_outcome(o: Option<Outcome>) -> String {
    match o {
        None => "-".into(),
        Some(Outcome::Draw) => "draw".into(),
        Some(Outcome::Winner(p)) => format!("winner {p}"),
    }
}

fn parse_outcome(s: &str) -> Result<Option<Outcome>, WireError> {
    match s {
        "-" => Ok(None),
        "draw" => Ok(Some(Outcome::Draw)),
        _ => s
            .strip_prefix("winner ")
            .and_then(|p| p.parse().ok())
            .filter(|p: &PlayerId| *p < 2)
            .map(|p| Some(Outcome::Winner(p)))
            .ok_or_else(|| malformed(format!("bad outcome `{s}`"))),
    }
}

fn num<T: FromStr>(s: &str) -> Result<T, WireError> {
    s.parse().map_err(|_| malformed(format!("bad number `{s}`")))
}

/// Public attributes of one player.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayerView {
    pub life: u32,
    pub action_points: u32,
    pub attack: u32,
    pub armour: u32,
    pub playthrough_time: u32,
    pub mutant_count_attr: u32,
    pub recorded_this_phase: bool,
    pub confirmed: bool,
}

/// What one player is allowed to see of a match: every public attribute,
/// but only their own traces, constructs and assertions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub you: PlayerId,
    pub phase: Phase,
    pub round: u32,
    pub round_seed: u64,
    pub clock_ms: u64,
    pub deadline_ms: u64,
    pub players: [PlayerView; 2],
    pub constructs: u32,
    pub traces: Vec<(TraceId, Trace)>,
    pub assertions: Vec<(TraceId, String)>,
    pub outcome: Option<Outcome>,
}

impl Snapshot {
    pub fn of(m: &MatchState, you: PlayerId) -> Snapshot {
        let view = |p: PlayerId| {
            let s = &m.players[p];
            PlayerView {
                life: s.life,
                action_points: s.action_points,
                attack: s.attack,
                armour: s.armour,
                playthrough_time: s.playthrough_time,
                mutant_count_attr: s.mutant_count_attr,
                recorded_this_phase: s.recorded_this_phase,
                confirmed: s.confirmed,
            }
        };
        let me = &m.players[you];
        Snapshot {
            you,
            phase: m.phase,
            round: m.round,
            round_seed: m.round_seed,
            clock_ms: m.phase_clock_ms,
            deadline_ms: m.phase_deadline_ms,
            players: [view(0), view(1)],
            constructs: me.purchased_constructs,
            traces: me.traces.iter().map(|id| (*id, m.traces[id].trace.clone())).collect(),
            assertions: me.assertions.iter().map(|a| (a.source_trace, a.to_text())).collect(),
            outcome: m.outcome,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "you\t{}", self.you);
        let _ = writeln!(out, "phase\t{}", self.phase);
        let _ = writeln!(out, "round\t{}\t{}", self.round, self.round_seed);
        let _ = writeln!(out, "clock\t{}\t{}", self.clock_ms, self.deadline_ms);
        for (i, p) in self.players.iter().enumerate() {
            let _ = writeln!(
                out,
                "player\t{i}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                p.life,
                p.action_points,
                p.attack,
                p.armour,
                p.playthrough_time,
                p.mutant_count_attr,
                u8::from(p.recorded_this_phase),
                u8::from(p.confirmed)
            );
        }
        let _ = writeln!(out, "constructs\t{}", self.constructs);
        for (t, a) in &self.assertions {
            let _ = writeln!(out, "assertion\t{t}\t{a}");
        }
        let _ = writeln!(out, "outcome\t{}", fmt_outcome(self.outcome));
        for (id, t) in &self.traces {
            push_block(&mut out, "trace", u64::from(*id), &t.to_text());
        }
        out
    }

    pub fn parse(payload: &str) -> Result<Snapshot, WireError> {
        let (lines, blocks) = split_blocks(payload)?;
        let mut players: [Option<PlayerView>; 2] = [None, None];
        let mut assertions = Vec::new();
        for l in &lines {
            let f: Vec<&str> = l.split('\t').collect();
            match f[0] {
                "player" if f.len() == 10 => {
                    let i: usize = num(f[1])?;
                    let slot = players.get_mut(i).ok_or_else(|| malformed("bad player index"))?;
                    *slot = Some(PlayerView {
                        life: num(f[2])?,
                        action_points: num(f[3])?,
                        attack: num(f[4])?,
                        armour: num(f[5])?,
                        playthrough_time: num(f[6])?,
                        mutant_count_attr: num(f[7])?,
                        recorded_this_phase: f[8] == "1",
                        confirmed: f[9] == "1",
                    });
                }
                "assertion" if f.len() == 3 => assertions.push((num(f[1])?, f[2].to_string())),
                "you" | "phase" | "round" | "clock" | "constructs" | "outcome" => {}
                _ => return Err(malformed(format!("unexpected line `{l}`"))),
            }
        }
        let two = |name: &str| -> Result<(String, String), WireError> {
            let v = field(payload, name)?;
            let (a, b) = v.split_once('\t').ok_or_else(|| malformed(format!("`{name}` needs two values")))?;
            Ok((a.to_string(), b.to_string()))
        };
        let (round, round_seed) = two("round")?;
        let (clock, deadline) = two("clock")?;
        let [Some(p0), Some(p1)] = players else {
            return Err(malformed("missing player line"));
        };
        let traces = blocks
            .into_iter()
            .filter(|(tag, _, _)| tag == "trace")
            .map(|(_, id, body)| {
                let t = Trace::parse(&body).map_err(|e| malformed(e.to_string()))?;
                Ok((id as TraceId, t))
            })
            .collect::<Result<_, WireError>>()?;
        Ok(Snapshot {
            you: num(field(payload, "you")?)?,
            phase: parse_phase(field(payload, "phase")?)?,
            round: num(&round)?,
            round_seed: num(&round_seed)?,
            clock_ms: num(&clock)?,
            deadline_ms: num(&deadline)?,
            players: [p0, p1],
            constructs: num(field(payload, "constructs")?)?,
            traces,
            assertions,
            outcome: parse_outcome(field(payload, "outcome")?)?,
        })
    }
}

/// One mutant card of an execution report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutantView {
    pub descriptor: String,
    pub killed: bool,
    pub killing_assertion: Option<String>,
    pub mutated_steps: Vec<usize>,
    pub trace: Option<Trace>,
}

/// A player's side of an execution report: the mutants that attacked their
/// own code and how their assertions fared, plus both players' damage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportView {
    pub you: PlayerId,
    pub round: u32,
    pub round_seed: u64,
    pub damage: [u32; 2],
    pub awarded: [u32; 2],
    pub mutants: Vec<MutantView>,
}

impl ReportView {
    pub fn of(report: &ExecutionReport, you: PlayerId) -> ReportView {
        let mine = &report.players[you];
        ReportView {
            you,
            round: report.round,
            round_seed: report.round_seed,
            damage: [report.players[0].damage_taken, report.players[1].damage_taken],
            awarded: [report.players[0].action_points_awarded, report.players[1].action_points_awarded],
            mutants: mine
                .mutants
                .iter()
                .map(|r| MutantView {
                    descriptor: r.mutant.descriptor(),
                    killed: r.killed,
                    killing_assertion: r.killing_assertion.clone(),
                    mutated_steps: r.mutated_steps.iter().copied().collect(),
                    trace: r.mutant_trace.clone(),
                })
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "you\t{}", self.you);
        let _ = writeln!(out, "round\t{}\t{}", self.round, self.round_seed);
        for p in 0..2 {
            let _ = writeln!(out, "player\t{p}\t{}\t{}", self.damage[p], self.awarded[p]);
        }
        for (i, m) in self.mutants.iter().enumerate() {
            let steps = if m.mutated_steps.is_empty() {
                "-".to_string()
            } else {
                m.mutated_steps.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
            };
            let _ = writeln!(
                out,
                "mutant\t{i}\t{}\t{steps}\t{}\t{}",
                u8::from(m.killed),
                m.killing_assertion.as_deref().unwrap_or("-"),
                m.descriptor
            );
            if let Some(t) = &m.trace {
                push_block(&mut out, "mutant", i as u64, &t.to_text());
            }
        }
        out
    }

    pub fn parse(payload: &str) -> Result<ReportView, WireError> {
        let (lines, blocks) = split_blocks(payload)?;
        let mut damage = [0; 2];
        let mut awarded = [0; 2];
        let mut mutants = Vec::new();
        for l in &lines {
            let f: Vec<&str> = l.split('\t').collect();
            match f[0] {
                "player" if f.len() == 4 => {
                    let p: usize = num(f[1])?;
                    if p > 1 {
                        return Err(malformed("bad player index"));
                    }
                    damage[p] = num(f[2])?;
                    awarded[p] = num(f[3])?;
                }
                "mutant" if f.len() == 9 => {
                    let mutated_steps =
                        if f[3] == "-" { Vec::new() } else { f[3].split(',').map(num).collect::<Result<_, _>>()? };
                    mutants.push(MutantView {
                        descriptor: f[5..].join("\t"),
                        killed: f[2] == "1",
                        killing_assertion: (f[4] != "-").then(|| f[4].to_string()),
                        mutated_steps,
                        trace: None,
                    });
                }
                "you" | "round" => {}
                _ => return Err(malformed(format!("unexpected line `{l}`"))),
            }
        }
        for (tag, id, body) in blocks {
            let m = mutants.get_mut(id as usize).filter(|_| tag == "mutant").ok_or_else(|| malformed("stray block"))?;
            m.trace = Some(Trace::parse(&body).map_err(|e| malformed(e.to_string()))?);
        }
        let (round, seed) = field(payload, "round")?.split_once('\t').ok_or_else(|| malformed("bad round line"))?;
        Ok(ReportView {
            you: num(field(payload, "you")?)?,
            round: num(round)?,
            round_seed: num(seed)?,
            damage,
            awarded,
            mutants,
        })
    }
}
