//! TCP match server. Connections send `join`; the first two unpaired joiners
//! share a match. Each match runs on its own thread and applies commands
//! from both connections in arrival order.

use std::io;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::Rng;

use crate::dsl::PlayerId;
use crate::game::Game;
use crate::matchplay::{Command, CommandOutcome, ExecutionReport, MatchConfig, MatchState, Phase};

use super::store::{MatchWriter, Store};
use super::wire::{read_message, to_command, write_message, Kind, ReportView, Snapshot, WireError, WireMessage};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub match_config: MatchConfig,
    pub game: Game,
    pub store: Option<Store>,
    /// Base of the match seeds; random when `None`.
    pub seed: Option<u64>,
    /// Granularity of the phase timers.
    pub tick_ms: u64,
}

impl ServerConfig {
    pub fn new(match_config: MatchConfig, game: Game) -> Self {
        ServerConfig { match_config, game, store: None, seed: None, tick_ms: 250 }
    }
}

enum Event {
    Message(PlayerId, WireMessage),
    Malformed(PlayerId, String),
    Disconnected(PlayerId),
}

struct Waiting {
    stream: TcpStream,
    handoff: Sender<(String, Sender<Event>)>,
}

struct Shared {
    cfg: ServerConfig,
    lobby: Mutex<Option<Waiting>>,
    next_match: Mutex<u64>,
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, cfg: ServerConfig) -> io::Result<Server> {
        let listener = TcpListener::bind(addr)?;
        Ok(Server { listener, shared: Arc::new(Shared { cfg, lobby: Mutex::new(None), next_match: Mutex::new(0) }) })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until the listener fails.
    pub fn run(self) -> io::Result<()> {
        for stream in self.listener.incoming() {
            let stream = stream?;
            let shared = Arc::clone(&self.shared);
            thread::spawn(move || {
                if let Err(e) = connection(shared, stream) {
                    log::debug!("connection ended: {e}");
                }
            });
        }
        Ok(())
    }

    /// Runs the server on a background thread.
    pub fn spawn(self) -> io::Result<SocketAddr> {
        let addr = self.local_addr()?;
        thread::spawn(move || self.run());
        Ok(addr)
    }
}

fn send(stream: &mut TcpStream, msg: &WireMessage) {
    if let Err(e) = write_message(stream, msg) {
        log::debug!("dropping {} to a closed connection: {e}", msg.kind);
    }
}

fn token() -> String {
    let mut rng = rand::thread_rng();
    (0..16).map(|_| format!("{:02x}", rng.gen::<u8>())).collect()
}

/// Reads frames until `join`, then pairs the connection and forwards its
/// messages to the match thread.
fn connection(shared: Arc<Shared>, stream: TcpStream) -> Result<(), WireError> {
    let mut reader = stream.try_clone()?;
    let mut writer = stream.try_clone()?;
    loop {
        match read_message(&mut reader) {
            Ok(Some(msg)) if msg.kind == Kind::Join => break,
            Ok(Some(msg)) => {
                send(&mut writer, &WireMessage::new(Kind::Error, "", "", 0, format!("message\t`{}` before join\n", msg.kind)))
            }
            Ok(None) => return Ok(()),
            Err(WireError::Malformed(m)) => send(&mut writer, &WireMessage::new(Kind::Error, "", "", 0, format!("message\t{m}\n"))),
            Err(e) => return Err(e),
        }
    }
    let (player, events) = {
        let mut lobby = shared.lobby.lock().expect("lobby lock");
        match lobby.take() {
            Some(first) => {
                let (tx, rx) = mpsc::channel();
                let n = {
                    let mut n = shared.next_match.lock().expect("counter lock");
                    *n += 1;
                    *n
                };
                let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
                let id = format!("srv-{stamp}-{n}");
                let seed = match shared.cfg.seed {
                    Some(s) => s.wrapping_add(n),
                    None => rand::thread_rng().gen(),
                };
                let streams = [first.stream, stream];
                let cfg = shared.cfg.clone();
                let mid = id.clone();
                let match_tx = tx.clone();
                let _ = first.handoff.send((id, tx.clone()));
                thread::spawn(move || run_match(cfg, mid, seed, streams, rx, match_tx));
                (1, tx)
            }
            None => {
                let (htx, hrx) = mpsc::channel();
                *lobby = Some(Waiting { stream, handoff: htx });
                drop(lobby);
                match hrx.recv() {
                    Ok((_, tx)) => (0, tx),
                    Err(_) => return Ok(()),
                }
            }
        }
    };
    loop {
        let event = match read_message(&mut reader) {
            Ok(Some(msg)) => Event::Message(player, msg),
            Ok(None) | Err(WireError::Io(_) | WireError::TooLarge(_)) => {
                let _ = events.send(Event::Disconnected(player));
                return Ok(());
            }
            Err(e) => Event::Malformed(player, e.to_string()),
        };
        if events.send(event).is_err() {
            return Ok(());
        }
    }
}

struct Session {
    m: MatchState,
    tokens: [String; 2],
    streams: [TcpStream; 2],
    seq: u64,
    writer: Option<MatchWriter>,
    gone_since: [Option<Instant>; 2],
}

impl Session {
    fn push(&mut self, player: PlayerId, kind: Kind, payload: String) {
        self.seq += 1;
        let msg = WireMessage::new(kind, self.m.id.clone(), self.tokens[player].clone(), self.seq, payload);
        send(&mut self.streams[player], &msg);
    }

    fn error(&mut self, player: PlayerId, message: &str) {
        self.push(player, Kind::Error, format!("message\t{}\n", message.replace(['\n', '\t'], " ")));
    }

    fn snapshots(&mut self) {
        for p in 0..2 {
            let text = Snapshot::of(&self.m, p).to_text();
            self.push(p, Kind::StateSnapshot, text);
        }
    }

    fn reports(&mut self, report: &ExecutionReport) {
        for p in 0..2 {
            let text = ReportView::of(report, p).to_text();
            self.push(p, Kind::ExecutionReport, text);
        }
    }

    /// Applies and logs a command. Returns the rejection text on failure.
    fn apply(&mut self, cmd: Command) -> Result<(), String> {
        let outcome = self.m.apply(&cmd).map_err(|e| e.to_string())?;
        if let Some(w) = &mut self.writer {
            if let Err(e) = w.append(&cmd) {
                log::error!("store: {e}");
            }
        }
        if let CommandOutcome::Executed(report) = outcome {
            self.reports(&report);
        }
        Ok(())
    }

    fn on_message(&mut self, player: PlayerId, msg: WireMessage) {
        if msg.match_id != self.m.id || msg.token != self.tokens[player] {
            self.error(player, "token mismatch");
            return;
        }
        if msg.kind == Kind::Join || !msg.kind.client_originated() {
            self.error(player, &format!("`{}` is not accepted here", msg.kind));
            return;
        }
        let cmd = match to_command(&msg, player) {
            Ok(c) => c,
            Err(e) => return self.error(player, &e.to_string()),
        };
        match self.apply(cmd) {
            Ok(()) => self.snapshots(),
            Err(e) => self.error(player, &e),
        }
    }
}

fn run_match(cfg: ServerConfig, id: String, seed: u64, streams: [TcpStream; 2], rx: Receiver<Event>, _keep: Sender<Event>) {
    let m = match MatchState::start(id.clone(), cfg.match_config.clone(), cfg.game.clone(), seed) {
        Ok(m) => m,
        Err(e) => {
            log::error!("cannot start {id}: {e}");
            return;
        }
    };
    let writer = cfg.store.as_ref().and_then(|s| s.begin(&m).map_err(|e| log::error!("store: {e}")).ok());
    let mut s = Session { m, tokens: [token(), token()], streams, seq: 0, writer, gone_since: [None, None] };
    log::info!("match {id} started with seed {seed}");
    s.snapshots();
    let tick = Duration::from_millis(cfg.tick_ms.max(1));
    let grace = Duration::from_millis(s.m.config.forfeit_grace_ms);
    let mut last_tick = Instant::now();
    while s.m.phase != Phase::Finished {
        match rx.recv_timeout(tick) {
            Ok(Event::Message(p, msg)) => s.on_message(p, msg),
            Ok(Event::Malformed(p, e)) => s.error(p, &e),
            Ok(Event::Disconnected(p)) => {
                log::info!("match {id}: player {p} disconnected");
                s.gone_since[p].get_or_insert_with(Instant::now);
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
        if s.m.phase == Phase::Finished {
            break;
        }
        let elapsed = last_tick.elapsed();
        if elapsed >= tick {
            last_tick = Instant::now();
            let phase = (s.m.phase, s.m.round);
            if s.apply(Command::Tick { ms: elapsed.as_millis() as u64 }).is_ok() && phase != (s.m.phase, s.m.round) {
                s.snapshots();
            }
        }
        let expired = (0..2).find(|&p| s.gone_since[p].is_some_and(|t| t.elapsed() >= grace));
        if let (Some(p), true) = (expired, s.m.phase != Phase::Finished) {
            if s.apply(Command::Forfeit { player: p }).is_ok() {
                s.snapshots();
            }
        }
    }
    if let Some(w) = &mut s.writer {
        if let Err(e) = w.finish(&s.m) {
            log::error!("store: {e}");
        }
    }
    log::info!("match {id} finished: {:?}", s.m.outcome);
    for st in &s.streams {
        let _ = st.shutdown(Shutdown::Both);
    }
}

/// Minimal blocking client, used by tests and scripted players.
pub struct Client {
    stream: TcpStream,
    pub match_id: String,
    pub token: String,
    pub player: Option<PlayerId>,
    pub last_seq: u64,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Client> {
        let stream = TcpStream::connect(addr)?;
        Ok(Client { stream, match_id: String::new(), token: String::new(), player: None, last_seq: 0 })
    }

    pub fn set_timeout(&self, d: Option<Duration>) -> io::Result<()> {
        self.stream.set_read_timeout(d)
    }

    pub fn send_raw(&mut self, msg: &WireMessage) -> Result<(), WireError> {
        write_message(&mut self.stream, msg)
    }

    pub fn send_bytes(&mut self, bytes: &[u8]) -> io::Result<()> {
        io::Write::write_all(&mut self.stream, bytes)
    }

    pub fn send(&mut self, kind: Kind, payload: impl Into<String>) -> Result<(), WireError> {
        let msg = WireMessage::new(kind, self.match_id.clone(), self.token.clone(), 0, payload);
        self.send_raw(&msg)
    }

    pub fn send_command(&mut self, cmd: &Command) -> Result<(), WireError> {
        let (kind, payload) = super::wire::command_payload(cmd).ok_or_else(|| WireError::Malformed(format!("`{cmd}` is server-side")))?;
        self.send(kind, payload)
    }

    /// Next message; adopts the match id and token of the first snapshot.
    pub fn recv(&mut self) -> Result<Option<WireMessage>, WireError> {
        let msg = read_message(&mut self.stream)?;
        if let Some(m) = &msg {
            if self.player.is_none() && m.kind == Kind::StateSnapshot {
                self.match_id = m.match_id.clone();
                self.token = m.token.clone();
                self.player = Snapshot::parse(&m.payload).ok().map(|s| s.you);
            }
            self.last_seq = m.seq;
        }
        Ok(msg)
    }

    /// Skips messages until one of `kind` arrives.
    pub fn recv_kind(&mut self, kind: Kind) -> Result<Option<WireMessage>, WireError> {
        while let Some(m) = self.recv()? {
            if m.kind == kind {
                return Ok(Some(m));
            }
        }
        Ok(None)
    }

    pub fn join(&mut self) -> Result<Snapshot, WireError> {
        self.send_raw(&WireMessage::new(Kind::Join, "", "", 0, ""))?;
        let msg = self.recv_kind(Kind::StateSnapshot)?.ok_or_else(|| WireError::Malformed("closed before start".into()))?;
        Snapshot::parse(&msg.payload)
    }

    pub fn close(self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}
