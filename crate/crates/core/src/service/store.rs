//! Append-only flat-file persistence, one directory per match.
//!
//! ```text
//! <root>/<match id>/
//!   meta.txt        id, match seed, script hash
//!   config.txt      MatchConfig
//!   script.rules    canonical rule script
//!   level.txt       ASCII level
//!   commands.log    one command per line, appended as accepted
//!   final.txt       state hash, outcome, rounds (written at the end)
//!   harvest/        the winner's traces (trace-<id>.txt) and assertions.txt
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dsl::parse as parse_assertion;
use crate::error::{FormatError, LayoutError, ScriptError};
use crate::game::{Game, Level, RuleScript, Trace};
use crate::matchplay::{Command, MatchConfig, MatchError, MatchState, Outcome};
use crate::synth::{harvest, Harvest, HarvestedTrace, SynthError};

pub const STORE_ENV: &str = "PLAYTEST_STORE";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{}: {}", .source.line, .source.message)]
    Format { path: PathBuf, source: FormatError },
    #[error("{path}: {source}")]
    Script { path: PathBuf, source: ScriptError },
    #[error("{path}: {source}")]
    Layout { path: PathBuf, source: LayoutError },
    #[error("replaying {id}: {source}")]
    Replay { id: String, source: MatchError },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("match {0} already exists in the store")]
    Exists(String),
    #[error("match id `{0}` is not a plain file name")]
    BadId(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

fn fmt_err(path: &Path, line: usize, msg: impl Into<String>) -> StoreError {
    StoreError::Format { path: path.to_path_buf(), source: FormatError::new(line, msg) }
}

fn read(path: &Path) -> Result<String, StoreError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write(path: &Path, text: &str) -> Result<(), StoreError> {
    fs::write(path, text).map_err(io_err(path))
}

fn key_values(path: &Path) -> Result<Vec<(String, String)>, StoreError> {
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            l.split_once('\t')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| fmt_err(path, i + 1, "expected `key<TAB>value`"))
        })
        .collect()
}

fn lookup<'a>(kv: &'a [(String, String)], path: &Path, key: &str) -> Result<&'a str, StoreError> {
    kv.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str()).ok_or_else(|| fmt_err(path, 0, format!("missing `{key}`")))
}

fn outcome_text(o: Option<Outcome>) -> String {
    match o {
        Some(Outcome::Winner(p)) => format!("winner {p}"),
        Some(Outcome::Draw) => "draw".into(),
        None => "-".into(),
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Store {
        Store { root: root.into() }
    }

    /// `$PLAYTEST_STORE` if set, otherwise `default`.
    pub fn from_env_or(default: impl Into<PathBuf>) -> Store {
        Store::new(std::env::var_os(STORE_ENV).map_or_else(|| default.into(), PathBuf::from))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> Result<PathBuf, StoreError> {
        if id.is_empty() || id.starts_with('.') || id.contains(['/', '\\', '\t', '\n']) {
            return Err(StoreError::BadId(id.to_string()));
        }
        Ok(self.root.join(id))
    }

    /// Creates the match directory and writes everything known at the start.
    pub fn begin(&self, m: &MatchState) -> Result<MatchWriter, StoreError> {
        let dir = self.dir(&m.id)?;
        if dir.exists() {
            return Err(StoreError::Exists(m.id.clone()));
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write(
            &dir.join("meta.txt"),
            &format!("id\t{}\nseed\t{}\nscript_hash\t{}\n", m.id, m.match_seed, m.game.script.hash()),
        )?;
        write(&dir.join("config.txt"), &m.config.to_text())?;
        write(&dir.join("script.rules"), &m.game.script.to_canonical())?;
        write(&dir.join("level.txt"), &m.game.level.to_text())?;
        let log_path = dir.join("commands.log");
        let log = OpenOptions::new().create_new(true).append(true).open(&log_path).map_err(io_err(&log_path))?;
        Ok(MatchWriter { dir, log })
    }

    /// Writes a whole finished match at once.
    pub fn write_match(&self, m: &MatchState, commands: &[Command]) -> Result<PathBuf, StoreError> {
        let mut w = self.begin(m)?;
        for c in commands {
            w.append(c)?;
        }
        w.finish(m)?;
        Ok(w.dir)
    }

    /// Ids of stored matches, sorted.
    pub fn match_ids(&self) -> Result<Vec<String>, StoreError> {
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(StoreError::Io { path: self.root.clone(), source: e }),
        };
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry.map_err(io_err(&self.root))?;
            if entry.path().join("meta.txt").is_file() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn load(&self, id: &str) -> Result<StoredMatch, StoreError> {
        let dir = self.dir(id)?;
        let meta_path = dir.join("meta.txt");
        let meta = key_values(&meta_path)?;
        let seed = lookup(&meta, &meta_path, "seed")?.parse().map_err(|_| fmt_err(&meta_path, 0, "bad seed"))?;
        let config_path = dir.join("config.txt");
        let config = MatchConfig::parse(&read(&config_path)?)
            .map_err(|source| StoreError::Format { path: config_path.clone(), source })?;
        let script_path = dir.join("script.rules");
        let script = RuleScript::parse(&read(&script_path)?).map_err(|source| StoreError::Script { path: script_path, source })?;
        let level_path = dir.join("level.txt");
        let level = Level::parse(&read(&level_path)?).map_err(|source| StoreError::Layout { path: level_path, source })?;
        let log_path = dir.join("commands.log");
        let commands =
            Command::parse_log(&read(&log_path)?).map_err(|source| StoreError::Format { path: log_path, source })?;
        let final_path = dir.join("final.txt");
        let final_hash = if final_path.exists() {
            Some(lookup(&key_values(&final_path)?, &final_path, "hash")?.to_string())
        } else {
            None
        };
        Ok(StoredMatch { id: id.to_string(), config, game: Game::new(script, level), seed, commands, final_hash })
    }

    /// Reads the winner's stored traces and assertions.
    pub fn load_harvest(&self, id: &str) -> Result<Harvest, StoreError> {
        let dir = self.dir(id)?.join("harvest");
        let mut out = Harvest::default();
        if !dir.exists() {
            return Ok(out);
        }
        let mut files: Vec<(u32, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            if let Some(n) = name.strip_prefix("trace-").and_then(|r| r.strip_suffix(".txt")) {
                files.push((n.parse().map_err(|_| fmt_err(&path, 0, "bad trace file name"))?, path));
            }
        }
        files.sort();
        let winner_path = dir.join("assertions.txt");
        let text = read(&winner_path)?;
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.is_empty());
        let player = match lines.next() {
            Some((_, l)) => l
                .strip_prefix("winner\t")
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| fmt_err(&winner_path, 1, "expected `winner<TAB>player`"))?,
            None => return Err(fmt_err(&winner_path, 1, "empty file")),
        };
        for (trace_id, path) in files {
            let trace = Trace::parse(&read(&path)?).map_err(|source| StoreError::Format { path: path.clone(), source })?;
            out.traces.push(HarvestedTrace { match_id: id.to_string(), player, trace_id, trace });
        }
        for (i, l) in lines {
            let (t, body) = l.split_once('\t').ok_or_else(|| fmt_err(&winner_path, i + 1, "expected `trace<TAB>assertion`"))?;
            let mut a = parse_assertion(body).map_err(|e| fmt_err(&winner_path, i + 1, e.to_string()))?;
            a.source_trace = t.parse().map_err(|_| fmt_err(&winner_path, i + 1, "bad trace id"))?;
            a.owner = player;
            out.assertions.push((id.to_string(), a));
        }
        Ok(out)
    }

    /// Replays the stored log and compares the result with the stored
    /// final hash. `Ok(false)` on a mismatch or a match without a final hash.
    pub fn verify(&self, id: &str) -> Result<bool, StoreError> {
        let stored = self.load(id)?;
        let replayed = stored.replay()?;
        Ok(stored.final_hash.as_deref() == Some(replayed.state_hash().as_str()))
    }
}

/// Write handle of one match in progress.
#[derive(Debug)]
pub struct MatchWriter {
    dir: PathBuf,
    log: File,
}

impl MatchWriter {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&mut self, cmd: &Command) -> Result<(), StoreError> {
        let path = self.dir.join("commands.log");
        writeln!(self.log, "{cmd}").map_err(io_err(&path))?;
        self.log.flush().map_err(io_err(&path))
    }

    /// Writes the final hash and, for a decided match, the winner's harvest.
    pub fn finish(&mut self, m: &MatchState) -> Result<(), StoreError> {
        write(
            &self.dir.join("final.txt"),
            &format!("hash\t{}\noutcome\t{}\nround\t{}\n", m.state_hash(), outcome_text(m.outcome), m.round),
        )?;
        let h = harvest(m)?;
        let Some(Outcome::Winner(w)) = m.outcome else {
            return Ok(());
        };
        let dir = self.dir.join("harvest");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for t in &h.traces {
            write(&dir.join(format!("trace-{}.txt", t.trace_id)), &t.trace.to_text())?;
        }
        let mut text = format!("winner\t{w}\n");
        for (_, a) in &h.assertions {
            text.push_str(&format!("{}\t{}\n", a.source_trace, a.to_text()));
        }
        write(&dir.join("assertions.txt"), &text)
    }
}

/// A match read back from the store.
#[derive(Debug, Clone)]
pub struct StoredMatch {
    pub id: String,
    pub config: MatchConfig,
    pub game: Game,
    pub seed: u64,
    pub commands: Vec<Command>,
    pub final_hash: Option<String>,
}

impl StoredMatch {
    pub fn replay(&self) -> Result<MatchState, StoreError> {
        let replay_err = |source| StoreError::Replay { id: self.id.clone(), source };
        let mut m = MatchState::start(self.id.clone(), self.config.clone(), self.game.clone(), self.seed).map_err(replay_err)?;
        for c in &self.commands {
            m.apply(c).map_err(replay_err)?;
        }
        Ok(m)
    }
}
