use thiserror::Error;

use crate::game::{ActorKind, StatementId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("statement ids must be contiguous from 0: expected {expected}, found {found}")]
    NonContiguousId { expected: usize, found: usize },
    #[error("no statement with id {0}")]
    UnknownStatement(StatementId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("level dimensions {width}x{height} do not match {tiles} tiles")]
    Dimensions { width: i64, height: i64, tiles: usize },
    #[error("row {row} has a different width")]
    RaggedRow { row: usize },
    #[error("unknown tile `{0}`")]
    UnknownTile(char),
    #[error("level has no player or the player is not the first actor")]
    MissingPlayer,
    #[error("level has more than one player")]
    MultiplePlayers,
    #[error("{kind:?} at ({x}, {y}) is outside the grid")]
    OutOfBounds { kind: ActorKind, x: i64, y: i64 },
    #[error("{kind:?} at ({x}, {y}) overlaps a solid tile")]
    InsideSolid { kind: ActorKind, x: i64, y: i64 },
    #[error("two actors share cell ({x}, {y})")]
    Overlap { x: i64, y: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("game is over at tick {tick}; it cannot be stepped")]
    Terminal { tick: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntegrityError {
    #[error("statement id {0} is not part of the script")]
    UnknownStatement(StatementId),
    #[error("trace shape mismatch: {actions} actions, {frames} frames, {covered} coverage sets")]
    TraceShape { actions: usize, frames: usize, covered: usize },
    #[error("trace continues after game over at step {step}")]
    FrameAfterGameOver { step: usize },
    #[error("stale mutant: {0}")]
    StaleMutant(String),
    #[error("script hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },
}

/// Malformed input in one of the line-oriented file formats.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

impl FormatError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        FormatError { line, message: message.into() }
    }
}
