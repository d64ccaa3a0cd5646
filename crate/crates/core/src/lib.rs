//! Core of PlayTest: a two-player mutation-testing game and the machinery
//! that turns its winners' playthroughs into test suites.

pub mod error;
pub mod dsl;
pub mod game;
pub mod matchplay;
pub mod mutation;
pub mod service;
pub mod synth;

pub use error::{EngineError, FormatError, IntegrityError, LayoutError, ScriptError};
pub use game::{Action, ActorKind, Game, RuleScript, Trace};
