//! Match hosting: bots, the wire protocol, persistence and the TCP server.

pub mod bot;
pub mod export;
pub mod server;
pub mod store;
pub mod wire;

pub use bot::{bot_command, coin_seeking_path, run_bot_match, template_pool, Difficulty};
pub use wire::{read_message, write_message, Kind, ReportView, Snapshot, WireError, WireMessage};
pub use store::{MatchWriter, Store, StoreError, StoredMatch, STORE_ENV};
pub use server::{Client, Server, ServerConfig};
pub use export::{export_tests, load_tests, ExportSummary, MIN_POLICY_TRACES};
