use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::FormatError;

/// Every number that shapes match balance, in one table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub starting_life: u32,
    pub starting_ap: u32,
    /// Initial playthrough budget in ticks.
    pub playthrough_time: u32,
    pub base_damage: u32,
    pub attack_step: u32,
    pub armour_step: u32,
    pub base_mutants: u32,
    pub mutants_per_level: u32,
    pub default_ap: u32,
    pub coverage_ap_max: u32,
    /// Ticks added to both players' playthrough budget every cycle.
    pub time_growth: u32,
    /// Ticks added by one PlaythroughTime upgrade.
    pub time_upgrade: u32,
    pub upgrade_price: u32,
    pub construct_price: u32,
    /// Wall-clock length of a Planning Phase on the server.
    pub planning_ms: u64,
    /// Wall-clock length of an Execution Phase review on the server.
    pub execution_ms: u64,
    pub forfeit_grace_ms: u64,
    /// After this many rounds the player with more life wins.
    pub max_rounds: u32,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            starting_life: 100,
            starting_ap: 10,
            playthrough_time: 150,
            base_damage: 5,
            attack_step: 2,
            armour_step: 3,
            base_mutants: 5,
            mutants_per_level: 2,
            default_ap: 10,
            coverage_ap_max: 10,
            time_growth: 30,
            time_upgrade: 30,
            upgrade_price: 8,
            construct_price: 5,
            planning_ms: 180_000,
            execution_ms: 30_000,
            forfeit_grace_ms: 30_000,
            max_rounds: 40,
        }
    }
}

macro_rules! config_fields {
    ($m:ident) => {
        $m! {
            starting_life, starting_ap, playthrough_time, base_damage, attack_step, armour_step,
            base_mutants, mutants_per_level, default_ap, coverage_ap_max, time_growth, time_upgrade,
            upgrade_price, construct_price, planning_ms, execution_ms, forfeit_grace_ms, max_rounds
        }
    };
}

impl MatchConfig {
    /// `key=value` lines, one per field, in declaration order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        macro_rules! emit {
            ($($f:ident),*) => { $( let _ = writeln!(out, "{}={}", stringify!($f), self.$f); )* };
        }
        config_fields!(emit);
        out
    }

    /// Reads `key=value` lines over the defaults. Unknown keys are errors;
    /// blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<MatchConfig, FormatError> {
        let mut cfg = MatchConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| FormatError::new(i + 1, "expected key=value"))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || FormatError::new(i + 1, format!("bad value for `{key}`: `{value}`"));
            macro_rules! assign {
                ($($f:ident),*) => {
                    match key {
                        $( stringify!($f) => cfg.$f = value.parse().map_err(|_| bad())?, )*
                        _ => return Err(FormatError::new(i + 1, format!("unknown key `{key}`"))),
                    }
                };
            }
            config_fields!(assign);
        }
        Ok(cfg)
    }
}
