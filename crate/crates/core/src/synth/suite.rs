use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dsl::{evaluate_extended, parse, Assertion, PlayerId};
use crate::error::{FormatError, IntegrityError};
use crate::game::{format_actions, parse_actions, replay, Action, Game};
use crate::mutation::{self, Mutant};

/// A replayable input sequence with the oracles that must hold on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticTest {
    pub script_hash: String,
    pub seed: u64,
    pub actions: Vec<Action>,
    pub oracles: Vec<Assertion>,
    pub match_id: String,
    pub player: PlayerId,
}

impl StaticTest {
    pub fn to_text(&self) -> String {
        let mut out = format!("STATIC\t{}\t{}\n", self.script_hash, self.seed);
        let _ = writeln!(out, "PROVENANCE\t{}\t{}", self.match_id, self.player);
        let _ = writeln!(out, "ACTIONS\t{}", format_actions(&self.actions));
        for o in &self.oracles {
            let _ = writeln!(out, "ORACLE\t{}", o.to_text());
        }
        out
    }

    pub fn parse(text: &str) -> Result<StaticTest, FormatError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut field = |tag: &str, n: usize| -> Result<(usize, Vec<String>), FormatError> {
            let (i, l) = lines.next().ok_or_else(|| FormatError::new(0, format!("missing {tag} line")))?;
            let f: Vec<String> = l.split('\t').map(str::to_string).collect();
            if f[0] != tag || f.len() != n {
                return Err(FormatError::new(i + 1, format!("expected {tag} with {} fields", n - 1)));
            }
            Ok((i + 1, f))
        };
        let (ln, head) = field("STATIC", 3)?;
        let seed = head[2].parse().map_err(|_| FormatError::new(ln, "bad seed"))?;
        let (ln, prov) = field("PROVENANCE", 3)?;
        let player = prov[2].parse().map_err(|_| FormatError::new(ln, "bad player"))?;
        let (ln, acts) = field("ACTIONS", 2)?;
        let actions = parse_actions(&acts[1]).ok_or_else(|| FormatError::new(ln, "bad action list"))?;
        let mut oracles = Vec::new();
        for (i, l) in text.lines().enumerate().skip(ln) {
            if l.trim().is_empty() {
                continue;
            }
            let body = l.strip_prefix("ORACLE\t").ok_or_else(|| FormatError::new(i + 1, "expected ORACLE line"))?;
            oracles.push(parse(body).map_err(|e| FormatError::new(i + 1, e.to_string()))?);
        }
        Ok(StaticTest {
            script_hash: head[1].clone(),
            seed,
            actions,
            oracles,
            match_id: prov[1].clone(),
            player,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteEntry {
    pub mutant_id: usize,
    pub killed: bool,
    pub killing_test: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub entries: Vec<SuiteEntry>,
    pub mutation_score: f64,
}

impl SuiteReport {
    pub fn killed(&self) -> usize {
        self.entries.iter().filter(|e| e.killed).count()
    }

    /// Header, one `mutant_id killed killing_test` row per mutant, then
    /// `score`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("mutant_id\tkilled\tkilling_test\n");
        for e in &self.entries {
            let by = e.killing_test.map_or("-".to_string(), |t| t.to_string());
            let _ = writeln!(out, "{}\t{}\t{}", e.mutant_id, u8::from(e.killed), by);
        }
        let _ = writeln!(out, "score\t{:.6}", self.mutation_score);
        out
    }
}

/// Replays every test on every mutant. A mutant is killed when one of a
/// test's oracles is violated on the test's replay; the lowest such test id
/// is reported.
pub fn run_suite(game: &Game, tests: &[StaticTest], mutants: &[Mutant]) -> Result<SuiteReport, IntegrityError> {
    let expected = game.script.hash();
    if let Some(t) = tests.iter().find(|t| t.script_hash != expected) {
        return Err(IntegrityError::HashMismatch { expected, found: t.script_hash.clone() });
    }
    let mutated: Vec<Game> = mutants
        .iter()
        .map(|m| mutation::apply(&game.script, m).map(|s| game.with_script(s)))
        .collect::<Result<_, _>>()?;
    let pairs: Vec<(usize, usize)> = (0..mutants.len()).flat_map(|m| (0..tests.len()).map(move |t| (m, t))).collect();
    let kills: Vec<bool> = pairs
        .par_iter()
        .map(|&(m, t)| {
            let test = &tests[t];
            let trace = replay(&mutated[m], test.seed, &test.actions);
            test.oracles.iter().any(|o| evaluate_extended(o, &trace).map(|v| v.is_violated()).unwrap_or(false))
        })
        .collect();
    let entries: Vec<SuiteEntry> = mutants
        .iter()
        .enumerate()
        .map(|(m, mutant)| {
            let killing_test = (0..tests.len()).find(|&t| kills[m * tests.len() + t]);
            SuiteEntry { mutant_id: mutant.id, killed: killing_test.is_some(), killing_test }
        })
        .collect();
    let killed = entries.iter().filter(|e| e.killed).count();
    let mutation_score = if entries.is_empty() { 0.0 } else { killed as f64 / entries.len() as f64 };
    Ok(SuiteReport { entries, mutation_score })
}
