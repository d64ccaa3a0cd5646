//! The Test module: winners' playthroughs and assertions become static
//! regression tests and trained policy networks.

mod policy;
mod suite;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dsl::{blocks_equal, evaluate, Assertion, PlayerId, TraceId, VerdictStatus};
use crate::error::{FormatError, IntegrityError};
use crate::game::{replay, Action, Game, StatementId, Trace};
use crate::matchplay::{MatchState, Outcome, Phase};

pub use policy::{
    featurize, run_dynamic_test, surprise, train_policy, DynamicVerdict, Gradients, PolicyNet, TrainConfig, TrainStats,
    FEATURE_COUNT,
};
pub use suite::{run_suite, StaticTest, SuiteEntry, SuiteReport};

/// Bundled demo: nine steps right into the hole, carrying the three
/// reference assertions.
pub const DEMO_TEST: &str = include_str!("../../assets/demo.test");

pub fn demo_test() -> StaticTest {
    StaticTest::parse(DEMO_TEST).expect("bundled demo test parses")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("match is not finished (phase {0})")]
    NotFinished(Phase),
    #[error("no trace covers statement {0}; the target is untrainable")]
    Untrainable(StatementId),
    #[error(transparent)]
    Integrity(#[from] IntegrityError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// A harvested trace with where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarvestedTrace {
    pub match_id: String,
    pub player: PlayerId,
    pub trace_id: TraceId,
    pub trace: Trace,
}

/// The winner's artifacts from one finished match.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Harvest {
    pub traces: Vec<HarvestedTrace>,
    pub assertions: Vec<(String, Assertion)>,
}

impl Harvest {
    pub fn extend(&mut self, other: Harvest) {
        self.traces.extend(other.traces);
        self.assertions.extend(other.assertions);
    }
}

/// Collects the winner's traces and assertions. Draws yield nothing.
pub fn harvest(m: &MatchState) -> Result<Harvest, SynthError> {
    if m.phase != Phase::Finished {
        return Err(SynthError::NotFinished(m.phase));
    }
    let Some(Outcome::Winner(w)) = m.outcome else {
        return Ok(Harvest::default());
    };
    let traces = m.players[w]
        .traces
        .iter()
        .map(|id| HarvestedTrace { match_id: m.id.clone(), player: w, trace_id: *id, trace: m.traces[id].trace.clone() })
        .collect();
    let assertions = m.players[w].assertions.iter().map(|a| (m.id.clone(), a.clone())).collect();
    Ok(Harvest { traces, assertions })
}

/// Unit-cost edit distance between two action sequences.
pub fn levenshtein(a: &[Action], b: &[Action]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Greedy clustering in input order. Returns, for every input, the index
/// of its representative (representatives map to themselves).
pub fn cluster(sequences: &[&[Action]], threshold: usize) -> Vec<usize> {
    let mut reps: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(sequences.len());
    for (i, s) in sequences.iter().enumerate() {
        match reps.iter().find(|&&r| levenshtein(sequences[r], s) <= threshold) {
            Some(&r) => out.push(r),
            None => {
                reps.push(i);
                out.push(i);
            }
        }
    }
    out
}

/// Representatives of [`cluster`], in input order.
pub fn dedup_traces(traces: &[Trace], threshold: usize) -> Vec<Trace> {
    let seqs: Vec<&[Action]> = traces.iter().map(|t| t.actions.as_slice()).collect();
    cluster(&seqs, threshold)
        .into_iter()
        .enumerate()
        .filter(|(i, r)| i == r)
        .map(|(i, _)| traces[i].clone())
        .collect()
}

/// 10% of the mean action-sequence length, rounded.
pub fn default_threshold<'a>(sequences: impl IntoIterator<Item = &'a [Action]>) -> usize {
    let (n, total) = sequences.into_iter().fold((0usize, 0usize), |(n, t), s| (n + 1, t + s.len()));
    if n == 0 {
        0
    } else {
        (total as f64 / n as f64 * 0.1).round() as usize
    }
}

/// One assertion per block-equality class; the first occurrence wins.
pub fn dedup_assertions(assertions: &[Assertion]) -> Vec<Assertion> {
    let mut kept: Vec<Assertion> = Vec::new();
    for a in assertions {
        if !kept.iter().any(|k| blocks_equal(k, a)) {
            kept.push(a.clone());
        }
    }
    kept
}

/// Builds one static test per trace cluster. A test carries every distinct
/// assertion placed on a member of its cluster that is not violated on the
/// representative's replay; violated or ill-fitting ones are dropped.
pub fn synthesize_static(game: &Game, harvest: &Harvest, threshold: Option<usize>) -> Vec<StaticTest> {
    let seqs: Vec<&[Action]> = harvest.traces.iter().map(|t| t.trace.actions.as_slice()).collect();
    let threshold = threshold.unwrap_or_else(|| default_threshold(seqs.iter().copied()));
    let assignment = cluster(&seqs, threshold);
    let rep_of: BTreeMap<(&str, TraceId), usize> = harvest
        .traces
        .iter()
        .zip(&assignment)
        .map(|(t, r)| ((t.match_id.as_str(), t.trace_id), *r))
        .collect();
    let mut tests = Vec::new();
    for (i, rep) in harvest.traces.iter().enumerate().filter(|(i, _)| assignment[*i] == *i) {
        let candidates: Vec<Assertion> = harvest
            .assertions
            .iter()
            .filter(|(mid, a)| rep_of.get(&(mid.as_str(), a.source_trace)) == Some(&i))
            .map(|(_, a)| a.clone())
            .collect();
        let replayed = replay(game, rep.trace.seed, &rep.trace.actions);
        let oracles = dedup_assertions(&candidates)
            .into_iter()
            .filter(|a| match evaluate(a, &replayed) {
                Ok(v) if v.status != VerdictStatus::Violated => true,
                Ok(v) => {
                    log::info!("dropping `{a}`: violated at step {:?} of trace {}", v.violated_at, rep.trace_id);
                    false
                }
                Err(e) => {
                    log::info!("dropping `{a}`: {e}");
                    false
                }
            })
            .collect();
        tests.push(StaticTest {
            script_hash: game.script.hash(),
            seed: rep.trace.seed,
            actions: replayed.actions.clone(),
            oracles,
            match_id: rep.match_id.clone(),
            player: rep.player,
        });
    }
    tests
}
