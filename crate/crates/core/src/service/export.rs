//! Store to test-suite pipeline: verify, harvest, deduplicate, synthesize,
//! and write static tests and policy networks to a directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::IntegrityError;
use crate::game::{Game, StatementId, Trace};
use crate::synth::{synthesize_static, train_policy, Harvest, StaticTest, SynthError, TrainConfig};

use super::store::{Store, StoreError};

/// A statement gets a policy network once this many harvested traces
/// execute it.
pub const MIN_POLICY_TRACES: usize = 3;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExportSummary {
    pub matches: usize,
    pub harvested_traces: usize,
    pub harvested_assertions: usize,
    pub static_tests: usize,
    pub policies: Vec<StatementId>,
}

/// Verifies every stored match and merges their harvests. Returns the game
/// shared by all matches, or `None` for an empty store.
pub fn collect(store: &Store) -> Result<Option<(Game, Harvest, usize)>, StoreError> {
    let ids = store.match_ids()?;
    let mut game: Option<Game> = None;
    let mut all = Harvest::default();
    for id in &ids {
        let stored = store.load(id)?;
        if stored.final_hash.is_none() {
            log::warn!("skipping unfinished match {id}");
            continue;
        }
        if !store.verify(id)? {
            return Err(StoreError::Synth(SynthError::Integrity(IntegrityError::HashMismatch {
                expected: stored.final_hash.clone().unwrap_or_default(),
                found: stored.replay()?.state_hash(),
            })));
        }
        match &game {
            None => game = Some(stored.game.clone()),
            Some(g) if g.script.hash() != stored.game.script.hash() => {
                return Err(StoreError::Synth(SynthError::Integrity(IntegrityError::HashMismatch {
                    expected: g.script.hash(),
                    found: stored.game.script.hash(),
                })));
            }
            Some(_) => {}
        }
        all.extend(store.load_harvest(id)?);
    }
    Ok(game.map(|g| (g, all, ids.len())))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// Runs the pipeline and writes `static-NNNN.test` and `policy-SS.net`
/// files into `out`.
pub fn export_tests(store: &Store, out: &Path, cfg: &TrainConfig) -> Result<ExportSummary, StoreError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let Some((game, harvest, matches)) = collect(store)? else {
        return Ok(ExportSummary::default());
    };
    let tests = synthesize_static(&game, &harvest, None);
    for (i, t) in tests.iter().enumerate() {
        let path = out.join(format!("static-{i:04}.test"));
        fs::write(&path, t.to_text()).map_err(io_err(&path))?;
    }
    let traces: Vec<Trace> = harvest.traces.iter().map(|t| t.trace.clone()).collect();
    let mut covering: BTreeMap<StatementId, usize> = BTreeMap::new();
    for s in traces.iter().flat_map(|t| t.covered_union()) {
        *covering.entry(s).or_default() += 1;
    }
    let mut policies = Vec::new();
    for (target, _) in covering.into_iter().filter(|(_, n)| *n >= MIN_POLICY_TRACES) {
        match train_policy(&game, &traces, target, cfg) {
            Ok((net, stats)) => {
                log::info!("policy for statement {target}: {} samples, accuracy {:.3}", stats.samples, stats.accuracy);
                let path = out.join(format!("policy-{target:02}.net"));
                fs::write(&path, net.to_text()).map_err(io_err(&path))?;
                policies.push(target);
            }
            Err(e) => log::info!("no policy for statement {target}: {e}"),
        }
    }
    Ok(ExportSummary {
        matches,
        harvested_traces: harvest.traces.len(),
        harvested_assertions: harvest.assertions.len(),
        static_tests: tests.len(),
        policies,
    })
}

/// Reads every `*.test` file of `dir` in name order. A missing directory
/// is an error; an empty one yields no tests.
pub fn load_tests(dir: &Path) -> Result<Vec<StaticTest>, StoreError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "test"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            StaticTest::parse(&text).map_err(|source| StoreError::Format { path: p.clone(), source })
        })
        .collect()
}
