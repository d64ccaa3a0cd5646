use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use playtest_core::dsl::reference_assertions;
use playtest_core::game::{default_game, replay, statement_ids, Action};
use playtest_core::matchplay::{MatchConfig, MatchState};
use playtest_core::mutation::enumerate_mutants;
use playtest_core::service::{coin_seeking_path, run_bot_match, Difficulty};
use playtest_core::synth::{levenshtein, run_suite, train_policy, StaticTest, TrainConfig};

fn random_actions(rng: &mut ChaCha8Rng, n: usize) -> Vec<Action> {
    (0..n).map(|_| Action::ALL[rng.gen_range(0..4)]).collect()
}

fn engine(c: &mut Criterion) {
    let game = default_game();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let actions = random_actions(&mut rng, 200);
    c.bench_function("replay_200", |b| b.iter(|| replay(&game, 7, &actions)));
    c.bench_function("coin_seeking_path", |b| b.iter(|| coin_seeking_path(&game, 3, 150)));
}

fn edit_distance(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_actions(&mut rng, 150);
    let b = random_actions(&mut rng, 150);
    c.bench_function("levenshtein_150", |bch| bch.iter(|| levenshtein(&a, &b)));
}

fn suite(c: &mut Criterion) {
    let game = default_game();
    let mutants = enumerate_mutants(&game.script);
    let actions = coin_seeking_path(&game, 5, 150);
    let test = StaticTest {
        script_hash: game.script.hash(),
        seed: 5,
        actions,
        oracles: reference_assertions(),
        match_id: "bench".into(),
        player: 0,
    };
    let tests = vec![test; 8];
    c.bench_function("suite_8_tests_all_mutants", |b| b.iter(|| run_suite(&game, &tests, &mutants).unwrap()));
}

fn planning(c: &mut Criterion) {
    let game = default_game();
    c.bench_function("end_planning_default", |b| {
        b.iter_batched(
            || {
                let mut m = MatchState::start("b", MatchConfig::default(), game.clone(), 9).unwrap();
                m.record_playthrough(0, &coin_seeking_path(&game, 1, 150), 1).unwrap();
                m.record_playthrough(1, &coin_seeking_path(&game, 2, 150), 2).unwrap();
                m
            },
            |mut m| m.end_planning().unwrap(),
            BatchSize::SmallInput,
        )
    });
    c.bench_function("greedy_bot_match", |b| {
        b.iter(|| run_bot_match("b", MatchConfig::default(), game.clone(), 4, [Difficulty::Greedy; 2]).unwrap())
    });
}

fn policy(c: &mut Criterion) {
    let game = default_game();
    let traces: Vec<_> = (0..20).map(|s| replay(&game, s, &coin_seeking_path(&game, s, 150))).collect();
    let cfg = TrainConfig { epochs: 50, ..TrainConfig::default() };
    let mut group = c.benchmark_group("policy");
    group.sample_size(10);
    group.bench_function("train_coin_50_epochs", |b| {
        b.iter(|| train_policy(&game, &traces, statement_ids().coin_score, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, engine, edit_distance, suite, planning, policy);
criterion_main!(benches);
