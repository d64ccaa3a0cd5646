use proptest::prelude::*;

use super::*;
use crate::dsl::parse;
use crate::game::{default_game, parse_actions};

fn fresh() -> MatchState {
    MatchState::start("m", MatchConfig::default(), default_game(), 11).unwrap()
}

fn bomb_run() -> Vec<Action> {
    let mut a = parse_actions("Right,Right,Right,Right,Right,Right,Jump,Right,Right").unwrap();
    a.extend([Action::Right; 20]);
    a
}

const IF_THEN: Item = Item::Construct(BlockKind::IfThen);

#[test]
fn start_uses_config_defaults() {
    let m = fresh();
    for p in &m.players {
        assert_eq!((p.life, p.action_points, p.attack, p.armour), (100, 10, 0, 0));
        assert_eq!((p.playthrough_time, p.mutant_count_attr), (150, 0));
    }
    assert_eq!((m.phase, m.round, m.outcome), (Phase::Planning, 1, None));
    assert_eq!(m, fresh());
    assert_eq!(m.state_hash(), fresh().state_hash());
    let cfg = MatchConfig { starting_life: 0, ..MatchConfig::default() };
    assert!(matches!(MatchState::start("m", cfg, default_game(), 1), Err(MatchError::InvalidConfig(_))));
}

#[test]
fn one_recording_per_phase_within_budget() {
    let mut m = fresh();
    let id = m.record_playthrough(0, &[Action::Right; 5], 3).unwrap();
    assert_eq!(m.trace(id).unwrap().trace.len(), 5);
    assert_eq!(m.record_playthrough(0, &[Action::Left], 3), Err(MatchError::AlreadyRecorded));
    assert!(matches!(m.record_playthrough(1, &[Action::NoOp; 151], 3), Err(MatchError::TooLong { len: 151, budget: 150 })));
    assert!(m.record_playthrough(1, &[Action::NoOp; 150], 3).is_ok());
}

#[test]
fn purchase_examples() {
    let mut m = fresh();
    m.purchase(0, Item::Attack).unwrap();
    assert_eq!((m.players[0].action_points, m.players[0].attack), (2, 1));
    let before = m.clone();
    assert_eq!(m.purchase(0, IF_THEN), Err(MatchError::InsufficientAp { price: 5, available: 2 }));
    assert_eq!(m, before);
    m.purchase(1, Item::PlaythroughTime).unwrap();
    assert_eq!(m.players[1].playthrough_time, 180);
    assert_eq!(m.purchase(1, Item::Construct(BlockKind::Number)), Err(MatchError::NotPurchasable(BlockKind::Number)));
}

#[test]
fn placement_rules() {
    let mut m = fresh();
    let t = m.record_playthrough(0, &bomb_run(), 7).unwrap();
    let bomb = parse("GLOBAL IF Touching(Player, Bomb) THEN GameOver").unwrap();
    assert_eq!(m.place_assertion(0, t, bomb.clone()), Err(MatchError::NoConstruct));
    m.purchase(0, IF_THEN).unwrap();
    m.purchase(0, IF_THEN).unwrap();
    let bogus = parse("GLOBAL IF Compare(Attr(Player, x), ==, 1) THEN GameOver").unwrap();
    assert_eq!(m.place_assertion(0, t, bogus), Err(MatchError::InvalidOracle(0)));
    assert_eq!(m.players[0].purchased_constructs, 2);
    let late = parse("AT 999 IF Compare(Attr(Player, x), ==, 1) THEN GameOver").unwrap();
    assert!(matches!(m.place_assertion(0, t, late), Err(MatchError::Assertion(_))));
    m.place_assertion(0, t, bomb).unwrap();
    assert_eq!(m.players[0].purchased_constructs, 1);
    assert_eq!(m.players[0].assertions[0].source_trace, t);
    assert_eq!(m.players[0].assertions[0].owner, 0);
    assert_eq!(m.place_assertion(1, t, reference_bomb()), Err(MatchError::NotOwner(t)));
    assert_eq!(m.place_assertion(0, 99, reference_bomb()), Err(MatchError::UnknownTrace(99)));
}

fn reference_bomb() -> Assertion {
    crate::dsl::reference_assertions().remove(0)
}

#[test]
fn undefended_mutants_all_hit() {
    let cfg = MatchConfig { base_mutants: 3, ..MatchConfig::default() };
    let mut m = MatchState::start("m", cfg, default_game(), 5).unwrap();
    let report = m.end_planning().unwrap();
    for p in 0..2 {
        assert_eq!(report.players[p].mutants.len(), 3);
        assert_eq!(report.players[p].survivors(), 3);
        assert_eq!(report.players[p].damage_taken, 15);
        assert_eq!(m.players[p].life, 85);
    }
    assert_eq!(m.phase, Phase::Execution);
}

#[test]
fn no_mutants_no_damage() {
    let cfg = MatchConfig { base_mutants: 0, ..MatchConfig::default() };
    let mut m = MatchState::start("m", cfg, default_game(), 5).unwrap();
    let report = m.end_planning().unwrap();
    assert!(report.players.iter().all(|r| r.damage_taken == 0));
}

#[test]
fn equal_attributes_face_the_same_mutants() {
    let mut m = fresh();
    let r = m.end_planning().unwrap();
    let ids = |p: usize| r.players[p].mutants.iter().map(|x| (x.mutant.id, x.mutant.origin)).collect::<Vec<_>>();
    assert_eq!(ids(0), ids(1));

    let mut m = fresh();
    m.purchase(1, Item::MutantCount).unwrap();
    let r = m.end_planning().unwrap();
    assert_eq!(r.players[0].mutants.len(), 7);
    assert_eq!(r.players[1].mutants.len(), 5);
    let origins = |p: usize| r.players[p].mutants.iter().map(|x| x.mutant.origin).collect::<Vec<_>>();
    assert_eq!(origins(0)[..5], origins(1)[..]);
}

#[test]
fn killed_mutants_carry_their_assertion() {
    let mut m = MatchState::start("m", MatchConfig { base_mutants: 60, ..MatchConfig::default() }, default_game(), 3).unwrap();
    let t = m.record_playthrough(0, &bomb_run(), 7).unwrap();
    m.purchase(0, IF_THEN).unwrap();
    m.place_assertion(0, t, reference_bomb()).unwrap();
    let r = m.end_planning().unwrap();
    let killed: Vec<_> = r.players[0].mutants.iter().filter(|x| x.killed).collect();
    assert!(!killed.is_empty());
    for k in killed {
        assert!(k.killing_assertion.is_some());
        assert_eq!(k.trace_id, Some(t));
    }
    assert!(r.players[0].damage_taken < r.players[1].damage_taken);
}

#[test]
fn awards_and_time_growth() {
    let mut m = fresh();
    m.record_playthrough(0, &bomb_run(), 7).unwrap();
    m.end_planning().unwrap();
    let ap = [m.players[0].action_points, m.players[1].action_points];
    let awarded = m.award_action_points().unwrap();
    assert_eq!(awarded[1], 10);
    assert!(awarded[0] > 10);
    assert_eq!(m.players[0].action_points, ap[0] + awarded[0]);
    assert_eq!(m.players[1].playthrough_time, 180);
}

#[test]
fn rounds_alternate_and_reset_recording() {
    let mut m = fresh();
    m.record_playthrough(0, &[Action::NoOp], 1).unwrap();
    assert!(m.confirm(0).unwrap().is_none());
    let report = m.confirm(1).unwrap().expect("both confirmed");
    assert_eq!(report.round, 1);
    assert_eq!(m.phase, Phase::Execution);
    m.confirm(1).unwrap();
    m.confirm(0).unwrap();
    assert_eq!((m.phase, m.round), (Phase::Planning, 2));
    assert_ne!(m.round_seed, round_seed(11, 1));
    assert!(!m.players[0].recorded_this_phase);
    assert_eq!(m.players[0].playthrough_time, 180);
    let r = m.advance_clock(m.config.planning_ms).unwrap();
    assert!(r.is_some());
    assert_eq!(m.phase, Phase::Execution);
}

#[test]
fn winner_examples() {
    assert_eq!(winner_by_life([0, 37]), Some(Outcome::Winner(1)));
    assert_eq!(winner_by_life([12, 44]), None);
    assert_eq!(winner_by_life([0, 0]), Some(Outcome::Draw));
}

#[test]
fn lethal_round_finishes_the_match() {
    let cfg = MatchConfig { starting_life: 10, base_mutants: 3, ..MatchConfig::default() };
    let mut m = MatchState::start("m", cfg, default_game(), 2).unwrap();
    m.purchase(1, Item::Armour).unwrap();
    m.end_planning().unwrap();
    assert_eq!(m.phase, Phase::Finished);
    assert_eq!(m.winner(), Some(1));
    assert_eq!(m.players[0].life, 0);
    assert_eq!(m.players[1].life, 4);
}

#[test]
fn round_cap_decides_by_life() {
    let cfg = MatchConfig { max_rounds: 1, base_mutants: 1, ..MatchConfig::default() };
    let mut m = MatchState::start("m", cfg, default_game(), 2).unwrap();
    m.end_planning().unwrap();
    assert_eq!((m.phase, m.outcome), (Phase::Finished, Some(Outcome::Draw)));
}

#[test]
fn forfeit_hands_the_win_over() {
    let mut m = fresh();
    m.forfeit(0).unwrap();
    assert_eq!((m.phase, m.winner()), (Phase::Finished, Some(1)));
    assert!(m.forfeit(1).is_err());
}

#[test]
fn command_text_roundtrip() {
    let cmds = vec![
        Command::Record { player: 0, seed: 9, actions: vec![Action::Left, Action::Jump] },
        Command::Record { player: 1, seed: 0, actions: vec![] },
        Command::Purchase { player: 1, item: IF_THEN },
        Command::Purchase { player: 0, item: Item::MutantCount },
        Command::Place { player: 0, trace: 0, assertion: reference_bomb() },
        Command::Confirm { player: 1 },
        Command::Tick { ms: 250 },
        Command::Forfeit { player: 0 },
        Command::EndPlanning,
        Command::EndExecution,
    ];
    let log: String = cmds.iter().map(|c| format!("{c}\n")).collect();
    assert_eq!(Command::parse_log(&log).unwrap(), cmds);
    assert!(Command::parse_log("jump\t0").is_err());
    assert!(Command::parse_log("record\t0\t1").is_err());
}

#[derive(Debug, Clone)]
enum Op {
    Record(usize, Vec<Action>, u64),
    Buy(usize, u8),
    Place(usize, u8),
    Confirm(usize),
    Tick(u64),
    EndPlanning,
    EndExecution,
}

fn op() -> impl Strategy<Value = Op> {
    let action = prop::sample::select(Action::ALL.to_vec());
    prop_oneof![
        (0..2usize, prop::collection::vec(action, 0..40), any::<u64>()).prop_map(|(p, a, s)| Op::Record(p, a, s)),
        (0..2usize, 0..5u8).prop_map(|(p, i)| Op::Buy(p, i)),
        (0..2usize, 0..3u8).prop_map(|(p, i)| Op::Place(p, i)),
        (0..2usize).prop_map(Op::Confirm),
        (0..200_000u64).prop_map(Op::Tick),
        Just(Op::EndPlanning),
        Just(Op::EndExecution),
    ]
}

fn required_phase(op: &Op) -> Option<Phase> {
    match op {
        Op::Record(..) | Op::Buy(..) | Op::Place(..) | Op::EndPlanning => Some(Phase::Planning),
        Op::EndExecution => Some(Phase::Execution),
        Op::Confirm(_) | Op::Tick(_) => None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Fires random operations in every phase: wrong-phase calls are
    /// rejected without touching the state, and the economy and life
    /// bookkeeping hold after every accepted call.
    #[test]
    fn phase_safety_and_economy(ops in prop::collection::vec(op(), 1..40)) {
        let cfg = MatchConfig { base_mutants: 2, starting_life: 40, ..MatchConfig::default() };
        let mut m = MatchState::start("p", cfg, default_game(), 77).unwrap();
        let items = [IF_THEN, Item::Attack, Item::Armour, Item::PlaythroughTime, Item::MutantCount];
        let templates = crate::dsl::reference_assertions();
        let mut spent = [0u32; 2];
        let mut awarded = [0u32; 2];
        let ap_start = [m.players[0].action_points, m.players[1].action_points];
        for o in ops {
            let before = m.clone();
            let phase = m.phase;
            let round = m.round;
            let res: Result<(), MatchError> = match &o {
                Op::Record(p, a, s) => m.record_playthrough(*p, a, *s).map(|_| ()),
                Op::Buy(p, i) => {
                    let price = items[*i as usize].price(&m.config).unwrap();
                    m.purchase(*p, items[*i as usize]).map(|_| spent[*p] += price)
                }
                Op::Place(p, i) => {
                    let t = m.players[*p].traces.last().copied().unwrap_or(0);
                    m.place_assertion(*p, t, templates[*i as usize].clone())
                }
                Op::Confirm(p) => m.confirm(*p).map(|_| ()),
                Op::Tick(ms) => m.advance_clock(*ms).map(|_| ()),
                Op::EndPlanning => m.end_planning().map(|_| ()),
                Op::EndExecution => m.end_execution(),
            };
            if let Some(required) = required_phase(&o) {
                if phase != required {
                    prop_assert!(matches!(res, Err(MatchError::WrongPhase { .. })), "{o:?} in {phase}");
                }
            }
            if phase == Phase::Finished {
                prop_assert!(res.is_err());
            }
            if res.is_err() {
                prop_assert_eq!(&m, &before);
                continue;
            }
            if m.round > round {
                let a = m.last_report.as_ref().unwrap();
                for p in 0..2 {
                    awarded[p] += a.players[p].action_points_awarded;
                }
            }
            for p in 0..2 {
                prop_assert_eq!(m.players[p].action_points + spent[p], ap_start[p] + awarded[p]);
                prop_assert!(m.players[p].life <= 40);
                prop_assert!(m.players[p].traces.len() <= before.players[p].traces.len() + 1);
            }
            prop_assert!(m.round >= round);
            prop_assert_eq!(m.outcome.is_some(), m.phase == Phase::Finished);
            match (before.phase, m.phase) {
                (Phase::Planning, Phase::Planning | Phase::Execution | Phase::Finished) => {}
                (Phase::Execution, Phase::Execution | Phase::Planning | Phase::Finished) => {}
                (a, b) => prop_assert!(false, "illegal transition {a} -> {b}"),
            }
            if m.round > round {
                prop_assert!(m.players.iter().zip(&before.players).all(|(n, o)| n.playthrough_time > o.playthrough_time));
            }
        }
    }

    #[test]
    fn command_log_replays_to_the_same_state(ops in prop::collection::vec(op(), 1..25)) {
        let cfg = MatchConfig { base_mutants: 2, ..MatchConfig::default() };
        let mut live = MatchState::start("c", cfg.clone(), default_game(), 5).unwrap();
        let templates = crate::dsl::reference_assertions();
        let items = [IF_THEN, Item::Attack, Item::Armour, Item::PlaythroughTime, Item::MutantCount];
        let mut log = Vec::new();
        for o in ops {
            let cmd = match o {
                Op::Record(p, a, s) => Command::Record { player: p, seed: s, actions: a },
                Op::Buy(p, i) => Command::Purchase { player: p, item: items[i as usize] },
                Op::Place(p, i) => Command::Place {
                    player: p,
                    trace: live.players[p].traces.last().copied().unwrap_or(0),
                    assertion: templates[i as usize].clone(),
                },
                Op::Confirm(p) => Command::Confirm { player: p },
                Op::Tick(ms) => Command::Tick { ms },
                Op::EndPlanning => Command::EndPlanning,
                Op::EndExecution => Command::EndExecution,
            };
            if live.apply(&cmd).is_ok() {
                log.push(cmd.to_string());
            }
        }
        let mut replayed = MatchState::start("c", cfg, default_game(), 5).unwrap();
        for cmd in Command::parse_log(&log.join("\n")).unwrap() {
            replayed.apply(&cmd).unwrap();
        }
        prop_assert_eq!(replayed.state_hash(), live.state_hash());
    }
}
