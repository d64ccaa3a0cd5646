use std::time::Duration;

use playtest_core::dsl::BlockKind;
use playtest_core::game::{default_game, Action};
use playtest_core::matchplay::{Command, Item, MatchConfig, Outcome, Phase};
use playtest_core::service::{Client, Kind, ReportView, Server, ServerConfig, Snapshot, Store, WireMessage};

fn server(cfg: MatchConfig, store: Option<Store>) -> std::net::SocketAddr {
    let mut sc = ServerConfig::new(cfg, default_game());
    sc.store = store;
    sc.seed = Some(99);
    sc.tick_ms = 20;
    Server::bind("127.0.0.1:0", sc).unwrap().spawn().unwrap()
}

fn pair(addr: std::net::SocketAddr) -> (Client, Snapshot, Client, Snapshot) {
    let mut a = Client::connect(addr).unwrap();
    a.set_timeout(Some(Duration::from_secs(20))).unwrap();
    a.send_raw(&WireMessage::new(Kind::Join, "", "", 0, "")).unwrap();
    let mut b = Client::connect(addr).unwrap();
    b.set_timeout(Some(Duration::from_secs(20))).unwrap();
    let sb = b.join().unwrap();
    let sa = Snapshot::parse(&a.recv_kind(Kind::StateSnapshot).unwrap().unwrap().payload).unwrap();
    (a, sa, b, sb)
}

fn next_snapshot(c: &mut Client) -> Snapshot {
    Snapshot::parse(&c.recv_kind(Kind::StateSnapshot).unwrap().unwrap().payload).unwrap()
}

fn snapshot_where(c: &mut Client, pred: impl Fn(&Snapshot) -> bool) -> Snapshot {
    loop {
        let s = next_snapshot(c);
        if pred(&s) {
            return s;
        }
    }
}

fn expect_error(c: &mut Client) -> String {
    let m = c.recv().unwrap().unwrap();
    assert_eq!(m.kind, Kind::Error, "got {}", m.payload);
    m.payload
}

#[test]
fn pairing_gives_both_players_the_same_round_seed() {
    let addr = server(MatchConfig::default(), None);
    let (a, sa, b, sb) = pair(addr);
    assert_eq!((sa.you, sb.you), (0, 1));
    assert_eq!(sa.round_seed, sb.round_seed);
    assert_eq!(sa.phase, Phase::Planning);
    assert_eq!(a.match_id, b.match_id);
    assert_ne!(a.token, b.token);
    assert!(!a.token.is_empty());
}

#[test]
fn rejections_keep_the_connection() {
    let addr = server(MatchConfig::default(), None);
    let (mut a, _, _b, _) = pair(addr);
    let place = Command::Place {
        player: 0,
        trace: 0,
        assertion: playtest_core::dsl::parse("GLOBAL IF Touching(Player, Coin) THEN ScoreIncreases").unwrap(),
    };
    a.send_command(&place).unwrap();
    assert!(expect_error(&mut a).contains("no such trace 0"));

    let real = a.token.clone();
    a.token = "forged".into();
    a.send_command(&Command::Confirm { player: 0 }).unwrap();
    assert!(expect_error(&mut a).contains("token mismatch"));
    a.token = real;

    a.send_bytes(&[0, 0, 0, 5, b'h', b'e', b'l', b'l', b'o']).unwrap();
    assert!(expect_error(&mut a).contains("malformed"));

    let seq_before = a.last_seq;
    a.send_command(&Command::Record { player: 0, seed: 1, actions: vec![Action::Right; 3] }).unwrap();
    let s = next_snapshot(&mut a);
    assert!(a.last_seq > seq_before);
    assert_eq!(s.traces.len(), 1);
    a.send_command(&Command::Record { player: 0, seed: 1, actions: vec![Action::Right; 3] }).unwrap();
    assert!(expect_error(&mut a).contains("already recorded"));
}

#[test]
fn wrong_phase_mirrors_the_engine() {
    let addr = server(MatchConfig::default(), None);
    let (mut a, _, mut b, _) = pair(addr);
    a.send_command(&Command::Confirm { player: 0 }).unwrap();
    next_snapshot(&mut a);
    b.send_command(&Command::Confirm { player: 1 }).unwrap();
    let report = ReportView::parse(&a.recv_kind(Kind::ExecutionReport).unwrap().unwrap().payload).unwrap();
    assert_eq!(report.round, 1);
    assert_eq!(next_snapshot(&mut a).phase, Phase::Execution);
    a.send_command(&Command::Purchase { player: 0, item: Item::Construct(BlockKind::IfThen) }).unwrap();
    let e = expect_error(&mut a);
    assert!(e.contains("not allowed during Execution"), "{e}");
}

#[test]
fn snapshots_on_the_wire_hide_opponent_assertions() {
    let addr = server(MatchConfig::default(), None);
    let (mut a, _, mut b, _) = pair(addr);
    a.send_command(&Command::Record { player: 0, seed: 3, actions: vec![Action::Right; 6] }).unwrap();
    next_snapshot(&mut a);
    a.send_command(&Command::Purchase { player: 0, item: Item::Construct(BlockKind::IfThen) }).unwrap();
    next_snapshot(&mut a);
    a.send_command(&Command::Place {
        player: 0,
        trace: 0,
        assertion: playtest_core::dsl::parse("GLOBAL IF Touching(Player, Coin) THEN ScoreIncreases").unwrap(),
    })
    .unwrap();
    let mine = next_snapshot(&mut a);
    assert_eq!(mine.assertions.len(), 1);
    for _ in 0..3 {
        let m = b.recv_kind(Kind::StateSnapshot).unwrap().unwrap();
        assert!(!m.payload.contains("Touching"));
        assert!(!m.payload.contains("BEGIN\ttrace"));
    }
}

#[test]
fn disconnect_forfeits_after_grace() {
    let cfg = MatchConfig { forfeit_grace_ms: 200, ..MatchConfig::default() };
    let dir = tempfile::tempdir().unwrap();
    let addr = server(cfg, Some(Store::new(dir.path())));
    let (a, _, mut b, _) = pair(addr);
    let id = a.match_id.clone();
    a.close();
    let s = loop {
        let s = next_snapshot(&mut b);
        if s.phase == Phase::Finished {
            break s;
        }
    };
    assert_eq!(s.outcome, Some(Outcome::Winner(1)));
    assert!(b.recv().unwrap().is_none());
    let store = Store::new(dir.path());
    std::thread::sleep(Duration::from_millis(100));
    assert!(store.verify(&id).unwrap());
}

#[test]
fn networked_round_is_stored_and_replays() {
    use playtest_core::service::bot::{best_template, coin_seeking_path};

    let cfg = MatchConfig { forfeit_grace_ms: 100, execution_ms: 50, ..MatchConfig::default() };
    let dir = tempfile::tempdir().unwrap();
    let addr = server(cfg, Some(Store::new(dir.path())));
    let (a, _, b, _) = pair(addr);
    let id = a.match_id.clone();
    let mut clients = [a, b];
    let game = default_game();
    for (p, c) in clients.iter_mut().enumerate() {
        let seed = 10 + p as u64;
        c.send_command(&Command::Record { player: p, seed, actions: coin_seeking_path(&game, seed, 150) }).unwrap();
        let s = snapshot_where(c, |s| !s.traces.is_empty());
        let (trace_id, trace) = s.traces[0].clone();
        c.send_command(&Command::Purchase { player: p, item: Item::Construct(BlockKind::IfThen) }).unwrap();
        snapshot_where(c, |s| s.constructs == 1);
        let assertion = best_template(&trace, &[]).unwrap();
        c.send_command(&Command::Place { player: p, trace: trace_id, assertion }).unwrap();
        snapshot_where(c, |s| s.assertions.len() == 1);
    }
    for (p, c) in clients.iter_mut().enumerate() {
        c.send_command(&Command::Confirm { player: p }).unwrap();
    }
    for c in clients.iter_mut() {
        let r = ReportView::parse(&c.recv_kind(Kind::ExecutionReport).unwrap().unwrap().payload).unwrap();
        assert_eq!(r.mutants.len(), 5);
        assert!(r.mutants.iter().all(|m| m.killed == m.killing_assertion.is_some()));
    }
    // The execution phase times out on its own and the next round begins.
    for c in clients.iter_mut() {
        while next_snapshot(c).round != 2 {}
    }
    for c in clients {
        c.close();
    }
    let store = Store::new(dir.path());
    let mut tries = 0;
    while store.load(&id).unwrap().final_hash.is_none() && tries < 100 {
        std::thread::sleep(Duration::from_millis(50));
        tries += 1;
    }
    let stored = store.load(&id).unwrap();
    assert!(stored.commands.iter().any(|c| matches!(c, Command::Tick { .. })));
    assert!(stored.commands.iter().any(|c| matches!(c, Command::Forfeit { .. })));
    assert!(store.verify(&id).unwrap());
}
