use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use playtest_core::game::{default_level, default_script, Game, Level, RuleScript};
use playtest_core::matchplay::{MatchConfig, Outcome};
use playtest_core::mutation::{enumerate_mutants, select_round_mutants};
use playtest_core::service::{export_tests, load_tests, run_bot_match, Difficulty, Server, ServerConfig, Store};
use playtest_core::synth::{run_suite, TrainConfig};

#[derive(Parser)]
#[command(name = "playtest", version, about = "Two-player mutation-testing game and test harvester")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the match server.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// MatchConfig file; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Store directory; falls back to $PLAYTEST_STORE, then ./playtest-store.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        level: Option<PathBuf>,
    },
    /// Play headless bot matches and write them to a store.
    BotMatch {
        #[arg(long)]
        seed: u64,
        /// Two of random, greedy.
        #[arg(long, default_value = "greedy,greedy")]
        bots: String,
        #[arg(long)]
        out: PathBuf,
        /// Number of matches, with seeds seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        level: Option<PathBuf>,
    },
    /// Harvest a store into static tests and policy networks.
    ExportTests {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TrainConfig file; defaults when omitted.
        #[arg(long)]
        train: Option<PathBuf>,
    },
    /// Run static tests against mutants and print the kill table.
    EvalSuite {
        #[arg(long)]
        tests: PathBuf,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        level: Option<PathBuf>,
        /// `all` or a count drawn with --seed.
        #[arg(long, default_value = "all")]
        mutants: MutantSel,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Inspect the mutants of a script.
    Mutate {
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        list: bool,
    },
}

#[derive(Clone, Copy, Debug)]
enum MutantSel {
    All,
    Count(usize),
}

impl FromStr for MutantSel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(MutantSel::All);
        }
        s.parse().map(MutantSel::Count).map_err(|_| format!("expected `all` or a count, got `{s}`"))
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_script(path: Option<&Path>) -> Result<RuleScript> {
    match path {
        None => Ok(default_script()),
        Some(p) => RuleScript::parse(&read(p)?).with_context(|| format!("parsing {}", p.display())),
    }
}

fn load_game(script: Option<&Path>, level: Option<&Path>) -> Result<Game> {
    let level = match level {
        None => default_level(),
        Some(p) => Level::parse(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
    };
    Ok(Game::new(load_script(script)?, level))
}

fn load_config(path: Option<&Path>) -> Result<MatchConfig> {
    match path {
        None => Ok(MatchConfig::default()),
        Some(p) => MatchConfig::parse(&read(p)?).with_context(|| format!("parsing {}", p.display())),
    }
}

fn parse_bots(s: &str) -> Result<[Difficulty; 2]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b] = parts.as_slice() else {
        bail!("--bots takes two comma-separated names, got `{s}`");
    };
    Ok([a.parse().map_err(anyhow::Error::msg)?, b.parse().map_err(anyhow::Error::msg)?])
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Serve { port, bind, config, store, script, level } => {
            let mut cfg = ServerConfig::new(load_config(config.as_deref())?, load_game(script.as_deref(), level.as_deref())?);
            let store = match store {
                Some(dir) => Store::new(dir),
                None => Store::from_env_or("playtest-store"),
            };
            eprintln!("store: {}", store.root().display());
            cfg.store = Some(store);
            let server = Server::bind((bind.as_str(), port), cfg).with_context(|| format!("binding {bind}:{port}"))?;
            eprintln!("listening on {}", server.local_addr()?);
            server.run()?;
        }
        Cmd::BotMatch { seed, bots, out, count, config, script, level } => {
            let bots = parse_bots(&bots)?;
            let cfg = load_config(config.as_deref())?;
            let game = load_game(script.as_deref(), level.as_deref())?;
            let store = Store::new(out);
            for s in seed..seed + count {
                let id = format!("bot-{s:06}");
                let (m, log) = run_bot_match(&id, cfg.clone(), game.clone(), s, bots)?;
                store.write_match(&m, &log)?;
                let outcome = match m.outcome {
                    Some(Outcome::Winner(p)) => format!("winner {p}"),
                    Some(Outcome::Draw) => "draw".into(),
                    None => "-".into(),
                };
                println!("{id}\t{outcome}\trounds {}\tcommands {}\t{}", m.round, log.len(), m.state_hash());
            }
        }
        Cmd::ExportTests { store, out, train } => {
            let cfg = match train {
                None => TrainConfig::default(),
                Some(p) => TrainConfig::parse(&read(&p)?).with_context(|| format!("parsing {}", p.display()))?,
            };
            let summary = export_tests(&Store::new(store), &out, &cfg)?;
            println!("matches\t{}", summary.matches);
            println!("traces\t{}", summary.harvested_traces);
            println!("assertions\t{}", summary.harvested_assertions);
            println!("static_tests\t{}", summary.static_tests);
            let policies: Vec<String> = summary.policies.iter().map(|p| p.to_string()).collect();
            println!("policies\t{}", if policies.is_empty() { "-".into() } else { policies.join(",") });
        }
        Cmd::EvalSuite { tests, script, level, mutants, seed } => {
            let game = load_game(script.as_deref(), level.as_deref())?;
            let tests = load_tests(&tests)?;
            let mutants = match mutants {
                MutantSel::All => enumerate_mutants(&game.script),
                MutantSel::Count(n) => select_round_mutants(&game.script, n, seed),
            };
            let report = run_suite(&game, &tests, &mutants)?;
            print!("{}", report.to_tsv());
        }
        Cmd::Mutate { script, list } => {
            let script = load_script(script.as_deref())?;
            let mutants = enumerate_mutants(&script);
            if list {
                let mut out = std::io::stdout().lock();
                for m in &mutants {
                    if writeln!(out, "{}", m.descriptor()).is_err() {
                        break;
                    }
                }
            } else {
                println!("{} mutants", mutants.len());
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(Cli::parse())
}
