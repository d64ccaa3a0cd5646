//! Dynamic tests: a small policy network cloned from human playthroughs,
//! with distance-based surprise adequacy over its hidden activations.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SynthError;
use crate::dsl::{evaluate_extended, Assertion, VerdictStatus};
use crate::error::FormatError;
use crate::game::{replay, Action, ActorKind, Game, ObservationFrame, StatementId, Trace};

pub const FEATURE_COUNT: usize = 9;

fn nearest(frame: &ObservationFrame, kind: ActorKind, px: i64, py: i64) -> Option<(i64, i64)> {
    frame
        .actors
        .iter()
        .filter(|a| a.kind == kind && a.alive)
        .min_by_key(|a| (a.x - px).abs() + (a.y - py).abs())
        .map(|a| (a.x - px, a.y - py))
}

/// Player position, offsets to the nearest live coin and bomb (grid
/// normalized), a coin-present bit, score / 100 and the game-over flag.
/// Missing actors give zero offsets.
pub fn featurize(frame: &ObservationFrame, width: i64, height: i64) -> Vec<f64> {
    let p = frame.player();
    let (w, h) = (width.max(1) as f64, height.max(1) as f64);
    let coin = nearest(frame, ActorKind::Coin, p.x, p.y);
    let (cdx, cdy) = coin.unwrap_or((0, 0));
    let (bdx, bdy) = nearest(frame, ActorKind::Bomb, p.x, p.y).unwrap_or((0, 0));
    vec![
        p.x as f64 / w,
        p.y as f64 / h,
        cdx as f64 / w,
        cdy as f64 / h,
        f64::from(u8::from(coin.is_some())),
        bdx as f64 / w,
        bdy as f64 / h,
        frame.score as f64 / 100.0,
        f64::from(u8::from(frame.game_over)),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { hidden: 16, learning_rate: 0.05, epochs: 200, batch_size: 16, seed: 0 }
    }
}

impl TrainConfig {
    pub fn to_text(&self) -> String {
        format!(
            "hidden={}\nlearning_rate={}\nepochs={}\nbatch_size={}\nseed={}\n",
            self.hidden, self.learning_rate, self.epochs, self.batch_size, self.seed
        )
    }

    pub fn parse(text: &str) -> Result<TrainConfig, FormatError> {
        let mut cfg = TrainConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| FormatError::new(i + 1, "expected key=value"))?;
            let bad = || FormatError::new(i + 1, format!("bad value for `{}`", k.trim()));
            let v = v.trim();
            match k.trim() {
                "hidden" => cfg.hidden = v.parse().map_err(|_| bad())?,
                "learning_rate" => cfg.learning_rate = v.parse().map_err(|_| bad())?,
                "epochs" => cfg.epochs = v.parse().map_err(|_| bad())?,
                "batch_size" => cfg.batch_size = v.parse().map_err(|_| bad())?,
                "seed" => cfg.seed = v.parse().map_err(|_| bad())?,
                other => return Err(FormatError::new(i + 1, format!("unknown key `{other}`"))),
            }
        }
        if cfg.hidden == 0 || cfg.batch_size == 0 {
            return Err(FormatError::new(0, "hidden and batch_size must be positive"));
        }
        Ok(cfg)
    }
}

/// One hidden tanh layer, softmax output over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub sizes: [usize; 3],
    /// `sizes[1] x sizes[0]`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `sizes[2] x sizes[1]`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Inputs are standardized as `(x - input_mean) * input_scale`.
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub target_statement: StatementId,
    pub activation_store: Vec<Vec<f64>>,
}

/// Loss gradients, shaped like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2].into_iter().flatten().copied().collect()
    }
}

fn softmax(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl PolicyNet {
    /// Uniform Xavier initialization from `seed`.
    pub fn new(n_in: usize, n_hidden: usize, n_out: usize, target_statement: StatementId, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |fan_in: usize, fan_out: usize| -> Vec<f64> {
            let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..fan_in * fan_out).map(|_| rng.gen_range(-r..r)).collect()
        };
        PolicyNet {
            sizes: [n_in, n_hidden, n_out],
            w1: init(n_in, n_hidden),
            b1: vec![0.0; n_hidden],
            w2: init(n_hidden, n_out),
            b2: vec![0.0; n_out],
            input_mean: vec![0.0; n_in],
            input_scale: vec![1.0; n_in],
            target_statement,
            activation_store: Vec::new(),
        }
    }

    pub fn hidden(&self, x: &[f64]) -> Vec<f64> {
        let [n_in, n_h, _] = self.sizes;
        (0..n_h)
            .map(|j| {
                let row = &self.w1[j * n_in..(j + 1) * n_in];
                let z: f64 = (0..n_in).map(|i| row[i] * (x[i] - self.input_mean[i]) * self.input_scale[i]).sum();
                (self.b1[j] + z).tanh()
            })
            .collect()
    }

    fn output(&self, h: &[f64]) -> Vec<f64> {
        let [_, n_h, n_out] = self.sizes;
        let mut z: Vec<f64> = (0..n_out)
            .map(|k| self.b2[k] + self.w2[k * n_h..(k + 1) * n_h].iter().zip(h).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        softmax(&mut z);
        z
    }

    /// Action probabilities.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.output(&self.hidden(x))
    }

    /// Most likely action; ties go to the earlier action.
    pub fn act(&self, x: &[f64]) -> Action {
        let p = self.forward(x);
        let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        Action::ALL[best]
    }

    /// Mean cross-entropy of the labelled samples.
    pub fn loss(&self, samples: &[(Vec<f64>, usize)]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        samples.iter().map(|(x, y)| -self.forward(x)[*y].max(1e-300).ln()).sum::<f64>() / samples.len() as f64
    }

    /// Gradients of [`PolicyNet::loss`] by backpropagation.
    pub fn gradients(&self, samples: &[(Vec<f64>, usize)]) -> Gradients {
        let [n_in, n_h, n_out] = self.sizes;
        let mut g = Gradients {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; n_h],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; n_out],
        };
        let scale = 1.0 / samples.len().max(1) as f64;
        for (x, y) in samples {
            let h = self.hidden(x);
            let mut dz = self.output(&h);
            dz[*y] -= 1.0;
            let mut dh = vec![0.0; n_h];
            for k in 0..n_out {
                g.b2[k] += dz[k] * scale;
                for j in 0..n_h {
                    g.w2[k * n_h + j] += dz[k] * h[j] * scale;
                    dh[j] += dz[k] * self.w2[k * n_h + j];
                }
            }
            for j in 0..n_h {
                let da = dh[j] * (1.0 - h[j] * h[j]);
                g.b1[j] += da * scale;
                for i in 0..n_in {
                    g.w1[j * n_in + i] += da * (x[i] - self.input_mean[i]) * self.input_scale[i] * scale;
                }
            }
        }
        g
    }

    pub fn params(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2].into_iter().flatten().copied().collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter().copied();
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            for slot in v.iter_mut() {
                *slot = it.next().expect("parameter count matches");
            }
        }
    }

    fn descend(&mut self, g: &Gradients, lr: f64) {
        for (p, d) in [(&mut self.w1, &g.w1), (&mut self.b1, &g.b1), (&mut self.w2, &g.w2), (&mut self.b2, &g.b2)] {
            for (a, b) in p.iter_mut().zip(d) {
                *a -= lr * b;
            }
        }
    }

    /// Sets the input standardization to the samples' mean and inverse
    /// standard deviation; constant features are only centred.
    pub fn fit_input_scaling(&mut self, samples: &[(Vec<f64>, usize)]) {
        let n = samples.len().max(1) as f64;
        for i in 0..self.sizes[0] {
            let mean = samples.iter().map(|(x, _)| x[i]).sum::<f64>() / n;
            let var = samples.iter().map(|(x, _)| (x[i] - mean).powi(2)).sum::<f64>() / n;
            self.input_mean[i] = mean;
            self.input_scale[i] = if var > 1e-12 { 1.0 / var.sqrt() } else { 1.0 };
        }
    }

    /// Text dump: a `POLICY` header with layer sizes and target, the input
    /// mean and scale rows, one line per weight row and bias vector, then
    /// the activation store.
    /// Numbers carry 9 significant digits.
    pub fn to_text(&self) -> String {
        let [n_in, n_h, n_out] = self.sizes;
        let row = |v: &[f64]| v.iter().map(|x| format!("{x:.8e}")).collect::<Vec<_>>().join(" ");
        let mut out = format!("POLICY\t{n_in}\t{n_h}\t{n_out}\t{}\n", self.target_statement);
        let _ = writeln!(out, "{}", row(&self.input_mean));
        let _ = writeln!(out, "{}", row(&self.input_scale));
        for j in 0..n_h {
            let _ = writeln!(out, "{}", row(&self.w1[j * n_in..(j + 1) * n_in]));
        }
        let _ = writeln!(out, "{}", row(&self.b1));
        for k in 0..n_out {
            let _ = writeln!(out, "{}", row(&self.w2[k * n_h..(k + 1) * n_h]));
        }
        let _ = writeln!(out, "{}", row(&self.b2));
        let _ = writeln!(out, "STORE\t{}", self.activation_store.len());
        for a in &self.activation_store {
            let _ = writeln!(out, "{}", row(a));
        }
        out
    }

    pub fn parse(text: &str) -> Result<PolicyNet, FormatError> {
        let mut lines = text.lines().enumerate();
        let (_, head) = lines.next().ok_or_else(|| FormatError::new(1, "empty policy file"))?;
        let h: Vec<&str> = head.split('\t').collect();
        if h.len() != 5 || h[0] != "POLICY" {
            return Err(FormatError::new(1, "expected POLICY header"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| FormatError::new(1, "bad header number"));
        let (n_in, n_h, n_out, target) = (num(h[1])?, num(h[2])?, num(h[3])?, num(h[4])?);
        let mut row = |n: usize| read_row(&mut lines, n);
        let input_mean = row(n_in)?;
        let input_scale = row(n_in)?;
        let mut w1 = Vec::with_capacity(n_in * n_h);
        for _ in 0..n_h {
            w1.extend(row(n_in)?);
        }
        let b1 = row(n_h)?;
        let mut w2 = Vec::with_capacity(n_h * n_out);
        for _ in 0..n_out {
            w2.extend(row(n_h)?);
        }
        let b2 = row(n_out)?;
        let (i, store_line) = lines.next().ok_or_else(|| FormatError::new(0, "missing STORE line"))?;
        let count: usize = store_line
            .strip_prefix("STORE\t")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::new(i + 1, "expected STORE count"))?;
        let mut activation_store = Vec::with_capacity(count);
        for _ in 0..count {
            activation_store.push(read_row(&mut lines, n_h)?);
        }
        Ok(PolicyNet {
            sizes: [n_in, n_h, n_out],
            w1,
            b1,
            w2,
            b2,
            input_mean,
            input_scale,
            target_statement: target,
            activation_store,
        })
    }
}

fn read_row<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, n: usize) -> Result<Vec<f64>, FormatError> {
    let (i, l) = lines.next().ok_or_else(|| FormatError::new(0, "truncated policy file"))?;
    let v: Vec<f64> = l
        .split_whitespace()
        .map(|x| x.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| FormatError::new(i + 1, "bad number"))?;
    if v.len() != n {
        return Err(FormatError::new(i + 1, format!("expected {n} numbers, found {}", v.len())));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainStats {
    pub samples: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Fraction of training samples whose recorded action is the argmax.
    pub accuracy: f64,
}

/// Behavioural cloning towards `target`: every trace that executes the
/// target contributes its steps up to the first execution as (features,
/// action) samples.
pub fn train_policy(game: &Game, traces: &[Trace], target: StatementId, cfg: &TrainConfig) -> Result<(PolicyNet, TrainStats), SynthError> {
    let (w, h) = (game.level.width(), game.level.height());
    let mut samples: Vec<(Vec<f64>, usize)> = Vec::new();
    for t in traces {
        if let Some(first) = t.first_coverage_of(target) {
            for k in 0..first {
                let frame = t.observation(k).expect("step within trace");
                samples.push((featurize(frame, w, h), t.actions[k].index()));
            }
        }
    }
    if samples.is_empty() {
        return Err(SynthError::Untrainable(target));
    }
    let mut net = PolicyNet::new(FEATURE_COUNT, cfg.hidden, Action::ALL.len(), target, cfg.seed);
    net.fit_input_scaling(&samples);
    let initial_loss = net.loss(&samples);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(Vec<f64>, usize)> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let g = net.gradients(&batch);
            net.descend(&g, cfg.learning_rate);
        }
    }
    let final_loss = net.loss(&samples);
    let correct = samples.iter().filter(|(x, y)| net.act(x).index() == *y).count();
    net.activation_store = samples.iter().map(|(x, _)| net.hidden(x)).collect();
    let stats = TrainStats { samples: samples.len(), initial_loss, final_loss, accuracy: correct as f64 / samples.len() as f64 };
    Ok((net, stats))
}

/// Distance from the hidden activation of `features` to its nearest
/// neighbour in the activation store; infinite for an empty store.
pub fn surprise(net: &PolicyNet, features: &[f64]) -> f64 {
    let a = net.hidden(features);
    net.activation_store
        .iter()
        .map(|v| v.iter().zip(&a).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicVerdict {
    pub target_reached: bool,
    /// Step at which the target first executed.
    pub reached_at: Option<usize>,
    pub max_surprise: f64,
    /// `max_surprise` exceeded the threshold.
    pub alarm: bool,
    pub assertion_verdicts: Vec<VerdictStatus>,
    pub trace: Trace,
}

/// Rolls the policy out greedily on `game` until the target executes, the
/// game ends or `budget` ticks pass, then checks `assertions` on the
/// rollout.
pub fn run_dynamic_test(
    net: &PolicyNet,
    game: &Game,
    seed: u64,
    budget: usize,
    sa_threshold: f64,
    assertions: &[Assertion],
) -> DynamicVerdict {
    let (w, h) = (game.level.width(), game.level.height());
    let mut state = game.new_world(seed);
    let mut actions = Vec::new();
    let mut max_surprise: f64 = 0.0;
    let mut reached_at = None;
    while actions.len() < budget && !state.game_over {
        let x = featurize(&state.observe(), w, h);
        max_surprise = max_surprise.max(surprise(net, &x));
        let a = net.act(&x);
        let executed = game.step_in_place(&mut state, a).expect("rollout stops at game over");
        actions.push(a);
        if executed.contains(&net.target_statement) {
            reached_at = Some(actions.len());
            break;
        }
    }
    let trace = replay(game, seed, &actions);
    let assertion_verdicts = assertions
        .iter()
        .map(|a| evaluate_extended(a, &trace).map(|v| v.status).unwrap_or(VerdictStatus::NeverTriggered))
        .collect();
    DynamicVerdict {
        target_reached: reached_at.is_some(),
        reached_at,
        max_surprise,
        alarm: max_surprise > sa_threshold,
        assertion_verdicts,
        trace,
    }
}
