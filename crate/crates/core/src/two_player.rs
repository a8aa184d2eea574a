//! Repeated two-player game with learned opponent models and noisy cost
//! corrections.
//!
//! Each round both players pick an action in `[0, 1]`, move to state `1`
//! with probability equal to their action, and pay
//! `cost¹ = −c·a¹ + 1{x² = 1}` and `cost² = 1{x¹ ≠ x²}`. A player sees only
//! realized states. It keeps `K` action networks mapping its own action to
//! the opponent's expected state and `K` dropout cost networks that absorb
//! what the action networks miss. When the share of scenarios that beat the
//! best expectation `B` falls into the desperate band, the cost noise is
//! amplified.

use std::collections::VecDeque;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::{AgeRecord, TrajectoryStats};
use crate::mean_field::action_grid;
use crate::measure::FiniteMeasure;
use crate::seed::{derive_seed, rng_from_seed, LabRng};
use crate::smallnet::{DropoutSample, Net, OutputTransform, Scratch, TrainSample};

/// Below this κ a player is desperate and amplifies its cost noise.
pub const DESPERATE_BELOW: f64 = 1.0 / 9.0;
/// Above this κ the amplification decays.
pub const CONFIDENT_ABOVE: f64 = 6.0 / 9.0;
pub const EXPLORE_GROWTH: f64 = 1.5;
pub const EXPLORE_DECAY: f64 = 0.9;
pub const EXPLORE_MAX: f64 = 8.0;

const KAPPA_SMOOTHING: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    /// Paid `c·a¹`, loses when the opponent lands in state `1`.
    One,
    /// Loses when the two states differ.
    Two,
}

impl Role {
    pub fn index(self) -> usize {
        match self {
            Role::One => 0,
            Role::Two => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub c: f64,
    pub b1: f64,
    pub b2: f64,
    /// Networks per family and player.
    pub k: usize,
    /// `0` disables memory and therefore learning.
    pub memory_len: usize,
    pub recency_decay: f64,
    pub n_games: usize,
    /// Number of evenly spaced points on `[0, 1]`.
    pub grid: usize,
    pub seed: u64,
    pub hidden: usize,
    pub sgd_steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub cost_dropout: f64,
    /// Dropout draws per cost network when estimating κ.
    pub kappa_draws: usize,
    /// Start every network at zero instead of at random.
    pub zero_init: bool,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            c: 0.3,
            b1: 0.1,
            b2: -0.2,
            k: 8,
            memory_len: 200,
            recency_decay: 0.98,
            n_games: 1000,
            grid: 101,
            seed: 0,
            hidden: 16,
            sgd_steps: 5,
            learning_rate: 0.05,
            batch_size: 16,
            cost_dropout: 0.2,
            kappa_draws: 2,
            zero_init: false,
        }
    }
}

impl GameConfig {
    pub fn with_regime(c: f64, b1: f64, b2: f64) -> Self {
        Self {
            c,
            b1,
            b2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.c > 0.0) {
            return bad(format!("c = {} must be positive", self.c));
        }
        if self.grid < 2 {
            return bad(format!("grid = {} needs at least two points", self.grid));
        }
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if !(self.recency_decay > 0.0 && self.recency_decay < 1.0) {
            return bad(format!("recency decay {} outside (0, 1)", self.recency_decay));
        }
        if !(0.0..1.0).contains(&self.cost_dropout) {
            return bad(format!("cost dropout {} outside [0, 1)", self.cost_dropout));
        }
        if self.kappa_draws == 0 || self.batch_size == 0 || self.hidden == 0 {
            return bad("kappa draws, batch size and hidden width must be positive".into());
        }
        if !self.b1.is_finite() || !self.b2.is_finite() || !(self.learning_rate > 0.0) {
            return bad("expectations must be finite and the learning rate positive".into());
        }
        Ok(())
    }

    pub fn expectation(&self, role: Role) -> f64 {
        match role {
            Role::One => self.b1,
            Role::Two => self.b2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub action: f64,
    pub own_state: u8,
    pub opponent_state: u8,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerState {
    /// Own action to the opponent's expected state.
    pub action_nets: Vec<Net>,
    /// Own action to a cost correction; random through dropout.
    pub cost_nets: Vec<Net>,
    pub memory: VecDeque<MemoryEntry>,
    pub memory_len: usize,
    /// Smoothed κ, for display.
    pub kappa_ema: f64,
    pub explore_scale: f64,
}

impl PlayerState {
    pub fn new<R: Rng + ?Sized>(cfg: &GameConfig, rng: &mut R) -> Self {
        let dims = [1, cfg.hidden, cfg.hidden, 1];
        let make = |out, dropout, rng: &mut R| {
            if cfg.zero_init {
                Net::zeros(&dims, out, dropout)
            } else {
                Net::random(&dims, out, dropout, rng)
            }
        };
        let action_nets = (0..cfg.k).map(|_| make(OutputTransform::Sigmoid, 0.0, rng)).collect();
        let cost_nets = (0..cfg.k)
            .map(|_| make(OutputTransform::Identity, cfg.cost_dropout, rng))
            .collect();
        Self::from_nets(action_nets, cost_nets, cfg.memory_len)
    }

    pub fn from_nets(action_nets: Vec<Net>, cost_nets: Vec<Net>, memory_len: usize) -> Self {
        Self {
            action_nets,
            cost_nets,
            memory: VecDeque::with_capacity(memory_len),
            memory_len,
            kappa_ema: 0.5,
            explore_scale: 1.0,
        }
    }

    pub fn remember(&mut self, entry: MemoryEntry) {
        if self.memory_len == 0 {
            return;
        }
        if self.memory.len() == self.memory_len {
            self.memory.pop_front();
        }
        self.memory.push_back(entry);
    }

    /// Action-network predictions of the opponent's state at `a`.
    fn opponent_estimates(&self, a: f64, scratch: &mut Scratch) -> impl Iterator<Item = f64> + '_ {
        let preds: Vec<f64> = self.action_nets.iter().map(|n| n.eval_with(&[a], None, scratch)).collect();
        preds.into_iter()
    }

    /// Expected cost of `a` under the action networks alone.
    pub fn modelled_cost(&self, role: Role, a: f64, c: f64) -> f64 {
        let mut scratch = Scratch::default();
        self.modelled_cost_with(role, a, c, &mut scratch)
    }

    fn modelled_cost_with(&self, role: Role, a: f64, c: f64, scratch: &mut Scratch) -> f64 {
        let k = self.action_nets.len() as f64;
        match role {
            Role::One => self.opponent_estimates(a, scratch).sum::<f64>() / k - c * a,
            Role::Two => {
                self.opponent_estimates(a, scratch)
                    .map(|p| p + a * (1.0 - 2.0 * p))
                    .sum::<f64>()
                    / k
            }
        }
    }
}

/// States of both players: `xⁱ ~ Bernoulli(aⁱ)`, independently.
pub fn env_step<R: Rng + ?Sized>(a1: f64, a2: f64, rng: &mut R) -> Result<(u8, u8)> {
    for a in [a1, a2] {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidParameter(format!("action {a} outside [0, 1]")));
        }
    }
    let x1 = (rng.gen::<f64>() < a1) as u8;
    let x2 = (rng.gen::<f64>() < a2) as u8;
    Ok((x1, x2))
}

pub fn realized_costs(a1: f64, _a2: f64, x1: u8, x2: u8, c: f64) -> (f64, f64) {
    let cost1 = -c * a1 + if x2 == 1 { 1.0 } else { 0.0 };
    let cost2 = if x1 != x2 { 1.0 } else { 0.0 };
    (cost1, cost2)
}

/// `Ĵ` of `own_action` in scenario `(ℓ, dropout)`.
pub fn estimate_cost(
    player: &PlayerState,
    own_action: f64,
    l: usize,
    dropout: &DropoutSample,
    role: Role,
    c: f64,
) -> f64 {
    let mut scratch = Scratch::default();
    player.modelled_cost_with(role, own_action, c, &mut scratch)
        + player.explore_scale * player.cost_nets[l].eval_with(&[own_action], Some(dropout), &mut scratch)
}

/// Index of the smallest value; the first one on ties.
pub fn argmin_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// `Ĵ` over the grid, with the action-network part shared across scenarios.
struct GridCosts {
    grid: Vec<f64>,
    modelled: Vec<f64>,
}

impl GridCosts {
    fn new(player: &PlayerState, role: Role, c: f64, grid: &[f64]) -> Self {
        let mut scratch = Scratch::default();
        let modelled = grid.iter().map(|&a| player.modelled_cost_with(role, a, c, &mut scratch)).collect();
        Self {
            grid: grid.to_vec(),
            modelled,
        }
    }

    fn scenario(&self, player: &PlayerState, l: usize, sample: Option<&DropoutSample>) -> Vec<f64> {
        let mut scratch = Scratch::default();
        let net = &player.cost_nets[l];
        self.grid
            .iter()
            .zip(&self.modelled)
            .map(|(&a, &m)| m + player.explore_scale * net.eval_with(&[a], sample, &mut scratch))
            .collect()
    }
}

/// Minimizer of `Ĵ` over `grid` for one drawn scenario.
pub fn draw_action<R: Rng + ?Sized>(
    player: &PlayerState,
    role: Role,
    c: f64,
    grid: &[f64],
    rng: &mut R,
) -> f64 {
    let l = rng.gen_range(0..player.cost_nets.len());
    let sample = DropoutSample::draw(&player.cost_nets[l], rng);
    let costs = GridCosts::new(player, role, c, grid).scenario(player, l, Some(&sample));
    grid[argmin_index(&costs)]
}

/// Minimizer of the action-network part alone, i.e. with the noise off.
pub fn modelled_argmin(player: &PlayerState, role: Role, c: f64, grid: &[f64]) -> f64 {
    grid[argmin_index(&GridCosts::new(player, role, c, grid).modelled)]
}

/// κ and the mean shortfall of `played` over `K × draws` scenarios. A
/// scenario counts towards κ when its best value `−min Ĵ` exceeds `b`.
pub fn scenario_report<R: Rng + ?Sized>(
    player: &PlayerState,
    role: Role,
    c: f64,
    b: f64,
    grid: &[f64],
    played: Option<f64>,
    draws: usize,
    rng: &mut R,
) -> (f64, f64) {
    let costs = GridCosts::new(player, role, c, grid);
    let played_idx = played.map(|p| {
        grid.iter()
            .enumerate()
            .min_by(|x, y| (x.1 - p).abs().total_cmp(&(y.1 - p).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    });
    let n = player.cost_nets.len() * draws;
    let (mut kappa, mut regret) = (0.0, 0.0);
    for l in 0..player.cost_nets.len() {
        for _ in 0..draws {
            let sample = DropoutSample::draw(&player.cost_nets[l], rng);
            let v = costs.scenario(player, l, Some(&sample));
            let best = v[argmin_index(&v)];
            if -best > b {
                kappa += 1.0;
            }
            if let Some(i) = played_idx {
                regret += v[i] - best;
            }
        }
    }
    (kappa / n as f64, regret / n as f64)
}

/// Desperation rule on the noise amplification.
pub fn adjust_explore_scale(scale: f64, kappa: f64) -> f64 {
    if kappa < DESPERATE_BELOW {
        (scale * EXPLORE_GROWTH).min(EXPLORE_MAX)
    } else if kappa > CONFIDENT_ABOVE {
        (scale * EXPLORE_DECAY).max(1.0)
    } else {
        scale
    }
}

fn recency_sampler(memory: &VecDeque<MemoryEntry>, decay: f64) -> Result<WeightedIndex<f64>> {
    let n = memory.len();
    let weights: Vec<f64> = (0..n).map(|i| decay.powi((n - 1 - i) as i32)).collect();
    WeightedIndex::new(weights).map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// One round of training followed by the desperation rule. Returns κ and
/// the shortfall of the most recent action under the updated estimates.
pub fn update_networks<R: Rng + ?Sized>(
    player: &mut PlayerState,
    role: Role,
    cfg: &GameConfig,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if player.memory.is_empty() {
        return Err(Error::InvalidParameter("empty memory".into()));
    }
    let sampler = recency_sampler(&player.memory, cfg.recency_decay)?;
    for k in 0..player.action_nets.len() {
        for _ in 0..cfg.sgd_steps {
            let batch: Vec<TrainSample> = (0..cfg.batch_size)
                .map(|_| {
                    let e = &player.memory[sampler.sample(rng)];
                    TrainSample::new(vec![e.action], vec![e.opponent_state as f64])
                })
                .collect();
            player.action_nets[k].train_step(&batch, cfg.learning_rate)?;
        }
    }
    let residual = |p: &PlayerState, e: &MemoryEntry| e.cost - p.modelled_cost(role, e.action, cfg.c);
    let residuals: Vec<f64> = player.memory.iter().map(|e| residual(player, e)).collect();
    for l in 0..player.cost_nets.len() {
        for _ in 0..cfg.sgd_steps {
            let batch: Vec<TrainSample> = (0..cfg.batch_size)
                .map(|_| {
                    let i = sampler.sample(rng);
                    let dropout = Some(DropoutSample::draw(&player.cost_nets[l], rng));
                    TrainSample {
                        dropout,
                        ..TrainSample::new(vec![player.memory[i].action], vec![residuals[i]])
                    }
                })
                .collect();
            player.cost_nets[l].train_step(&batch, cfg.learning_rate)?;
        }
    }
    let grid = action_grid(cfg.grid);
    let last = player.memory.back().map(|e| e.action);
    let (kappa, shortfall) =
        scenario_report(player, role, cfg.c, cfg.expectation(role), &grid, last, cfg.kappa_draws, rng);
    player.kappa_ema = KAPPA_SMOOTHING * player.kappa_ema + (1.0 - KAPPA_SMOOTHING) * kappa;
    player.explore_scale = adjust_explore_scale(player.explore_scale, kappa);
    Ok((kappa, shortfall))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub game: usize,
    pub actions: [f64; 2],
    pub states: [u8; 2],
    pub costs: [f64; 2],
    /// κ after the round's update.
    pub kappa: [f64; 2],
    /// Noise amplification used for the round's actions.
    pub explore: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPlayerTrace {
    pub rounds: Vec<Round>,
    /// Per player and game: the played action, its shortfall in value
    /// under the updated estimates, and κ.
    pub stats: [TrajectoryStats; 2],
}

impl TwoPlayerTrace {
    pub fn actions(&self, player: usize) -> Vec<f64> {
        self.rounds.iter().map(|r| r.actions[player]).collect()
    }

    /// Share of the last `window` rounds with both actions above `level`.
    pub fn joint_share_above(&self, window: usize, level: f64) -> f64 {
        let tail = &self.rounds[self.rounds.len().saturating_sub(window)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|r| r.actions[0] > level && r.actions[1] > level).count() as f64 / tail.len() as f64
    }

    /// Times player `player`'s action moves from one side of `level` to the
    /// other.
    pub fn crossings(&self, player: usize, level: f64) -> usize {
        let sides: Vec<bool> = self.rounds.iter().map(|r| r.actions[player] > level).collect();
        sides.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

pub fn run_experiment(cfg: &GameConfig) -> Result<TwoPlayerTrace> {
    cfg.validate()?;
    let mut env_rng = rng_from_seed(derive_seed(cfg.seed, 0));
    let mut player_rngs: [LabRng; 2] = [
        rng_from_seed(derive_seed(cfg.seed, 1)),
        rng_from_seed(derive_seed(cfg.seed, 2)),
    ];
    let mut players = [
        PlayerState::new(cfg, &mut player_rngs[0]),
        PlayerState::new(cfg, &mut player_rngs[1]),
    ];
    let roles = [Role::One, Role::Two];
    let grid = action_grid(cfg.grid);
    let mut stats = [TrajectoryStats::new("player 1"), TrajectoryStats::new("player 2")];
    let mut rounds = Vec::with_capacity(cfg.n_games);
    for game in 0..cfg.n_games {
        let explore = [players[0].explore_scale, players[1].explore_scale];
        let mut actions = [0.0; 2];
        for i in 0..2 {
            actions[i] = draw_action(&players[i], roles[i], cfg.c, &grid, &mut player_rngs[i]);
        }
        let (x1, x2) = env_step(actions[0], actions[1], &mut env_rng)?;
        let (cost1, cost2) = realized_costs(actions[0], actions[1], x1, x2, cfg.c);
        let states = [x1, x2];
        let costs = [cost1, cost2];
        let mut kappa = [0.0; 2];
        for i in 0..2 {
            players[i].remember(MemoryEntry {
                action: actions[i],
                own_state: states[i],
                opponent_state: states[1 - i],
                cost: costs[i],
            });
            let (k, shortfall) = if players[i].memory.is_empty() {
                scenario_report(
                    &players[i],
                    roles[i],
                    cfg.c,
                    cfg.expectation(roles[i]),
                    &grid,
                    Some(actions[i]),
                    cfg.kappa_draws,
                    &mut player_rngs[i],
                )
            } else {
                update_networks(&mut players[i], roles[i], cfg, &mut player_rngs[i])?
            };
            kappa[i] = k;
            stats[i].push(AgeRecord {
                age: game,
                ups: FiniteMeasure::dirac(actions[i]),
                regret: Some(shortfall),
                kappa: Some(kappa[i]),
            })?;
        }
        rounds.push(Round {
            game,
            actions,
            states,
            costs,
            kappa,
            explore,
        });
    }
    Ok(TwoPlayerTrace { rounds, stats })
}
