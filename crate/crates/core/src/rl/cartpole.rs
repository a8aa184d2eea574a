//! CartPole with an ensemble of state-value networks and a softmax planner
//! over every open-loop control of length `T`.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::{
    induce_control_distribution, AgeRecord, Control, EstimationBundle, ScenarioSpace,
    TrajectoryStats,
};
use crate::measure::FiniteMeasure;
use crate::seed::{rng_from_seed, LabRng};
use crate::smallnet::{DropoutSample, Net, OutputTransform, Scratch, TrainSample};

/// Longest control horizon accepted by [`enumerate_controls`].
pub const MAX_HORIZON: usize = 16;

/// Episodes stop after this many steps.
pub const EPISODE_CAP: usize = 500;

/// Value networks map into `[0, VALUE_MAX]`.
pub const VALUE_MAX: f64 = 100.0;

/// Window of the reported moving average.
pub const AVERAGE_WINDOW: usize = 100;

/// Output bias that pins a zero-weight network to `0` in double precision.
const ZERO_VALUE_BIAS: f64 = -40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force: f64,
    pub tau: f64,
    pub x_threshold: f64,
    pub theta_threshold: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            half_length: 0.5,
            force: 10.0,
            tau: 0.02,
            x_threshold: 2.4,
            theta_threshold: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartPoleState {
    pub fn new(x: f64, x_dot: f64, theta: f64, theta_dot: f64) -> Self {
        Self {
            x,
            x_dot,
            theta,
            theta_dot,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.is_terminal_under(&CartPoleParams::default())
    }

    pub fn is_terminal_under(&self, p: &CartPoleParams) -> bool {
        self.x.abs() > p.x_threshold || self.theta.abs() > p.theta_threshold
    }

    /// Reflection through the vertical axis.
    pub fn mirrored(&self) -> Self {
        Self::new(-self.x, -self.x_dot, -self.theta, -self.theta_dot)
    }

    /// Network input, roughly scaled to `[-1, 1]` on the live region.
    pub fn features(&self) -> [f64; 4] {
        [self.x / 2.4, self.x_dot / 3.0, self.theta / 0.21, self.theta_dot / 3.0]
    }

    /// Uniform on `[−0.05, 0.05]⁴`.
    pub fn random_start<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut u = || rng.gen_range(-0.05..=0.05);
        Self::new(u(), u(), u(), u())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next: CartPoleState,
    /// `1` when `next` is live, `0` otherwise.
    pub reward: f64,
    pub terminal: bool,
}

fn dynamics(p: &CartPoleParams, s: &CartPoleState, action: u8) -> CartPoleState {
    let force = if action == 1 { p.force } else { -p.force };
    let (sin, cos) = s.theta.sin_cos();
    let total = p.mass_cart + p.mass_pole;
    let pml = p.mass_pole * p.half_length;
    let temp = (force + pml * s.theta_dot * s.theta_dot * sin) / total;
    let theta_acc =
        (p.gravity * sin - cos * temp) / (p.half_length * (4.0 / 3.0 - p.mass_pole * cos * cos / total));
    let x_acc = temp - pml * theta_acc * cos / total;
    CartPoleState {
        x: s.x + p.tau * s.x_dot,
        x_dot: s.x_dot + p.tau * x_acc,
        theta: s.theta + p.tau * s.theta_dot,
        theta_dot: s.theta_dot + p.tau * theta_acc,
    }
}

/// One explicit Euler step; action `1` pushes right, `0` pushes left.
pub fn cartpole_step(s: &CartPoleState, action: u8) -> Result<Step> {
    cartpole_step_with(&CartPoleParams::default(), s, action)
}

pub fn cartpole_step_with(p: &CartPoleParams, s: &CartPoleState, action: u8) -> Result<Step> {
    if s.is_terminal_under(p) {
        return Err(Error::TerminalState);
    }
    if action > 1 {
        return Err(Error::InvalidParameter(format!("action {action}")));
    }
    let next = dynamics(p, s, action);
    let terminal = next.is_terminal_under(p);
    Ok(Step {
        next,
        reward: if terminal { 0.0 } else { 1.0 },
        terminal,
    })
}

/// All of `{0, 1}^T` in lexicographic order; entry `k` is the binary
/// expansion of `k`, most significant bit first.
pub fn enumerate_controls(t: usize) -> Result<Vec<Vec<u8>>> {
    if t > MAX_HORIZON {
        return Err(Error::HorizonTooLarge(t));
    }
    Ok((0..1usize << t)
        .map(|k| (0..t).map(|j| ((k >> (t - 1 - j)) & 1) as u8).collect())
        .collect())
}

/// Final states of the `2^T` open-loop rollouts from `s`, indexed as in
/// [`enumerate_controls`]; `None` where the rollout hits a terminal state.
pub fn rollout_finals(s: &CartPoleState, t: usize) -> Vec<Option<CartPoleState>> {
    let p = CartPoleParams::default();
    let mut level = vec![if s.is_terminal_under(&p) { None } else { Some(*s) }];
    for _ in 0..t {
        let mut next = Vec::with_capacity(level.len() * 2);
        for st in &level {
            for a in 0..2u8 {
                next.push(st.and_then(|st| {
                    let n = dynamics(&p, &st, a);
                    (!n.is_terminal_under(&p)).then_some(n)
                }));
            }
        }
        level = next;
    }
    level
}

/// `softmax(values / scale)`, computed with the maximum subtracted.
pub fn softmax(values: &[f64], scale: f64) -> Vec<f64> {
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = values.iter().map(|v| ((v - top) / scale).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    w
}

/// `K_φ` value networks; a scenario is a network index plus a dropout draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEnsemble {
    pub nets: Vec<Net>,
    pub horizon: usize,
}

impl ValueEnsemble {
    /// `4 → hidden → hidden → 1` networks with outputs in `[0, 100]`. The
    /// output bias starts at `init_bias`.
    pub fn new<R: Rng + ?Sized>(
        k: usize,
        hidden: usize,
        dropout: f64,
        horizon: usize,
        init_bias: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("empty ensemble".into()));
        }
        if horizon > MAX_HORIZON {
            return Err(Error::HorizonTooLarge(horizon));
        }
        let nets = (0..k)
            .map(|_| {
                let mut n = Net::random(
                    &[4, hidden, hidden, 1],
                    OutputTransform::Affine { lo: 0.0, hi: VALUE_MAX },
                    dropout,
                    rng,
                );
                n.set_output_bias(init_bias);
                n
            })
            .collect();
        Ok(Self { nets, horizon })
    }

    /// Networks with zero weights and constant output `0`, so every control
    /// scores the same and the policy is uniform.
    pub fn uniform(k: usize, hidden: usize, dropout: f64, horizon: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("empty ensemble".into()));
        }
        if horizon > MAX_HORIZON {
            return Err(Error::HorizonTooLarge(horizon));
        }
        let mut net = Net::zeros(&[4, hidden, hidden, 1], OutputTransform::Affine { lo: 0.0, hi: VALUE_MAX }, dropout);
        net.set_output_bias(ZERO_VALUE_BIAS);
        Ok(Self {
            nets: vec![net; k],
            horizon,
        })
    }

    pub fn k(&self) -> usize {
        self.nets.len()
    }

    /// `𝒩_φ^ℓ(ω̂′)(s)`, clamped to `[0, 100]`.
    pub fn value(&self, l: usize, sample: Option<&DropoutSample>, s: &CartPoleState, scratch: &mut Scratch) -> f64 {
        self.nets[l]
            .eval_with(&s.features(), sample, scratch)
            .clamp(0.0, VALUE_MAX)
    }

    /// `J(ℓ, ω̂′, x, αᵏ)` for every control: the value of the rollout's final
    /// state, or `0` if the rollout fails.
    pub fn control_values(
        &self,
        l: usize,
        sample: Option<&DropoutSample>,
        finals: &[Option<CartPoleState>],
        scratch: &mut Scratch,
    ) -> Vec<f64> {
        finals
            .iter()
            .map(|f| f.map_or(0.0, |s| self.value(l, sample, &s, scratch)))
            .collect()
    }

    /// `π̂(ω̂, x)` as weights over control indices.
    pub fn policy_weights(
        &self,
        x: &CartPoleState,
        l: usize,
        sample: Option<&DropoutSample>,
        scale: f64,
    ) -> Vec<f64> {
        let finals = rollout_finals(x, self.horizon);
        softmax(&self.control_values(l, sample, &finals, &mut Scratch::default()), scale)
    }

    pub fn policy_distribution(
        &self,
        x: &CartPoleState,
        l: usize,
        sample: Option<&DropoutSample>,
        scale: f64,
    ) -> FiniteMeasure<usize> {
        FiniteMeasure::from_atoms(self.policy_weights(x, l, sample, scale).into_iter().enumerate())
    }

    /// Estimation bundle whose scenario `ℓ` is network `ℓ` under
    /// `samples[ℓ]`; controls are open-loop sequences stored at state `0`.
    pub fn bundle<'a>(
        &'a self,
        x: CartPoleState,
        samples: &'a [Option<DropoutSample>],
        scale: f64,
    ) -> EstimationBundle<'a> {
        let horizon = self.horizon;
        let controls: Vec<Control> = enumerate_controls(horizon)
            .expect("horizon checked at construction")
            .into_iter()
            .map(|seq| Control::from_decisions(seq.into_iter().enumerate().map(|(s, a)| ((s, 0), a as usize))))
            .collect();
        EstimationBundle::new(0)
            .with_horizon(move |_, _| horizon)
            .with_policy_prior(move |l, _, _| {
                let w = self.policy_weights(&x, l, samples[l].as_ref(), scale);
                FiniteMeasure::from_atoms(controls.iter().cloned().zip(w))
            })
    }

    /// `ϒ^x` averaged uniformly over the networks.
    pub fn induced_control_distribution(
        &self,
        x: CartPoleState,
        samples: &[Option<DropoutSample>],
        scale: f64,
    ) -> FiniteMeasure<Control> {
        let bundle = self.bundle(x, samples, scale);
        induce_control_distribution(&bundle, &ScenarioSpace::uniform(self.k()), 0, 0)
    }
}

/// One finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    /// Live states at which an action was taken.
    pub states: Vec<CartPoleState>,
    pub actions: Vec<u8>,
    pub score: f64,
    /// Stopped by the step cap rather than by falling.
    pub truncated: bool,
}

impl Episode {
    /// Reward collected from step `t` on. States of a truncated episode
    /// keep the full score, since none of them led to a fall.
    pub fn score_from(&self, t: usize) -> f64 {
        if self.truncated {
            self.score
        } else {
            (self.score - t as f64).max(0.0)
        }
    }
}

/// `100 · (score / best + score / 500) / 2`.
pub fn performance_target(score: f64, best_so_far: f64) -> f64 {
    let relative = if best_so_far > 0.0 { score / best_so_far } else { 0.0 };
    VALUE_MAX * (relative + score / EPISODE_CAP as f64) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartPoleConfig {
    pub k_phi: usize,
    pub episodes: usize,
    pub horizon: usize,
    pub seed: u64,
    pub hidden: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    /// Values are divided by this before the softmax.
    pub value_scale: f64,
    /// Initial output bias of every value network.
    pub init_bias: f64,
    /// Episodes kept in memory.
    pub memory: usize,
    /// SGD steps per network after each episode.
    pub updates: usize,
    /// States drawn from each of the best and worst quartiles per step.
    pub half_batch: usize,
    /// Weight of the time-consistency term.
    pub consistency_weight: f64,
    pub train: bool,
    /// Play the most likely control instead of sampling.
    pub greedy: bool,
    /// Start from [`ValueEnsemble::uniform`] instead of random networks.
    pub uniform_start: bool,
    /// Stop once the trailing mean over a full window of
    /// [`AVERAGE_WINDOW`] episodes reaches this score.
    pub stop_at_average: Option<f64>,
}

impl Default for CartPoleConfig {
    fn default() -> Self {
        Self {
            k_phi: 5,
            episodes: 1000,
            horizon: 8,
            seed: 0,
            hidden: 32,
            dropout: 0.1,
            learning_rate: 0.01,
            value_scale: 1.0,
            init_bias: 0.0,
            memory: 200,
            updates: 4,
            half_batch: 16,
            consistency_weight: 0.1,
            train: true,
            greedy: false,
            uniform_start: false,
            stop_at_average: None,
        }
    }
}

/// Episode memory with the running best score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeMemory {
    episodes: VecDeque<Episode>,
    capacity: usize,
    best_so_far: f64,
}

impl EpisodeMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            episodes: VecDeque::new(),
            capacity: capacity.max(2),
            best_so_far: 0.0,
        }
    }

    pub fn push(&mut self, ep: Episode) {
        self.best_so_far = self.best_so_far.max(ep.score);
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(ep);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn best_so_far(&self) -> f64 {
        self.best_so_far
    }

    pub fn episodes(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter()
    }

    /// Indices of the best and the worst quarter of episodes by score.
    fn quartiles(&self) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..self.episodes.len()).collect();
        idx.sort_by(|&a, &b| self.episodes[a].score.total_cmp(&self.episodes[b].score));
        let q = self.episodes.len().div_ceil(4);
        let bottom = idx[..q].to_vec();
        let top = idx[idx.len() - q..].to_vec();
        (top, bottom)
    }
}

/// Squared errors are measured in units of the value range.
const LOSS_NORM: f64 = 1.0 / (VALUE_MAX * VALUE_MAX);

/// One round of training: every network takes `cfg.updates` SGD steps on
/// its own batches drawn from the best and worst quartiles, plus a
/// time-consistency term pulling `𝒩(x_t)` toward `𝒩(x_{t+T})`.
pub fn train_value_ensemble<R: Rng + ?Sized>(
    ensemble: &mut ValueEnsemble,
    memory: &EpisodeMemory,
    cfg: &CartPoleConfig,
    rng: &mut R,
) -> Result<()> {
    if memory.len() < 2 {
        return Err(Error::InvalidParameter("memory holds fewer than two episodes".into()));
    }
    let (top, bottom) = memory.quartiles();
    let best = memory.best_so_far();
    let horizon = ensemble.horizon;
    let mut scratch = Scratch::default();
    for net in &mut ensemble.nets {
        for _ in 0..cfg.updates {
            let mut batch = Vec::with_capacity(3 * cfg.half_batch);
            for group in [&top, &bottom] {
                for _ in 0..cfg.half_batch {
                    let ep = &memory.episodes[*group.choose(rng).expect("non-empty quartile")];
                    if ep.states.is_empty() {
                        continue;
                    }
                    let t = rng.gen_range(0..ep.states.len());
                    batch.push(TrainSample {
                        input: ep.states[t].features().to_vec(),
                        target: vec![performance_target(ep.score, best)],
                        weight: LOSS_NORM,
                        dropout: Some(DropoutSample::draw(net, rng)),
                    });
                }
            }
            if cfg.consistency_weight > 0.0 {
                for _ in 0..cfg.half_batch {
                    let ep = &memory.episodes[rng.gen_range(0..memory.len())];
                    if ep.states.len() <= horizon {
                        continue;
                    }
                    let t = rng.gen_range(0..ep.states.len() - horizon);
                    let ahead = net
                        .eval_with(&ep.states[t + horizon].features(), None, &mut scratch)
                        .clamp(0.0, VALUE_MAX);
                    batch.push(TrainSample {
                        input: ep.states[t].features().to_vec(),
                        target: vec![ahead],
                        weight: cfg.consistency_weight * LOSS_NORM,
                        dropout: Some(DropoutSample::draw(net, rng)),
                    });
                }
            }
            if !batch.is_empty() {
                net.train_step(&batch, cfg.learning_rate)?;
            }
        }
    }
    Ok(())
}

/// Outcome of [`run_cartpole`].
#[derive(Debug, Clone, PartialEq)]
pub struct CartPoleRun {
    pub scores: Vec<f64>,
    /// Per episode: induced law of the first action at the upright rest
    /// state.
    pub stats: TrajectoryStats,
    pub ensemble: ValueEnsemble,
}

impl CartPoleRun {
    /// Trailing mean over up to `window` episodes, per episode.
    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        moving_average(&self.scores, window)
    }
}

pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= window {
            sum -= xs[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

fn first_action_law(
    ensemble: &ValueEnsemble,
    x: &CartPoleState,
    samples: &[Option<DropoutSample>],
    scale: f64,
) -> FiniteMeasure<f64> {
    let finals = rollout_finals(x, ensemble.horizon);
    let half = finals.len() / 2;
    let mut scratch = Scratch::default();
    let mut p1 = 0.0;
    for (l, s) in samples.iter().enumerate() {
        let w = softmax(&ensemble.control_values(l, s.as_ref(), &finals, &mut scratch), scale);
        p1 += w[half..].iter().sum::<f64>() / samples.len() as f64;
    }
    let mut m = FiniteMeasure::new();
    if p1 < 1.0 {
        m.add(0.0, 1.0 - p1);
    }
    if p1 > 0.0 {
        m.add(1.0, p1);
    }
    m
}

/// Plays one episode with receding-horizon planning.
pub fn play_episode(
    ensemble: &ValueEnsemble,
    cfg: &CartPoleConfig,
    rng: &mut LabRng,
) -> Episode {
    let mut s = CartPoleState::random_start(rng);
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut score = 0.0;
    let mut truncated = true;
    let mut scratch = Scratch::default();
    let half = 1usize << (ensemble.horizon.max(1) - 1);
    while states.len() < EPISODE_CAP {
        let l = rng.gen_range(0..ensemble.k());
        let sample = DropoutSample::draw(&ensemble.nets[l], rng);
        let finals = rollout_finals(&s, ensemble.horizon);
        let values = ensemble.control_values(l, Some(&sample), &finals, &mut scratch);
        let w = softmax(&values, cfg.value_scale);
        let k = if cfg.greedy {
            let mut best = 0;
            for (i, &v) in w.iter().enumerate() {
                if v > w[best] {
                    best = i;
                }
            }
            best
        } else {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = w.len() - 1;
            for (i, &v) in w.iter().enumerate() {
                acc += v;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        };
        let a = if ensemble.horizon == 0 { rng.gen_range(0..2) } else { (k >= half) as u8 };
        let step = cartpole_step(&s, a).expect("live state");
        states.push(s);
        actions.push(a);
        score += step.reward;
        if step.terminal {
            truncated = false;
            break;
        }
        s = step.next;
    }
    Episode {
        states,
        actions,
        score,
        truncated,
    }
}

pub fn run_cartpole(cfg: &CartPoleConfig) -> Result<CartPoleRun> {
    if !(cfg.value_scale > 0.0) {
        return Err(Error::InvalidParameter(format!("value scale {}", cfg.value_scale)));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut ensemble = if cfg.uniform_start {
        ValueEnsemble::uniform(cfg.k_phi, cfg.hidden, cfg.dropout, cfg.horizon)?
    } else {
        ValueEnsemble::new(cfg.k_phi, cfg.hidden, cfg.dropout, cfg.horizon, cfg.init_bias, &mut rng)?
    };
    let mut memory = EpisodeMemory::new(cfg.memory);
    let mut scores = Vec::with_capacity(cfg.episodes);
    let mut stats = TrajectoryStats::new("x=0");
    let rest = CartPoleState::default();
    for n in 0..cfg.episodes {
        let samples: Vec<Option<DropoutSample>> = ensemble
            .nets
            .iter()
            .map(|net| Some(DropoutSample::draw(net, &mut rng)))
            .collect();
        stats.push(AgeRecord {
            age: n,
            ups: first_action_law(&ensemble, &rest, &samples, cfg.value_scale),
            regret: None,
            kappa: None,
        })?;
        let ep = play_episode(&ensemble, cfg, &mut rng);
        scores.push(ep.score);
        memory.push(ep);
        if cfg.train && memory.len() >= 2 {
            train_value_ensemble(&mut ensemble, &memory, cfg, &mut rng)?;
        }
        if let Some(target) = cfg.stop_at_average {
            if scores.len() >= AVERAGE_WINDOW {
                let tail = &scores[scores.len() - AVERAGE_WINDOW..];
                if tail.iter().sum::<f64>() / AVERAGE_WINDOW as f64 >= target {
                    break;
                }
            }
        }
    }
    Ok(CartPoleRun {
        scores,
        stats,
        ensemble,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn control_enumeration() {
        assert_eq!(enumerate_controls(1).unwrap(), vec![vec![0], vec![1]]);
        assert_eq!(enumerate_controls(8).unwrap().len(), 256);
        assert_eq!(enumerate_controls(3).unwrap()[5], vec![1, 0, 1]);
        assert_eq!(enumerate_controls(17).unwrap_err(), Error::HorizonTooLarge(17));
    }

    #[test]
    fn alternating_forces_survive() {
        let mut s = CartPoleState::default();
        for i in 0..20 {
            let st = cartpole_step(&s, (i % 2) as u8).unwrap();
            assert!(!st.terminal, "fell at step {i}");
            assert_eq!(st.reward, 1.0);
            s = st.next;
        }
    }

    #[test]
    fn tilted_state_is_terminal() {
        let s = CartPoleState::new(0.0, 0.0, 0.25, 0.0);
        assert!(s.is_terminal());
        assert_eq!(cartpole_step(&s, 0).unwrap_err(), Error::TerminalState);
        assert!(CartPoleState::new(2.5, 0.0, 0.0, 0.0).is_terminal());
    }

    #[test]
    fn reference_trajectory() {
        // first push right from rest, by hand from the equations of motion
        let st = cartpole_step(&CartPoleState::default(), 1).unwrap();
        let total = 1.1;
        let temp = 10.0 / total;
        let theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / total));
        let x_acc = temp - 0.05 * theta_acc / total;
        assert_abs_diff_eq!(st.next.x_dot, 0.02 * x_acc, epsilon = 1e-15);
        assert_abs_diff_eq!(st.next.theta_dot, 0.02 * theta_acc, epsilon = 1e-15);
        assert_eq!(st.next.x, 0.0);
    }

    #[test]
    fn rollout_tree_matches_sequential_rollouts() {
        let s = CartPoleState::new(0.1, -0.2, 0.05, 0.3);
        let finals = rollout_finals(&s, 5);
        for (k, seq) in enumerate_controls(5).unwrap().iter().enumerate() {
            let mut cur = Some(s);
            for &a in seq {
                cur = cur.and_then(|c| {
                    let st = cartpole_step(&c, a).unwrap();
                    (!st.terminal).then_some(st.next)
                });
            }
            assert_eq!(finals[k], cur);
        }
    }

    #[test]
    fn softmax_cases() {
        let w = softmax(&[3.0; 256], 1.0);
        assert!(w.iter().all(|&x| (x - 1.0 / 256.0).abs() < 1e-15));
        let mut v = vec![0.0; 256];
        v[17] = 20.0;
        assert!(softmax(&v, 1.0)[17] > 0.999);
    }

    #[test]
    fn targets() {
        assert_eq!(performance_target(500.0, 500.0), 100.0);
        assert_eq!(performance_target(0.0, 120.0), 0.0);
    }

    #[test]
    fn induced_distribution_averages_networks() {
        let mut rng = rng_from_seed(4);
        let ens = ValueEnsemble::new(3, 8, 0.1, 4, 0.0, &mut rng).unwrap();
        let samples: Vec<Option<DropoutSample>> =
            ens.nets.iter().map(|n| Some(DropoutSample::draw(n, &mut rng))).collect();
        let x = CartPoleState::new(0.0, 0.1, -0.02, 0.0);
        let ups = ens.induced_control_distribution(x, &samples, 25.0);
        let direct: Vec<Vec<f64>> = (0..3)
            .map(|l| ens.policy_weights(&x, l, samples[l].as_ref(), 25.0))
            .collect();
        for (k, seq) in enumerate_controls(4).unwrap().into_iter().enumerate() {
            let c = Control::from_decisions(seq.into_iter().enumerate().map(|(s, a)| ((s, 0), a as usize)));
            let want = direct.iter().map(|w| w[k]).sum::<f64>() / 3.0;
            assert_abs_diff_eq!(ups.weight_of(&c), want, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(ups.total_mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_episodes_flatten_values() {
        let mut rng = rng_from_seed(8);
        let cfg = CartPoleConfig {
            consistency_weight: 0.0,
            init_bias: 0.0,
            ..CartPoleConfig::default()
        };
        let mut ens = ValueEnsemble::new(1, 16, 0.0, 8, 0.0, &mut rng).unwrap();
        let states: Vec<CartPoleState> = (0..40)
            .map(|i| CartPoleState::new(i as f64 / 20.0 - 1.0, 0.3, (i as f64 / 200.0) - 0.1, -0.2))
            .collect();
        let mut mem = EpisodeMemory::new(10);
        for _ in 0..4 {
            mem.push(Episode {
                states: states.clone(),
                actions: vec![0; 40],
                score: 40.0,
                truncated: true,
            });
        }
        let spread = |e: &ValueEnsemble| {
            let vals: Vec<f64> = states.iter().map(|s| e.nets[0].eval(&s.features(), None)).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64
        };
        let before = spread(&ens);
        for _ in 0..200 {
            train_value_ensemble(&mut ens, &mem, &cfg, &mut rng).unwrap();
        }
        assert!(spread(&ens) < before);
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = CartPoleConfig {
            episodes: 6,
            k_phi: 2,
            seed: 12,
            ..CartPoleConfig::default()
        };
        let a = run_cartpole(&cfg).unwrap();
        let b = run_cartpole(&cfg).unwrap();
        assert_eq!(a.scores, b.scores);
        assert_eq!(a.ensemble, b.ensemble);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mirror_symmetry(x in -2.0f64..2.0, xd in -2.0f64..2.0, th in -0.2f64..0.2, thd in -2.0f64..2.0, a in 0u8..2) {
            let s = CartPoleState::new(x, xd, th, thd);
            let n = cartpole_step(&s, a).unwrap().next;
            let m = cartpole_step(&s.mirrored(), 1 - a).unwrap().next.mirrored();
            prop_assert!((n.x - m.x).abs() < 1e-12);
            prop_assert!((n.x_dot - m.x_dot).abs() < 1e-12);
            prop_assert!((n.theta - m.theta).abs() < 1e-12);
            prop_assert!((n.theta_dot - m.theta_dot).abs() < 1e-12);
        }

        #[test]
        fn softmax_is_normalized_and_shift_invariant(v in proptest::collection::vec(0.0f64..100.0, 1..300), c in -50.0f64..50.0) {
            let w = softmax(&v, 25.0);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            for (a, b) in w.iter().zip(softmax(&shifted, 25.0)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
