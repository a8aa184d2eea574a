//! One-step stated mean-field games.
//!
//! A population profile `Ξ` is a finite measure on (state, action) pairs;
//! controls are state-independent actions in `[0, 1]`. The representative
//! player learns a measure `Γ̂` over profiles with the mixing rule
//! `Γ̂ₙ₊₁ = c δ_{(μ, δ_b)} + (1 − c) Γ̂ₙ` and best-responds to it exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::{AgeRecord, TrajectoryStats};
use crate::measure::FiniteMeasure;
use crate::seed::rng_from_seed;

/// Atoms lighter than this are dropped after each learning step.
pub const PRUNE_THRESHOLD: f64 = 1e-12;

/// Tolerance for optimality in [`relaxed_equilibrium_check`].
pub const RELAXED_TOL: f64 = 1e-12;

/// Joint measure on (state, action).
pub type Profile = FiniteMeasure<(f64, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionRule {
    /// States `{0, 1}`, next state `1` with probability equal to the action.
    Bernoulli,
    /// States `[0, 1]`, next state equal to the action.
    DiracAtAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CostRule {
    /// `φ(x, μ) = 2μ(1)² − 4·1{x = 1}·μ(1)`, `F(a) = a² + a`.
    Example1,
    /// `φ(x, μ) = x·1{μ̄ ≤ ½} − x·1{μ̄ > ½}`, `F = 0`.
    Example2,
    /// `φ(x, μ) = q0·μ̄² + q1·x·μ̄`, `F(a) = f2·a² + f1·a`.
    Quadratic { q0: f64, q1: f64, f2: f64, f1: f64 },
}

/// A game on `T = {0, 1}` whose value `J` is maximized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneStepGame {
    pub transition: TransitionRule,
    pub cost: CostRule,
    /// Number of evenly spaced points of `[0, 1]` used where the optimum
    /// is not known to sit at an endpoint.
    pub action_grid: usize,
}

impl OneStepGame {
    pub fn example1() -> Self {
        Self {
            transition: TransitionRule::Bernoulli,
            cost: CostRule::Example1,
            action_grid: 101,
        }
    }

    pub fn example2() -> Self {
        Self {
            transition: TransitionRule::DiracAtAction,
            cost: CostRule::Example2,
            action_grid: 101,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        action_grid(self.action_grid)
    }

    /// One-step kernel `p(x, μ, a; ·)`.
    pub fn kernel(&self, _x: f64, _mu: &FiniteMeasure<f64>, a: f64) -> FiniteMeasure<f64> {
        match self.transition {
            TransitionRule::Bernoulli => {
                let mut m = FiniteMeasure::new();
                if a < 1.0 {
                    m.add(0.0, 1.0 - a);
                }
                if a > 0.0 {
                    m.add(1.0, a);
                }
                m
            }
            TransitionRule::DiracAtAction => FiniteMeasure::dirac(a),
        }
    }

    /// Terminal value `φ(x, μ)`.
    pub fn terminal(&self, x: f64, mu: &FiniteMeasure<f64>) -> f64 {
        match self.cost {
            CostRule::Example1 => {
                let m1 = mu.weight_of(&1.0);
                let hit = if x == 1.0 { 1.0 } else { 0.0 };
                2.0 * m1 * m1 - 4.0 * hit * m1
            }
            CostRule::Example2 => {
                if mu.mean() <= 0.5 {
                    x
                } else {
                    -x
                }
            }
            CostRule::Quadratic { q0, q1, .. } => {
                let m = mu.mean();
                q0 * m * m + q1 * x * m
            }
        }
    }

    /// Running value `F(a)`.
    pub fn running(&self, a: f64) -> f64 {
        match self.cost {
            CostRule::Example1 => a * a + a,
            CostRule::Example2 => 0.0,
            CostRule::Quadratic { f2, f1, .. } => f2 * a * a + f1 * a,
        }
    }

    /// Whether `J(Ξ; ·)` is convex in the action, so its maximum over
    /// `[0, 1]` is attained at `0` or `1`.
    pub fn endpoint_optimal(&self) -> bool {
        match self.cost {
            CostRule::Example1 | CostRule::Example2 => true,
            CostRule::Quadratic { f2, .. } => f2 >= 0.0,
        }
    }
}

/// `n` evenly spaced points of `[0, 1]`, endpoints included.
pub fn action_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// One step of the population flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStep {
    pub xi: Profile,
    /// State marginal `μ_s^Ξ`.
    pub mu: FiniteMeasure<f64>,
}

pub fn state_marginal(xi: &Profile) -> FiniteMeasure<f64> {
    xi.map(|&(x, _)| x)
}

/// `Ξ_s` and `μ_s^Ξ` for `s = 0..=steps`.
pub fn population_flow(game: &OneStepGame, xi: &Profile, steps: usize) -> Vec<FlowStep> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut cur = xi.clone();
    for s in 0..=steps {
        let mu = state_marginal(&cur);
        if s < steps {
            let next = cur.bind(|&(x, a)| game.kernel(x, &mu, a).map(|&y| (y, a)));
            out.push(FlowStep { xi: cur, mu });
            cur = next;
        } else {
            out.push(FlowStep { xi: cur.clone(), mu });
        }
    }
    out
}

/// Law of the representative player's next state from `x` under action `a`.
pub fn player_flow(game: &OneStepGame, xi: &Profile, x: f64, a: f64) -> FiniteMeasure<f64> {
    game.kernel(x, &state_marginal(xi), a)
}

/// `J(Ξ; x, a) = E[φ(X₁, μ₁^Ξ) + F(a)]`.
pub fn profile_value(game: &OneStepGame, xi: &Profile, x: f64, a: f64) -> f64 {
    let flow = population_flow(game, xi, 1);
    let mu1 = &flow[1].mu;
    player_flow(game, xi, x, a).expectation(|&y| game.terminal(y, mu1)) + game.running(a)
}

/// A profile given by an initial state law and a state-independent law of
/// actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub mu: FiniteMeasure<f64>,
    pub controls: FiniteMeasure<f64>,
}

impl ProfilePoint {
    pub fn joint(&self) -> Profile {
        self.mu.product(&self.controls)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.controls.len() == 1
    }
}

/// The learned measure `Γ̂` over population profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimate {
    mu: FiniteMeasure<f64>,
    gamma: FiniteMeasure<ProfilePoint>,
}

impl PopulationEstimate {
    /// `δ_{(μ, δ_a)}`.
    pub fn homogeneous_prior(mu: FiniteMeasure<f64>, a: f64) -> Self {
        let point = ProfilePoint {
            mu: mu.clone(),
            controls: FiniteMeasure::dirac(a),
        };
        Self {
            mu,
            gamma: FiniteMeasure::dirac(point),
        }
    }

    /// Every profile point must start from the state law `mu`.
    pub fn new(mu: FiniteMeasure<f64>, gamma: FiniteMeasure<ProfilePoint>) -> Result<Self> {
        gamma.ensure_probability("population estimate")?;
        if gamma.support().any(|p| p.mu != mu) {
            return Err(Error::InvalidParameter(
                "profile points must share the initial state law".into(),
            ));
        }
        Ok(Self { mu, gamma })
    }

    /// `Σ cᵢ δ_{(μ, δ_{aᵢ})}`.
    pub fn from_actions(mu: FiniteMeasure<f64>, actions: &FiniteMeasure<f64>) -> Result<Self> {
        let gamma = actions.map(|&a| ProfilePoint {
            mu: mu.clone(),
            controls: FiniteMeasure::dirac(a),
        });
        Self::new(mu, gamma)
    }

    pub fn mu(&self) -> &FiniteMeasure<f64> {
        &self.mu
    }

    pub fn gamma(&self) -> &FiniteMeasure<ProfilePoint> {
        &self.gamma
    }

    pub fn is_homogeneous(&self) -> bool {
        self.gamma.support().all(ProfilePoint::is_homogeneous)
    }

    /// Each profile point reduced to its mean action.
    pub fn action_atoms(&self) -> FiniteMeasure<f64> {
        self.gamma.map(|p| p.controls.mean())
    }

    /// Weight of the profile `δ_{(μ, δ_a)}`.
    pub fn weight_of_action(&self, a: f64) -> f64 {
        self.gamma
            .iter()
            .filter(|(p, _)| p.controls == FiniteMeasure::dirac(a))
            .map(|(_, w)| w)
            .sum()
    }

    /// `∫Ξ dΓ̂` as a single profile.
    pub fn averaged_profile(&self) -> Profile {
        let joints: Vec<(f64, Profile)> = self.gamma.iter().map(|(p, w)| (w, p.joint())).collect();
        FiniteMeasure::mixture(joints.iter().map(|(w, j)| (*w, j)))
    }

    /// Mean next-period population state, averaged over `Γ̂`.
    pub fn population_mean(&self, game: &OneStepGame) -> f64 {
        self.gamma
            .expectation(|p| population_flow(game, &p.joint(), 1)[1].mu.mean())
    }
}

/// `∫ J(Ξ; x, a) dΓ̂(Ξ)`.
pub fn mf_cost(game: &OneStepGame, gamma: &PopulationEstimate, x: f64, a: f64) -> f64 {
    gamma.gamma.expectation(|p| profile_value(game, &p.joint(), x, a))
}

/// `J(∫Ξ dΓ̂; x, a)`.
pub fn fictitious_cost(game: &OneStepGame, gamma: &PopulationEstimate, x: f64, a: f64) -> f64 {
    profile_value(game, &gamma.averaged_profile(), x, a)
}

/// Maximizer of `value` over `[0, 1]`.
///
/// Endpoint-optimal games compare `0` and `1` and break an exact tie with a
/// fair coin from `rng`. Other games take the lowest grid point attaining
/// the grid maximum.
pub fn best_response_by<R: Rng + ?Sized>(
    game: &OneStepGame,
    value: impl Fn(f64) -> f64,
    rng: &mut R,
) -> f64 {
    if game.endpoint_optimal() {
        let (v0, v1) = (value(0.0), value(1.0));
        if v1 > v0 {
            1.0
        } else if v0 > v1 {
            0.0
        } else if rng.gen::<bool>() {
            1.0
        } else {
            0.0
        }
    } else {
        let mut best = (0.0, f64::NEG_INFINITY);
        for a in game.grid() {
            let v = value(a);
            if v > best.1 {
                best = (a, v);
            }
        }
        best.0
    }
}

pub fn best_response<R: Rng + ?Sized>(
    game: &OneStepGame,
    gamma: &PopulationEstimate,
    x: f64,
    rng: &mut R,
) -> f64 {
    best_response_by(game, |a| mf_cost(game, gamma, x, a), rng)
}

/// `Γ̂ₙ₊₁ = c δ_{(μ, δ_best)} + (1 − c) Γ̂ₙ`, then prune and renormalize.
pub fn learning_step(gamma: &PopulationEstimate, best: f64, c: f64) -> Result<PopulationEstimate> {
    Ok(learning_step_unpruned(gamma, best, c)?.pruned())
}

/// [`learning_step`] without pruning.
pub fn learning_step_unpruned(
    gamma: &PopulationEstimate,
    best: f64,
    c: f64,
) -> Result<PopulationEstimate> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidParameter(format!("mixing weight {c} not in [0, 1]")));
    }
    let mut next = FiniteMeasure::new();
    if c > 0.0 {
        next.add(
            ProfilePoint {
                mu: gamma.mu.clone(),
                controls: FiniteMeasure::dirac(best),
            },
            c,
        );
    }
    if c < 1.0 {
        for (p, w) in gamma.gamma.iter() {
            next.add(p.clone(), (1.0 - c) * w);
        }
    }
    Ok(PopulationEstimate {
        mu: gamma.mu.clone(),
        gamma: next,
    })
}

impl PopulationEstimate {
    fn pruned(self) -> Self {
        Self {
            mu: self.mu,
            gamma: self.gamma.pruned(PRUNE_THRESHOLD),
        }
    }
}

/// Which value the representative player optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// `∫ J(Ξ) dΓ̂`.
    Averaged,
    /// `J(∫ Ξ dΓ̂)`.
    Fictitious,
}

/// One iteration of [`run_mean_field`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldIter {
    pub iter: usize,
    /// Population mean under `Γ̂ₙ`.
    pub m: f64,
    pub best: f64,
    pub gamma: PopulationEstimate,
    /// `sup_a J(a) − J(best)` over endpoints and grid.
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldTrace {
    pub iters: Vec<MeanFieldIter>,
    pub stats: TrajectoryStats,
    /// Seed of the tie-breaking coin.
    pub coin_seed: u64,
}

impl MeanFieldTrace {
    pub fn means(&self) -> Vec<f64> {
        self.iters.iter().map(|i| i.m).collect()
    }

    pub fn bests(&self) -> Vec<f64> {
        self.iters.iter().map(|i| i.best).collect()
    }
}

/// Iterates best response and learning step from the prior `δ_{(δ₀, δ_{a0})}`.
pub fn run_mean_field(
    game: &OneStepGame,
    a0: f64,
    c: f64,
    n_iters: usize,
    seed: u64,
) -> Result<MeanFieldTrace> {
    run_mean_field_with(game, Objective::Averaged, a0, c, n_iters, seed)
}

pub fn run_mean_field_with(
    game: &OneStepGame,
    objective: Objective,
    a0: f64,
    c: f64,
    n_iters: usize,
    seed: u64,
) -> Result<MeanFieldTrace> {
    if !(0.0..=1.0).contains(&a0) {
        return Err(Error::InvalidParameter(format!("prior action {a0} not in [0, 1]")));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidParameter(format!("mixing weight {c} not in [0, 1]")));
    }
    let mut rng = rng_from_seed(seed);
    let x = 0.0;
    let mut gamma = PopulationEstimate::homogeneous_prior(FiniteMeasure::dirac(x), a0);
    let mut iters = Vec::with_capacity(n_iters);
    let mut stats = TrajectoryStats::new("t=0,x=0");
    let grid = game.grid();
    for n in 0..n_iters {
        let value = |a: f64| match objective {
            Objective::Averaged => mf_cost(game, &gamma, x, a),
            Objective::Fictitious => fictitious_cost(game, &gamma, x, a),
        };
        let best = best_response_by(game, value, &mut rng);
        let attained = value(best);
        let sup = grid
            .iter()
            .chain([0.0, 1.0].iter())
            .map(|&a| value(a))
            .fold(attained, f64::max);
        let regret = sup - attained;
        stats.push(AgeRecord {
            age: n,
            ups: FiniteMeasure::dirac(best),
            regret: Some(regret),
            kappa: None,
        })?;
        let next = learning_step(&gamma, best, c)?;
        iters.push(MeanFieldIter {
            iter: n,
            m: gamma.population_mean(game),
            best,
            gamma,
            regret,
        });
        gamma = next;
    }
    Ok(MeanFieldTrace {
        iters,
        stats,
        coin_seed: seed,
    })
}

/// Scalar form of the Example 1 dynamics:
/// `m₀ = a0`, `mₙ₊₁ = c·1{mₙ < ½} + (1 − c)·mₙ`.
pub fn example1_scalar_means(a0: f64, c: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut m = a0;
    for _ in 0..n {
        out.push(m);
        let b = if m < 0.5 { 1.0 } else { 0.0 };
        m = c * b + (1.0 - c) * m;
    }
    out
}

/// Whether every action in the support of `xi0` maximizes `J(Ξ₀; ·)`,
/// where `Ξ₀` is the heterogeneous profile with action law `xi0`.
pub fn relaxed_equilibrium_check(game: &OneStepGame, xi0: &FiniteMeasure<f64>) -> Result<bool> {
    xi0.ensure_probability("action law")?;
    let x = 0.0;
    let profile = FiniteMeasure::dirac(x).product(xi0);
    let value = |a: f64| profile_value(game, &profile, x, a);
    let sup = game
        .grid()
        .into_iter()
        .chain([0.0, 1.0])
        .chain(xi0.support().copied())
        .map(value)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(xi0.support().all(|&a| value(a) >= sup - RELAXED_TOL))
}
