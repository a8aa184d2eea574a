//! Multi-armed bandits seen from the state side (the arm's payout is a
//! state component) and from the action side (arms are players whose
//! actions are payouts).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::{
    control_grid, induce_control_distribution, kappa, regret_condition, AgeRecord, Control,
    EstimationBundle, ScenarioSpace, TimeIndexedGame, TrajectoryStats, EXHAUSTIVE_CONTROL_LIMIT,
};
use crate::measure::FiniteMeasure;
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Perspective {
    State,
    Action,
}

impl Perspective {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "state" => Ok(Perspective::State),
            "action" => Ok(Perspective::Action),
            other => Err(Error::InvalidParameter(format!("unknown perspective {other:?}"))),
        }
    }
}

/// Payout laws of the arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditSpec {
    arms: Vec<FiniteMeasure<f64>>,
}

impl BanditSpec {
    pub fn new(arms: Vec<FiniteMeasure<f64>>) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::InvalidParameter("no arms".into()));
        }
        for a in &arms {
            a.ensure_probability("arm payout law")?;
        }
        Ok(Self { arms })
    }

    /// Arm `i` pays `1` with probability `ps[i]`, else `0`.
    pub fn bernoulli(ps: &[f64]) -> Result<Self> {
        let arms = ps
            .iter()
            .map(|&p| {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidParameter(format!("probability {p}")));
                }
                let mut m = FiniteMeasure::new();
                if p < 1.0 {
                    m.add(0.0, 1.0 - p);
                }
                if p > 0.0 {
                    m.add(1.0, p);
                }
                Ok(m)
            })
            .collect::<Result<_>>()?;
        Self::new(arms)
    }

    pub fn arms(&self) -> &[FiniteMeasure<f64>] {
        &self.arms
    }

    pub fn k(&self) -> usize {
        self.arms.len()
    }

    /// `E[φ(a, X₁)]` where `φ` reads the `a`-th component of the state.
    pub fn state_values(&self) -> Vec<f64> {
        self.arms.iter().map(FiniteMeasure::mean).collect()
    }

    /// Joint law of all payouts, arms independent.
    pub fn profile_law(&self) -> FiniteMeasure<Vec<f64>> {
        let mut law = FiniteMeasure::dirac(Vec::new());
        for arm in &self.arms {
            law = law.bind(|prefix: &Vec<f64>| {
                arm.map(|&r| {
                    let mut p = prefix.clone();
                    p.push(r);
                    p
                })
            });
        }
        law
    }

    pub fn sample<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> f64 {
        sample_from(&self.arms[arm], rng)
    }
}

fn sample_from<P: Clone + PartialEq, R: Rng + ?Sized>(m: &FiniteMeasure<P>, rng: &mut R) -> P {
    let u: f64 = rng.gen::<f64>() * m.total_mass();
    let mut acc = 0.0;
    for (p, w) in m.iter() {
        acc += w;
        if u < acc {
            return p.clone();
        }
    }
    m.atoms().last().expect("non-empty measure").point.clone()
}

/// `J(ℓ) = ∫ a_ℓ dΓ̂`.
pub fn action_values(gamma_hat: &FiniteMeasure<Vec<f64>>) -> Result<Vec<f64>> {
    gamma_hat.ensure_probability("payout profile law")?;
    let k = gamma_hat
        .support()
        .next()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidParameter("empty payout profile law".into()))?;
    if gamma_hat.support().any(|p| p.len() != k) {
        return Err(Error::InvalidParameter("ragged payout profiles".into()));
    }
    Ok((0..k).map(|l| gamma_hat.expectation(|p| p[l])).collect())
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Law of `argmax_a (values[a] + U_a)` for `U_a` iid uniform on
/// `[−δ, δ]`. Exact: closed form for two arms, piecewise Gauss–Legendre
/// quadrature of the polynomial integrand otherwise.
pub fn induced_arm_distribution(values: &[f64], delta: f64) -> Result<FiniteMeasure<usize>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("no arms".into()));
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("noise width {delta}")));
    }
    let k = values.len();
    if delta == 0.0 || k == 1 {
        return Ok(FiniteMeasure::dirac(argmax_lowest(values)));
    }
    let probs = if k == 2 {
        let p0 = two_arm_first(values[1] - values[0], delta);
        vec![p0, 1.0 - p0]
    } else {
        (0..k).map(|i| win_probability(values, i, delta)).collect()
    };
    Ok(FiniteMeasure::from_atoms(
        probs.into_iter().enumerate().filter(|&(_, p)| p > 0.0),
    ))
}

/// `P(U₀ − U₁ > d)` for `U₀, U₁` iid uniform on `[−δ, δ]`.
pub fn two_arm_first(d: f64, delta: f64) -> f64 {
    let w = 2.0 * delta;
    if d >= w {
        0.0
    } else if d <= -w {
        1.0
    } else if d >= 0.0 {
        (w - d) * (w - d) / (2.0 * w * w)
    } else {
        1.0 - (w + d) * (w + d) / (2.0 * w * w)
    }
}

fn uniform_cdf(v: f64, delta: f64) -> f64 {
    ((v + delta) / (2.0 * delta)).clamp(0.0, 1.0)
}

fn win_probability(values: &[f64], i: usize, delta: f64) -> f64 {
    let mut cuts = vec![-delta, delta];
    for (j, &vj) in values.iter().enumerate() {
        if j != i {
            for b in [vj - values[i] - delta, vj - values[i] + delta] {
                if b > -delta && b < delta {
                    cuts.push(b);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let (nodes, weights) = gauss_legendre(values.len().div_ceil(2) + 1);
    let integrand = |u: f64| {
        values
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &vj)| uniform_cdf(values[i] + u - vj, delta))
            .product::<f64>()
    };
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        total += half
            * nodes
                .iter()
                .zip(&weights)
                .map(|(x, wt)| wt * integrand(mid + half * x))
                .sum::<f64>();
    }
    total / (2.0 * delta)
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Monte Carlo estimate of [`induced_arm_distribution`].
pub fn induced_arm_distribution_mc<R: Rng + ?Sized>(
    values: &[f64],
    delta: f64,
    draws: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut counts = vec![0usize; values.len()];
    let mut noisy = vec![0.0; values.len()];
    for _ in 0..draws {
        for (n, &v) in noisy.iter_mut().zip(values) {
            *n = v + if delta > 0.0 { rng.gen_range(-delta..=delta) } else { 0.0 };
        }
        counts[argmax_lowest(&noisy)] += 1;
    }
    counts.iter().map(|&c| c as f64 / draws as f64).collect()
}

/// State perspective: arm values are learned means.
pub fn bandit_state_policy(learned_means: &[f64], delta: f64) -> Result<FiniteMeasure<usize>> {
    induced_arm_distribution(learned_means, delta)
}

/// Action perspective: arm values integrate the payout profile law `Γ̂`.
pub fn bandit_action_policy(
    gamma_hat: &FiniteMeasure<Vec<f64>>,
    delta: f64,
) -> Result<FiniteMeasure<usize>> {
    induced_arm_distribution(&action_values(gamma_hat)?, delta)
}

/// An arm as a constant learner: scenarios are its payouts, each scenario's
/// prior plays that payout, and the value rewards matching the scenario.
/// Returns the game, the bundle, the scenario space and the payout of each
/// action index.
pub fn arm_player(
    law: &FiniteMeasure<f64>,
) -> Result<(TimeIndexedGame, EstimationBundle<'static>, ScenarioSpace, Vec<f64>)> {
    law.ensure_probability("arm payout law")?;
    let payouts: Vec<f64> = law.support().copied().collect();
    let game = TimeIndexedGame::stationary(1, vec![0], vec![(0..payouts.len()).collect()])?;
    let scenarios = ScenarioSpace::new(law.iter().map(|(_, w)| w).collect())?;
    let g = game.clone();
    let bundle = EstimationBundle::new(0)
        .with_transition_cost(|s, _, _, a| if a[0] == s { 1.0 } else { 0.0 })
        .with_policy_prior(move |s, _, _| FiniteMeasure::dirac(Control::constant(&g, s)))
        .with_best_expectation(|_, _| 0.5);
    Ok((game, bundle, scenarios, payouts))
}

/// Per-age records of a constant arm: the estimations never change, so
/// every age carries the same induced law, regret and κ.
pub fn arm_trajectory(law: &FiniteMeasure<f64>, ages: usize) -> Result<TrajectoryStats> {
    let (game, bundle, scenarios, payouts) = arm_player(law)?;
    let grid = control_grid(&game, 0, 0, 1, EXHAUSTIVE_CONTROL_LIMIT);
    let mut stats = TrajectoryStats::new("arm");
    for age in 0..ages {
        let ups = induce_control_distribution(&bundle, &scenarios, 0, 0);
        let ups = ups.map(|c| payouts[c.decision(0, 0).expect("constant control")]);
        stats.push(AgeRecord {
            age,
            ups,
            regret: Some(regret_condition(&game, &bundle, &scenarios, 0, 0, &grid)?),
            kappa: Some(kappa(&game, &bundle, &scenarios, 0, 0)?),
        })?;
    }
    Ok(stats)
}

/// One bandit run.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditTrace {
    pub pulls: Vec<usize>,
    pub rewards: Vec<f64>,
    pub stats: TrajectoryStats,
}

/// Repeatedly plays the induced arm law. The learner's estimate of arm `a`
/// is the empirical payout law of its pulls (`δ_{½}` before the first),
/// read as means (state side) or as a product profile law (action side).
pub fn run_bandit(
    spec: &BanditSpec,
    delta: f64,
    perspective: Perspective,
    rounds: usize,
    seed: u64,
) -> Result<BanditTrace> {
    let mut rng = rng_from_seed(seed);
    let k = spec.k();
    let mut seen: Vec<FiniteMeasure<f64>> = vec![FiniteMeasure::new(); k];
    let mut pulls = Vec::with_capacity(rounds);
    let mut rewards = Vec::with_capacity(rounds);
    let mut stats = TrajectoryStats::new("bandit");
    for age in 0..rounds {
        let estimates: Vec<FiniteMeasure<f64>> = seen
            .iter()
            .map(|m| {
                if m.is_empty() {
                    FiniteMeasure::dirac(0.5)
                } else {
                    m.clone().normalized()
                }
            })
            .collect();
        let policy = match perspective {
            Perspective::State => {
                let means: Vec<f64> = estimates.iter().map(FiniteMeasure::mean).collect();
                bandit_state_policy(&means, delta)?
            }
            Perspective::Action => {
                let law = BanditSpec::new(estimates)?.profile_law();
                bandit_action_policy(&law, delta)?
            }
        };
        stats.push(AgeRecord {
            age,
            ups: policy.map(|&a| a as f64),
            regret: None,
            kappa: None,
        })?;
        let arm = sample_from(&policy, &mut rng);
        let r = spec.sample(arm, &mut rng);
        seen[arm].add(r, 1.0);
        pulls.push(arm);
        rewards.push(r);
    }
    Ok(BanditTrace {
        pulls,
        rewards,
        stats,
    })
}
