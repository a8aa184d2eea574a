//! Conditions of uncertain equilibrium and related diagnostics.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::game::{
    Control, EstimationBundle, PlayerId, Scenario, ScenarioSpace, StateId, Time, TimeIndexedGame,
    TrajectoryStats,
};
use super::value::{value_of_control, value_of_control_for};
use crate::error::{Error, Result};
use crate::measure::{FiniteMeasure, Metric};

/// Above this many controls, [`control_grid`] returns an evenly spaced subset.
pub const EXHAUSTIVE_CONTROL_LIMIT: usize = 10_000;

/// Markov controls of `player` on the window `[t, t + horizon)`.
///
/// Enumerates every control when there are at most `limit` of them;
/// otherwise returns `limit` controls taken at evenly spaced ranks of the
/// lexicographic enumeration.
pub fn control_grid(
    game: &TimeIndexedGame,
    player: PlayerId,
    t: Time,
    horizon: usize,
    limit: usize,
) -> Vec<Control> {
    let sites: Vec<(Time, StateId)> = (t..(t + horizon).min(game.horizon_bound()))
        .flat_map(|s| game.states_at(s).iter().map(move |&y| (s, y)))
        .collect();
    let radices: Vec<usize> = sites
        .iter()
        .map(|&(s, y)| game.actions_at(s, y, player).len())
        .collect();
    let total = radices
        .iter()
        .try_fold(1usize, |acc, &r| acc.checked_mul(r))
        .unwrap_or(usize::MAX);
    let count = total.min(limit.max(1));
    let decode = |mut rank: usize| {
        let mut c = Control::new();
        for (k, &(s, y)) in sites.iter().enumerate().rev() {
            let r = radices[k];
            c.set(s, y, game.actions_at(s, y, player)[rank % r]);
            rank /= r;
        }
        c
    };
    (0..count)
        .map(|i| {
            if total <= limit {
                decode(i)
            } else {
                decode(((i as u128 * total as u128) / count as u128) as usize)
            }
        })
        .collect()
}

/// Expected shortfall of the policy prior against the best control on
/// `grid`, averaged over scenarios. Always nonnegative: the supremum also
/// ranges over the prior's own support.
pub fn regret_condition(
    game: &TimeIndexedGame,
    bundle: &EstimationBundle<'_>,
    scenarios: &ScenarioSpace,
    t: Time,
    x: StateId,
    grid: &[Control],
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut total = 0.0;
    for (s, p) in scenarios.iter() {
        let prior = (bundle.policy_prior)(s, t, x);
        let mut best = f64::NEG_INFINITY;
        for c in grid {
            best = best.max(value_of_control(game, bundle, s, t, x, c)?);
        }
        let mut prior_values = Vec::with_capacity(prior.len());
        for (c, w) in prior.iter() {
            let v = value_of_control(game, bundle, s, t, x, c)?;
            best = best.max(v);
            prior_values.push((w, v));
        }
        total += p * prior_values.iter().map(|(w, v)| w * (best - v)).sum::<f64>();
    }
    Ok(total.max(0.0))
}

/// Result of [`recurrence_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceReport {
    /// Minimum distance to the reference over the trailing window.
    pub min_distance_tail: f64,
    /// Ages (over the whole trajectory) within distance `r` of the reference.
    pub hit_ages: Vec<usize>,
}

/// Trailing window: a quarter of the ages, at least 50, at most all of them.
pub fn default_window(n_ages: usize) -> usize {
    (n_ages / 4).max(50).min(n_ages)
}

/// Finite-run surrogate for `liminf_n d(reference, ϒ_n) ≤ r`.
pub fn recurrence_check(
    stats: &TrajectoryStats,
    reference: &FiniteMeasure<f64>,
    metric: Metric,
    window: usize,
    r: f64,
) -> Result<RecurrenceReport> {
    let records = stats.records();
    if window == 0 || records.len() < window {
        return Err(Error::ShortTrajectory {
            needed: window.max(1),
            have: records.len(),
        });
    }
    let distances: Vec<f64> = records
        .iter()
        .map(|rec| metric.distance(reference, &rec.ups))
        .collect();
    let min_distance_tail = distances[records.len() - window..]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hit_ages = records
        .iter()
        .zip(&distances)
        .filter(|(_, &d)| d <= r)
        .map(|(rec, _)| rec.age)
        .collect();
    Ok(RecurrenceReport {
        min_distance_tail,
        hit_ages,
    })
}

/// `P̂(∫ J(ω̂, t, x, α) π̂(ω̂, t, x)(dα) > B̂(t, x))`.
pub fn kappa(
    game: &TimeIndexedGame,
    bundle: &EstimationBundle<'_>,
    scenarios: &ScenarioSpace,
    t: Time,
    x: StateId,
) -> Result<f64> {
    let threshold = (bundle.best_expectation)(t, x);
    let mut k = 0.0;
    for (s, p) in scenarios.iter() {
        if prior_value(game, bundle, s, t, x, None)? > threshold {
            k += p;
        }
    }
    Ok(k)
}

fn prior_value(
    game: &TimeIndexedGame,
    bundle: &EstimationBundle<'_>,
    s: Scenario,
    t: Time,
    x: StateId,
    horizon: Option<usize>,
) -> Result<f64> {
    let horizon = horizon.unwrap_or_else(|| (bundle.horizon)(t, x));
    let mut v = 0.0;
    for (c, w) in (bundle.policy_prior)(s, t, x).iter() {
        v += w * value_of_control_for(game, bundle, s, t, x, c, horizon)?;
    }
    Ok(v)
}

/// Verbal reading of the desperation index, nine equal-width bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mood {
    Desperate,
    Discouraged,
    Doubtful,
    Cautious,
    Hopeful,
    Determined,
    Confident,
    Optimistic,
    Euphoric,
}

impl Mood {
    pub const ALL: [Mood; 9] = [
        Mood::Desperate,
        Mood::Discouraged,
        Mood::Doubtful,
        Mood::Cautious,
        Mood::Hopeful,
        Mood::Determined,
        Mood::Confident,
        Mood::Optimistic,
        Mood::Euphoric,
    ];
}

impl fmt::Display for Mood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub fn mood_label(kappa: f64) -> Result<Mood> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::KappaOutOfRange(kappa));
    }
    let bin = ((kappa * 9.0).floor() as usize).min(8);
    Ok(Mood::ALL[bin])
}

/// `κ_n > threshold` at every recorded age. Ages without a κ fail.
pub fn kappa_condition(stats: &TrajectoryStats, threshold: f64) -> bool {
    stats
        .records()
        .iter()
        .all(|r| r.kappa.is_some_and(|k| k > threshold))
}

/// Each player's opponent model stays inside the product of everybody's
/// induced supports, for every control the player may use.
pub fn support_condition(
    bundles: &[EstimationBundle<'_>],
    induced: &[FiniteMeasure<Control>],
    t: Time,
    x: StateId,
) -> bool {
    let windows: Vec<usize> = bundles.iter().map(|b| (b.horizon)(t, x)).collect();
    bundles.iter().enumerate().all(|(i, bundle)| {
        induced[i].support().all(|alpha| {
            (bundle.opponent_model)(t, alpha).support().all(|profile| {
                profile.len() == induced.len()
                    && profile
                        .iter()
                        .enumerate()
                        .all(|(j, c)| induced[j].contains(&c.truncated(t, windows[j])))
            })
        })
    })
}

/// `max_ω̂ |∫ J(T0; ω̂, t, x, α) dπ̂ − ∫ J(ω̂, t, x, α) dπ̂|`, where the first
/// value stops at `T0` and scores the state value there.
pub fn time_consistency_residual(
    game: &TimeIndexedGame,
    bundle: &EstimationBundle<'_>,
    scenarios: &ScenarioSpace,
    t: Time,
    x: StateId,
    t0: Time,
) -> Result<f64> {
    let horizon = (bundle.horizon)(t, x);
    if t0 < t || t0 > t + horizon {
        return Err(Error::TimeOutOfRange {
            t0,
            lo: t,
            hi: t + horizon,
        });
    }
    let mut worst: f64 = 0.0;
    for (s, _) in scenarios.iter() {
        let short = prior_value(game, bundle, s, t, x, Some(t0 - t))?;
        let full = prior_value(game, bundle, s, t, x, None)?;
        worst = worst.max((short - full).abs());
    }
    Ok(worst)
}

/// Tolerance for [`lemma_continuity_probe`].
pub const CONTINUITY_TOL: f64 = 1e-6;

/// Checks that the behavior map sends the last estimation of a converging
/// sequence within `1e-6` of the behavior at the limit point.
pub fn lemma_continuity_probe<E, F>(
    sequence: &[E],
    behavior: F,
    limit: &E,
    metric: Metric,
) -> bool
where
    F: Fn(&E) -> FiniteMeasure<f64>,
{
    let Some(last) = sequence.last() else {
        return false;
    };
    metric.distance(&behavior(limit), &behavior(last)) <= CONTINUITY_TOL
}
