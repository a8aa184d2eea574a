//! Path measures, values and induced distributions.

use super::game::{
    ActionId, Control, EstimationBundle, Scenario, ScenarioSpace, StateId, Time,
    TimeIndexedGame,
};
use crate::error::{Error, Result};
use crate::measure::FiniteMeasure;

/// A state path `x_t, x_{t+1}, …, x_{t+h}`.
pub type Path = Vec<StateId>;

fn joint_action(profile: &[Control], s: Time, x: StateId) -> Result<Vec<ActionId>> {
    profile
        .iter()
        .map(|c| c.decision(s, x).ok_or(Error::MissingDecision { t: s, state: x }))
        .collect()
}

/// Exact path measure of the chain started at `(t, x)` under `profile`,
/// run for the bundle's horizon `T̂(t, x)`.
pub fn chain_distribution(
    game: &TimeIndexedGame,
    bundle: &EstimationBundle<'_>,
    t: Time,
    x: StateId,
    profile: &[Control],
) -> Result<FiniteMeasure<Path>> {
    let horizon = (bundle.horizon)(t, x);
    chain_distribution_for(game, bundle, t, x, profile, horizon)
}

pub(crate) fn chain_distribution_for(
    game: &TimeIndexedGame,
    bundle: &EstimationBundle<'_>,
    t: Time,
    x: StateId,
    profile: &[Control],
    horizon: usize,
) -> Result<FiniteMeasure<Path>> {
    if !game.has_state(t, x) {
        return Err(Error::UnknownState { t, state: x });
    }
    if t + horizon > game.horizon_bound() {
        return Err(Error::HorizonOverflow {
            t,
            horizon,
            bound: game.horizon_bound(),
        });
    }
    let mut paths = FiniteMeasure::dirac(vec![x]);
    for s in t..t + horizon {
        let mut next = FiniteMeasure::new();
        for (path, w) in paths.iter() {
            let here = *path.last().expect("paths are never empty");
            let actions = joint_action(profile, s, here)?;
            let kernel = (bundle.transition)(s, here, &actions);
            kernel.ensure_probability("transition kernel")?;
            for (&y, p) in kernel.iter() {
                if !game.has_state(s + 1, y) {
                    return Err(Error::UnknownState { t: s + 1, state: y });
                }
                let mut extended = path.clone();
                extended.push(y);
                next.add(extended, w * p);
            }
        }
        paths = next;
    }
    Ok(paths)
}

/// `E[φ̂(t+T̂, X_{t+T̂}) + Σ_s F̂(s, X_s, ā(s, X_s))]` by path enumeration.
pub fn value_of_profile(
    game: &TimeIndexedGame,
    bundle: &EstimationBundle<'_>,
    scenario: Scenario,
    t: Time,
    x: StateId,
    profile: &[Control],
) -> Result<f64> {
    let horizon = (bundle.horizon)(t, x);
    value_of_profile_for(game, bundle, scenario, t, x, profile, horizon)
}

pub(crate) fn value_of_profile_for(
    game: &TimeIndexedGame,
    bundle: &EstimationBundle<'_>,
    scenario: Scenario,
    t: Time,
    x: StateId,
    profile: &[Control],
    horizon: usize,
) -> Result<f64> {
    let paths = chain_distribution_for(game, bundle, t, x, profile, horizon)?;
    let mut total = 0.0;
    for (path, w) in paths.iter() {
        let mut v = (bundle.state_value)(scenario, t + horizon, path[horizon]);
        for (k, &xs) in path[..horizon].iter().enumerate() {
            let s = t + k;
            let actions = joint_action(profile, s, xs)?;
            v += (bundle.transition_cost)(scenario, s, xs, &actions);
        }
        total += w * v;
    }
    Ok(total)
}

/// Value of the owner's control, integrated against the opponent model.
pub fn value_of_control(
    game: &TimeIndexedGame,
    bundle: &EstimationBundle<'_>,
    scenario: Scenario,
    t: Time,
    x: StateId,
    own: &Control,
) -> Result<f64> {
    let horizon = (bundle.horizon)(t, x);
    value_of_control_for(game, bundle, scenario, t, x, own, horizon)
}

pub(crate) fn value_of_control_for(
    game: &TimeIndexedGame,
    bundle: &EstimationBundle<'_>,
    scenario: Scenario,
    t: Time,
    x: StateId,
    own: &Control,
    horizon: usize,
) -> Result<f64> {
    let window = (bundle.horizon)(t, x);
    let gamma = (bundle.opponent_model)(t, own);
    gamma.ensure_probability("opponent model")?;
    let own_class = own.truncated(t, window);
    let mut total = 0.0;
    for (profile, w) in gamma.iter() {
        let slot = profile
            .get(bundle.owner)
            .ok_or(Error::OpponentModelClash { player: bundle.owner })?;
        if slot.truncated(t, window) != own_class {
            return Err(Error::OpponentModelClash { player: bundle.owner });
        }
        total += w * value_of_profile_for(game, bundle, scenario, t, x, profile, horizon)?;
    }
    Ok(total)
}

/// `ϒ^{t,x} = Σ_ω̂ P̂(ω̂) π̂(ω̂, t, x)`, with controls reduced to their
/// horizon window so that equivalent controls share one atom.
pub fn induce_control_distribution(
    bundle: &EstimationBundle<'_>,
    scenarios: &ScenarioSpace,
    t: Time,
    x: StateId,
) -> FiniteMeasure<Control> {
    let window = (bundle.horizon)(t, x);
    let mut ups = FiniteMeasure::new();
    for (s, p) in scenarios.iter() {
        for (control, w) in (bundle.policy_prior)(s, t, x).iter() {
            ups.add(control.truncated(t, window), p * w);
        }
    }
    ups
}

/// Pushforward of `ϒ` under `α ↦ α(t, x)`.
pub fn induce_action_distribution(
    ups: &FiniteMeasure<Control>,
    t: Time,
    x: StateId,
) -> Result<FiniteMeasure<ActionId>> {
    let mut out = FiniteMeasure::new();
    for (c, w) in ups.iter() {
        let a = c.decision(t, x).ok_or(Error::MissingDecision { t, state: x })?;
        out.add(a, w);
    }
    Ok(out)
}
