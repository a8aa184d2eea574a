use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::FiniteMeasure;

pub type Time = usize;
pub type StateId = usize;
pub type ActionId = usize;
pub type PlayerId = usize;
/// Index into a [`ScenarioSpace`].
pub type Scenario = usize;

/// Finite, time-indexed game: state lists per time step and per-player
/// action lists per `(t, state)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeIndexedGame {
    horizon_bound: usize,
    states_at: Vec<Vec<StateId>>,
    actions: BTreeMap<(Time, StateId), Vec<Vec<ActionId>>>,
    n_players: usize,
}

impl TimeIndexedGame {
    /// `states_at[t]` lists the states at time `t` for `t = 0..=horizon_bound`;
    /// `actions[(t, x)][i]` lists player `i`'s actions for every `t < horizon_bound`.
    pub fn new(
        horizon_bound: usize,
        states_at: Vec<Vec<StateId>>,
        actions: BTreeMap<(Time, StateId), Vec<Vec<ActionId>>>,
        n_players: usize,
    ) -> Result<Self> {
        if states_at.len() != horizon_bound + 1 {
            return Err(Error::InvalidGame(format!(
                "expected {} state lists, got {}",
                horizon_bound + 1,
                states_at.len()
            )));
        }
        if n_players == 0 {
            return Err(Error::InvalidGame("no players".into()));
        }
        for (t, states) in states_at.iter().enumerate() {
            if states.is_empty() {
                return Err(Error::InvalidGame(format!("no states at t={t}")));
            }
            if t == horizon_bound {
                continue;
            }
            for &x in states {
                let per_player = actions.get(&(t, x)).ok_or_else(|| {
                    Error::InvalidGame(format!("no actions at (t={t}, x={x})"))
                })?;
                if per_player.len() != n_players || per_player.iter().any(Vec::is_empty) {
                    return Err(Error::InvalidGame(format!(
                        "every player needs actions at (t={t}, x={x})"
                    )));
                }
            }
        }
        Ok(Self {
            horizon_bound,
            states_at,
            actions,
            n_players,
        })
    }

    /// Same state and action sets at every time step.
    pub fn stationary(
        horizon_bound: usize,
        states: Vec<StateId>,
        actions_per_player: Vec<Vec<ActionId>>,
    ) -> Result<Self> {
        let n_players = actions_per_player.len();
        let mut actions = BTreeMap::new();
        for t in 0..horizon_bound {
            for &x in &states {
                actions.insert((t, x), actions_per_player.clone());
            }
        }
        Self::new(
            horizon_bound,
            vec![states; horizon_bound + 1],
            actions,
            n_players,
        )
    }

    pub fn horizon_bound(&self) -> usize {
        self.horizon_bound
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn states_at(&self, t: Time) -> &[StateId] {
        self.states_at.get(t).map_or(&[], Vec::as_slice)
    }

    pub fn has_state(&self, t: Time, x: StateId) -> bool {
        self.states_at(t).contains(&x)
    }

    pub fn actions_at(&self, t: Time, x: StateId, player: PlayerId) -> &[ActionId] {
        self.actions
            .get(&(t, x))
            .and_then(|v| v.get(player))
            .map_or(&[], Vec::as_slice)
    }
}

/// A Markov control: one action per `(t, state)` site.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Control {
    decisions: BTreeMap<(Time, StateId), ActionId>,
}

impl Control {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_decisions<I: IntoIterator<Item = ((Time, StateId), ActionId)>>(iter: I) -> Self {
        Self {
            decisions: iter.into_iter().collect(),
        }
    }

    /// The same action at every decision site of `game`.
    pub fn constant(game: &TimeIndexedGame, action: ActionId) -> Self {
        let mut c = Self::new();
        for t in 0..game.horizon_bound() {
            for &x in game.states_at(t) {
                c.set(t, x, action);
            }
        }
        c
    }

    pub fn set(&mut self, t: Time, x: StateId, a: ActionId) {
        self.decisions.insert((t, x), a);
    }

    pub fn decision(&self, t: Time, x: StateId) -> Option<ActionId> {
        self.decisions.get(&(t, x)).copied()
    }

    pub fn decisions(&self) -> impl Iterator<Item = (&(Time, StateId), &ActionId)> {
        self.decisions.iter()
    }

    /// Representative of the quotient class: keeps only sites with time in
    /// `[t, t + horizon)`.
    pub fn truncated(&self, t: Time, horizon: usize) -> Self {
        Self {
            decisions: self
                .decisions
                .range((t, 0)..(t + horizon, 0))
                .map(|(k, v)| (*k, *v))
                .collect(),
        }
    }

    /// Every decision is a legal action of `player`.
    pub fn is_valid_for(&self, game: &TimeIndexedGame, player: PlayerId) -> bool {
        self.decisions
            .iter()
            .all(|(&(t, x), a)| game.actions_at(t, x, player).contains(a))
    }
}

/// One control per player, indexed by player id.
pub type JointControl = Vec<Control>;

/// Finite stand-in for the value-uncertainty probability space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpace {
    weights: Vec<f64>,
}

impl ScenarioSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let mass: f64 = weights.iter().sum();
        if weights.is_empty() || weights.iter().any(|&w| w < 0.0) || (mass - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized {
                what: "scenario weights".into(),
                mass,
            });
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn single() -> Self {
        Self::uniform(1)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, s: Scenario) -> f64 {
        self.weights[s]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Scenario, f64)> + '_ {
        self.weights.iter().copied().enumerate()
    }

    /// `w·self + (1−w)·other` over the disjoint union of scenarios
    /// (scenarios of `other` are shifted by `self.len()`).
    pub fn mix(&self, w: f64, other: &ScenarioSpace) -> ScenarioSpace {
        let weights = self
            .weights
            .iter()
            .map(|p| w * p)
            .chain(other.weights.iter().map(|p| (1.0 - w) * p))
            .collect();
        ScenarioSpace { weights }
    }
}

type Boxed<F> = Box<F>;

/// A player's estimations at one learning age. Each field is one learned
/// object; labs fill them from networks, closed forms or tables.
pub struct EstimationBundle<'a> {
    pub owner: PlayerId,
    /// Horizon `T̂(t, x) ≥ 1`.
    pub horizon: Boxed<dyn Fn(Time, StateId) -> usize + Send + Sync + 'a>,
    /// `p̂(t, x, ā; ·)` over the states at `t + 1`.
    pub transition:
        Boxed<dyn Fn(Time, StateId, &[ActionId]) -> FiniteMeasure<StateId> + Send + Sync + 'a>,
    /// `Γ̂_t(α; ·)`: full joint profiles whose `owner` slot is `α`.
    pub opponent_model:
        Boxed<dyn Fn(Time, &Control) -> FiniteMeasure<JointControl> + Send + Sync + 'a>,
    /// `F̂(ω̂, t, x, ā)`.
    pub transition_cost:
        Boxed<dyn Fn(Scenario, Time, StateId, &[ActionId]) -> f64 + Send + Sync + 'a>,
    /// `φ̂(ω̂, t, x)`.
    pub state_value: Boxed<dyn Fn(Scenario, Time, StateId) -> f64 + Send + Sync + 'a>,
    /// `π̂(ω̂, t, x)` over controls.
    pub policy_prior:
        Boxed<dyn Fn(Scenario, Time, StateId) -> FiniteMeasure<Control> + Send + Sync + 'a>,
    /// `B̂(t, x)`.
    pub best_expectation: Boxed<dyn Fn(Time, StateId) -> f64 + Send + Sync + 'a>,
}

impl<'a> EstimationBundle<'a> {
    /// Single-player defaults: horizon 1, the state stays put, the opponent
    /// model is the owner's own control, zero costs and values, an empty
    /// policy prior and best expectation 0.
    pub fn new(owner: PlayerId) -> Self {
        Self {
            owner,
            horizon: Box::new(|_, _| 1),
            transition: Box::new(|_, x, _| FiniteMeasure::dirac(x)),
            opponent_model: Box::new(|_, own| FiniteMeasure::dirac(vec![own.clone()])),
            transition_cost: Box::new(|_, _, _, _| 0.0),
            state_value: Box::new(|_, _, _| 0.0),
            policy_prior: Box::new(|_, _, _| FiniteMeasure::new()),
            best_expectation: Box::new(|_, _| 0.0),
        }
    }

    pub fn with_horizon(mut self, f: impl Fn(Time, StateId) -> usize + Send + Sync + 'a) -> Self {
        self.horizon = Box::new(f);
        self
    }

    pub fn with_transition(
        mut self,
        f: impl Fn(Time, StateId, &[ActionId]) -> FiniteMeasure<StateId> + Send + Sync + 'a,
    ) -> Self {
        self.transition = Box::new(f);
        self
    }

    pub fn with_opponent_model(
        mut self,
        f: impl Fn(Time, &Control) -> FiniteMeasure<JointControl> + Send + Sync + 'a,
    ) -> Self {
        self.opponent_model = Box::new(f);
        self
    }

    pub fn with_transition_cost(
        mut self,
        f: impl Fn(Scenario, Time, StateId, &[ActionId]) -> f64 + Send + Sync + 'a,
    ) -> Self {
        self.transition_cost = Box::new(f);
        self
    }

    pub fn with_state_value(
        mut self,
        f: impl Fn(Scenario, Time, StateId) -> f64 + Send + Sync + 'a,
    ) -> Self {
        self.state_value = Box::new(f);
        self
    }

    pub fn with_policy_prior(
        mut self,
        f: impl Fn(Scenario, Time, StateId) -> FiniteMeasure<Control> + Send + Sync + 'a,
    ) -> Self {
        self.policy_prior = Box::new(f);
        self
    }

    pub fn with_best_expectation(
        mut self,
        f: impl Fn(Time, StateId) -> f64 + Send + Sync + 'a,
    ) -> Self {
        self.best_expectation = Box::new(f);
        self
    }
}

/// Append-only observation sequence; the events seen at age `n` are a
/// prefix of those seen at age `n + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationLog<E> {
    events: Vec<E>,
    /// `age_ends[n]` is the number of events visible at age `n`.
    age_ends: Vec<usize>,
}

impl<E> Default for ObservationLog<E> {
    fn default() -> Self {
        Self {
            events: Vec::new(),
            age_ends: vec![0],
        }
    }
}

impl<E> ObservationLog<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn age(&self) -> usize {
        self.age_ends.len() - 1
    }

    /// Records an event at the current age.
    pub fn record(&mut self, event: E) {
        self.events.push(event);
        *self.age_ends.last_mut().expect("age 0 always present") = self.events.len();
    }

    /// Moves to the next learning age.
    pub fn advance(&mut self) {
        self.age_ends.push(self.events.len());
    }

    /// Everything observed up to and including age `n`.
    pub fn at_age(&self, n: usize) -> &[E] {
        let end = self.age_ends[n.min(self.age())];
        &self.events[..end]
    }

    pub fn events(&self) -> &[E] {
        &self.events
    }
}

/// One learning age at one checked site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeRecord {
    pub age: usize,
    /// Induced control distribution, with controls encoded as reals
    /// (actions in `[0,1]` or control indices).
    pub ups: FiniteMeasure<f64>,
    pub regret: Option<f64>,
    pub kappa: Option<f64>,
}

/// Per-age record of induced distributions at a site `(t, x)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub site: String,
    per_age: Vec<AgeRecord>,
}

impl TrajectoryStats {
    pub fn new(site: impl Into<String>) -> Self {
        Self {
            site: site.into(),
            per_age: Vec::new(),
        }
    }

    /// Appends a record. Ages must be strictly increasing.
    pub fn push(&mut self, record: AgeRecord) -> Result<()> {
        if let Some(last) = self.per_age.last() {
            if record.age <= last.age {
                return Err(Error::InvalidParameter(format!(
                    "age {} not after {}",
                    record.age, last.age
                )));
            }
        }
        self.per_age.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[AgeRecord] {
        &self.per_age
    }

    pub fn len(&self) -> usize {
        self.per_age.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_age.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn game_rejects_empty_action_sets() {
        let err = TimeIndexedGame::stationary(1, vec![0], vec![vec![0], vec![]]);
        assert!(err.is_err());
        let ok = TimeIndexedGame::stationary(1, vec![0, 1], vec![vec![0, 1]]).unwrap();
        assert_eq!(ok.actions_at(0, 1, 0), &[0, 1]);
        assert!(ok.has_state(1, 1));
    }

    #[test]
    fn truncation_drops_sites_outside_window() {
        let c = Control::from_decisions([((0, 0), 1), ((1, 0), 0), ((2, 0), 1)]);
        let t = c.truncated(1, 1);
        assert_eq!(t, Control::from_decisions([((1, 0), 0)]));
    }

    #[test]
    fn scenario_weights_must_sum_to_one() {
        assert!(ScenarioSpace::new(vec![0.5, 0.4]).is_err());
        assert!(ScenarioSpace::new(vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn observation_prefixes_grow() {
        let mut log = ObservationLog::new();
        log.record(1);
        log.advance();
        log.record(2);
        log.record(3);
        log.advance();
        assert_eq!(log.at_age(0), &[1]);
        assert_eq!(log.at_age(1), &[1, 2, 3]);
        assert!(log.at_age(1).starts_with(log.at_age(0)));
        assert_eq!(log.age(), 2);
    }

    #[test]
    fn trajectory_ages_strictly_increase() {
        let mut s = TrajectoryStats::new("site");
        let rec = |age| AgeRecord {
            age,
            ups: FiniteMeasure::dirac(0.0),
            regret: None,
            kappa: None,
        };
        s.push(rec(0)).unwrap();
        s.push(rec(2)).unwrap();
        assert!(s.push(rec(2)).is_err());
    }
}
