//! Player estimations, induced distributions and equilibrium checks for
//! finite time-indexed games.
//!
//! Values are maximized throughout. Labs that minimize a cost negate it
//! before handing it to these routines.

pub mod checks;
pub mod equilibrium;
pub mod game;
pub mod value;

pub use checks::{
    control_grid, default_window, kappa, kappa_condition, lemma_continuity_probe, mood_label,
    recurrence_check, regret_condition, support_condition, time_consistency_residual, Mood,
    RecurrenceReport, EXHAUSTIVE_CONTROL_LIMIT,
};
pub use equilibrium::{equilibrium_condition_values, EquilibriumValues, Profile, ScenarioPayoff};
pub use game::{
    ActionId, AgeRecord, Control, EstimationBundle, JointControl, ObservationLog, PlayerId,
    Scenario, ScenarioSpace, StateId, Time, TimeIndexedGame, TrajectoryStats,
};
pub use value::{
    chain_distribution, induce_action_distribution, induce_control_distribution, value_of_control,
    value_of_profile, Path,
};
