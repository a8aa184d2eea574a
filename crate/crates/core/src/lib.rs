//! Learning-based models of game players.
//!
//! A player is described by what it estimates (horizon, transitions,
//! opponents, costs, state values, policy prior, best expectation) and by the
//! distribution over controls those estimations induce. The [`framework`]
//! module evaluates values and equilibrium conditions for finite games; the
//! lab modules run concrete learning dynamics on top of it.

pub mod error;
pub mod framework;
pub mod mean_field;
pub mod measure;
pub mod rl;
pub mod seed;
pub mod smallnet;
pub mod two_player;

pub use error::{Error, Result};
pub use framework::{
    AgeRecord, Control, EstimationBundle, ScenarioSpace, TimeIndexedGame, TrajectoryStats,
};
pub use measure::{Atom, FiniteMeasure, Metric};
