//! The four classical optimality integrals for a finite normal-form game.
//!
//! For player `i` and a joint law `ρ` on pure profiles, disintegrated as
//! `ρ(dā) = ρ^{-i}(dā | αⁱ) ρⁱ(dαⁱ)`, the rows differ only in where the
//! supremum over the deviation `α̃ⁱ` sits:
//!
//! ```text
//! nash-type          Σ_ā ρ(ā) sup_α̃ J(α̃, ā⁻ⁱ)
//! correlated         Σ_a ρⁱ(a) sup_α̃ E_{ρ^{-i}(·|a)}[J(α̃, ·)]
//! uncertain          Σ_ω P̂(ω) sup_α̃ E_{ρ^{-i}(·|α̃)}[J(ω, α̃, ·)]
//! coarse correlated  sup_α̃ Σ_ā ρ(ā) J(α̃, ā⁻ⁱ)
//! ```
//!
//! In the uncertain row the deviation changes the conditional law of the
//! others. A deviation outside the support of `ρⁱ` has no conditional; it is
//! paired with the marginal `ρ^{-i}` instead.

use serde::{Deserialize, Serialize};

use super::game::{Scenario, ScenarioSpace};
use crate::error::{Error, Result};
use crate::measure::FiniteMeasure;

/// Pure profile of a normal-form game: one action index per player.
pub type Profile = Vec<usize>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumValues {
    pub nash_type: f64,
    pub correlated: f64,
    pub uncertain: f64,
    pub coarse_correlated: f64,
}

/// Scenario-indexed payoff for the uncertain row.
pub struct ScenarioPayoff<'a> {
    pub scenarios: &'a ScenarioSpace,
    pub payoff: &'a dyn Fn(Scenario, &[usize]) -> f64,
}

fn deviate(profile: &[usize], i: usize, a: usize) -> Profile {
    let mut p = profile.to_vec();
    p[i] = a;
    p
}

/// Evaluates the four rows exactly by enumeration. `action_counts[i]` is the
/// number of actions of player `i`; `payoff` is player `i`'s payoff. When
/// `uncertain` is `None` the uncertain row uses `payoff` with one scenario.
pub fn equilibrium_condition_values(
    action_counts: &[usize],
    payoff: &dyn Fn(&[usize]) -> f64,
    rho: &FiniteMeasure<Profile>,
    i: usize,
    uncertain: Option<ScenarioPayoff<'_>>,
) -> Result<EquilibriumValues> {
    rho.ensure_probability("joint law rho")?;
    if i >= action_counts.len() {
        return Err(Error::InvalidParameter(format!("no player {i}")));
    }
    if rho.support().any(|p| p.len() != action_counts.len()) {
        return Err(Error::InvalidParameter("profile length mismatch".into()));
    }
    let deviations = 0..action_counts[i];

    let nash_type = rho.expectation(|p| {
        deviations
            .clone()
            .map(|a| payoff(&deviate(p, i, a)))
            .fold(f64::NEG_INFINITY, f64::max)
    });

    let marginal = rho.map(|p| p[i]);
    let mut correlated = 0.0;
    for (&own, _) in marginal.iter() {
        let best = deviations
            .clone()
            .map(|a| {
                rho.iter()
                    .filter(|(p, _)| p[i] == own)
                    .map(|(p, w)| w * payoff(&deviate(p, i, a)))
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        correlated += best;
    }

    let coarse_correlated = deviations
        .clone()
        .map(|a| rho.expectation(|p| payoff(&deviate(p, i, a))))
        .fold(f64::NEG_INFINITY, f64::max);

    let single = ScenarioSpace::single();
    let fallback = |_: Scenario, p: &[usize]| payoff(p);
    let (scenarios, scenario_payoff): (&ScenarioSpace, &dyn Fn(Scenario, &[usize]) -> f64) =
        match &uncertain {
            Some(u) => (u.scenarios, u.payoff),
            None => (&single, &fallback),
        };
    let conditional_value = |s: Scenario, a: usize| {
        let mass = marginal.weight_of(&a);
        if mass > 0.0 {
            rho.iter()
                .filter(|(p, _)| p[i] == a)
                .map(|(p, w)| w * scenario_payoff(s, p))
                .sum::<f64>()
                / mass
        } else {
            rho.expectation(|p| scenario_payoff(s, &deviate(p, i, a)))
        }
    };
    let uncertain_value = scenarios
        .iter()
        .map(|(s, w)| {
            w * deviations
                .clone()
                .map(|a| conditional_value(s, a))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();

    Ok(EquilibriumValues {
        nash_type,
        correlated,
        uncertain: uncertain_value,
        coarse_correlated,
    })
}
