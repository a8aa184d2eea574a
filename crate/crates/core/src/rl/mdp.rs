//! Tabular discounted MDPs, the policy-dependent Q-function and Bellman checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::FiniteMeasure;

/// Row-sum tolerance for transition kernels.
pub const KERNEL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// `kernel[x][a][y] = p(x, a; y)`.
    kernel: Vec<Vec<Vec<f64>>>,
    /// `reward[x][a] = F(x, a)`.
    reward: Vec<Vec<f64>>,
    discount: f64,
}

/// Per-state action law `γ^x`.
pub type Policy = Vec<FiniteMeasure<usize>>;

impl TabularMdp {
    pub fn new(kernel: Vec<Vec<Vec<f64>>>, reward: Vec<Vec<f64>>, discount: f64) -> Result<Self> {
        let n_states = kernel.len();
        if n_states == 0 {
            return Err(Error::InvalidParameter("no states".into()));
        }
        let n_actions = kernel[0].len();
        if n_actions == 0 {
            return Err(Error::InvalidParameter("no actions".into()));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::BadDiscount(discount));
        }
        if reward.len() != n_states {
            return Err(Error::DimensionMismatch {
                expected: n_states,
                got: reward.len(),
            });
        }
        for (row, r) in kernel.iter().zip(&reward) {
            if row.len() != n_actions || r.len() != n_actions {
                return Err(Error::DimensionMismatch {
                    expected: n_actions,
                    got: row.len().min(r.len()),
                });
            }
            for p in row {
                if p.len() != n_states {
                    return Err(Error::DimensionMismatch {
                        expected: n_states,
                        got: p.len(),
                    });
                }
                let mass: f64 = p.iter().sum();
                if p.iter().any(|&q| q < 0.0) || (mass - 1.0).abs() > KERNEL_TOL {
                    return Err(Error::NotNormalized {
                        what: "transition row".into(),
                        mass,
                    });
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            kernel,
            reward,
            discount,
        })
    }

    /// Random kernel (normalized uniform draws) and rewards in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        discount: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let kernel = (0..n_states)
            .map(|_| {
                (0..n_actions)
                    .map(|_| {
                        let raw: Vec<f64> = (0..n_states).map(|_| rng.gen::<f64>() + 1e-3).collect();
                        let total: f64 = raw.iter().sum();
                        let mut row: Vec<f64> = raw.iter().map(|v| v / total).collect();
                        // put the rounding residue on the last entry
                        let head: f64 = row[..n_states - 1].iter().sum();
                        row[n_states - 1] = 1.0 - head;
                        row
                    })
                    .collect()
            })
            .collect();
        let reward = (0..n_states)
            .map(|_| (0..n_actions).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        Self::new(kernel, reward, discount)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward(&self, x: usize, a: usize) -> f64 {
        self.reward[x][a]
    }

    pub fn transition(&self, x: usize, a: usize) -> &[f64] {
        &self.kernel[x][a]
    }

    /// `F(x, a) + λ Σ_y p(x, a; y) v(y)`.
    pub fn backup(&self, v: &[f64], x: usize, a: usize) -> f64 {
        self.reward[x][a]
            + self.discount
                * self.kernel[x][a]
                    .iter()
                    .zip(v)
                    .map(|(p, vy)| p * vy)
                    .sum::<f64>()
    }

    fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.len() != self.n_states {
            return Err(Error::DimensionMismatch {
                expected: self.n_states,
                got: policy.len(),
            });
        }
        for g in policy {
            g.ensure_probability("state policy")?;
            if let Some(&a) = g.support().find(|&&a| a >= self.n_actions) {
                return Err(Error::InvalidParameter(format!("action {a} out of range")));
            }
        }
        Ok(())
    }
}

/// Solves `Q(x, a) = F(x, a) + λ Σ_y p(x, a; y) Σ_ã γ^y(ã) Q(y, ã)` exactly.
pub fn q_table(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<Vec<f64>>> {
    mdp.check_policy(policy)?;
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let n = ns * na;
    let idx = |x: usize, a: usize| x * na + a;
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut f = DVector::<f64>::zeros(n);
    for x in 0..ns {
        for a in 0..na {
            f[idx(x, a)] = mdp.reward[x][a];
            for (y, &p) in mdp.kernel[x][a].iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (&b, g) in policy[y].iter() {
                    m[(idx(x, a), idx(y, b))] -= mdp.discount * p * g;
                }
            }
        }
    }
    let q = m.lu().solve(&f).ok_or(Error::Singular)?;
    let mut q = (0..ns)
        .map(|x| (0..na).map(|a| q[idx(x, a)]).collect::<Vec<f64>>())
        .collect::<Vec<_>>();
    // one fixed-point sweep removes most of the solver's rounding
    let v = policy_values(&q, policy);
    for (x, row) in q.iter_mut().enumerate() {
        for (a, qa) in row.iter_mut().enumerate() {
            *qa = mdp.backup(&v, x, a);
        }
    }
    Ok(q)
}

pub fn q_value(mdp: &TabularMdp, policy: &Policy, x: usize, a: usize) -> Result<f64> {
    if x >= mdp.n_states || a >= mdp.n_actions {
        return Err(Error::InvalidParameter(format!("no pair ({x}, {a})")));
    }
    Ok(q_table(mdp, policy)?[x][a])
}

/// `Σ_a γ^x(a) Q(x, a)` per state.
pub fn policy_values(q: &[Vec<f64>], policy: &Policy) -> Vec<f64> {
    q.iter()
        .zip(policy)
        .map(|(row, g)| g.expectation(|&a| row[a]))
        .collect()
}

/// Largest violation of the Q fixed point under `policy`.
pub fn q_residual(mdp: &TabularMdp, policy: &Policy, q: &[Vec<f64>]) -> f64 {
    let v = policy_values(q, policy);
    let mut worst: f64 = 0.0;
    for (x, row) in q.iter().enumerate() {
        for (a, &qa) in row.iter().enumerate() {
            worst = worst.max((qa - mdp.backup(&v, x, a)).abs());
        }
    }
    worst
}

/// `max_x |V(x) − max_a [F(x, a) + λ Σ_y p(x, a; y) V(y)]|`.
pub fn bellman_check(mdp: &TabularMdp, v: &[f64]) -> Result<f64> {
    if v.len() != mdp.n_states {
        return Err(Error::DimensionMismatch {
            expected: mdp.n_states,
            got: v.len(),
        });
    }
    let mut worst: f64 = 0.0;
    for (x, &vx) in v.iter().enumerate() {
        let best = (0..mdp.n_actions)
            .map(|a| mdp.backup(v, x, a))
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max((vx - best).abs());
    }
    Ok(worst)
}

/// Dirac on the lowest-index maximizer of each row.
pub fn greedy_policy(q: &[Vec<f64>]) -> Policy {
    q.iter()
        .map(|row| {
            let mut best = 0;
            for (a, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = a;
                }
            }
            FiniteMeasure::dirac(best)
        })
        .collect()
}

/// Iterates `V ← max_a backup(V)` until successive iterates differ by at
/// most `tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64, max_iters: usize) -> Vec<f64> {
    let mut v = vec![0.0; mdp.n_states];
    for _ in 0..max_iters {
        let next: Vec<f64> = (0..mdp.n_states)
            .map(|x| {
                (0..mdp.n_actions)
                    .map(|a| mdp.backup(&v, x, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let diff = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if diff <= tol {
            break;
        }
    }
    v
}

/// Exact policy iteration. A state switches action only on a strict
/// improvement larger than `1e-12`, so the loop cannot cycle on ties.
pub fn policy_iteration(mdp: &TabularMdp) -> Result<(Policy, Vec<Vec<f64>>)> {
    let mut choice = vec![0usize; mdp.n_states];
    loop {
        let policy: Policy = choice.iter().map(|&a| FiniteMeasure::dirac(a)).collect();
        let q = q_table(mdp, &policy)?;
        let mut changed = false;
        for (x, row) in q.iter().enumerate() {
            let cur = row[choice[x]];
            let greedy = greedy_policy(std::slice::from_ref(row));
            let a = *greedy[0].support().next().expect("dirac");
            if row[a] > cur + 1e-12 {
                choice[x] = a;
                changed = true;
            }
        }
        if !changed {
            return Ok((policy, q));
        }
    }
}
