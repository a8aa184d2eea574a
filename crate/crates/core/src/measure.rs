//! Finitely supported measures.
//!
//! A [`FiniteMeasure`] stores `(point, weight)` atoms with merged support:
//! pushing a point that is already present adds to its weight instead of
//! creating a second atom. Support sizes in this crate are small (tens to a
//! few hundred atoms), so lookups are linear scans and only `PartialEq` is
//! required of the point type.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a measure is a probability measure.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// One atom of a [`FiniteMeasure`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom<P> {
    pub point: P,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "P: Serialize", deserialize = "P: Deserialize<'de> + PartialEq"))]
#[serde(from = "Vec<Atom<P>>", into = "Vec<Atom<P>>")]
pub struct FiniteMeasure<P: Clone> {
    atoms: Vec<Atom<P>>,
}

impl<P: Clone + PartialEq> From<Vec<Atom<P>>> for FiniteMeasure<P> {
    fn from(atoms: Vec<Atom<P>>) -> Self {
        Self::from_atoms(atoms.into_iter().map(|a| (a.point, a.weight)))
    }
}

impl<P: Clone> From<FiniteMeasure<P>> for Vec<Atom<P>> {
    fn from(m: FiniteMeasure<P>) -> Self {
        m.atoms
    }
}

impl<P: Clone + PartialEq> Default for FiniteMeasure<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: Clone + PartialEq> FiniteMeasure<P> {
    pub fn new() -> Self {
        Self { atoms: Vec::new() }
    }

    pub fn dirac(point: P) -> Self {
        Self {
            atoms: vec![Atom { point, weight: 1.0 }],
        }
    }

    /// Uniform probability measure over `points` (duplicates merge).
    pub fn uniform<I: IntoIterator<Item = P>>(points: I) -> Self {
        let points: Vec<P> = points.into_iter().collect();
        let w = 1.0 / points.len() as f64;
        Self::from_atoms(points.into_iter().map(|p| (p, w)))
    }

    /// Builds a measure from `(point, weight)` pairs, merging equal points.
    pub fn from_atoms<I: IntoIterator<Item = (P, f64)>>(atoms: I) -> Self {
        let mut m = Self::new();
        for (p, w) in atoms {
            m.add(p, w);
        }
        m
    }

    /// Adds `weight` at `point`. Negative weights are a programming error.
    pub fn add(&mut self, point: P, weight: f64) {
        debug_assert!(weight >= 0.0, "negative weight {weight}");
        match self.atoms.iter_mut().find(|a| a.point == point) {
            Some(a) => a.weight += weight,
            None => self.atoms.push(Atom { point, weight }),
        }
    }

    pub fn atoms(&self) -> &[Atom<P>] {
        &self.atoms
    }

    pub fn iter(&self) -> impl Iterator<Item = (&P, f64)> {
        self.atoms.iter().map(|a| (&a.point, a.weight))
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn weight_of(&self, point: &P) -> f64 {
        self.atoms
            .iter()
            .find(|a| &a.point == point)
            .map_or(0.0, |a| a.weight)
    }

    /// Points carrying strictly positive weight.
    pub fn support(&self) -> impl Iterator<Item = &P> {
        self.atoms.iter().filter(|a| a.weight > 0.0).map(|a| &a.point)
    }

    pub fn contains(&self, point: &P) -> bool {
        self.weight_of(point) > 0.0
    }

    pub fn is_probability(&self) -> bool {
        self.atoms.iter().all(|a| a.weight >= 0.0)
            && (self.total_mass() - 1.0).abs() <= NORMALIZATION_TOL
    }

    /// Errors unless the measure is nonnegative with total mass 1.
    pub fn ensure_probability(&self, what: &str) -> Result<()> {
        if self.is_probability() {
            Ok(())
        } else {
            Err(Error::NotNormalized {
                what: what.to_string(),
                mass: self.total_mass(),
            })
        }
    }

    /// Rescales to total mass 1. An empty or zero-mass measure is returned unchanged.
    pub fn normalized(mut self) -> Self {
        let mass = self.total_mass();
        if mass > 0.0 {
            for a in &mut self.atoms {
                a.weight /= mass;
            }
        }
        self
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for a in &mut self.atoms {
            a.weight *= factor;
        }
        self
    }

    /// Drops atoms with weight below `threshold`, then renormalizes.
    pub fn pruned(mut self, threshold: f64) -> Self {
        self.atoms.retain(|a| a.weight >= threshold);
        self.normalized()
    }

    /// Pushforward under `f`; atoms landing on the same image merge.
    pub fn map<Q: Clone + PartialEq, F: FnMut(&P) -> Q>(&self, mut f: F) -> FiniteMeasure<Q> {
        FiniteMeasure::from_atoms(self.atoms.iter().map(|a| (f(&a.point), a.weight)))
    }

    /// Kernel composition: each atom is replaced by `w * f(point)`.
    pub fn bind<Q: Clone + PartialEq, F: FnMut(&P) -> FiniteMeasure<Q>>(
        &self,
        mut f: F,
    ) -> FiniteMeasure<Q> {
        let mut out = FiniteMeasure::new();
        for a in &self.atoms {
            for b in f(&a.point).atoms {
                out.add(b.point, a.weight * b.weight);
            }
        }
        out
    }

    /// Weighted sum `Σ wᵢ mᵢ` of measures.
    pub fn mixture<'a, I>(parts: I) -> Self
    where
        I: IntoIterator<Item = (f64, &'a FiniteMeasure<P>)>,
        P: 'a,
    {
        let mut out = Self::new();
        for (w, m) in parts {
            for a in &m.atoms {
                out.add(a.point.clone(), w * a.weight);
            }
        }
        out
    }

    pub fn expectation<F: FnMut(&P) -> f64>(&self, mut f: F) -> f64 {
        self.atoms.iter().map(|a| a.weight * f(&a.point)).sum()
    }

    pub fn product<Q: Clone + PartialEq>(&self, other: &FiniteMeasure<Q>) -> FiniteMeasure<(P, Q)> {
        let mut out = FiniteMeasure::new();
        for a in &self.atoms {
            for b in &other.atoms {
                out.add((a.point.clone(), b.point.clone()), a.weight * b.weight);
            }
        }
        out
    }

    /// Index of the support point maximizing `f`; ties go to the earliest atom.
    pub fn argmax_by<F: FnMut(&P) -> f64>(&self, mut f: F) -> Option<&P> {
        let mut best: Option<(&P, f64)> = None;
        for p in self.support() {
            let v = f(p);
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((p, v));
            }
        }
        best.map(|(p, _)| p)
    }
}

impl FiniteMeasure<f64> {
    pub fn mean(&self) -> f64 {
        self.expectation(|&x| x)
    }

    /// Atoms sorted by point, for deterministic output.
    pub fn sorted_atoms(&self) -> Vec<Atom<f64>> {
        let mut v = self.atoms.clone();
        v.sort_by(|a, b| a.point.total_cmp(&b.point));
        v
    }
}

/// Distance used by recurrence checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    /// `½ Σ |p(a) − q(a)|` over the union of supports.
    TotalVariation,
    /// Earth mover's distance between measures on the real line (used on `[0,1]`).
    Wasserstein1,
}

impl Metric {
    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "total-variation" | "tv" => Ok(Metric::TotalVariation),
            "wasserstein-1" | "w1" => Ok(Metric::Wasserstein1),
            other => Err(Error::UnknownMetric(other.to_string())),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Metric::TotalVariation => "total-variation",
            Metric::Wasserstein1 => "wasserstein-1",
        }
    }

    pub fn distance(self, p: &FiniteMeasure<f64>, q: &FiniteMeasure<f64>) -> f64 {
        match self {
            Metric::TotalVariation => total_variation(p, q),
            Metric::Wasserstein1 => wasserstein1(p, q),
        }
    }
}

pub fn total_variation<P: Clone + PartialEq>(p: &FiniteMeasure<P>, q: &FiniteMeasure<P>) -> f64 {
    let mut sum = 0.0;
    for a in p.atoms() {
        sum += (a.weight - q.weight_of(&a.point)).abs();
    }
    for b in q.atoms() {
        if p.atoms().iter().all(|a| a.point != b.point) {
            sum += b.weight;
        }
    }
    0.5 * sum
}

/// `∫ |F_p(x) − F_q(x)| dx` for measures on the real line.
pub fn wasserstein1(p: &FiniteMeasure<f64>, q: &FiniteMeasure<f64>) -> f64 {
    let mut events: Vec<(f64, f64)> = p
        .iter()
        .map(|(&x, w)| (x, w))
        .chain(q.iter().map(|(&x, w)| (x, -w)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cdf_gap = 0.0;
    let mut dist = 0.0;
    for pair in events.windows(2) {
        cdf_gap += pair[0].1;
        dist += cdf_gap.abs() * (pair[1].0 - pair[0].0);
    }
    dist
}
