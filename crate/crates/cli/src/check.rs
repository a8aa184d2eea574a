//! Uncertain-equilibrium conditions evaluated on recorded traces.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ludus_core::framework::{default_window, recurrence_check};
use ludus_core::{FiniteMeasure, Metric, TrajectoryStats};
use serde::Serialize;

use crate::config::Params;
use crate::records::{parse_atoms, read_jsonl};
use crate::Failure;

pub const KEYS: &[&str] = &[
    "traces", "epsilon", "r", "delta", "kappa", "metric", "reference", "window", "site", "report",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckConfig {
    pub traces: Vec<PathBuf>,
    pub epsilon: f64,
    pub r: f64,
    pub delta: f64,
    /// Lower bound for condition (ii′); unchecked when absent.
    pub kappa: Option<f64>,
    pub metric: Metric,
    /// Fixed reference law; each trajectory's age-0 law when absent.
    pub reference: Option<FiniteMeasure<f64>>,
    pub window: Option<usize>,
    pub site: Option<String>,
    pub report: Option<PathBuf>,
}

impl CheckConfig {
    pub fn from_params(p: &Params) -> Result<Self, Failure> {
        p.check_keys(KEYS)?;
        let traces: Vec<PathBuf> = p
            .raw("traces")
            .ok_or_else(|| Failure::Usage("missing key `traces`".into()))?
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(PathBuf::from)
            .collect();
        if traces.is_empty() {
            return Err(Failure::Usage("`traces` lists no files".into()));
        }
        let reference = p
            .raw("reference")
            .map(|s| {
                parse_atoms(s)
                    .filter(|m| m.is_probability())
                    .ok_or_else(|| Failure::Usage(format!("bad reference law `{s}`")))
            })
            .transpose()?;
        let metric = Metric::parse(p.raw("metric").unwrap_or("tv")).map_err(|e| Failure::Usage(e.to_string()))?;
        let cfg = Self {
            traces,
            epsilon: p.real("epsilon", 0.0)?,
            r: p.real("r", 0.0)?,
            delta: p.real("delta", 0.0)?,
            kappa: p.raw("kappa").map(|_| p.real("kappa", 0.0)).transpose()?,
            metric,
            reference,
            window: p.raw("window").map(|_| p.get("window", 0usize)).transpose()?,
            site: p.raw("site").map(str::to_string),
            report: p.raw("report").map(PathBuf::from),
        };
        if cfg.epsilon < 0.0 || cfg.r < 0.0 || !(0.0..=1.0).contains(&cfg.delta) {
            return Err(Failure::Usage("need epsilon >= 0, r >= 0 and delta in [0, 1]".into()));
        }
        if cfg.window == Some(0) {
            return Err(Failure::Usage("window must be positive".into()));
        }
        Ok(cfg)
    }
}

/// Measured quantities and verdicts at one site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteReport {
    pub site: String,
    pub replicates: usize,
    /// Largest recorded regret; `None` when no record carries one.
    pub epsilon: Option<f64>,
    /// Largest trailing-window distance to the reference over replicates.
    pub r: f64,
    /// Share of replicates whose trailing distance exceeds the allowed `r`.
    pub delta: f64,
    pub kappa_min: Option<f64>,
    pub regret_ok: Option<bool>,
    pub recurrence_ok: bool,
    pub kappa_ok: Option<bool>,
    pub pass: bool,
}

impl fmt::Display for SiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
        write!(
            f,
            "{} site {:?}: replicates={} epsilon={} r={:.6} delta={:.4} kappa_min={}",
            if self.pass { "PASS" } else { "FAIL" },
            self.site,
            self.replicates,
            opt(self.epsilon),
            self.r,
            self.delta,
            opt(self.kappa_min)
        )
    }
}

fn collect_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found = Vec::new();
            walk(p, &mut found).map_err(|e| Failure::Usage(format!("cannot list {}: {e}", p.display())))?;
            if found.is_empty() {
                return Err(Failure::Usage(format!("no .jsonl traces under {}", p.display())));
            }
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "jsonl") {
            out.push(path);
        }
    }
    Ok(())
}

/// Each trace file is one replicate; trajectories are grouped by site.
pub fn check_equilibrium(cfg: &CheckConfig) -> Result<Vec<SiteReport>, Failure> {
    let mut sites: BTreeMap<String, Vec<TrajectoryStats>> = BTreeMap::new();
    for file in collect_files(&cfg.traces)? {
        for stats in read_jsonl(&file)? {
            if cfg.site.as_ref().is_none_or(|s| *s == stats.site) {
                sites.entry(stats.site.clone()).or_default().push(stats);
            }
        }
    }
    if sites.is_empty() {
        return Err(Failure::Usage("no trajectories match the requested site".into()));
    }
    sites.into_iter().map(|(site, reps)| check_site(cfg, site, &reps)).collect()
}

pub fn check_site(cfg: &CheckConfig, site: String, reps: &[TrajectoryStats]) -> Result<SiteReport, Failure> {
    let mut epsilon: Option<f64> = None;
    let mut kappa_min: Option<f64> = None;
    let mut worst = 0.0f64;
    let mut misses = 0usize;
    for stats in reps {
        for rec in stats.records() {
            if let Some(g) = rec.regret {
                epsilon = Some(epsilon.map_or(g, |e| e.max(g)));
            }
            if let Some(k) = rec.kappa {
                kappa_min = Some(kappa_min.map_or(k, |m| m.min(k)));
            }
        }
        let reference = match &cfg.reference {
            Some(r) => r.clone(),
            None => stats.records()[0].ups.clone(),
        };
        let window = cfg.window.unwrap_or_else(|| default_window(stats.len()));
        let rep = recurrence_check(stats, &reference, cfg.metric, window, cfg.r)
            .map_err(|e| Failure::Usage(format!("site {site:?}: {e}")))?;
        worst = worst.max(rep.min_distance_tail);
        if rep.min_distance_tail > cfg.r {
            misses += 1;
        }
    }
    let delta = misses as f64 / reps.len() as f64;
    let regret_ok = epsilon.map(|e| e <= cfg.epsilon);
    let recurrence_ok = delta <= cfg.delta;
    let kappa_ok = cfg.kappa.map(|t| kappa_min.is_some_and(|k| k > t));
    let pass = recurrence_ok && regret_ok != Some(false) && kappa_ok != Some(false);
    Ok(SiteReport {
        site,
        replicates: reps.len(),
        epsilon,
        r: worst,
        delta,
        kappa_min,
        regret_ok,
        recurrence_ok,
        kappa_ok,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ludus_core::AgeRecord;

    fn drift(n: usize) -> TrajectoryStats {
        let mut s = TrajectoryStats::new("drift");
        for age in 0..n {
            s.push(AgeRecord {
                age,
                ups: FiniteMeasure::dirac(age as f64 / n as f64),
                regret: Some(0.0),
                kappa: Some(0.9),
            })
            .unwrap();
        }
        s
    }

    fn cfg() -> CheckConfig {
        CheckConfig {
            traces: vec![],
            epsilon: 0.0,
            r: 0.0,
            delta: 0.0,
            kappa: None,
            metric: Metric::TotalVariation,
            reference: None,
            window: None,
            site: None,
            report: None,
        }
    }

    #[test]
    fn monotone_drift_fails_with_distance() {
        let rep = check_site(&cfg(), "drift".into(), &[drift(200)]).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.r, 1.0);
        assert_eq!(rep.delta, 1.0);
        let w1 = CheckConfig {
            metric: Metric::Wasserstein1,
            ..cfg()
        };
        let rep = check_site(&w1, "drift".into(), &[drift(200)]).unwrap();
        assert!((rep.r - 0.75).abs() < 1e-12, "{}", rep.r);
    }

    #[test]
    fn kappa_condition_is_strict() {
        let at = CheckConfig { kappa: Some(0.9), ..cfg() };
        let mut s = TrajectoryStats::new("flat");
        for age in 0..60 {
            s.push(AgeRecord {
                age,
                ups: FiniteMeasure::dirac(1.0),
                regret: None,
                kappa: Some(0.9),
            })
            .unwrap();
        }
        let rep = check_site(&at, "flat".into(), std::slice::from_ref(&s)).unwrap();
        assert_eq!(rep.kappa_ok, Some(false));
        assert_eq!(rep.regret_ok, None);
        let below = CheckConfig { kappa: Some(0.8), ..cfg() };
        assert!(check_site(&below, "flat".into(), &[s]).unwrap().pass);
    }

    #[test]
    fn missing_traces_key() {
        assert!(matches!(CheckConfig::from_params(&Params::default()), Err(Failure::Usage(_))));
    }
}
