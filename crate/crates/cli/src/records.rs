//! JSONL distribution records and CSV helpers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ludus_core::{AgeRecord, FiniteMeasure, TrajectoryStats};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub point: f64,
    pub weight: f64,
}

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionRecord {
    pub site: String,
    pub age: usize,
    pub atoms: Vec<AtomRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regret: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

impl DistributionRecord {
    pub fn from_age(site: &str, rec: &AgeRecord) -> Self {
        Self {
            site: site.to_string(),
            age: rec.age,
            atoms: rec
                .ups
                .iter()
                .map(|(&point, weight)| AtomRecord { point, weight })
                .collect(),
            regret: rec.regret,
            kappa: rec.kappa,
        }
    }

    pub fn to_age(&self) -> AgeRecord {
        AgeRecord {
            age: self.age,
            ups: FiniteMeasure::from_atoms(self.atoms.iter().map(|a| (a.point, a.weight))),
            regret: self.regret,
            kappa: self.kappa,
        }
    }
}

pub fn write_jsonl(path: &Path, stats: &[&TrajectoryStats]) -> Result<(), Failure> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| Failure::io(path, e))?);
    for s in stats {
        for rec in s.records() {
            let line = serde_json::to_string(&DistributionRecord::from_age(&s.site, rec))
                .map_err(|e| Failure::Lab(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| Failure::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Failure::io(path, e))
}

/// Reads one trace file into per-site trajectories, in order of first
/// appearance.
pub fn read_jsonl(path: &Path) -> Result<Vec<TrajectoryStats>, Failure> {
    let file = File::open(path).map_err(|e| Failure::Usage(format!("cannot open {}: {e}", path.display())))?;
    let mut order: Vec<String> = Vec::new();
    let mut by_site: BTreeMap<String, TrajectoryStats> = BTreeMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let malformed = |msg: String| Failure::Usage(format!("malformed trace {}:{}: {msg}", path.display(), n + 1));
        let line = line.map_err(|e| malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DistributionRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let age = rec.to_age();
        age.ups
            .ensure_probability("induced distribution")
            .map_err(|e| malformed(e.to_string()))?;
        if let Some(k) = rec.kappa.filter(|k| !(0.0..=1.0).contains(k)) {
            return Err(malformed(format!("kappa {k} outside [0, 1]")));
        }
        let stats = by_site.entry(rec.site.clone()).or_insert_with(|| {
            order.push(rec.site.clone());
            TrajectoryStats::new(rec.site.clone())
        });
        stats.push(age).map_err(|e| malformed(e.to_string()))?;
    }
    if order.is_empty() {
        return Err(Failure::Usage(format!("malformed trace {}: no records", path.display())));
    }
    Ok(order.into_iter().map(|s| by_site.remove(&s).expect("site recorded")).collect())
}

/// `point:weight` pairs joined by `;`.
pub fn format_atoms(m: &FiniteMeasure<f64>) -> String {
    m.sorted_atoms()
        .iter()
        .map(|a| format!("{}:{}", a.point, a.weight))
        .collect::<Vec<_>>()
        .join(";")
}

/// Inverse of [`format_atoms`].
pub fn parse_atoms(s: &str) -> Option<FiniteMeasure<f64>> {
    let mut m = FiniteMeasure::new();
    for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (p, w) = part.split_once(':')?;
        m.add(crate::config::parse_real(p)?, crate::config::parse_real(w)?);
    }
    (!m.is_empty()).then_some(m)
}

pub fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<File>, Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::Lab(format!("{}: {e}", path.display())))?;
    w.write_record(header).map_err(|e| Failure::Lab(e.to_string()))?;
    Ok(w)
}

pub fn csv_row(w: &mut csv::Writer<File>, fields: &[String]) -> Result<(), Failure> {
    w.write_record(fields).map_err(|e| Failure::Lab(e.to_string()))
}
