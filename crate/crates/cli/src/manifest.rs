//! Run manifests: config echo, derived seeds and output checksums.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ludus_core::seed::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Params;
use crate::labs::{self, Lab};
use crate::Failure;

pub const ARTIFACT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateEntry {
    pub index: usize,
    pub seed: u64,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: u32,
    pub subcommand: String,
    /// Lab-specific keys as given.
    pub config: BTreeMap<String, String>,
    pub root_seed: u64,
    pub replicates: Vec<ReplicateEntry>,
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// A lab invocation with its common keys split off.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRequest {
    pub lab: Lab,
    pub config: Params,
    pub root_seed: u64,
    pub replicates: usize,
    pub out: PathBuf,
}

impl RunRequest {
    /// Rejects unknown keys before anything else.
    pub fn from_params(lab: Lab, mut params: Params) -> Result<Self, Failure> {
        let mut allowed = lab.keys().to_vec();
        allowed.extend_from_slice(crate::config::COMMON_KEYS);
        params.check_keys(&allowed)?;
        let root_seed = params.get("seed", 0u64)?;
        let replicates = params.get("replicates", 1usize)?;
        if replicates == 0 {
            return Err(Failure::Usage("replicates must be positive".into()));
        }
        let out = params
            .remove("out")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("ludus-out").join(lab.name()));
        params.remove("seed");
        params.remove("replicates");
        Ok(Self {
            lab,
            config: params,
            root_seed,
            replicates,
            out,
        })
    }
}

/// Validates, runs every replicate and writes `manifest.json`.
pub fn execute(req: &RunRequest) -> Result<RunManifest, Failure> {
    let spec = labs::plan(req.lab, &req.config)?;
    fs::create_dir_all(&req.out).map_err(|e| Failure::io(&req.out, e))?;
    let replicates = (0..req.replicates)
        .into_par_iter()
        .map(|index| {
            let seed = derive_seed(req.root_seed, index as u64);
            let rel = format!("rep-{index:03}");
            let dir = req.out.join(&rel);
            let names = labs::run_replicate(&spec, seed, &dir)?;
            let files = names
                .into_iter()
                .map(|name| {
                    let path = dir.join(&name);
                    let sha256 = sha256_file(&path).map_err(|e| Failure::io(&path, e))?;
                    Ok(FileEntry {
                        path: format!("{rel}/{name}"),
                        sha256,
                    })
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            Ok(ReplicateEntry { index, seed, files })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION,
        subcommand: req.lab.name().to_string(),
        config: req.config.map().clone(),
        root_seed: req.root_seed,
        replicates,
    };
    let path = req.out.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Lab(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| Failure::io(&path, e))?;
    Ok(manifest)
}

pub fn load(path: &Path) -> Result<RunManifest, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let m: RunManifest =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("malformed manifest {}: {e}", path.display())))?;
    if m.artifact_version != ARTIFACT_VERSION {
        return Err(Failure::Usage(format!(
            "manifest artifact version {} is not {ARTIFACT_VERSION}",
            m.artifact_version
        )));
    }
    Ok(m)
}

/// Outcome of [`replay`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub files_checked: usize,
    /// Human-readable differences; empty on an exact match.
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Reruns the manifest at `path` into `out` and compares seeds and checksums.
pub fn replay(path: &Path, out: &Path) -> Result<ReplayReport, Failure> {
    let original = load(path)?;
    let lab: Lab = original.subcommand.parse()?;
    let mut params = Params::from_map(original.config.clone());
    params.set("seed", original.root_seed.to_string());
    params.set("replicates", original.replicates.len().max(1).to_string());
    params.set("out", out.to_string_lossy());
    let req = RunRequest::from_params(lab, params)?;
    let rerun = execute(&req)?;
    Ok(compare(&original, &rerun))
}

pub fn compare(expected: &RunManifest, actual: &RunManifest) -> ReplayReport {
    let mut mismatches = Vec::new();
    if expected.replicates.len() != actual.replicates.len() {
        mismatches.push(format!(
            "replicate count {} vs {}",
            expected.replicates.len(),
            actual.replicates.len()
        ));
    }
    let mut files_checked = 0;
    for (e, a) in expected.replicates.iter().zip(&actual.replicates) {
        if e.seed != a.seed {
            mismatches.push(format!("replicate {}: seed {} vs {}", e.index, e.seed, a.seed));
        }
        let got: BTreeMap<&str, &str> = a.files.iter().map(|f| (f.path.as_str(), f.sha256.as_str())).collect();
        for f in &e.files {
            files_checked += 1;
            match got.get(f.path.as_str()) {
                None => mismatches.push(format!("{}: missing", f.path)),
                Some(&h) if h != f.sha256 => mismatches.push(format!("{}: sha256 {} vs {}", f.path, f.sha256, h)),
                Some(_) => {}
            }
        }
        if a.files.len() != e.files.len() {
            mismatches.push(format!("replicate {}: {} files vs {}", e.index, e.files.len(), a.files.len()));
        }
    }
    ReplayReport {
        files_checked,
        mismatches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(pairs: &[&str], out: &Path) -> RunRequest {
        let mut p = Params::load(None, &pairs.iter().map(|s| s.to_string()).collect::<Vec<_>>()).unwrap();
        p.set("out", out.to_string_lossy());
        RunRequest::from_params(Lab::MeanField, p).unwrap()
    }

    #[test]
    fn common_keys_are_split_off() {
        let dir = tempfile::tempdir().unwrap();
        let req = request(&["seed=7", "replicates=3", "iters=20"], dir.path());
        assert_eq!(req.root_seed, 7);
        assert_eq!(req.replicates, 3);
        assert_eq!(req.config.map().len(), 1);
    }

    #[test]
    fn seeds_are_derived_and_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let m = execute(&request(&["seed=11", "replicates=16", "iters=5"], dir.path())).unwrap();
        let seeds: std::collections::BTreeSet<u64> = m.replicates.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), 16);
        for r in &m.replicates {
            assert_eq!(r.seed, derive_seed(11, r.index as u64));
        }
        assert_eq!(load(&dir.path().join(MANIFEST_FILE)).unwrap(), m);
    }

    #[test]
    fn replay_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("first");
        execute(&request(&["replicates=2", "iters=30"], &first)).unwrap();
        let report = replay(&first.join(MANIFEST_FILE), &dir.path().join("again")).unwrap();
        assert!(report.matches(), "{:?}", report.mismatches);
        assert_eq!(report.files_checked, 4);

        let mut m = load(&first.join(MANIFEST_FILE)).unwrap();
        m.replicates[1].files[0].sha256 = "00".repeat(32);
        fs::write(first.join(MANIFEST_FILE), serde_json::to_string(&m).unwrap()).unwrap();
        let report = replay(&first.join(MANIFEST_FILE), &dir.path().join("third")).unwrap();
        assert_eq!(report.mismatches.len(), 1);
    }
}
