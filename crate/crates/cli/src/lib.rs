//! Command-line runner for the ludus labs.
//!
//! Every lab subcommand takes an optional `--config FILE` of `key=value`
//! lines followed by `key=value` overrides. Unknown keys are rejected
//! before anything runs. Each replicate writes CSV and JSONL files into
//! its own directory and the run ends with a `manifest.json` that
//! `manifest-replay` can verify.

pub mod check;
pub mod config;
pub mod labs;
pub mod manifest;
pub mod records;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::Params;
use crate::labs::Lab;
use crate::manifest::RunRequest;

/// Exit code for invalid configuration or input.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for a lab failure or a failed check.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Lab(String),
}

impl Failure {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Lab(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Lab(_) => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ludus", version, about = "Run learning-in-games labs and check their traces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct KeyValues {
    /// File with one `key=value` per line; `#` starts a comment.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` overrides.
    #[arg(value_name = "KEY=VALUE")]
    pub pairs: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Two players with neural cost and opponent models.
    TwoPlayer(KeyValues),
    /// One-step mean-field learning (examples 1 and 2).
    MeanField(KeyValues),
    /// CartPole with a value-network ensemble.
    Cartpole(KeyValues),
    /// Random tabular MDPs solved by policy iteration.
    Mdp(KeyValues),
    /// Bernoulli bandit under the induced arm law.
    Bandit(KeyValues),
    /// Evaluate equilibrium conditions on JSONL traces.
    CheckEquilibrium(KeyValues),
    /// Rerun a manifest and compare output checksums.
    ManifestReplay {
        manifest: PathBuf,
        /// Directory for the rerun; defaults to `<run dir>-replay`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

/// `<run dir>-replay` beside the run directory holding `manifest`.
pub fn default_replay_dir(manifest: &Path) -> PathBuf {
    let run_dir = manifest.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let run_dir = run_dir.canonicalize().unwrap_or_else(|_| run_dir.to_path_buf());
    match run_dir.file_name() {
        Some(name) => run_dir.with_file_name(format!("{}-replay", name.to_string_lossy())),
        None => run_dir.join("replay"),
    }
}

pub fn run(command: Command) -> Result<i32, Failure> {
    let lab_run = |lab: Lab, kv: KeyValues| -> Result<i32, Failure> {
        let params = Params::load(kv.config.as_deref(), &kv.pairs)?;
        let req = RunRequest::from_params(lab, params)?;
        let m = manifest::execute(&req)?;
        println!(
            "{}: {} replicate(s), root seed {}, manifest {}",
            lab,
            m.replicates.len(),
            m.root_seed,
            req.out.join(manifest::MANIFEST_FILE).display()
        );
        for r in &m.replicates {
            println!("  replicate {} seed {}", r.index, r.seed);
        }
        Ok(0)
    };
    match command {
        Command::TwoPlayer(kv) => lab_run(Lab::TwoPlayer, kv),
        Command::MeanField(kv) => lab_run(Lab::MeanField, kv),
        Command::Cartpole(kv) => lab_run(Lab::CartPole, kv),
        Command::Mdp(kv) => lab_run(Lab::Mdp, kv),
        Command::Bandit(kv) => lab_run(Lab::Bandit, kv),
        Command::CheckEquilibrium(kv) => {
            let params = Params::load(kv.config.as_deref(), &kv.pairs)?;
            let cfg = check::CheckConfig::from_params(&params)?;
            let reports = check::check_equilibrium(&cfg)?;
            for r in &reports {
                println!("{r}");
            }
            if let Some(path) = &cfg.report {
                let text = serde_json::to_string_pretty(&reports).map_err(|e| Failure::Lab(e.to_string()))?;
                std::fs::write(path, text + "\n").map_err(|e| Failure::io(path, e))?;
            }
            Ok(if reports.iter().all(|r| r.pass) { 0 } else { EXIT_FAILURE })
        }
        Command::ManifestReplay { manifest: path, out } => {
            let out = out.unwrap_or_else(|| default_replay_dir(&path));
            let report = manifest::replay(&path, &out)?;
            for m in &report.mismatches {
                println!("mismatch: {m}");
            }
            if report.matches() {
                println!("replay identical: {} file(s) in {}", report.files_checked, out.display());
                Ok(0)
            } else {
                println!("replay differs in {} place(s)", report.mismatches.len());
                Ok(EXIT_FAILURE)
            }
        }
    }
}
