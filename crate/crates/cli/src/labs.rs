//! Per-lab parameter schemas and replicate runners.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ludus_core::mean_field::{self, Objective, OneStepGame};
use ludus_core::rl::{
    arm_trajectory, bellman_check, policy_iteration, q_residual, run_bandit, run_cartpole, BanditSpec,
    CartPoleConfig, Perspective, TabularMdp, AVERAGE_WINDOW,
};
use ludus_core::seed::rng_from_seed;
use ludus_core::two_player::{run_experiment, GameConfig};
use ludus_core::{AgeRecord, TrajectoryStats};

use crate::config::Params;
use crate::records::{csv_row, csv_writer, format_atoms, write_jsonl};
use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lab {
    TwoPlayer,
    MeanField,
    CartPole,
    Mdp,
    Bandit,
}

impl Lab {
    pub const ALL: [Lab; 5] = [Lab::TwoPlayer, Lab::MeanField, Lab::CartPole, Lab::Mdp, Lab::Bandit];

    pub fn name(self) -> &'static str {
        match self {
            Lab::TwoPlayer => "two-player",
            Lab::MeanField => "mean-field",
            Lab::CartPole => "cartpole",
            Lab::Mdp => "mdp",
            Lab::Bandit => "bandit",
        }
    }

    /// Lab-specific keys; the common keys are accepted as well.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Lab::TwoPlayer => &[
                "c",
                "b1",
                "b2",
                "k",
                "memory-len",
                "recency-decay",
                "n-games",
                "grid",
                "hidden",
                "sgd-steps",
                "learning-rate",
                "batch-size",
                "cost-dropout",
                "kappa-draws",
                "zero-init",
            ],
            Lab::MeanField => &["example", "c", "a0", "iters", "objective", "grid"],
            Lab::CartPole => &[
                "k-phi",
                "episodes",
                "t-horizon",
                "hidden",
                "dropout",
                "learning-rate",
                "value-scale",
                "init-bias",
                "memory",
                "updates",
                "half-batch",
                "consistency-weight",
                "train",
                "greedy",
                "uniform-start",
                "stop-at",
            ],
            Lab::Mdp => &["states", "actions", "discount", "count"],
            Lab::Bandit => &["arms", "delta-f", "perspective", "rounds"],
        }
    }
}

impl fmt::Display for Lab {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Lab {
    type Err = Failure;

    fn from_str(s: &str) -> Result<Self, Failure> {
        Lab::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Failure::Usage(format!("unknown lab `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldSpec {
    pub game: OneStepGame,
    pub objective: Objective,
    pub c: f64,
    pub a0: f64,
    pub iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdpSpec {
    pub states: usize,
    pub actions: usize,
    pub discount: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditRun {
    pub spec: BanditSpec,
    pub delta: f64,
    pub perspective: Perspective,
    pub rounds: usize,
}

/// Validated lab configuration; the seed is filled in per replicate.
#[derive(Debug, Clone, PartialEq)]
pub enum LabSpec {
    TwoPlayer(GameConfig),
    MeanField(MeanFieldSpec),
    CartPole(CartPoleConfig),
    Mdp(MdpSpec),
    Bandit(BanditRun),
}

fn usage<E: fmt::Display>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

/// Parses the lab-specific keys of `p` (unknown keys must already have
/// been rejected) and validates the result.
pub fn plan(lab: Lab, p: &Params) -> Result<LabSpec, Failure> {
    Ok(match lab {
        Lab::TwoPlayer => {
            let d = GameConfig::default();
            let cfg = GameConfig {
                c: p.real("c", d.c)?,
                b1: p.real("b1", d.b1)?,
                b2: p.real("b2", d.b2)?,
                k: p.get("k", d.k)?,
                memory_len: p.get("memory-len", d.memory_len)?,
                recency_decay: p.real("recency-decay", d.recency_decay)?,
                n_games: p.get("n-games", d.n_games)?,
                grid: p.get("grid", d.grid)?,
                seed: 0,
                hidden: p.get("hidden", d.hidden)?,
                sgd_steps: p.get("sgd-steps", d.sgd_steps)?,
                learning_rate: p.real("learning-rate", d.learning_rate)?,
                batch_size: p.get("batch-size", d.batch_size)?,
                cost_dropout: p.real("cost-dropout", d.cost_dropout)?,
                kappa_draws: p.get("kappa-draws", d.kappa_draws)?,
                zero_init: p.flag("zero-init", d.zero_init)?,
            };
            cfg.validate().map_err(usage)?;
            LabSpec::TwoPlayer(cfg)
        }
        Lab::MeanField => {
            let mut game = match p.get::<u8>("example", 1)? {
                1 => OneStepGame::example1(),
                2 => OneStepGame::example2(),
                n => return Err(Failure::Usage(format!("example must be 1 or 2, got {n}"))),
            };
            game.action_grid = p.get("grid", game.action_grid)?;
            if game.action_grid < 2 {
                return Err(Failure::Usage("grid needs at least two points".into()));
            }
            let objective = match p.raw("objective").unwrap_or("averaged") {
                "averaged" => Objective::Averaged,
                "fictitious" => Objective::Fictitious,
                o => return Err(Failure::Usage(format!("objective must be averaged or fictitious, got `{o}`"))),
            };
            let spec = MeanFieldSpec {
                game,
                objective,
                c: p.real("c", 0.3)?,
                a0: p.real("a0", 0.9)?,
                iters: p.get("iters", 500)?,
            };
            for (name, v) in [("c", spec.c), ("a0", spec.a0)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Failure::Usage(format!("{name} = {v} outside [0, 1]")));
                }
            }
            LabSpec::MeanField(spec)
        }
        Lab::CartPole => {
            let d = CartPoleConfig::default();
            let stop = p.raw("stop-at").map(|_| p.real("stop-at", 0.0)).transpose()?;
            let cfg = CartPoleConfig {
                k_phi: p.get("k-phi", d.k_phi)?,
                episodes: p.get("episodes", d.episodes)?,
                horizon: p.get("t-horizon", d.horizon)?,
                seed: 0,
                hidden: p.get("hidden", d.hidden)?,
                dropout: p.real("dropout", d.dropout)?,
                learning_rate: p.real("learning-rate", d.learning_rate)?,
                value_scale: p.real("value-scale", d.value_scale)?,
                init_bias: p.real("init-bias", d.init_bias)?,
                memory: p.get("memory", d.memory)?,
                updates: p.get("updates", d.updates)?,
                half_batch: p.get("half-batch", d.half_batch)?,
                consistency_weight: p.real("consistency-weight", d.consistency_weight)?,
                train: p.flag("train", d.train)?,
                greedy: p.flag("greedy", d.greedy)?,
                uniform_start: p.flag("uniform-start", d.uniform_start)?,
                stop_at_average: stop,
            };
            if cfg.k_phi == 0 || cfg.hidden == 0 {
                return Err(Failure::Usage("k-phi and hidden must be positive".into()));
            }
            if cfg.horizon == 0 || cfg.horizon > ludus_core::rl::cartpole::MAX_HORIZON {
                return Err(Failure::Usage(format!(
                    "t-horizon must lie in 1..={}",
                    ludus_core::rl::cartpole::MAX_HORIZON
                )));
            }
            if !(cfg.value_scale > 0.0) || !(cfg.learning_rate > 0.0) || !(0.0..1.0).contains(&cfg.dropout) {
                return Err(Failure::Usage(
                    "value-scale and learning-rate must be positive, dropout in [0, 1)".into(),
                ));
            }
            LabSpec::CartPole(cfg)
        }
        Lab::Mdp => {
            let spec = MdpSpec {
                states: p.get("states", 5)?,
                actions: p.get("actions", 3)?,
                discount: p.real("discount", 0.9)?,
                count: p.get("count", 1)?,
            };
            if spec.states == 0 || spec.actions == 0 || spec.count == 0 {
                return Err(Failure::Usage("states, actions and count must be positive".into()));
            }
            if !(0.0..1.0).contains(&spec.discount) {
                return Err(Failure::Usage(format!("discount {} outside [0, 1)", spec.discount)));
            }
            LabSpec::Mdp(spec)
        }
        Lab::Bandit => {
            let ps = p.reals("arms")?.unwrap_or_else(|| vec![0.5, 0.6]);
            let spec = BanditSpec::bernoulli(&ps).map_err(usage)?;
            let delta = p.real("delta-f", 0.2)?;
            if !(delta > 0.0) {
                return Err(Failure::Usage(format!("delta-f = {delta} must be positive")));
            }
            let perspective = Perspective::parse(p.raw("perspective").unwrap_or("state")).map_err(usage)?;
            LabSpec::Bandit(BanditRun {
                spec,
                delta,
                perspective,
                rounds: p.get("rounds", 1000)?,
            })
        }
    })
}

fn lab<E: fmt::Display>(e: E) -> Failure {
    Failure::Lab(e.to_string())
}

fn num(v: f64) -> String {
    v.to_string()
}

/// Runs one replicate into `dir` and returns the written file names.
pub fn run_replicate(spec: &LabSpec, seed: u64, dir: &Path) -> Result<Vec<String>, Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    match spec {
        LabSpec::TwoPlayer(cfg) => {
            let cfg = GameConfig { seed, ..cfg.clone() };
            let trace = run_experiment(&cfg).map_err(lab)?;
            let mut w = csv_writer(
                &dir.join("rounds.csv"),
                &["game", "a1", "a2", "x1", "x2", "cost1", "cost2", "kappa1", "kappa2", "explore1", "explore2"],
            )?;
            for r in &trace.rounds {
                csv_row(
                    &mut w,
                    &[
                        r.game.to_string(),
                        num(r.actions[0]),
                        num(r.actions[1]),
                        r.states[0].to_string(),
                        r.states[1].to_string(),
                        num(r.costs[0]),
                        num(r.costs[1]),
                        num(r.kappa[0]),
                        num(r.kappa[1]),
                        num(r.explore[0]),
                        num(r.explore[1]),
                    ],
                )?;
            }
            w.flush().map_err(|e| Failure::io(dir, e))?;
            write_jsonl(&dir.join("stats.jsonl"), &[&trace.stats[0], &trace.stats[1]])?;
            Ok(vec!["rounds.csv".into(), "stats.jsonl".into()])
        }
        LabSpec::MeanField(s) => {
            let trace = mean_field::run_mean_field_with(&s.game, s.objective, s.a0, s.c, s.iters, seed).map_err(lab)?;
            let mut w = csv_writer(&dir.join("iterations.csv"), &["iter", "m", "best", "regret", "gamma_atoms"])?;
            for it in &trace.iters {
                csv_row(
                    &mut w,
                    &[
                        it.iter.to_string(),
                        num(it.m),
                        num(it.best),
                        num(it.regret),
                        format_atoms(&it.gamma.action_atoms()),
                    ],
                )?;
            }
            w.flush().map_err(|e| Failure::io(dir, e))?;
            write_jsonl(&dir.join("stats.jsonl"), &[&trace.stats])?;
            Ok(vec!["iterations.csv".into(), "stats.jsonl".into()])
        }
        LabSpec::CartPole(cfg) => {
            let cfg = CartPoleConfig { seed, ..cfg.clone() };
            let run = run_cartpole(&cfg).map_err(lab)?;
            let avg = run.moving_average(AVERAGE_WINDOW);
            let mut w = csv_writer(&dir.join("episodes.csv"), &["episode", "score", "moving_average"])?;
            for (i, (s, a)) in run.scores.iter().zip(&avg).enumerate() {
                csv_row(&mut w, &[i.to_string(), num(*s), num(*a)])?;
            }
            w.flush().map_err(|e| Failure::io(dir, e))?;
            write_jsonl(&dir.join("stats.jsonl"), &[&run.stats])?;
            Ok(vec!["episodes.csv".into(), "stats.jsonl".into()])
        }
        LabSpec::Mdp(s) => {
            let mut rng = rng_from_seed(seed);
            let mut table = csv_writer(&dir.join("q.csv"), &["mdp", "state", "action", "reward", "q", "greedy_weight"])?;
            let mut summary = csv_writer(&dir.join("summary.csv"), &["mdp", "q_residual", "bellman_residual"])?;
            let mut sites = Vec::new();
            for m in 0..s.count {
                let mdp = TabularMdp::random(s.states, s.actions, s.discount, &mut rng).map_err(lab)?;
                let (policy, q) = policy_iteration(&mdp).map_err(lab)?;
                let v: Vec<f64> = q.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
                let bellman = bellman_check(&mdp, &v).map_err(lab)?;
                csv_row(
                    &mut summary,
                    &[m.to_string(), num(q_residual(&mdp, &policy, &q)), num(bellman)],
                )?;
                for (x, row) in q.iter().enumerate() {
                    for (a, qa) in row.iter().enumerate() {
                        csv_row(
                            &mut table,
                            &[
                                m.to_string(),
                                x.to_string(),
                                a.to_string(),
                                num(mdp.reward(x, a)),
                                num(*qa),
                                num(policy[x].weight_of(&a)),
                            ],
                        )?;
                    }
                    let mut st = TrajectoryStats::new(format!("mdp {m}, x={x}"));
                    st.push(AgeRecord {
                        age: 0,
                        ups: policy[x].map(|&a| a as f64),
                        regret: Some(0.0),
                        kappa: None,
                    })
                    .map_err(lab)?;
                    sites.push(st);
                }
            }
            table.flush().map_err(|e| Failure::io(dir, e))?;
            summary.flush().map_err(|e| Failure::io(dir, e))?;
            write_jsonl(&dir.join("stats.jsonl"), &sites.iter().collect::<Vec<_>>())?;
            Ok(vec!["q.csv".into(), "summary.csv".into(), "stats.jsonl".into()])
        }
        LabSpec::Bandit(b) => {
            let trace = run_bandit(&b.spec, b.delta, b.perspective, b.rounds, seed).map_err(lab)?;
            let mut w = csv_writer(&dir.join("pulls.csv"), &["round", "arm", "reward"])?;
            for (i, (arm, r)) in trace.pulls.iter().zip(&trace.rewards).enumerate() {
                csv_row(&mut w, &[i.to_string(), arm.to_string(), num(*r)])?;
            }
            w.flush().map_err(|e| Failure::io(dir, e))?;
            let mut arms = Vec::with_capacity(b.spec.k());
            for (i, law) in b.spec.arms().iter().enumerate() {
                let mut st = arm_trajectory(law, b.rounds).map_err(lab)?;
                st.site = format!("arm {i}");
                arms.push(st);
            }
            let mut all = vec![&trace.stats];
            all.extend(arms.iter());
            write_jsonl(&dir.join("stats.jsonl"), &all)?;
            Ok(vec!["pulls.csv".into(), "stats.jsonl".into()])
        }
    }
}
