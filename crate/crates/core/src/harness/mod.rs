//! Seeded games: one environment, N agents, lockstep turns.
//!
//! Regret is scored with the true matrix on the realized profile, so the
//! reward noise is integrated out analytically and only the players' own
//! randomness is sampled.

mod output;
mod plot;

pub use output::{write_epochs_csv, write_manifest, write_summary_csv, write_trace_csv, Manifest};
pub use plot::emit_plot_svg;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{epoch_count_bound, Agent, AgentConfig, EpochClock, EpochRecord, Phase};
use crate::env::{Environment, NoiseModel, RewardMatrix, TurnOutcome};
use crate::error::{Error, Result};
use crate::oracle;
use crate::seed;

/// Flat experiment settings. Every key has a default, so a config file only
/// needs to name the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `u1`, `u2`, or a path to a whitespace-separated matrix file.
    pub matrix: String,
    pub noise: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub ci_scale: f64,
    pub epsilon_scale: f64,
    pub warm_start: bool,
    pub use_collision_bit: bool,
    pub reset_min_period: u64,
    /// Total number of turns `T`.
    pub horizon: u64,
    pub runs: usize,
    pub seed: u64,
    /// Turns between regret checkpoints (epoch ends are always checkpointed).
    pub stride: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let agent = AgentConfig::experiment_defaults(1);
        Self {
            matrix: "u1".into(),
            noise: 0.05,
            c1: agent.c1,
            c2: agent.c2,
            c3: agent.c3,
            ci_scale: agent.ci_scale,
            epsilon_scale: agent.epsilon_scale,
            warm_start: agent.warm_start,
            use_collision_bit: agent.use_collision_bit,
            reset_min_period: agent.reset_min_period,
            horizon: 200_000,
            runs: 100,
            seed: 0,
            stride: 1000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn agent_config(&self, n_arms: usize) -> AgentConfig {
        AgentConfig {
            n_arms,
            c1: self.c1,
            c2: self.c2,
            c3: self.c3,
            ci_scale: self.ci_scale,
            epsilon_scale: self.epsilon_scale,
            warm_start: self.warm_start,
            use_collision_bit: self.use_collision_bit,
            reset_min_period: self.reset_min_period,
        }
    }

    /// Loads the matrix and validates everything.
    pub fn resolve(&self) -> Result<Experiment> {
        let matrix = RewardMatrix::load(&self.matrix)?;
        Experiment::new(self.clone(), matrix)
    }
}

/// A validated configuration with its matrix and ground truth attached.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub matrix: RewardMatrix,
    pub noise: NoiseModel,
    pub agent: AgentConfig,
    pub gamma_star: f64,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, matrix: RewardMatrix) -> Result<Self> {
        if config.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if config.runs == 0 {
            return Err(Error::InvalidConfig("runs must be at least 1".into()));
        }
        if config.stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        let noise = NoiseModel::uniform(config.noise)?;
        let agent = config.agent_config(matrix.n_arms());
        agent.validate()?;
        let gamma_star = oracle::gamma_star(&matrix).value;
        Ok(Self {
            config,
            matrix,
            noise,
            agent,
            gamma_star,
        })
    }
}

/// Anything that can sit in a player's seat.
pub trait Player {
    fn act(&mut self) -> Result<usize>;
    fn observe(&mut self, outcome: TurnOutcome) -> Result<()>;

    /// Phase the player believes it is in, if it follows the epoch schedule.
    fn phase(&self) -> Option<Phase> {
        None
    }

    /// Latest consensus record, `k*` and exploitation arm, if any.
    fn epoch_report(&self) -> Option<(EpochRecord, u64, usize)> {
        None
    }
}

impl Player for Agent {
    fn act(&mut self) -> Result<usize> {
        Agent::act(self)
    }

    fn observe(&mut self, outcome: TurnOutcome) -> Result<()> {
        Agent::observe(self, outcome)
    }

    fn phase(&self) -> Option<Phase> {
        Some(Agent::phase(self))
    }

    fn epoch_report(&self) -> Option<(EpochRecord, u64, usize)> {
        Some((
            *self.history().last()?,
            self.exploit_epoch()?,
            self.exploit_arm()?,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub turn: u64,
    pub cumulative_regret: f64,
    /// Epoch and phase of the checkpointed turn.
    pub epoch: u64,
    pub phase: Phase,
}

/// Per-epoch diagnostics, taken when the exploitation phase begins.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: u64,
    pub gamma: f64,
    pub success: bool,
    pub exploit_epoch: u64,
    pub exploit_profile: Vec<usize>,
    /// The exploitation profile is a `gamma*`-matching.
    pub exploit_optimal: bool,
    pub exploit_len: u64,
    /// Cumulative regret after the epoch's last turn (or at the horizon).
    pub regret_at_end: f64,
    /// The epoch ran to its last turn before the horizon.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub horizon: u64,
    pub checkpoints: Vec<Checkpoint>,
    pub epochs: Vec<EpochSummary>,
    /// Epochs that started within the horizon, including a truncated last one.
    pub epochs_started: u64,
    pub final_regret: f64,
}

impl RunTrace {
    /// First epoch from which every recorded exploitation phase plays a
    /// `gamma*`-matching.
    pub fn convergence_epoch(&self) -> Option<u64> {
        let last_bad = self.epochs.iter().rev().find(|e| !e.exploit_optimal);
        match (self.epochs.last(), last_bad) {
            (None, _) => None,
            (Some(last), Some(bad)) if bad.epoch == last.epoch => None,
            (Some(_), Some(bad)) => Some(bad.epoch + 1),
            (Some(_), None) => Some(self.epochs[0].epoch),
        }
    }

    pub fn epoch(&self, k: u64) -> Option<&EpochSummary> {
        self.epochs.iter().find(|e| e.epoch == k)
    }
}

/// One seeded game with fresh agents.
pub fn run_single(exp: &Experiment, run_seed: u64) -> Result<RunTrace> {
    let mut players = (0..exp.matrix.n_players())
        .map(|n| Agent::new(exp.agent.clone(), seed::agent_rng(run_seed, n)))
        .collect::<Result<Vec<_>>>()?;
    simulate(exp, &mut players, run_seed)
}

/// Runs `players` against the experiment's environment for `horizon` turns.
/// The epoch schedule used for checkpoints and diagnostics is the
/// experiment's agent schedule.
pub fn simulate<P: Player>(exp: &Experiment, players: &mut [P], run_seed: u64) -> Result<RunTrace> {
    let n = exp.matrix.n_players();
    if players.len() != n {
        return Err(Error::InvalidConfig(format!(
            "{} players for a {}-player matrix",
            players.len(),
            n
        )));
    }
    let mut env = Environment::with_rng(exp.matrix.clone(), exp.noise, seed::env_rng(run_seed));
    let mut clock = EpochClock::new(&exp.agent);
    let mut arms = vec![0usize; n];
    let mut outcomes = Vec::with_capacity(n);
    let mut regret = 0.0f64;
    let mut checkpoints = Vec::new();
    let mut epochs: Vec<EpochSummary> = Vec::new();
    let horizon = exp.config.horizon;
    let stride = exp.config.stride;

    for turn in 1..=horizon {
        for (arm, p) in arms.iter_mut().zip(players.iter_mut()) {
            *arm = p.act()?;
        }
        let min_expected = env.step_into(&arms, &mut outcomes)?;
        for (p, &o) in players.iter_mut().zip(&outcomes) {
            p.observe(o)?;
        }
        regret += exp.gamma_star - min_expected;

        let (epoch, phase) = (clock.epoch(), clock.phase());
        let boundary = clock.advance();
        let epoch_end = boundary == Some(Phase::Explore);
        if turn % stride == 0 || epoch_end || turn == horizon {
            checkpoints.push(Checkpoint {
                turn,
                cumulative_regret: regret,
                epoch,
                phase,
            });
        }
        if let Some(next) = boundary {
            check_lockstep(players, next);
            if next == Phase::Exploit {
                if let Some(summary) = summarize_epoch(exp, players, epoch, clock.lengths().exploit)
                {
                    epochs.push(summary);
                }
            }
        }
        if epoch_end || turn == horizon {
            if let Some(last) = epochs.last_mut().filter(|e| e.epoch == epoch) {
                last.regret_at_end = regret;
                last.complete = epoch_end;
            }
        }
    }

    let epochs_started =
        clock.epoch() - u64::from(clock.phase() == Phase::Explore && clock.elapsed() == 0);
    assert!(
        epochs_started as f64 <= epoch_count_bound(horizon, exp.agent.c3) + 1e-9,
        "{epochs_started} epochs started within {horizon} turns"
    );
    Ok(RunTrace {
        seed: run_seed,
        horizon,
        checkpoints,
        epochs,
        epochs_started,
        final_regret: regret,
    })
}

fn check_lockstep<P: Player>(players: &[P], expected: Phase) {
    for p in players {
        if let Some(phase) = p.phase() {
            assert_eq!(phase, expected, "player left the shared phase schedule");
        }
    }
}

fn summarize_epoch<P: Player>(
    exp: &Experiment,
    players: &[P],
    epoch: u64,
    exploit_len: u64,
) -> Option<EpochSummary> {
    let (record, exploit_epoch, _) = players.first()?.epoch_report()?;
    let profile = players
        .iter()
        .map(|p| p.epoch_report().map(|(_, _, arm)| arm))
        .collect::<Option<Vec<_>>>()?;
    Some(EpochSummary {
        epoch,
        gamma: record.gamma,
        success: record.success,
        exploit_epoch,
        exploit_optimal: oracle::is_gamma_matching(&exp.matrix, &profile, exp.gamma_star),
        exploit_profile: profile,
        exploit_len,
        regret_at_end: f64::NAN,
        complete: false,
    })
}

/// Aggregate of a batch of runs sharing one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub runs: usize,
    pub turns: Vec<u64>,
    pub mean_regret: Vec<f64>,
    /// Population standard deviation across runs.
    pub std_regret: Vec<f64>,
    pub convergence_epochs: Vec<Option<u64>>,
    /// `(epoch, share of runs whose exploitation profile is not a gamma*-matching)`.
    pub exploit_error_rate: Vec<(u64, f64)>,
}

impl BatchSummary {
    pub fn from_traces(traces: &[RunTrace]) -> Result<Self> {
        let first = traces
            .first()
            .ok_or_else(|| Error::InvalidConfig("cannot summarize an empty batch".into()))?;
        let turns: Vec<u64> = first.checkpoints.iter().map(|c| c.turn).collect();
        if traces.iter().any(|t| {
            t.checkpoints
                .iter()
                .map(|c| c.turn)
                .ne(turns.iter().copied())
        }) {
            return Err(Error::InvalidConfig(
                "traces in a batch must share checkpoints".into(),
            ));
        }
        let runs = traces.len();
        let mut mean_regret = Vec::with_capacity(turns.len());
        let mut std_regret = Vec::with_capacity(turns.len());
        for idx in 0..turns.len() {
            let mean = traces
                .iter()
                .map(|t| t.checkpoints[idx].cumulative_regret)
                .sum::<f64>()
                / runs as f64;
            let var = traces
                .iter()
                .map(|t| (t.checkpoints[idx].cumulative_regret - mean).powi(2))
                .sum::<f64>()
                / runs as f64;
            mean_regret.push(mean);
            std_regret.push(var.sqrt());
        }
        let max_epoch = traces
            .iter()
            .filter_map(|t| t.epochs.last().map(|e| e.epoch))
            .max()
            .unwrap_or(0);
        let exploit_error_rate = (1..=max_epoch)
            .filter_map(|k| {
                let recorded: Vec<&EpochSummary> =
                    traces.iter().filter_map(|t| t.epoch(k)).collect();
                (!recorded.is_empty()).then(|| {
                    let bad = recorded.iter().filter(|e| !e.exploit_optimal).count();
                    (k, bad as f64 / recorded.len() as f64)
                })
            })
            .collect();
        Ok(Self {
            runs,
            turns,
            mean_regret,
            std_regret,
            convergence_epochs: traces.iter().map(RunTrace::convergence_epoch).collect(),
            exploit_error_rate,
        })
    }

    /// Mean cumulative regret at `turn`, if it is a checkpoint.
    pub fn mean_at(&self, turn: u64) -> Option<f64> {
        self.turns
            .iter()
            .position(|&t| t == turn)
            .map(|i| self.mean_regret[i])
    }
}

/// `config.runs` independent runs; run `r` uses `seed::derive(config.seed, r)`.
pub fn run_batch(exp: &Experiment) -> Result<(BatchSummary, Vec<RunTrace>)> {
    let traces = (0..exp.config.runs as u64)
        .into_par_iter()
        .map(|r| run_single(exp, seed::derive(exp.config.seed, r)))
        .collect::<Result<Vec<_>>>()?;
    let summary = BatchSummary::from_traces(&traces)?;
    Ok((summary, traces))
}
