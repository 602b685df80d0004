#![allow(dead_code)]

use std::collections::HashMap;

use fair_bandit::agent::{Agent, Phase};
use fair_bandit::env::{RewardMatrix, TurnOutcome};
use fair_bandit::harness::{self, Experiment, ExperimentConfig, Player};
use fair_bandit::oracle::BipartiteGraph;
use fair_bandit::Result;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Expected absorption time of the matching dynamics from a uniform start,
/// solved exactly through the fundamental matrix `(I - Q)^-1` of the
/// absorbing chain over all profiles in the product of neighbor sets.
pub fn analytic_absorption_time(graph: &BipartiteGraph) -> f64 {
    let n = graph.n_players();
    let states = product_profiles(graph);
    let is_matching = |p: &[usize]| {
        let mut seen = vec![false; graph.n_arms()];
        p.iter().all(|&a| !std::mem::replace(&mut seen[a], true))
    };
    let transient: Vec<&Vec<usize>> = states.iter().filter(|p| !is_matching(p)).collect();
    let index: HashMap<&Vec<usize>, usize> =
        transient.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let t = transient.len();
    if t == 0 {
        return 0.0;
    }

    let mut q = DMatrix::<f64>::zeros(t, t);
    for (i, from) in transient.iter().enumerate() {
        let mut counts = vec![0u32; graph.n_arms()];
        for &a in from.iter() {
            counts[a] += 1;
        }
        // each colliding player redraws independently from its neighbors
        let mut dist: Vec<(Vec<usize>, f64)> = vec![(Vec::with_capacity(n), 1.0)];
        for (player, &arm) in from.iter().enumerate() {
            let choices: Vec<usize> = if counts[arm] > 1 {
                graph.neighbors(player).to_vec()
            } else {
                vec![arm]
            };
            let p = 1.0 / choices.len() as f64;
            dist = dist
                .into_iter()
                .flat_map(|(prefix, w)| {
                    choices.iter().map(move |&c| {
                        let mut next = prefix.clone();
                        next.push(c);
                        (next, w * p)
                    })
                })
                .collect();
        }
        for (to, w) in dist {
            if let Some(&j) = index.get(&to) {
                q[(i, j)] += w;
            }
        }
    }
    let fundamental = (DMatrix::<f64>::identity(t, t) - q)
        .try_inverse()
        .expect("absorbing chain has an invertible I - Q");
    let steps = fundamental * DVector::<f64>::repeat(t, 1.0);

    let start_weight = 1.0 / states.len() as f64;
    transient
        .iter()
        .map(|p| start_weight * steps[index[*p]])
        .sum()
}

fn product_profiles(graph: &BipartiteGraph) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![vec![]];
    for player in 0..graph.n_players() {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                graph.neighbors(player).iter().map(move |&a| {
                    let mut p = prefix.clone();
                    p.push(a);
                    p
                })
            })
            .collect();
    }
    out
}

/// Plays a fixed arm forever.
pub struct Fixed(pub usize);

impl Player for Fixed {
    fn act(&mut self) -> Result<usize> {
        Ok(self.0)
    }

    fn observe(&mut self, _: TurnOutcome) -> Result<()> {
        Ok(())
    }
}

/// Wraps an agent and logs every `(arm, outcome)` pair it sees.
pub struct Recorder {
    pub agent: Agent,
    pub log: Vec<(usize, TurnOutcome)>,
    pending: Option<usize>,
}

impl Recorder {
    pub fn new(agent: Agent) -> Self {
        Self {
            agent,
            log: Vec::new(),
            pending: None,
        }
    }
}

impl Player for Recorder {
    fn act(&mut self) -> Result<usize> {
        let arm = self.agent.act()?;
        self.pending = Some(arm);
        Ok(arm)
    }

    fn observe(&mut self, outcome: TurnOutcome) -> Result<()> {
        self.log.push((self.pending.take().unwrap(), outcome));
        self.agent.observe(outcome)
    }

    fn phase(&self) -> Option<Phase> {
        Some(self.agent.phase())
    }
}

/// Sits in a seat of some simulation but feeds its agent a recorded outcome
/// stream instead of the live one, logging the arms the agent picks.
pub struct Replayer {
    pub agent: Agent,
    script: Vec<TurnOutcome>,
    pub arms: Vec<usize>,
}

impl Replayer {
    pub fn new(agent: Agent, script: Vec<TurnOutcome>) -> Self {
        Self {
            agent,
            script,
            arms: Vec::new(),
        }
    }
}

impl Player for Replayer {
    fn act(&mut self) -> Result<usize> {
        let arm = self.agent.act()?;
        self.arms.push(arm);
        Ok(arm)
    }

    fn observe(&mut self, _live: TurnOutcome) -> Result<()> {
        let o = self.script[self.arms.len() - 1];
        self.agent.observe(o)
    }

    fn phase(&self) -> Option<Phase> {
        Some(self.agent.phase())
    }
}

/// Either a live agent or a replaying one, so both can share a seat vector.
pub enum Seat {
    Live(Agent),
    Replay(Replayer),
}

impl Player for Seat {
    fn act(&mut self) -> Result<usize> {
        match self {
            Seat::Live(a) => a.act(),
            Seat::Replay(r) => r.act(),
        }
    }

    fn observe(&mut self, o: TurnOutcome) -> Result<()> {
        match self {
            Seat::Live(a) => a.observe(o),
            Seat::Replay(r) => r.observe(o),
        }
    }

    fn phase(&self) -> Option<Phase> {
        match self {
            Seat::Live(a) => Some(a.phase()),
            Seat::Replay(r) => r.phase(),
        }
    }
}

fn isolation_matrix(n: usize, m: usize, seed: u64) -> RewardMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RewardMatrix::from_rows(
        (0..n)
            .map(|_| (0..m).map(|_| rng.random_range(0.05..0.95)).collect())
            .collect(),
    )
    .unwrap()
}

fn isolation_experiment(matrix: RewardMatrix, horizon: u64) -> Experiment {
    Experiment::new(
        ExperimentConfig {
            c1: 30.0,
            c2: 50.0,
            c3: 40.0,
            horizon,
            runs: 1,
            stride: horizon,
            ..ExperimentConfig::default()
        },
        matrix,
    )
    .unwrap()
}

/// Records seat 0 of a 4-player, 6-arm game, then replays its outcome stream
/// into a fresh copy of that agent sitting in games with `player_counts`
/// players. Returns the number of mismatching turns per player count.
pub fn isolation_mismatches(player_counts: &[usize], horizon: u64) -> Vec<(usize, usize)> {
    const M: usize = 6;
    const AGENT_SEED: u64 = 77;
    let base = isolation_experiment(isolation_matrix(4, M, 1), horizon);
    let mut seats: Vec<Recorder> = (0..4)
        .map(|n| {
            Recorder::new(Agent::from_seed(base.agent.clone(), AGENT_SEED + n as u64).unwrap())
        })
        .collect();
    harness::simulate(&base, &mut seats, 3).unwrap();
    let recorded = std::mem::take(&mut seats[0].log);
    let script: Vec<TurnOutcome> = recorded.iter().map(|&(_, o)| o).collect();

    player_counts
        .iter()
        .map(|&n| {
            let exp = isolation_experiment(isolation_matrix(n, M, 10 + n as u64), horizon);
            let mut seats: Vec<Seat> = (0..n)
                .map(|i| {
                    let agent = Agent::from_seed(
                        exp.agent.clone(),
                        if i == 0 { AGENT_SEED } else { 1000 + i as u64 },
                    )
                    .unwrap();
                    if i == 0 {
                        Seat::Replay(Replayer::new(agent, script.clone()))
                    } else {
                        Seat::Live(agent)
                    }
                })
                .collect();
            harness::simulate(&exp, &mut seats, 99).unwrap();
            let Seat::Replay(r) = &seats[0] else {
                unreachable!()
            };
            let mismatches = recorded
                .iter()
                .zip(&r.arms)
                .filter(|((arm, _), replayed)| arm != *replayed)
                .count()
                + recorded.len().abs_diff(r.arms.len());
            (n, mismatches)
        })
        .collect()
}
