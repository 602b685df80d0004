//! One player's side of the game: a sealed state machine that repeats the
//! explore / match / consensus / exploit epoch forever.
//!
//! The agent's only inputs are its configuration, its own random stream and
//! the [`TurnOutcome`]s it receives. It never learns the number of players,
//! the horizon, or anything about the other agents. Callers alternate
//! [`Agent::act`] and [`Agent::observe`] exactly once per turn.

mod schedule;

pub use schedule::{
    epoch_count_bound, phase_lengths, turns_through_epoch, EpochClock, Phase, PhaseSchedule,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::TurnOutcome;
use crate::error::{Error, Result};

/// Tunables for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub n_arms: usize,
    /// Exploration length constant: `ceil(c1 ln(k+1))` turns.
    pub c1: f64,
    /// Matching length constant: `ceil(c2 ln(k+1))` turns.
    pub c2: f64,
    /// Exploitation length constant: `ceil(c3 (4/3)^k)` turns.
    pub c3: f64,
    /// Multiplier on the confidence width `sqrt(M / ln V)`.
    pub ci_scale: f64,
    /// Numerator of the step size `epsilon_scale / (1 + ln k)`.
    pub epsilon_scale: f64,
    /// Start each matching phase from the last exploitation arm when it is eligible.
    pub warm_start: bool,
    /// Trust the explicit collision bit instead of inferring collisions from a zero reward.
    pub use_collision_bit: bool,
    /// Lower bound on the reset expiry `ceil(k/3)`; 1 leaves the schedule unchanged.
    pub reset_min_period: u64,
}

impl AgentConfig {
    /// Unscaled constants: `c1 = c2 = c3 = 4`, unit confidence and step scales, cold start.
    pub fn algorithm(n_arms: usize) -> Self {
        Self {
            n_arms,
            c1: 4.0,
            c2: 4.0,
            c3: 4.0,
            ci_scale: 1.0,
            epsilon_scale: 1.0,
            warm_start: false,
            use_collision_bit: true,
            reset_min_period: 1,
        }
    }

    /// Long phases, small confidence and step scales, warm start: tuned for the built-in U1/U2 instances.
    pub fn experiment_defaults(n_arms: usize) -> Self {
        Self {
            n_arms,
            c1: 1000.0,
            c2: 2000.0,
            c3: 4000.0,
            ci_scale: 0.01,
            epsilon_scale: 0.2,
            warm_start: true,
            use_collision_bit: true,
            reset_min_period: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_arms == 0 {
            return Err(Error::InvalidConfig("agent needs at least one arm".into()));
        }
        for (name, c) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3)] {
            if !(c.is_finite() && c >= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be >= 1, got {c}"
                )));
            }
        }
        for (name, v) in [
            ("ci_scale", self.ci_scale),
            ("epsilon_scale", self.epsilon_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.reset_min_period == 0 {
            return Err(Error::InvalidConfig("reset_min_period must be >= 1".into()));
        }
        Ok(())
    }
}

/// What an agent remembers about one finished consensus phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: u64,
    /// The search level used during the matching phase.
    pub gamma: f64,
    /// `S_k`: the consensus phase saw no collision.
    pub success: bool,
    /// The arm held at the end of the matching phase.
    pub matched_arm: usize,
}

/// Reset counter and step size. Advanced once per epoch, at the start of the
/// matching phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetSchedule {
    counter: u64,
    expiry: u64,
    epsilon: f64,
    epsilon_scale: f64,
    min_period: u64,
}

impl ResetSchedule {
    pub fn new(epsilon_scale: f64) -> Self {
        Self::with_min_period(epsilon_scale, 1)
    }

    /// Like [`ResetSchedule::new`], but a reset never sets the expiry below
    /// `min_period`.
    pub fn with_min_period(epsilon_scale: f64, min_period: u64) -> Self {
        Self {
            counter: 0,
            expiry: 1,
            epsilon: epsilon_scale,
            epsilon_scale,
            min_period,
        }
    }

    /// Advances the counter for epoch `k`. Returns `true` when the search level
    /// must be reset to zero, in which case the expiry becomes `ceil(k/3)` and
    /// the step size `epsilon_scale / (1 + ln k)`.
    pub fn on_matching_start(&mut self, k: u64) -> bool {
        self.counter += 1;
        if self.counter == self.expiry {
            self.counter = 0;
            self.expiry = k.div_ceil(3).max(self.min_period);
            self.epsilon = self.epsilon_scale / (1.0 + (k as f64).ln());
            true
        } else {
            false
        }
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn expiry(&self) -> u64 {
        self.expiry
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// `max argmax_{ceil(k/2) <= l <= k} gamma_l * S_l`.
///
/// Ties resolve to the most recent epoch; an all-zero window yields `k`.
/// `history[l - 1]` must describe epoch `l`.
pub fn select_exploit_epoch(history: &[EpochRecord], k: u64) -> u64 {
    assert!(
        k >= 1 && history.len() as u64 >= k,
        "history must cover epoch {k}"
    );
    let mut best_epoch = k.div_ceil(2);
    let mut best_value = f64::NEG_INFINITY;
    for l in k.div_ceil(2)..=k {
        let rec = &history[(l - 1) as usize];
        let value = if rec.success { rec.gamma } else { 0.0 };
        if value >= best_value {
            best_value = value;
            best_epoch = l;
        }
    }
    best_epoch
}

/// The `M`-turn collision broadcast that ends every matching phase.
///
/// A player that ended the matching phase without a collision holds its arm;
/// one that ended with a collision sweeps arms `0, 1, ..., M-1`. Any sweep
/// collides with every occupied arm, so either every player sees a collision
/// or none does.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusSignal {
    matched_arm: usize,
    sweeping: bool,
    turn: usize,
    collided: bool,
}

impl ConsensusSignal {
    pub fn new(matched_arm: usize, ended_with_collision: bool) -> Self {
        Self {
            matched_arm,
            sweeping: ended_with_collision,
            turn: 0,
            collided: false,
        }
    }

    pub fn arm(&self) -> usize {
        if self.sweeping {
            self.turn
        } else {
            self.matched_arm
        }
    }

    pub fn record(&mut self, collided: bool) {
        self.collided |= collided;
        self.turn += 1;
    }

    /// `S_k`, meaningful once all `M` turns are recorded.
    pub fn success(&self) -> bool {
        !self.collided
    }

    pub fn is_sweeping(&self) -> bool {
        self.sweeping
    }
}

/// One player running the four-phase epoch loop.
#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    rng: ChaCha8Rng,
    clock: EpochClock,
    visits: Vec<u64>,
    sums: Vec<f64>,
    gamma: f64,
    resets: ResetSchedule,
    history: Vec<EpochRecord>,
    eligible: Vec<usize>,
    /// Arm to play on the next matching turn.
    current_arm: usize,
    /// Last arm played during matching and whether it collided.
    last_match: Option<(usize, bool)>,
    consensus: Option<ConsensusSignal>,
    exploit_arm: Option<usize>,
    exploit_epoch: Option<u64>,
    pending: Option<usize>,
}

impl Agent {
    pub fn new(config: AgentConfig, rng: ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let m = config.n_arms;
        Ok(Self {
            clock: EpochClock::new(&config),
            resets: ResetSchedule::with_min_period(config.epsilon_scale, config.reset_min_period),
            rng,
            visits: vec![0; m],
            sums: vec![0.0; m],
            gamma: 0.0,
            history: Vec::new(),
            eligible: Vec::with_capacity(m),
            current_arm: 0,
            last_match: None,
            consensus: None,
            exploit_arm: None,
            exploit_epoch: None,
            pending: None,
            config,
        })
    }

    pub fn from_seed(config: AgentConfig, seed: u64) -> Result<Self> {
        Self::new(config, ChaCha8Rng::seed_from_u64(seed))
    }

    /// The arm to play this turn.
    pub fn act(&mut self) -> Result<usize> {
        if self.pending.is_some() {
            return Err(Error::Protocol("act called twice without observe"));
        }
        let arm = match self.clock.phase() {
            Phase::Explore => self.rng.random_range(0..self.config.n_arms),
            Phase::Match => self.current_arm,
            Phase::Consensus => self
                .consensus
                .as_ref()
                .expect("consensus state exists during consensus")
                .arm(),
            Phase::Exploit => self
                .exploit_arm
                .expect("exploitation arm is chosen before exploitation"),
        };
        self.pending = Some(arm);
        Ok(arm)
    }

    /// Feeds back this turn's outcome and advances the clock.
    pub fn observe(&mut self, outcome: TurnOutcome) -> Result<()> {
        let arm = self
            .pending
            .take()
            .ok_or(Error::Protocol("observe called before act"))?;
        let collided = if self.config.use_collision_bit {
            outcome.collided
        } else {
            outcome.reward == 0.0
        };
        match self.clock.phase() {
            Phase::Explore => {
                if !collided {
                    self.visits[arm] += 1;
                    self.sums[arm] += outcome.reward;
                }
            }
            Phase::Match => {
                // only the collision bit matters here
                self.last_match = Some((arm, collided));
                if collided {
                    self.current_arm = self.draw_eligible();
                }
            }
            Phase::Consensus => {
                if let Some(c) = self.consensus.as_mut() {
                    c.record(collided);
                }
            }
            Phase::Exploit => {}
        }
        if let Some(next) = self.clock.advance() {
            self.enter(next);
        }
        Ok(())
    }

    fn enter(&mut self, phase: Phase) {
        match phase {
            Phase::Explore => {}
            Phase::Match => self.begin_matching(),
            Phase::Consensus => {
                let (arm, collided) = self
                    .last_match
                    .take()
                    .expect("matching phase lasts at least one turn");
                self.consensus = Some(ConsensusSignal::new(arm, collided));
            }
            Phase::Exploit => self.finish_consensus(),
        }
    }

    fn begin_matching(&mut self) {
        let k = self.clock.epoch();
        if self.resets.on_matching_start(k) {
            self.gamma = 0.0;
        }
        self.eligible = self.eligible_set();
        self.current_arm = match self.exploit_arm {
            Some(prev) if self.config.warm_start && self.eligible.contains(&prev) => prev,
            _ => self.draw_eligible(),
        };
    }

    fn finish_consensus(&mut self) {
        let signal = self
            .consensus
            .take()
            .expect("consensus state exists at its end");
        let k = self.clock.epoch();
        let success = signal.success();
        self.history.push(EpochRecord {
            epoch: k,
            gamma: self.gamma,
            success,
            matched_arm: signal.matched_arm,
        });
        if success {
            self.gamma += self.resets.epsilon();
        }
        let k_star = select_exploit_epoch(&self.history, k);
        self.exploit_epoch = Some(k_star);
        self.exploit_arm = Some(self.history[(k_star - 1) as usize].matched_arm);
    }

    fn draw_eligible(&mut self) -> usize {
        self.eligible[self.rng.random_range(0..self.eligible.len())]
    }

    /// Running mean of collision-free exploration rewards, if the arm has any.
    pub fn estimate(&self, arm: usize) -> Option<f64> {
        (self.visits[arm] > 0).then(|| self.sums[arm] / self.visits[arm] as f64)
    }

    /// `ci_scale * sqrt(M / ln V)`, infinite while `V < 3`.
    pub fn confidence_width(&self, arm: usize) -> f64 {
        let v = self.visits[arm];
        if v < 3 {
            f64::INFINITY
        } else {
            self.config.ci_scale * (self.config.n_arms as f64 / (v as f64).ln()).sqrt()
        }
    }

    /// Arms whose estimate clears `gamma - C`. Falls back to every arm when
    /// none qualifies.
    pub fn eligible_set(&self) -> Vec<usize> {
        let set: Vec<usize> = (0..self.config.n_arms)
            .filter(|&i| {
                let width = self.confidence_width(i);
                width.is_infinite() || self.estimate(i).is_some_and(|mu| mu >= self.gamma - width)
            })
            .collect();
        if set.is_empty() {
            (0..self.config.n_arms).collect()
        } else {
            set
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn epoch(&self) -> u64 {
        self.clock.epoch()
    }

    pub fn phase(&self) -> Phase {
        self.clock.phase()
    }

    pub fn clock(&self) -> &EpochClock {
        &self.clock
    }

    /// Current search level `gamma_k`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn epsilon(&self) -> f64 {
        self.resets.epsilon()
    }

    pub fn resets(&self) -> &ResetSchedule {
        &self.resets
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    pub fn reward_sums(&self) -> &[f64] {
        &self.sums
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn exploit_arm(&self) -> Option<usize> {
        self.exploit_arm
    }

    /// `k*` chosen for the current (or most recent) exploitation phase.
    pub fn exploit_epoch(&self) -> Option<u64> {
        self.exploit_epoch
    }

    /// Eligible set frozen at the start of the current matching phase.
    pub fn matching_eligible(&self) -> &[usize] {
        &self.eligible
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean(reward: f64) -> TurnOutcome {
        TurnOutcome {
            reward,
            collided: false,
        }
    }

    const HIT: TurnOutcome = TurnOutcome {
        reward: 0.0,
        collided: true,
    };

    fn small_config(m: usize) -> AgentConfig {
        AgentConfig {
            c1: 2.0,
            c2: 3.0,
            c3: 1.0,
            ..AgentConfig::algorithm(m)
        }
    }

    /// Drives the agent until it reaches `phase` in `epoch`, feeding `outcome(arm)`.
    fn drive_to(
        agent: &mut Agent,
        epoch: u64,
        phase: Phase,
        outcome: impl Fn(usize) -> TurnOutcome,
    ) {
        while (agent.epoch(), agent.phase()) != (epoch, phase) {
            let arm = agent.act().unwrap();
            agent.observe(outcome(arm)).unwrap();
        }
    }

    #[test]
    fn protocol_violations() {
        let mut a = Agent::from_seed(AgentConfig::algorithm(3), 1).unwrap();
        assert!(matches!(a.observe(clean(0.5)), Err(Error::Protocol(_))));
        a.act().unwrap();
        assert!(matches!(a.act(), Err(Error::Protocol(_))));
        a.observe(clean(0.5)).unwrap();
        a.act().unwrap();
    }

    #[test]
    fn reset_trace_from_initialization() {
        let mut r = ResetSchedule::new(0.2);
        // k = 1: w hits e_w = 1 immediately
        assert!(r.on_matching_start(1));
        assert_eq!((r.counter(), r.expiry()), (0, 1));
        assert_eq!(r.epsilon(), 0.2);
        assert!(r.on_matching_start(2));
        assert!(r.on_matching_start(3));
        assert!(r.on_matching_start(4));
        assert_eq!((r.counter(), r.expiry()), (0, 2));
        let eps4 = r.epsilon();
        // k = 5 arrives with w = 0, e_w = 2
        assert!(!r.on_matching_start(5));
        assert_eq!(r.counter(), 1);
        assert_eq!(r.epsilon(), eps4);
        assert!(r.on_matching_start(6));
    }

    #[test]
    fn reset_at_twenty_uses_log_step() {
        let mut r = ResetSchedule::new(0.2);
        let mut fired = Vec::new();
        for k in 1..=20 {
            if r.on_matching_start(k) {
                fired.push(k);
            }
        }
        assert_eq!(fired, vec![1, 2, 3, 4, 6, 8, 11, 15, 20]);
        assert!((r.epsilon() - 0.2 / (1.0 + 20f64.ln())).abs() < 1e-15);
        assert!((r.epsilon() - 0.0501).abs() < 1e-4);
    }

    #[test]
    fn minimum_reset_period() {
        let mut r = ResetSchedule::with_min_period(0.2, 3);
        let fired: Vec<u64> = (1..=20).filter(|&k| r.on_matching_start(k)).collect();
        assert_eq!(fired, vec![1, 4, 7, 10, 14, 19]);
    }

    fn records(values: &[(f64, bool)]) -> Vec<EpochRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, &(gamma, success))| EpochRecord {
                epoch: i as u64 + 1,
                gamma,
                success,
                matched_arm: i,
            })
            .collect()
    }

    #[test]
    fn exploit_epoch_examples() {
        // k = 6, window 3..=6 with products (0.2, 0, 0.3, 0.3)
        let h = records(&[
            (0.9, true),
            (0.9, true),
            (0.2, true),
            (0.5, false),
            (0.3, true),
            (0.3, true),
        ]);
        assert_eq!(select_exploit_epoch(&h, 6), 6);
        let h = records(&[(0.4, false), (0.2, false), (0.1, false), (0.0, false)]);
        assert_eq!(select_exploit_epoch(&h, 4), 4);
        // k = 8, window 4..=8 with products (0.1, 0.25, 0, 0.25, 0.2)
        let h = records(&[
            (0.9, true),
            (0.9, true),
            (0.9, true),
            (0.1, true),
            (0.25, true),
            (0.0, true),
            (0.25, true),
            (0.2, true),
        ]);
        assert_eq!(select_exploit_epoch(&h, 8), 7);
        // outside the window is ignored
        assert_eq!(select_exploit_epoch(&h, 1), 1);
    }

    #[test]
    fn consensus_sweep_visits_arms_in_order() {
        let mut c = ConsensusSignal::new(2, true);
        let mut arms = Vec::new();
        for _ in 0..5 {
            arms.push(c.arm());
            c.record(true);
        }
        assert_eq!(arms, vec![0, 1, 2, 3, 4]);
        assert!(!c.success());
        let mut c = ConsensusSignal::new(2, false);
        for _ in 0..5 {
            assert_eq!(c.arm(), 2);
            c.record(false);
        }
        assert!(c.success());
    }

    #[test]
    fn exploration_updates_only_on_clean_outcomes() {
        let mut a = Agent::from_seed(AgentConfig::algorithm(4), 5).unwrap();
        let arm = a.act().unwrap();
        a.observe(HIT).unwrap();
        assert_eq!(a.visits()[arm], 0);
        let arm = a.act().unwrap();
        a.observe(clean(0.87)).unwrap();
        assert_eq!(a.visits()[arm], 1);
        assert_eq!(a.estimate(arm), Some(0.87));
    }

    #[test]
    fn running_mean_arithmetic() {
        // V = 9, s = 7.2, then a clean 0.87
        let (v, s) = (9u64 + 1, 7.2f64 + 0.87);
        assert_eq!(v, 10);
        assert!((s - 8.07).abs() < 1e-12);
        assert!((s / v as f64 - 0.807).abs() < 1e-12);
    }

    #[test]
    fn confidence_width_values() {
        let mut a = Agent::from_seed(AgentConfig::algorithm(4), 5).unwrap();
        assert!(a.confidence_width(0).is_infinite());
        a.visits[0] = 2;
        assert!(a.confidence_width(0).is_infinite());
        a.visits[0] = 55;
        let c = a.confidence_width(0);
        assert!((c - (4.0 / 55f64.ln()).sqrt()).abs() < 1e-15);
        assert!((c - 0.999).abs() < 1e-3);
    }

    #[test]
    fn eligible_set_examples() {
        let mut a = Agent::from_seed(AgentConfig::algorithm(4), 5).unwrap();
        // gamma = 0: everything
        a.visits = vec![10; 4];
        a.sums = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(a.eligible_set(), vec![0, 1, 2, 3]);
        // U1 row 2, exact estimates, vanishing confidence
        a.config.ci_scale = 1e-9;
        a.visits = vec![100; 4];
        a.sums = vec![25.0, 50.0, 25.0, 10.0];
        a.gamma = 0.3;
        assert_eq!(a.eligible_set(), vec![1]);
        // nothing qualifies: fall back to all arms
        a.gamma = 0.9;
        assert_eq!(a.eligible_set(), vec![0, 1, 2, 3]);
        // under-sampled arms are always eligible
        a.visits[3] = 2;
        assert_eq!(a.eligible_set(), vec![3]);
    }

    #[test]
    fn matching_holds_arm_after_clean_turn() {
        let mut a = Agent::from_seed(small_config(5), 9).unwrap();
        drive_to(&mut a, 1, Phase::Match, |_| clean(0.5));
        let first = a.act().unwrap();
        a.observe(clean(0.42)).unwrap();
        let visits = a.visits().to_vec();
        assert_eq!(a.act().unwrap(), first);
        a.observe(clean(0.42)).unwrap();
        assert_eq!(a.visits(), &visits[..]);
    }

    #[test]
    fn consensus_after_collision_sweeps() {
        let mut a = Agent::from_seed(small_config(4), 3).unwrap();
        drive_to(&mut a, 1, Phase::Match, |_| clean(0.5));
        // collide on every matching turn
        while a.phase() == Phase::Match {
            a.act().unwrap();
            a.observe(HIT).unwrap();
        }
        let mut arms = Vec::new();
        while a.phase() == Phase::Consensus {
            arms.push(a.act().unwrap());
            a.observe(clean(0.5)).unwrap();
        }
        assert_eq!(arms, vec![0, 1, 2, 3]);
        // a clean sweep still counts as success for this agent
        assert!(a.history()[0].success);
    }

    #[test]
    fn successful_consensus_raises_gamma() {
        let mut a = Agent::from_seed(small_config(4), 3).unwrap();
        drive_to(&mut a, 1, Phase::Exploit, |_| clean(0.5));
        let rec = a.history()[0];
        assert!(rec.success);
        assert_eq!(rec.gamma, 0.0);
        assert_eq!(a.gamma(), 1.0);
        assert_eq!(a.exploit_epoch(), Some(1));
        assert_eq!(a.exploit_arm(), Some(rec.matched_arm));
        let arm = a.act().unwrap();
        assert_eq!(arm, rec.matched_arm);
        a.observe(HIT).unwrap();
        assert_eq!(a.act().unwrap(), arm);
    }

    #[test]
    fn failed_consensus_keeps_gamma() {
        let mut a = Agent::from_seed(small_config(4), 3).unwrap();
        drive_to(&mut a, 1, Phase::Consensus, |_| clean(0.5));
        while a.phase() == Phase::Consensus {
            a.act().unwrap();
            a.observe(HIT).unwrap();
        }
        assert!(!a.history()[0].success);
        assert_eq!(a.gamma(), 0.0);
    }

    #[test]
    fn collision_inferred_from_zero_reward() {
        let cfg = AgentConfig {
            use_collision_bit: false,
            ..AgentConfig::algorithm(3)
        };
        let mut a = Agent::from_seed(cfg, 1).unwrap();
        let arm = a.act().unwrap();
        a.observe(TurnOutcome {
            reward: 0.0,
            collided: false,
        })
        .unwrap();
        assert_eq!(a.visits()[arm], 0);
    }

    #[test]
    fn config_validation() {
        let mut c = AgentConfig::algorithm(3);
        c.c2 = 0.5;
        assert!(Agent::from_seed(c, 1).is_err());
        let mut c = AgentConfig::algorithm(3);
        c.ci_scale = 0.0;
        assert!(c.validate().is_err());
        assert!(AgentConfig::algorithm(0).validate().is_err());
    }
}
