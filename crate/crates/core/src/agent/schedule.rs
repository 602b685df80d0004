//! Epoch and phase timing shared by every player.
//!
//! Phase boundaries depend only on the epoch index and the configuration, so
//! identically configured agents stay in lockstep without communicating.

use std::fmt;

use super::AgentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Explore,
    Match,
    Consensus,
    Exploit,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Explore => "explore",
            Phase::Match => "match",
            Phase::Consensus => "consensus",
            Phase::Exploit => "exploit",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Phase lengths of one epoch, in turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseSchedule {
    pub explore: u64,
    pub matching: u64,
    pub consensus: u64,
    pub exploit: u64,
}

impl PhaseSchedule {
    pub fn total(&self) -> u64 {
        self.explore + self.matching + self.consensus + self.exploit
    }

    pub fn len_of(&self, phase: Phase) -> u64 {
        match phase {
            Phase::Explore => self.explore,
            Phase::Match => self.matching,
            Phase::Consensus => self.consensus,
            Phase::Exploit => self.exploit,
        }
    }
}

/// `(ceil(c1 ln(k+1)), ceil(c2 ln(k+1)), M, ceil(c3 (4/3)^k))` for epoch `k >= 1`.
pub fn phase_lengths(k: u64, config: &AgentConfig) -> PhaseSchedule {
    assert!(k >= 1, "epochs are numbered from 1");
    let log_term = ((k + 1) as f64).ln();
    let growth = (4.0f64 / 3.0).powf(k as f64);
    PhaseSchedule {
        explore: ceil_len(config.c1 * log_term),
        matching: ceil_len(config.c2 * log_term),
        consensus: config.n_arms as u64,
        exploit: ceil_len(config.c3 * growth),
    }
}

fn ceil_len(x: f64) -> u64 {
    (x.ceil() as u64).max(1)
}

/// Total number of turns in epochs `1..=epochs`.
pub fn turns_through_epoch(epochs: u64, config: &AgentConfig) -> u64 {
    (1..=epochs).map(|k| phase_lengths(k, config).total()).sum()
}

/// Upper bound on the number of epochs that can start within `horizon` turns:
/// `log_{4/3}(T / (3 c3) + 4/3)`.
pub fn epoch_count_bound(horizon: u64, c3: f64) -> f64 {
    (horizon as f64 / (3.0 * c3) + 4.0 / 3.0).ln() / (4.0f64 / 3.0).ln()
}

/// Tracks `(epoch, phase, position)` one turn at a time.
#[derive(Debug, Clone)]
pub struct EpochClock {
    config: AgentConfig,
    epoch: u64,
    phase: Phase,
    lengths: PhaseSchedule,
    elapsed: u64,
}

impl EpochClock {
    pub fn new(config: &AgentConfig) -> Self {
        Self {
            config: config.clone(),
            epoch: 1,
            phase: Phase::Explore,
            lengths: phase_lengths(1, config),
            elapsed: 0,
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn lengths(&self) -> PhaseSchedule {
        self.lengths
    }

    /// Turns already spent in the current phase.
    pub fn elapsed(&self) -> u64 {
        self.elapsed
    }

    pub fn remaining(&self) -> u64 {
        self.lengths.len_of(self.phase) - self.elapsed
    }

    /// Consumes one turn. Returns the new phase when a boundary is crossed.
    pub fn advance(&mut self) -> Option<Phase> {
        self.elapsed += 1;
        if self.elapsed < self.lengths.len_of(self.phase) {
            return None;
        }
        self.elapsed = 0;
        self.phase = match self.phase {
            Phase::Explore => Phase::Match,
            Phase::Match => Phase::Consensus,
            Phase::Consensus => Phase::Exploit,
            Phase::Exploit => {
                self.epoch += 1;
                self.lengths = phase_lengths(self.epoch, &self.config);
                Phase::Explore
            }
        };
        Some(self.phase)
    }
}
