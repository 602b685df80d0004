//! Ground truth and the collision-channel environment.
//!
//! Arm indices are 0-based throughout the API. Reports and CSV output convert
//! to 1-based indices when printing assignments.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// The N×M table of expected rewards `mu[n][i]`, hidden from the agents.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMatrix {
    n_players: usize,
    n_arms: usize,
    mu: Vec<f64>,
}

impl RewardMatrix {
    /// Builds a matrix from rows. Rejects ragged rows, entries outside `[0, 1]`
    /// and instances with fewer arms than players.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_players = rows.len();
        if n_players == 0 {
            return Err(Error::InvalidMatrix("matrix has no rows".into()));
        }
        let n_arms = rows[0].len();
        if n_arms == 0 {
            return Err(Error::InvalidMatrix("matrix has no columns".into()));
        }
        let mut mu = Vec::with_capacity(n_players * n_arms);
        for (n, row) in rows.into_iter().enumerate() {
            if row.len() != n_arms {
                return Err(Error::InvalidMatrix(format!(
                    "row {} has {} entries, expected {}",
                    n + 1,
                    row.len(),
                    n_arms
                )));
            }
            for (i, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidMatrix(format!(
                        "entry ({}, {}) = {} is outside [0, 1]",
                        n + 1,
                        i + 1,
                        v
                    )));
                }
            }
            mu.extend(row);
        }
        if n_arms < n_players {
            return Err(Error::InvalidMatrix(format!(
                "{} arms for {} players; need at least as many arms as players",
                n_arms, n_players
            )));
        }
        Ok(Self {
            n_players,
            n_arms,
            mu,
        })
    }

    /// Parses a whitespace-separated numeric table, one row per player.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        Error::InvalidMatrix(format!(
                            "line {}: cannot parse {:?} as a number",
                            lineno + 1,
                            tok
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Resolves `u1`, `u2`, or a path to a matrix file.
    pub fn load(selector: &str) -> Result<Self> {
        match selector {
            "u1" | "U1" => Ok(Self::u1()),
            "u2" | "U2" => Ok(Self::u2()),
            path => Self::from_file(path),
        }
    }

    /// The 4×4 instance with a single max-min optimal matching of value 1/2.
    pub fn u1() -> Self {
        Self::from_rows(vec![
            vec![0.5, 0.9, 0.1, 0.25],
            vec![0.25, 0.5, 0.25, 0.1],
            vec![0.1, 0.25, 0.5, 0.5],
            vec![0.1, 0.9, 0.25, 0.5],
        ])
        .expect("built-in matrix is valid")
    }

    /// The 10×10 instance with 136 max-min optimal matchings of value 0.4.
    pub fn u2() -> Self {
        Self::from_rows(vec![
            vec![0.9, 0.4, 0.8, 0.1, 0.3, 0.05, 0.2, 0.1, 0.3, 0.2],
            vec![0.4, 0.3, 0.3, 0.1, 0.2, 0.3, 0.4, 0.4, 0.3, 0.4],
            vec![0.1, 0.05, 0.1, 0.4, 0.1, 0.2, 0.9, 0.3, 0.4, 0.1],
            vec![0.05, 0.1, 0.9, 0.2, 0.9, 0.75, 0.1, 0.9, 0.25, 0.05],
            vec![0.8, 0.3, 0.1, 0.7, 0.1, 0.4, 0.05, 0.2, 0.75, 0.05],
            vec![0.4, 0.05, 0.3, 0.7, 0.05, 0.1, 0.25, 0.75, 0.6, 0.05],
            vec![0.9, 0.3, 0.3, 0.8, 0.1, 0.25, 0.7, 0.05, 0.2, 0.3],
            vec![0.3, 0.1, 0.4, 0.25, 0.05, 0.9, 0.25, 0.1, 0.05, 0.4],
            vec![0.8, 0.75, 0.1, 0.2, 0.4, 0.05, 0.3, 0.2, 0.1, 0.25],
            vec![0.4, 0.4, 0.9, 0.7, 0.25, 0.2, 0.05, 0.1, 0.4, 0.25],
        ])
        .expect("built-in matrix is valid")
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    #[inline]
    pub fn get(&self, player: usize, arm: usize) -> f64 {
        self.mu[player * self.n_arms + arm]
    }

    pub fn row(&self, player: usize) -> &[f64] {
        &self.mu[player * self.n_arms..(player + 1) * self.n_arms]
    }

    pub fn entries(&self) -> &[f64] {
        &self.mu
    }
}

impl fmt::Display for RewardMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in 0..self.n_players {
            let row: Vec<String> = self.row(n).iter().map(|v| v.to_string()).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Additive reward noise. Rewards are not clipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// `mu + z` with `z` uniform on `[-half_width, half_width]`.
    UniformAdditive { half_width: f64 },
}

impl NoiseModel {
    pub fn uniform(half_width: f64) -> Result<Self> {
        if !(half_width >= 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise half-width must be finite and non-negative, got {}",
                half_width
            )));
        }
        Ok(Self::UniformAdditive { half_width })
    }

    pub fn half_width(&self) -> f64 {
        match *self {
            Self::UniformAdditive { half_width } => half_width,
        }
    }

    #[inline]
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::UniformAdditive { half_width } if half_width > 0.0 => {
                rng.random_range(-half_width..=half_width)
            }
            Self::UniformAdditive { .. } => 0.0,
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::UniformAdditive { half_width: 0.05 }
    }
}

/// One arm choice per player for a single turn.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StrategyProfile {
    arms: Vec<usize>,
}

impl StrategyProfile {
    pub fn new(arms: Vec<usize>, n_arms: usize) -> Result<Self> {
        if let Some(&bad) = arms.iter().find(|&&a| a >= n_arms) {
            return Err(Error::InvalidProfile(format!(
                "arm index {} out of range for {} arms",
                bad, n_arms
            )));
        }
        Ok(Self { arms })
    }

    pub fn arms(&self) -> &[usize] {
        &self.arms
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    /// True when no two players share an arm.
    pub fn is_collision_free(&self, n_arms: usize) -> bool {
        occupancy(&self.arms, n_arms).iter().all(|&c| c <= 1)
    }
}

/// What one player sees after a turn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnOutcome {
    /// Exactly `0.0` on collision.
    pub reward: f64,
    pub collided: bool,
}

fn occupancy(arms: &[usize], n_arms: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n_arms];
    for &a in arms {
        counts[a] += 1;
    }
    counts
}

fn no_collision_indicator_slice(arms: &[usize], n_arms: usize) -> Vec<bool> {
    occupancy(arms, n_arms)
        .into_iter()
        .map(|c| c <= 1)
        .collect()
}

/// Per-arm no-collision indicator: `false` iff more than one player chose the arm.
/// Unoccupied arms count as collision-free.
pub fn no_collision_indicator(profile: &StrategyProfile, n_arms: usize) -> Vec<bool> {
    no_collision_indicator_slice(profile.arms(), n_arms)
}

/// `min_n mu[n][a_n] * eta_{a_n}(a)`: the worst-off player's expected utility.
pub fn expected_min_utility(matrix: &RewardMatrix, profile: &StrategyProfile) -> f64 {
    let eta = no_collision_indicator(profile, matrix.n_arms());
    profile
        .arms()
        .iter()
        .enumerate()
        .map(|(n, &a)| if eta[a] { matrix.get(n, a) } else { 0.0 })
        .fold(f64::INFINITY, f64::min)
}

/// Per-turn regret `gamma_star - expected_min_utility`.
pub fn instantaneous_regret(
    matrix: &RewardMatrix,
    gamma_star: f64,
    profile: &StrategyProfile,
) -> f64 {
    gamma_star - expected_min_utility(matrix, profile)
}

/// The collision channel: one synchronous turn per call to [`Environment::step`].
#[derive(Debug, Clone)]
pub struct Environment {
    matrix: RewardMatrix,
    noise: NoiseModel,
    rng: ChaCha8Rng,
    counts: Vec<u32>,
}

impl Environment {
    pub fn new(matrix: RewardMatrix, noise: NoiseModel, seed: u64) -> Self {
        Self::with_rng(matrix, noise, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(matrix: RewardMatrix, noise: NoiseModel, rng: ChaCha8Rng) -> Self {
        let counts = vec![0; matrix.n_arms()];
        Self {
            matrix,
            noise,
            rng,
            counts,
        }
    }

    pub fn matrix(&self) -> &RewardMatrix {
        &self.matrix
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn step(&mut self, profile: &StrategyProfile) -> Result<Vec<TurnOutcome>> {
        let mut out = Vec::with_capacity(profile.len());
        self.step_into(profile.arms(), &mut out)?;
        Ok(out)
    }

    /// Buffer-reusing variant of [`Environment::step`]. Also returns the
    /// worst-off player's expected utility for the realized profile.
    pub fn step_into(&mut self, arms: &[usize], out: &mut Vec<TurnOutcome>) -> Result<f64> {
        if arms.len() != self.matrix.n_players() {
            return Err(Error::InvalidProfile(format!(
                "profile has {} entries for {} players",
                arms.len(),
                self.matrix.n_players()
            )));
        }
        let m = self.matrix.n_arms();
        if let Some(&bad) = arms.iter().find(|&&a| a >= m) {
            return Err(Error::InvalidProfile(format!(
                "arm index {} out of range for {} arms",
                bad, m
            )));
        }
        self.counts.iter_mut().for_each(|c| *c = 0);
        for &a in arms {
            self.counts[a] += 1;
        }
        out.clear();
        let mut min_expected = f64::INFINITY;
        for (n, &a) in arms.iter().enumerate() {
            // one draw per (player, turn), collided or not
            let z = self.noise.sample(&mut self.rng);
            let mu = self.matrix.get(n, a);
            if self.counts[a] > 1 {
                out.push(TurnOutcome {
                    reward: 0.0,
                    collided: true,
                });
                min_expected = 0.0;
            } else {
                out.push(TurnOutcome {
                    reward: mu + z,
                    collided: false,
                });
                min_expected = min_expected.min(mu);
            }
        }
        Ok(min_expected)
    }
}
