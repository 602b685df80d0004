//! Centralized ground truth over a known reward matrix.
//!
//! None of this is available to the agents. The harness uses it to score
//! runs, and the CLI reports it for a given instance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::env::RewardMatrix;
use crate::error::{Error, Result};

/// Matrix entries closer than this are treated as the same value.
pub const VALUE_TOLERANCE: f64 = 1e-12;

/// Largest number of injective assignments [`matching_histogram`] will enumerate.
pub const ENUMERATION_LIMIT: u128 = 100_000_000;

/// Players on the left, arms on the right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    n_arms: usize,
    adj: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    pub fn new(n_players: usize, n_arms: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n_players];
        for &(n, i) in edges {
            if n >= n_players || i >= n_arms {
                return Err(Error::InvalidConfig(format!(
                    "edge ({n}, {i}) outside a {n_players}x{n_arms} graph"
                )));
            }
            if !adj[n].contains(&i) {
                adj[n].push(i);
            }
        }
        adj.iter_mut().for_each(|a| a.sort_unstable());
        Ok(Self { n_arms, adj })
    }

    pub fn complete(n_players: usize, n_arms: usize) -> Self {
        Self {
            n_arms,
            adj: vec![(0..n_arms).collect(); n_players],
        }
    }

    /// Edge `(n, i)` iff `mu[n][i] >= level`.
    pub fn at_level(matrix: &RewardMatrix, level: f64) -> Self {
        let adj = (0..matrix.n_players())
            .map(|n| {
                (0..matrix.n_arms())
                    .filter(|&i| matrix.get(n, i) >= level - VALUE_TOLERANCE)
                    .collect()
            })
            .collect();
        Self {
            n_arms: matrix.n_arms(),
            adj,
        }
    }

    pub fn n_players(&self) -> usize {
        self.adj.len()
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn neighbors(&self, player: usize) -> &[usize] {
        &self.adj[player]
    }

    pub fn has_edge(&self, player: usize, arm: usize) -> bool {
        self.adj[player].binary_search(&arm).is_ok()
    }
}

/// Maximum-cardinality matching by repeated augmenting paths.
/// Returns the size and each player's arm, if matched.
pub fn max_bipartite_matching(graph: &BipartiteGraph) -> (usize, Vec<Option<usize>>) {
    let mut owner: Vec<Option<usize>> = vec![None; graph.n_arms()];
    let mut size = 0;
    for player in 0..graph.n_players() {
        let mut visited = vec![false; graph.n_arms()];
        if augment(graph, player, &mut visited, &mut owner) {
            size += 1;
        }
    }
    let mut assignment = vec![None; graph.n_players()];
    for (arm, p) in owner.iter().enumerate() {
        if let Some(p) = *p {
            assignment[p] = Some(arm);
        }
    }
    (size, assignment)
}

fn augment(
    graph: &BipartiteGraph,
    player: usize,
    visited: &mut [bool],
    owner: &mut [Option<usize>],
) -> bool {
    for &arm in graph.neighbors(player) {
        if visited[arm] {
            continue;
        }
        visited[arm] = true;
        let free = match owner[arm] {
            None => true,
            Some(other) => augment(graph, other, visited, owner),
        };
        if free {
            owner[arm] = Some(player);
            return true;
        }
    }
    false
}

fn perfect_matching(graph: &BipartiteGraph) -> Option<Vec<usize>> {
    let (size, assignment) = max_bipartite_matching(graph);
    (size == graph.n_players()).then(|| assignment.into_iter().flatten().collect())
}

/// An assignment of distinct arms to players and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingResult {
    pub assignment: Vec<usize>,
    pub value: f64,
}

/// Distinct entries in ascending order, merged within [`VALUE_TOLERANCE`].
pub fn distinct_values(matrix: &RewardMatrix) -> Vec<f64> {
    let mut values = matrix.entries().to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup_by(|b, a| (*b - *a).abs() <= VALUE_TOLERANCE);
    values
}

/// The max-min value `gamma*` with a witness assignment, by binary search over
/// the distinct entries for the largest level whose threshold graph has a
/// perfect matching.
pub fn gamma_star(matrix: &RewardMatrix) -> MatchingResult {
    let values = distinct_values(matrix);
    // values[lo] is always feasible (every entry is >= the smallest one)
    let (mut lo, mut hi) = (0usize, values.len());
    let mut witness = perfect_matching(&BipartiteGraph::at_level(matrix, values[0]))
        .expect("M >= N guarantees a perfect matching on the complete graph");
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        match perfect_matching(&BipartiteGraph::at_level(matrix, values[mid])) {
            Some(a) => {
                lo = mid;
                witness = a;
            }
            None => hi = mid,
        }
    }
    let value = bottleneck(matrix, &witness);
    MatchingResult {
        assignment: witness,
        value,
    }
}

/// `min_n mu[n][assignment[n]]`.
pub fn bottleneck(matrix: &RewardMatrix, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(n, &i)| matrix.get(n, i))
        .fold(f64::INFINITY, f64::min)
}

/// Whether `assignment` is injective and every player gets at least `level`.
pub fn is_gamma_matching(matrix: &RewardMatrix, assignment: &[usize], level: f64) -> bool {
    let mut used = vec![false; matrix.n_arms()];
    for (n, &i) in assignment.iter().enumerate() {
        if i >= matrix.n_arms() || used[i] || matrix.get(n, i) < level - VALUE_TOLERANCE {
            return false;
        }
        used[i] = true;
    }
    assignment.len() == matrix.n_players()
}

/// Number of injective assignments, `M! / (M-N)!`, saturating.
pub fn assignment_count(n_players: usize, n_arms: usize) -> u128 {
    ((n_arms - n_players + 1)..=n_arms).fold(1u128, |acc, k| acc.saturating_mul(k as u128))
}

/// Count of assignments per exact bottleneck value.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingHistogram {
    /// `(bottleneck value, count)`, ascending by value, zero counts omitted.
    pub buckets: Vec<(f64, u64)>,
    pub total: u64,
}

impl MatchingHistogram {
    pub fn count_at(&self, value: f64) -> u64 {
        self.buckets
            .iter()
            .find(|(v, _)| (v - value).abs() <= VALUE_TOLERANCE)
            .map_or(0, |&(_, c)| c)
    }

    pub fn max_value(&self) -> Option<f64> {
        self.buckets.last().map(|&(v, _)| v)
    }
}

pub fn matching_histogram(matrix: &RewardMatrix) -> Result<MatchingHistogram> {
    matching_histogram_with_limit(matrix, ENUMERATION_LIMIT)
}

/// Exhaustive enumeration of all injective assignments, bucketed by bottleneck.
pub fn matching_histogram_with_limit(
    matrix: &RewardMatrix,
    limit: u128,
) -> Result<MatchingHistogram> {
    let (n, m) = (matrix.n_players(), matrix.n_arms());
    let count = assignment_count(n, m);
    if count > limit {
        return Err(Error::EnumerationTooLarge { count, limit });
    }
    let values = distinct_values(matrix);
    let rank: Vec<usize> = matrix
        .entries()
        .iter()
        .map(|&v| {
            values
                .iter()
                .position(|&u| (u - v).abs() <= VALUE_TOLERANCE)
                .expect("entry has a bucket")
        })
        .collect();
    let enumerator = Enumerator {
        n,
        m,
        rank: &rank,
        n_values: values.len(),
    };
    let counts = (0..m)
        .into_par_iter()
        .map(|first| {
            let mut counts = vec![0u64; values.len()];
            let mut used = vec![false; m];
            used[first] = true;
            enumerator.descend(1, rank[first], &mut used, &mut counts);
            counts
        })
        .reduce(
            || vec![0u64; values.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let buckets: Vec<(f64, u64)> = values
        .into_iter()
        .zip(counts)
        .filter(|&(_, c)| c > 0)
        .collect();
    let total = buckets.iter().map(|&(_, c)| c).sum();
    Ok(MatchingHistogram { buckets, total })
}

struct Enumerator<'a> {
    n: usize,
    m: usize,
    rank: &'a [usize],
    n_values: usize,
}

impl Enumerator<'_> {
    fn descend(&self, player: usize, min_rank: usize, used: &mut [bool], counts: &mut [u64]) {
        debug_assert_eq!(counts.len(), self.n_values);
        if player == self.n {
            counts[min_rank] += 1;
            return;
        }
        let row = &self.rank[player * self.m..(player + 1) * self.m];
        for arm in 0..self.m {
            if used[arm] {
                continue;
            }
            let r = min_rank.min(row[arm]);
            if player + 1 == self.n {
                counts[r] += 1;
                continue;
            }
            used[arm] = true;
            self.descend(player + 1, r, used, counts);
            used[arm] = false;
        }
    }
}

/// A max-sum assignment and the min reward it leaves the worst-off player.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxSumMatching {
    pub matching: MatchingResult,
    pub bottleneck: f64,
}

/// Classical assignment problem (maximize the sum) via the Hungarian method
/// with potentials, `O(N^2 M)`.
pub fn max_sum_matching(matrix: &RewardMatrix) -> MaxSumMatching {
    let (n, m) = (matrix.n_players(), matrix.n_arms());
    // 1-based arrays; column 0 is the virtual start
    let cost = |row: usize, col: usize| -matrix.get(row - 1, col - 1);
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=n {
        p[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    let value = assignment
        .iter()
        .enumerate()
        .map(|(row, &col)| matrix.get(row, col))
        .sum();
    let bottleneck = bottleneck(matrix, &assignment);
    MaxSumMatching {
        matching: MatchingResult { assignment, value },
        bottleneck,
    }
}

/// Smallest within-row gap between two different arms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub delta: f64,
}

impl GapReport {
    pub fn is_degenerate(&self) -> bool {
        self.delta <= VALUE_TOLERANCE
    }
}

pub fn minimal_gap(matrix: &RewardMatrix) -> Result<GapReport> {
    if matrix.n_arms() < 2 {
        return Err(Error::InvalidMatrix(
            "the minimal gap needs at least two arms".into(),
        ));
    }
    let delta = (0..matrix.n_players())
        .map(|n| {
            let mut row = matrix.row(n).to_vec();
            row.sort_by(f64::total_cmp);
            row.windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min);
    Ok(GapReport { delta })
}

/// The decentralized matching dynamics on a fixed graph: players without a
/// collision keep their arm, colliding players redraw uniformly from their
/// neighbors. Collision-free profiles are absorbing.
#[derive(Debug, Clone)]
pub struct MatchingDynamics<'g> {
    graph: &'g BipartiteGraph,
    profile: Vec<usize>,
    counts: Vec<u32>,
}

impl<'g> MatchingDynamics<'g> {
    /// Every player starts on a uniform draw from its neighbors.
    pub fn new<R: Rng>(graph: &'g BipartiteGraph, rng: &mut R) -> Result<Self> {
        let mut profile = Vec::with_capacity(graph.n_players());
        for n in 0..graph.n_players() {
            let nb = graph.neighbors(n);
            if nb.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "player {} has no edges",
                    n + 1
                )));
            }
            profile.push(nb[rng.random_range(0..nb.len())]);
        }
        Ok(Self::from_profile(graph, profile))
    }

    pub fn from_profile(graph: &'g BipartiteGraph, profile: Vec<usize>) -> Self {
        let mut dynamics = Self {
            graph,
            profile,
            counts: vec![0; graph.n_arms()],
        };
        dynamics.recount();
        dynamics
    }

    fn recount(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        for &a in &self.profile {
            self.counts[a] += 1;
        }
    }

    pub fn profile(&self) -> &[usize] {
        &self.profile
    }

    pub fn is_matching(&self) -> bool {
        self.profile.iter().all(|&a| self.counts[a] == 1)
    }

    /// One synchronous transition.
    pub fn step<R: Rng>(&mut self, rng: &mut R) {
        for n in 0..self.profile.len() {
            if self.counts[self.profile[n]] > 1 {
                let nb = self.graph.neighbors(n);
                self.profile[n] = nb[rng.random_range(0..nb.len())];
            }
        }
        self.recount();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionSummary {
    pub trials: u64,
    pub cap: u64,
    /// Mean of `min(tau, cap)` over all trials.
    pub mean: f64,
    /// Largest observed `min(tau, cap)`.
    pub max: u64,
    /// Share of trials absorbed within `cap` steps.
    pub absorbed_fraction: f64,
}

/// Monte Carlo estimate of the absorption time of [`MatchingDynamics`] from
/// uniform random starts. Rejects graphs without a perfect matching.
pub fn estimate_absorption_time(
    graph: &BipartiteGraph,
    trials: u64,
    cap: u64,
    seed: u64,
) -> Result<AbsorptionSummary> {
    if trials == 0 {
        return Err(Error::InvalidConfig("need at least one trial".into()));
    }
    if perfect_matching(graph).is_none() {
        return Err(Error::NoPerfectMatching("the dynamics graph".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0u64;
    let mut max = 0u64;
    let mut absorbed = 0u64;
    for _ in 0..trials {
        let mut dynamics = MatchingDynamics::new(graph, &mut rng)?;
        let mut t = 0u64;
        while !dynamics.is_matching() && t < cap {
            dynamics.step(&mut rng);
            t += 1;
        }
        if dynamics.is_matching() {
            absorbed += 1;
        }
        sum += t;
        max = max.max(t);
    }
    Ok(AbsorptionSummary {
        trials,
        cap,
        mean: sum as f64 / trials as f64,
        max,
        absorbed_fraction: absorbed as f64 / trials as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_graph_has_perfect_matching() {
        let (size, a) = max_bipartite_matching(&BipartiteGraph::complete(3, 3));
        assert_eq!(size, 3);
        assert!(a.iter().all(Option::is_some));
    }

    #[test]
    fn hall_violation() {
        let g = BipartiteGraph::new(2, 2, &[(0, 0), (1, 0)]).unwrap();
        assert_eq!(max_bipartite_matching(&g).0, 1);
    }

    #[test]
    fn u1_threshold_graph_at_half() {
        let g = BipartiteGraph::at_level(&RewardMatrix::u1(), 0.5);
        let (size, a) = max_bipartite_matching(&g);
        assert_eq!(size, 4);
        let a: Vec<usize> = a.into_iter().flatten().collect();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn gamma_star_values() {
        let g = gamma_star(&RewardMatrix::u1());
        assert_eq!(g.value, 0.5);
        assert_eq!(g.assignment, vec![0, 1, 2, 3]);
        let single = RewardMatrix::from_rows(vec![vec![0.1, 0.5, 0.9]]).unwrap();
        assert_eq!(gamma_star(&single).value, 0.9);
    }

    #[test]
    fn small_histograms() {
        let m = RewardMatrix::from_rows(vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let h = matching_histogram(&m).unwrap();
        assert_eq!(h.buckets, vec![(0.1, 1), (0.9, 1)]);
        assert_eq!(h.total, 2);
        let h = matching_histogram(&RewardMatrix::u1()).unwrap();
        assert_eq!(h.buckets, vec![(0.1, 16), (0.25, 7), (0.5, 1)]);
    }

    #[test]
    fn histogram_guard() {
        let err = matching_histogram_with_limit(&RewardMatrix::u1(), 23).unwrap_err();
        assert!(matches!(
            err,
            Error::EnumerationTooLarge {
                count: 24,
                limit: 23
            }
        ));
        assert_eq!(assignment_count(10, 10), 3_628_800);
        assert_eq!(assignment_count(2, 5), 20);
        assert_eq!(assignment_count(40, 40), u128::MAX);
    }

    #[test]
    fn max_sum_values() {
        let r = max_sum_matching(&RewardMatrix::u1());
        assert!((r.matching.value - 2.15).abs() < 1e-12);
        assert_eq!(r.bottleneck, 0.25);
        let m = RewardMatrix::from_rows(vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        assert!((max_sum_matching(&m).matching.value - 1.8).abs() < 1e-12);
        // rectangular: second player takes the spare arm
        let m = RewardMatrix::from_rows(vec![vec![0.9, 0.8, 0.0], vec![0.9, 0.1, 0.7]]).unwrap();
        let r = max_sum_matching(&m);
        assert!((r.matching.value - 1.7).abs() < 1e-12);
    }

    #[test]
    fn gap_values() {
        assert_eq!(minimal_gap(&RewardMatrix::u1()).unwrap().delta, 0.0);
        let m = RewardMatrix::from_rows(vec![vec![0.1, 0.5, 0.9]]).unwrap();
        assert!((minimal_gap(&m).unwrap().delta - 0.4).abs() < 1e-12);
        let m = RewardMatrix::from_rows(vec![vec![0.1]]).unwrap();
        assert!(minimal_gap(&m).is_err());
    }

    #[test]
    fn absorbed_from_the_start() {
        let g = BipartiteGraph::new(3, 3, &[(0, 2), (1, 0), (2, 1)]).unwrap();
        let s = estimate_absorption_time(&g, 50, 10, 1).unwrap();
        assert_eq!((s.mean, s.max, s.absorbed_fraction), (0.0, 0, 1.0));
    }

    #[test]
    fn complete_two_by_two_absorbs() {
        let s = estimate_absorption_time(&BipartiteGraph::complete(2, 2), 2000, 1000, 4).unwrap();
        assert_eq!(s.absorbed_fraction, 1.0);
    }

    #[test]
    fn no_perfect_matching_rejected() {
        let g = BipartiteGraph::new(2, 2, &[(0, 0), (1, 0)]).unwrap();
        assert!(matches!(
            estimate_absorption_time(&g, 10, 10, 1),
            Err(Error::NoPerfectMatching(_))
        ));
    }
}
