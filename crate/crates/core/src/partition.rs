//! Set partitioning over a pool of feasible schedules: choose the fewest
//! pairwise-disjoint pool members that together cover every delivery.
//!
//! Three solvers live here:
//! - [`solve_partition`]: exact branch-and-bound restricted to a given pool.
//! - [`enumerate_exact`]: ground truth for small instances, by enumerating
//!   every battery-feasible independent set and a DP over delivery subsets.
//! - [`greedy_baseline`]: interval coloring followed by budget splitting.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::correction::{most_expensive, FeasiblePool};
use crate::fixed::Fixed;
use crate::instances::DdppInstance;
use crate::nodeset::NodeSet;
use crate::schedgraph::SchedGraph;

pub const DEFAULT_EXACT_CAP: usize = 20;
const CLOCK_CHECK_INTERVAL: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PartitionError {
    #[error("pool lacks the singleton for delivery {0}")]
    PoolMissingSingletons(usize),
    #[error("instance has {n} deliveries, exact enumeration is capped at {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("delivery {0} costs more than the battery")]
    DeliveryExceedsBattery(usize),
    #[error("exact drone count is zero; ratio undefined")]
    DivisionByZeroGuard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    /// Proven minimal over the pool it was given.
    OptimalOverPool,
    Infeasible,
    /// Time limit hit; the best partition found so far is returned.
    TimedOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSolution {
    pub selected_sets: Vec<NodeSet>,
    pub drones: usize,
    pub status: SolveStatus,
    pub wall_time: Duration,
}

impl PartitionSolution {
    /// Bitwise OR of the selection is all-ones and no two members intersect.
    pub fn is_exact_cover(&self, n: usize) -> bool {
        let mut covered = NodeSet::empty(n);
        for s in &self.selected_sets {
            if s.len() != n || !s.is_disjoint(&covered) {
                return false;
            }
            covered.union_with(s);
        }
        covered.weight() == n
    }

    pub fn to_json(&self) -> String {
        let file = SolutionFile {
            drones: self.drones,
            sets: self.selected_sets.iter().map(|s| s.nodes().collect()).collect(),
            status: self.status,
            wall_time_ms: self.wall_time.as_secs_f64() * 1e3,
        };
        serde_json::to_string_pretty(&file).expect("solution serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        fs::write(path, self.to_json() + "\n")
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionFile {
    pub drones: usize,
    pub sets: Vec<Vec<usize>>,
    pub status: SolveStatus,
    pub wall_time_ms: f64,
}

struct Search<'a> {
    sets: &'a [NodeSet],
    containing: Vec<Vec<usize>>,
    max_weight: usize,
    covered: NodeSet,
    chosen: Vec<usize>,
    best: Option<Vec<usize>>,
    deadline: Option<Instant>,
    nodes: u64,
    timed_out: bool,
}

impl Search<'_> {
    fn best_len(&self) -> usize {
        self.best.as_ref().map_or(usize::MAX, Vec::len)
    }

    fn run(&mut self, uncovered: usize) {
        self.nodes += 1;
        if self.nodes.is_multiple_of(CLOCK_CHECK_INTERVAL) && self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.timed_out = true;
        }
        if self.timed_out {
            return;
        }
        if uncovered == 0 {
            if self.chosen.len() < self.best_len() {
                self.best = Some(self.chosen.clone());
            }
            return;
        }
        if self.chosen.len() + uncovered.div_ceil(self.max_weight) >= self.best_len() {
            return;
        }
        let j = self.covered.bits().zeroes().next().expect("uncovered > 0");
        for k in 0..self.containing[j].len() {
            let idx = self.containing[j][k];
            let set = &self.sets[idx];
            if !set.is_disjoint(&self.covered) {
                continue;
            }
            let w = set.weight();
            self.covered.union_with(set);
            self.chosen.push(idx);
            self.run(uncovered - w);
            self.chosen.pop();
            self.covered.difference_with(&self.sets[idx]);
            if self.timed_out {
                return;
            }
        }
    }
}

/// Minimum exact cover of all deliveries by pool members.
///
/// Depth-first branch-and-bound: branch on the lowest-index uncovered
/// delivery, try the disjoint pool sets containing it heaviest first (ties
/// by bitstring), and prune with `chosen + ceil(uncovered / max weight)`.
pub fn solve_partition(pool: &FeasiblePool, time_limit: Option<Duration>) -> Result<PartitionSolution, PartitionError> {
    let start = Instant::now();
    let n = pool.n();
    if let Some(j) = pool.missing_singleton() {
        return Err(PartitionError::PoolMissingSingletons(j));
    }
    let mut sets: Vec<NodeSet> = pool.sets().iter().filter(|s| !s.is_empty()).cloned().collect();
    sets.sort_by(|a, b| b.weight().cmp(&a.weight()).then_with(|| a.cmp(b)));
    let mut containing = vec![Vec::new(); n];
    for (i, s) in sets.iter().enumerate() {
        for j in s.nodes() {
            containing[j].push(i);
        }
    }
    let mut search = Search {
        sets: &sets,
        containing,
        max_weight: sets.iter().map(NodeSet::weight).max().unwrap_or(1),
        covered: NodeSet::empty(n),
        chosen: Vec::new(),
        best: None,
        deadline: time_limit.map(|t| start + t),
        nodes: 0,
        timed_out: false,
    };
    search.run(n);
    let status = if search.timed_out { SolveStatus::TimedOut } else { SolveStatus::OptimalOverPool };
    let (selected_sets, status) = match search.best {
        Some(best) => (best.into_iter().map(|i| sets[i].clone()).collect::<Vec<_>>(), status),
        // Singletons guarantee a cover; only a zero time limit lands here.
        None => ((0..n).map(|j| NodeSet::singleton(n, j)).collect(), SolveStatus::TimedOut),
    };
    Ok(PartitionSolution { drones: selected_sets.len(), selected_sets, status, wall_time: start.elapsed() })
}

struct ExactOracle {
    adjacency: Vec<u64>,
    costs: Vec<Fixed>,
    battery: Fixed,
    memo: HashMap<u64, u8>,
}

impl ExactOracle {
    /// Every nonempty independent set within budget, as bit masks.
    fn all_feasible(&self) -> Vec<u64> {
        let mut out = Vec::new();
        let n = self.costs.len();
        let mut stack: Vec<(u64, Fixed, usize)> = vec![(0, Fixed::ZERO, 0)];
        while let Some((set, cost, next)) = stack.pop() {
            for v in next..n {
                let c = cost + self.costs[v];
                if self.adjacency[v] & set == 0 && c <= self.battery {
                    let grown = set | 1 << v;
                    out.push(grown);
                    stack.push((grown, c, v + 1));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Fewest feasible independent sets partitioning `remaining`.
    fn drones(&mut self, remaining: u64) -> u8 {
        if remaining == 0 {
            return 0;
        }
        if let Some(&d) = self.memo.get(&remaining) {
            return d;
        }
        let j = remaining.trailing_zeros() as usize;
        let mut blocks = Vec::new();
        self.maximal_blocks(remaining, 1 << j, self.costs[j], remaining & !(1 << j) & !self.adjacency[j], &mut blocks);
        let best = blocks.into_iter().map(|b| 1 + self.drones(remaining & !b)).min().expect("singleton block exists");
        self.memo.insert(remaining, best);
        best
    }

    /// Feasible sets inside `within` that contain `set` and cannot be grown
    /// inside `within`. Restricting to these loses nothing: any optimal
    /// block can be grown to a maximal one and the other blocks shrunk.
    fn maximal_blocks(&self, within: u64, set: u64, cost: Fixed, candidates: u64, out: &mut Vec<u64>) {
        let mut rest = candidates;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let c = cost + self.costs[v];
            if c <= self.battery {
                self.maximal_blocks(within, set | 1 << v, c, rest & !self.adjacency[v], out);
            }
        }
        let addable = (0..self.costs.len()).any(|v| {
            within >> v & 1 == 1
                && set >> v & 1 == 0
                && self.adjacency[v] & set == 0
                && cost + self.costs[v] <= self.battery
        });
        if !addable {
            out.push(set);
        }
    }
}

/// Ground-truth optimum for small instances. Returns the full feasible
/// family `I_B` (as a pool) and the minimum drone count.
pub fn enumerate_exact(
    g: &SchedGraph,
    inst: &DdppInstance,
    n_cap: usize,
) -> Result<(FeasiblePool, usize), PartitionError> {
    let n = inst.n();
    if n > n_cap || n >= 64 {
        return Err(PartitionError::TooLarge { n, cap: n_cap.min(63) });
    }
    if let Some(id) = inst.infeasible_delivery() {
        return Err(PartitionError::DeliveryExceedsBattery(id));
    }
    let adjacency = (0..n).map(|v| g.neighbors(v).nodes().fold(0u64, |m, u| m | 1 << u)).collect();
    let mut oracle = ExactOracle {
        adjacency,
        costs: (0..n).map(|j| inst.cost(j)).collect(),
        battery: inst.battery(),
        memo: HashMap::new(),
    };
    let family = oracle.all_feasible();
    let full = if n == 0 { 0 } else { u64::MAX >> (64 - n) };
    let d = oracle.drones(full) as usize;
    let pool = FeasiblePool::from_sets(n, family.into_iter().map(|m| NodeSet::from_mask(n, m)));
    Ok((pool, d))
}

/// First-fit coloring in departure order, then every class over budget is
/// split by moving its most expensive deliveries to a fresh class.
pub fn greedy_baseline(g: &SchedGraph, inst: &DdppInstance) -> PartitionSolution {
    let start = Instant::now();
    let n = inst.n();
    let d = inst.deliveries();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&j| (d[j].t_leave, d[j].t_return, j));
    let mut classes: Vec<NodeSet> = Vec::new();
    for j in order {
        match classes.iter_mut().find(|c| g.neighbors(j).is_disjoint(c)) {
            Some(c) => c.insert(j),
            None => classes.push(NodeSet::singleton(n, j)),
        }
    }
    let mut done = Vec::new();
    while let Some(mut class) = classes.pop() {
        if inst.within_budget(&class) || class.weight() <= 1 {
            done.push(class);
            continue;
        }
        let mut spill = NodeSet::empty(n);
        while !inst.within_budget(&class) && class.weight() > 1 {
            let victim = most_expensive(inst, class.nodes());
            class.remove(victim);
            spill.insert(victim);
        }
        classes.push(spill);
        done.push(class);
    }
    done.sort();
    let status =
        if done.iter().all(|c| inst.within_budget(c)) { SolveStatus::OptimalOverPool } else { SolveStatus::Infeasible };
    PartitionSolution { drones: done.len(), selected_sets: done, status, wall_time: start.elapsed() }
}

/// Number of colors used by first-fit in departure order, ignoring budget.
pub fn interval_coloring_count(g: &SchedGraph, inst: &DdppInstance) -> usize {
    let d = inst.deliveries();
    let mut order: Vec<usize> = (0..inst.n()).collect();
    order.sort_by_key(|&j| (d[j].t_leave, d[j].t_return, j));
    let mut classes: Vec<NodeSet> = Vec::new();
    for j in order {
        match classes.iter_mut().find(|c| g.neighbors(j).is_disjoint(c)) {
            Some(c) => c.insert(j),
            None => classes.push(NodeSet::singleton(inst.n(), j)),
        }
    }
    classes.len()
}

/// Approximation ratio and additive gap against the exact drone count.
pub fn metrics(d: usize, d_exact: usize) -> Result<(f64, i64), PartitionError> {
    if d_exact == 0 {
        return Err(PartitionError::DivisionByZeroGuard);
    }
    Ok((d as f64 / d_exact as f64, d as i64 - d_exact as i64))
}
