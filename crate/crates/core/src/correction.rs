//! Greedy repair of raw bitstrings into battery- and time-feasible drone
//! schedules, and the deduplicated pool handed to the partition solver.
//!
//! Repair runs in two stages. The first removes nodes of maximal conflict
//! degree until the set is independent; while the set is also over budget
//! the most expensive such node goes first, otherwise one is drawn
//! uniformly. The second drops the most expensive nodes until the budget
//! holds. Cost ties always resolve to the lowest id. Every pool also
//! receives all singletons so an exact cover always exists.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::instances::DdppInstance;
use crate::nodeset::NodeSet;
use crate::samples::{parse_bitstrings, parse_header, SampleFileError, SamplePool};
use crate::schedgraph::SchedGraph;
use crate::seeds;

pub const POOL_FILE_VERSION: u32 = 1;
const MAGIC: &str = "ddpp-pool";

#[derive(Debug, thiserror::Error)]
pub enum CorrectionError {
    #[error("samples have {found} nodes, instance has {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("delivery {0} costs more than the battery; no feasible schedule contains it")]
    DeliveryExceedsBattery(usize),
}

/// Removes max-conflict nodes until `s` is independent in `g`.
pub fn enforce_is(g: &SchedGraph, inst: &DdppInstance, s: &NodeSet, rng: &mut seeds::Rng) -> NodeSet {
    enforce_is_counted(g, inst, s, rng).0
}

fn enforce_is_counted(g: &SchedGraph, inst: &DdppInstance, s: &NodeSet, rng: &mut seeds::Rng) -> (NodeSet, usize) {
    let mut set = s.clone();
    let mut removed = 0;
    loop {
        let degrees = g.conflict_degrees(&set).expect("length checked by caller");
        let top = degrees.iter().copied().max().unwrap_or(0);
        if top == 0 {
            return (set, removed);
        }
        let candidates: Vec<usize> = (0..set.len()).filter(|&v| degrees[v] == top).collect();
        let victim = if inst.within_budget(&set) {
            *candidates.choose(rng).expect("nonempty")
        } else {
            most_expensive(inst, candidates.into_iter())
        };
        set.remove(victim);
        removed += 1;
    }
}

pub(crate) fn most_expensive(inst: &DdppInstance, nodes: impl Iterator<Item = usize>) -> usize {
    // max_by_key keeps the last maximum; reversing yields the lowest id.
    let nodes: Vec<usize> = nodes.collect();
    nodes.into_iter().rev().max_by_key(|&v| inst.cost(v)).expect("nonempty candidate list")
}

/// Drops the most expensive nodes of `s` until its cost fits the battery.
pub fn enforce_budget(inst: &DdppInstance, s: &NodeSet) -> NodeSet {
    enforce_budget_counted(inst, s).0
}

fn enforce_budget_counted(inst: &DdppInstance, s: &NodeSet) -> (NodeSet, usize) {
    let mut set = s.clone();
    let mut cost = inst.set_cost(&set);
    let mut removed = 0;
    while cost > inst.battery() {
        let victim = most_expensive(inst, set.nodes());
        cost = cost - inst.cost(victim);
        set.remove(victim);
        removed += 1;
    }
    (set, removed)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionStats {
    pub raw_samples: usize,
    /// Raw samples that were already independent sets.
    pub raw_valid_is: usize,
    /// Raw samples that were independent and within budget.
    pub raw_feasible: usize,
    pub is_removals: usize,
    pub budget_removals: usize,
    /// Samples changed by the independence stage.
    pub repaired_is: usize,
    /// Samples changed by the budget stage.
    pub repaired_budget: usize,
    pub distinct_sets: usize,
    /// Singletons that had to be added because no sample produced them.
    pub singletons_added: usize,
}

/// Deduplicated feasible schedules, sorted by bitstring, with the number of
/// raw samples that were repaired into each one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasiblePool {
    n: usize,
    sets: Vec<NodeSet>,
    origin_counts: Vec<usize>,
    pub stats: CorrectionStats,
}

impl FeasiblePool {
    /// Wraps arbitrary sets (deduplicated); no feasibility check is made.
    pub fn from_sets(n: usize, sets: impl IntoIterator<Item = NodeSet>) -> Self {
        let counts: BTreeMap<NodeSet, usize> = sets.into_iter().map(|s| (s, 0)).collect();
        Self::from_counts(n, counts, CorrectionStats::default())
    }

    fn from_counts(n: usize, counts: BTreeMap<NodeSet, usize>, mut stats: CorrectionStats) -> Self {
        assert!(counts.keys().all(|s| s.len() == n));
        let (sets, origin_counts): (Vec<_>, Vec<_>) = counts.into_iter().unzip();
        stats.distinct_sets = sets.len();
        FeasiblePool { n, sets, origin_counts, stats }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sets(&self) -> &[NodeSet] {
        &self.sets
    }

    pub fn origin_counts(&self) -> &[usize] {
        &self.origin_counts
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn missing_singleton(&self) -> Option<usize> {
        let mut have = vec![false; self.n];
        for s in self.sets.iter().filter(|s| s.weight() == 1) {
            have[s.first().expect("weight one")] = true;
        }
        have.iter().position(|&h| !h)
    }

    /// First member that is not an independent set or exceeds the battery.
    pub fn first_infeasible(&self, g: &SchedGraph, inst: &DdppInstance) -> Option<&NodeSet> {
        self.sets.iter().find(|s| !g.is_independent_set(s).unwrap_or(false) || !inst.within_budget(s))
    }

    /// Bitstring file; multiplicities and statistics go to the sidecar.
    pub fn to_text(&self) -> String {
        let mut out = format!("# {MAGIC} v{POOL_FILE_VERSION} n={} sets={}\n", self.n, self.len());
        for s in &self.sets {
            let _ = writeln!(out, "{s}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SampleFileError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let (_, header) = lines.next().ok_or(SampleFileError::Parse { line: 1, message: "empty file".into() })?;
        let header = parse_header(header, MAGIC, POOL_FILE_VERSION)?;
        let n = header.usize_field("n")?;
        let count = header.usize_field("sets")?;
        let sets = parse_bitstrings(lines, n)?;
        if sets.len() != count {
            return Err(SampleFileError::Parse {
                line: 1,
                message: format!("header says sets={count} but {} follow", sets.len()),
            });
        }
        Ok(Self::from_sets(n, sets))
    }

    pub fn sidecar(&self) -> PoolSidecar {
        PoolSidecar {
            version: POOL_FILE_VERSION,
            n: self.n,
            multiplicities: self.origin_counts.clone(),
            stats: self.stats.clone(),
        }
    }

    /// Writes `path` and `path.json` (multiplicities and statistics).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SampleFileError> {
        let path = path.as_ref();
        fs::write(path, self.to_text())?;
        let sidecar = serde_json::to_string_pretty(&self.sidecar()).expect("sidecar serializes");
        fs::write(sidecar_path(path), sidecar + "\n")?;
        Ok(())
    }

    /// Reads the bitstring file and, when present and consistent, the sidecar.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SampleFileError> {
        let path = path.as_ref();
        let mut pool = Self::from_text(&fs::read_to_string(path)?)?;
        if let Ok(text) = fs::read_to_string(sidecar_path(path)) {
            let side: PoolSidecar = serde_json::from_str(&text)
                .map_err(|e| SampleFileError::Parse { line: e.line(), message: format!("sidecar: {e}") })?;
            if side.multiplicities.len() == pool.len() && side.n == pool.n {
                pool.origin_counts = side.multiplicities;
                pool.stats = side.stats;
            }
        }
        Ok(pool)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSidecar {
    pub version: u32,
    pub n: usize,
    pub multiplicities: Vec<usize>,
    pub stats: CorrectionStats,
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}

struct Repaired {
    set: NodeSet,
    raw_valid_is: bool,
    raw_feasible: bool,
    is_removals: usize,
    budget_removals: usize,
}

/// Repairs every raw sample, deduplicates, and adds all singletons.
/// Random choices for sample `i` use stream `i` of `rng_seed`.
pub fn build_pool(
    g: &SchedGraph,
    inst: &DdppInstance,
    raw: &SamplePool,
    rng_seed: u64,
) -> Result<FeasiblePool, CorrectionError> {
    let n = inst.n();
    if raw.n() != n || g.n() != n {
        return Err(CorrectionError::LengthMismatch { expected: n, found: raw.n() });
    }
    if let Some(id) = inst.infeasible_delivery() {
        return Err(CorrectionError::DeliveryExceedsBattery(id));
    }
    let repaired: Vec<Repaired> = raw
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = seeds::stream(rng_seed, i as u64);
            let raw_valid_is = g.is_independent_set(s).expect("length checked");
            let raw_feasible = raw_valid_is && inst.within_budget(s);
            let (set, is_removals) = enforce_is_counted(g, inst, s, &mut rng);
            let (set, budget_removals) = enforce_budget_counted(inst, &set);
            Repaired { set, raw_valid_is, raw_feasible, is_removals, budget_removals }
        })
        .collect();

    let mut stats = CorrectionStats { raw_samples: raw.len(), ..Default::default() };
    let mut counts: BTreeMap<NodeSet, usize> = BTreeMap::new();
    for r in repaired {
        stats.raw_valid_is += r.raw_valid_is as usize;
        stats.raw_feasible += r.raw_feasible as usize;
        stats.is_removals += r.is_removals;
        stats.budget_removals += r.budget_removals;
        stats.repaired_is += (r.is_removals > 0) as usize;
        stats.repaired_budget += (r.budget_removals > 0) as usize;
        // An all-zero sample repairs to the empty set, which schedules nothing.
        if !r.set.is_empty() {
            *counts.entry(r.set).or_default() += 1;
        }
    }
    for v in 0..n {
        counts.entry(NodeSet::singleton(n, v)).or_insert_with(|| {
            stats.singletons_added += 1;
            0
        });
    }
    Ok(FeasiblePool::from_counts(n, counts, stats))
}
