//! Delivery instances: data model, the randomized generator and the JSON
//! instance file.
//!
//! Times are minutes and costs battery-minutes, both held as [`Fixed`]
//! decimals. Two windows overlap only if they share an interior point; a
//! drone returning at `t` may relaunch at `t`.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::fixed::Fixed;
use crate::nodeset::NodeSet;
use crate::seeds;

pub const INSTANCE_FILE_VERSION: u32 = 1;

/// Window lengths are drawn from `[MIN_WINDOW, MAX_WINDOW]` minutes.
pub const MIN_WINDOW: Fixed = Fixed::from_int(5);
pub const MAX_WINDOW: Fixed = Fixed::from_int(15);
/// Windows live inside `[0, TIMESPAN_PER_DELIVERY * n]` minutes.
pub const TIMESPAN_PER_DELIVERY: i64 = 7;
/// No window may overlap more than this many others.
pub const MAX_OVERLAPS: usize = 5;
/// Cost weight factors are log-uniform on `[WEIGHT_FLOOR, WEIGHT_CEIL)`.
pub const WEIGHT_FLOOR: f64 = 1e-3;
pub const WEIGHT_CEIL: f64 = 0.3;
pub const GENERATION_ATTEMPTS: usize = 10_000;
const PLACEMENT_TRIES: usize = 2_000;

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),
    #[error("no valid {n}-delivery configuration found in {attempts} attempts")]
    GenerationExhausted { n: usize, attempts: usize },
    #[error("delivery {id}: {reason}")]
    InvalidDelivery { id: usize, reason: String },
    #[error("duplicate delivery id {0}")]
    DuplicateId(usize),
    #[error("delivery ids must be 0..{n}, found {id}")]
    IdOutOfRange { id: usize, n: usize },
    #[error("battery must be positive, got {0}")]
    InvalidBattery(Fixed),
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    #[error("instance file version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub id: usize,
    pub t_leave: Fixed,
    pub t_return: Fixed,
    pub cost: Fixed,
}

impl Delivery {
    pub fn window(&self) -> Fixed {
        self.t_return - self.t_leave
    }

    /// Open-interval overlap: touching endpoints do not conflict.
    pub fn overlaps(&self, other: &Delivery) -> bool {
        self.t_leave < other.t_return && other.t_leave < self.t_return
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DdppInstance {
    deliveries: Vec<Delivery>,
    battery: Fixed,
    seed: Option<u64>,
}

impl DdppInstance {
    /// Validates and stores the deliveries ordered by id.
    pub fn new(mut deliveries: Vec<Delivery>, battery: Fixed, seed: Option<u64>) -> Result<Self, InstanceError> {
        if battery <= Fixed::ZERO {
            return Err(InstanceError::InvalidBattery(battery));
        }
        let n = deliveries.len();
        let mut seen = vec![false; n];
        for d in &deliveries {
            if d.id >= n {
                return Err(InstanceError::IdOutOfRange { id: d.id, n });
            }
            if std::mem::replace(&mut seen[d.id], true) {
                return Err(InstanceError::DuplicateId(d.id));
            }
            if d.t_leave >= d.t_return {
                return Err(InstanceError::InvalidDelivery {
                    id: d.id,
                    reason: format!("t_leave {} is not before t_return {}", d.t_leave, d.t_return),
                });
            }
            if d.cost.is_negative() {
                return Err(InstanceError::InvalidDelivery { id: d.id, reason: format!("negative cost {}", d.cost) });
            }
        }
        deliveries.sort_by_key(|d| d.id);
        Ok(DdppInstance { deliveries, battery, seed })
    }

    pub fn n(&self) -> usize {
        self.deliveries.len()
    }

    pub fn deliveries(&self) -> &[Delivery] {
        &self.deliveries
    }

    pub fn delivery(&self, id: usize) -> &Delivery {
        &self.deliveries[id]
    }

    pub fn battery(&self) -> Fixed {
        self.battery
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn cost(&self, id: usize) -> Fixed {
        self.deliveries[id].cost
    }

    pub fn total_cost(&self) -> Fixed {
        self.deliveries.iter().map(|d| d.cost).sum()
    }

    pub fn max_cost(&self) -> Fixed {
        self.deliveries.iter().map(|d| d.cost).max().unwrap_or(Fixed::ZERO)
    }

    pub fn set_cost(&self, set: &NodeSet) -> Fixed {
        set.nodes().map(|j| self.deliveries[j].cost).sum()
    }

    pub fn within_budget(&self, set: &NodeSet) -> bool {
        self.set_cost(set) <= self.battery
    }

    /// A delivery costing more than the battery can never be flown.
    pub fn infeasible_delivery(&self) -> Option<usize> {
        self.deliveries.iter().find(|d| d.cost > self.battery).map(|d| d.id)
    }

    pub fn is_feasible_as_given(&self) -> bool {
        self.infeasible_delivery().is_none()
    }

    /// Relaxed average load per drone, `B * N / sum(c)`.
    pub fn target_weight(&self) -> f64 {
        let total = self.total_cost().to_f64();
        if total <= 0.0 {
            return f64::INFINITY;
        }
        self.battery.to_f64() * self.n() as f64 / total
    }

    /// Mean sample weight the pipeline aims for. Equals `target_weight`
    /// unless the overlap depth forces more drones than the battery does, in
    /// which case the deliveries are spread over that many drones.
    pub fn sampling_target(&self) -> f64 {
        let depth = self.max_overlap_depth().max(1);
        self.target_weight().min(self.n() as f64 / depth as f64)
    }

    /// Largest number of windows alive at one instant.
    pub fn max_overlap_depth(&self) -> usize {
        // At equal times returns sort before departures (open intervals).
        let mut events: Vec<(Fixed, i32)> =
            self.deliveries.iter().flat_map(|d| [(d.t_leave, 1), (d.t_return, -1)]).collect();
        events.sort();
        let mut depth = 0i32;
        let mut best = 0i32;
        for (_, delta) in events {
            depth += delta;
            best = best.max(depth);
        }
        best as usize
    }

    /// Lower bound on the drone count that needs no enumeration.
    pub fn drone_lower_bound(&self) -> usize {
        let total = self.total_cost().raw();
        let battery = self.battery.raw();
        let by_budget = ((total + battery - 1) / battery) as usize;
        self.max_overlap_depth().max(by_budget)
    }
}

/// Draws a random instance with `n` deliveries.
///
/// Windows are placed one at a time; a placement is redrawn when it would
/// exceed the overlap cap or leave the conflict graph disconnected. Ids are
/// assigned in order of departure time.
pub fn generate_instance(n: usize, battery: Fixed, rng_seed: u64) -> Result<DdppInstance, InstanceError> {
    if n < 2 {
        return Err(InstanceError::InvalidParameters(format!("need at least 2 deliveries, got {n}")));
    }
    if battery <= Fixed::ZERO {
        return Err(InstanceError::InvalidBattery(battery));
    }
    let mut rng = seeds::rng(rng_seed);
    let span = Fixed::from_int(TIMESPAN_PER_DELIVERY * n as i64);

    for _ in 0..GENERATION_ATTEMPTS {
        let Some(mut windows) = place_windows(n, span, &mut rng) else {
            continue;
        };
        windows.sort();
        let (lo, hi) = (WEIGHT_FLOOR.ln(), WEIGHT_CEIL.ln());
        let deliveries = windows
            .into_iter()
            .enumerate()
            .map(|(id, (t_leave, t_return))| {
                let w = rng.random_range(lo..hi).exp();
                let cost = Fixed::from_f64_floor(w * (t_return - t_leave).to_f64());
                Delivery { id, t_leave, t_return, cost }
            })
            .collect();
        return DdppInstance::new(deliveries, battery, Some(rng_seed));
    }
    Err(InstanceError::GenerationExhausted { n, attempts: GENERATION_ATTEMPTS })
}

fn place_windows(n: usize, span: Fixed, rng: &mut seeds::Rng) -> Option<Vec<(Fixed, Fixed)>> {
    let mut placed: Vec<(Fixed, Fixed)> = Vec::with_capacity(n);
    let mut degree: Vec<usize> = Vec::with_capacity(n);
    let mut neighbors = Vec::new();
    for _ in 0..n {
        let mut accepted = false;
        for _ in 0..PLACEMENT_TRIES {
            let len = rng.random_range(MIN_WINDOW.raw()..=MAX_WINDOW.raw());
            let start = rng.random_range(0..=span.raw() - len);
            let (a, b) = (Fixed::from_raw(start), Fixed::from_raw(start + len));
            neighbors.clear();
            neighbors.extend(placed.iter().enumerate().filter(|(_, &(l, r))| a < r && l < b).map(|(i, _)| i));
            // Joining the existing component keeps the graph connected.
            if !placed.is_empty() && neighbors.is_empty() {
                continue;
            }
            if neighbors.len() > MAX_OVERLAPS || neighbors.iter().any(|&i| degree[i] >= MAX_OVERLAPS) {
                continue;
            }
            for &i in &neighbors {
                degree[i] += 1;
            }
            placed.push((a, b));
            degree.push(neighbors.len());
            accepted = true;
            break;
        }
        if !accepted {
            return None;
        }
    }
    Some(placed)
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    version: u32,
    n: usize,
    battery: Fixed,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    deliveries: Vec<Delivery>,
}

impl DdppInstance {
    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            version: INSTANCE_FILE_VERSION,
            n: self.n(),
            battery: self.battery,
            seed: self.seed,
            deliveries: self.deliveries.clone(),
        };
        serde_json::to_string_pretty(&file).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(parse_error)?;
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or(InstanceError::Parse { line: None, message: "missing or non-integer field `version`".into() })?;
        if version != INSTANCE_FILE_VERSION as u64 {
            return Err(InstanceError::SchemaVersionMismatch {
                found: version as u32,
                expected: INSTANCE_FILE_VERSION,
            });
        }
        let file: InstanceFile = serde_json::from_str(text).map_err(parse_error)?;
        if file.n != file.deliveries.len() {
            return Err(InstanceError::Parse {
                line: None,
                message: format!("field `n` is {} but {} deliveries are listed", file.n, file.deliveries.len()),
            });
        }
        DdppInstance::new(file.deliveries, file.battery, file.seed)
            .map_err(|e| InstanceError::Parse { line: None, message: e.to_string() })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InstanceError> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

fn parse_error(e: serde_json::Error) -> InstanceError {
    InstanceError::Parse { line: Some(e.line()), message: e.to_string() }
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<DdppInstance, InstanceError> {
    DdppInstance::load(path)
}

pub fn save_instance(inst: &DdppInstance, path: impl AsRef<Path>) -> Result<(), InstanceError> {
    inst.save(path)
}
