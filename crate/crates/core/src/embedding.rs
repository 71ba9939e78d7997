//! Places one atom per delivery so that the blockade radius reproduces the
//! scheduling graph as a unit-disk graph: edges shorter than the radius,
//! non-edges longer.
//!
//! Positions are in micrometers. Registers are centered on the origin and
//! the area limit is a disk around it.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::schedgraph::SchedGraph;
use crate::seeds;

pub const REGISTER_FILE_VERSION: u32 = 1;
/// Interaction coefficient for the 70S Rydberg level of rubidium, rad·µm⁶/µs.
pub const DEFAULT_C6: f64 = 5_420_158.53;
pub const DEFAULT_MAX_RESTARTS: usize = 50;
const WINDOW_BUFFER: f64 = 1e-6;
const BLOCKADE_TOLERANCE: f64 = 1e-9;
/// Radius chosen relative to the only available distance when one side of
/// the window is missing (no edges or no non-edges).
const ONE_SIDED_FACTOR: f64 = 1.2;
const SPACING_STEP: f64 = 0.05;
const SCALE_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HardwareLimits {
    pub d_min: f64,
    pub r_area: f64,
    pub max_atoms: usize,
    pub omega_default: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub c6: f64,
}

impl Default for HardwareLimits {
    fn default() -> Self {
        HardwareLimits {
            d_min: 5.0,
            r_area: 35.0,
            max_atoms: 100,
            omega_default: 2.0 * PI,
            omega_min: PI,
            omega_max: 4.0 * PI,
            c6: DEFAULT_C6,
        }
    }
}

impl HardwareLimits {
    pub fn blockade_radius(&self, omega: f64) -> f64 {
        blockade_radius(self.c6, omega)
    }
}

pub fn blockade_radius(c6: f64, omega: f64) -> f64 {
    (c6 / omega).powf(1.0 / 6.0)
}

/// Fruchterman–Reingold settings, in layout units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutParams {
    /// Iterations are `ceil(iteration_factor * sqrt(n))`.
    pub iteration_factor: f64,
    /// Optimal pair distance.
    pub k: f64,
    /// Initial temperature as a fraction of the initial square side.
    pub initial_temperature: f64,
    /// Constraint-relaxation sweeps applied after the force layout; 0 keeps
    /// the raw force layout.
    pub refine_sweeps: usize,
    /// Relative gap the refinement keeps on both sides of the radius.
    pub refine_margin: f64,
    /// Pair spacing the refinement aims for first, as a fraction of the
    /// radius. It is lowered step by step to the hardware minimum when the
    /// graph does not allow it. Closer pairs interact more strongly, which
    /// makes emulation slower.
    pub refine_spacing: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            iteration_factor: 50.0,
            k: 1.0,
            initial_temperature: 0.1,
            refine_sweeps: 1000,
            refine_margin: 0.1,
            refine_spacing: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("no unit-disk window found after {restarts} layouts")]
    NoUdgWindowFound { restarts: usize },
    #[error("hardware limits cannot be met: {0}")]
    HardwareInfeasible(String),
}

#[derive(Debug, thiserror::Error)]
pub enum RegisterFileError {
    #[error("malformed register file: {0}")]
    Parse(String),
    #[error("register file version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("r_blockade {found} disagrees with (c6/omega_max)^(1/6) = {expected}")]
    BlockadeMismatch { found: f64, expected: f64 },
    #[error("atom ids must be 0..{n} in order")]
    BadIds { n: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomRegister {
    pub positions: Vec<[f64; 2]>,
    pub omega_max: f64,
    pub c6: f64,
}

#[derive(Serialize, Deserialize)]
struct RegisterFile {
    version: u32,
    omega_max: f64,
    c6: f64,
    r_blockade: f64,
    atoms: Vec<AtomEntry>,
}

#[derive(Serialize, Deserialize)]
struct AtomEntry {
    id: usize,
    x: f64,
    y: f64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl AtomRegister {
    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn r_blockade(&self) -> f64 {
        blockade_radius(self.c6, self.omega_max)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        dist(self.positions[i], self.positions[j])
    }

    /// Multiplies every coordinate and the blockade radius by `factor`.
    pub fn scaled(&self, factor: f64) -> AtomRegister {
        AtomRegister {
            positions: self.positions.iter().map(|p| [p[0] * factor, p[1] * factor]).collect(),
            omega_max: self.omega_max,
            c6: self.c6 * factor.powi(6),
        }
    }

    pub fn to_json(&self) -> String {
        let file = RegisterFile {
            version: REGISTER_FILE_VERSION,
            omega_max: self.omega_max,
            c6: self.c6,
            r_blockade: self.r_blockade(),
            atoms: self.positions.iter().enumerate().map(|(id, p)| AtomEntry { id, x: p[0], y: p[1] }).collect(),
        };
        serde_json::to_string_pretty(&file).expect("register serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RegisterFileError> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| RegisterFileError::Parse(e.to_string()))?;
        let found = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != REGISTER_FILE_VERSION {
            return Err(RegisterFileError::SchemaVersionMismatch { found, expected: REGISTER_FILE_VERSION });
        }
        let file: RegisterFile = serde_json::from_value(raw).map_err(|e| RegisterFileError::Parse(e.to_string()))?;
        if file.atoms.iter().enumerate().any(|(i, a)| a.id != i) {
            return Err(RegisterFileError::BadIds { n: file.atoms.len() });
        }
        let reg = AtomRegister {
            positions: file.atoms.iter().map(|a| [a.x, a.y]).collect(),
            omega_max: file.omega_max,
            c6: file.c6,
        };
        let expected = reg.r_blockade();
        if !((file.r_blockade - expected).abs() <= BLOCKADE_TOLERANCE * expected) {
            return Err(RegisterFileError::BlockadeMismatch { found: file.r_blockade, expected });
        }
        Ok(reg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RegisterFileError> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegisterFileError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Force-directed layout from a random start in a square of area `n`.
pub fn fruchterman_reingold(g: &SchedGraph, params: &LayoutParams, rng: &mut seeds::Rng) -> Vec<[f64; 2]> {
    let n = g.n();
    let side = (n as f64).sqrt().max(1.0);
    let mut pos: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side]).collect();
    let iterations = (params.iteration_factor * (n as f64).sqrt()).ceil() as usize;
    let k2 = params.k * params.k;
    let t0 = params.initial_temperature * side;
    let mut disp = vec![[0.0f64; 2]; n];
    for it in 0..iterations {
        let temp = t0 * (1.0 - it as f64 / iterations as f64);
        disp.iter_mut().for_each(|d| *d = [0.0, 0.0]);
        for i in 0..n {
            for j in i + 1..n {
                let mut dx = pos[i][0] - pos[j][0];
                let mut dy = pos[i][1] - pos[j][1];
                let mut d = dx.hypot(dy);
                if d < 1e-9 {
                    // Coincident points: push apart along an arbitrary direction.
                    dx = 1e-3 * (1 + i) as f64;
                    dy = 1e-3 * (1 + j) as f64;
                    d = dx.hypot(dy);
                }
                let mut f = k2 / d;
                if g.has_edge(i, j) {
                    f -= d * d / params.k;
                }
                let (fx, fy) = (dx / d * f, dy / d * f);
                disp[i][0] += fx;
                disp[i][1] += fy;
                disp[j][0] -= fx;
                disp[j][1] -= fy;
            }
        }
        for (p, d) in pos.iter_mut().zip(&disp) {
            let len = d[0].hypot(d[1]);
            if len > 0.0 {
                let step = len.min(temp);
                p[0] += d[0] / len * step;
                p[1] += d[1] / len * step;
            }
        }
    }
    pos
}

/// Nudges a layout, in place, toward a unit-disk realization with radius 1:
/// edges no longer than `1 - margin`, non-edges no shorter than
/// `1 + margin`, and every pair at least `spacing` apart. Each sweep visits
/// pairs in index order and splits every correction evenly between the two
/// atoms. Returns whether all constraints hold.
pub fn refine_layout(g: &SchedGraph, pos: &mut [[f64; 2]], margin: f64, spacing: f64, sweeps: usize) -> bool {
    let n = pos.len();
    let (near, far) = (1.0 - margin, 1.0 + margin);
    for _ in 0..sweeps {
        let mut clean = true;
        for i in 0..n {
            for j in i + 1..n {
                let dx = pos[j][0] - pos[i][0];
                let dy = pos[j][1] - pos[i][1];
                let d = dx.hypot(dy).max(1e-12);
                let mut target = d.max(spacing);
                if g.has_edge(i, j) {
                    target = target.min(near).max(spacing.min(near));
                } else {
                    target = target.max(far);
                }
                if (target - d).abs() <= 1e-12 {
                    continue;
                }
                clean = false;
                // Slight overshoot keeps the sweep from stalling on the boundary.
                let shift = 0.5 * (target - d) * 1.01 / d;
                let (ux, uy) = if d > 1e-9 { (dx, dy) } else { (1e-3 * (1 + i) as f64, 1e-3 * (1 + j) as f64) };
                pos[i][0] -= ux * shift;
                pos[i][1] -= uy * shift;
                pos[j][0] += ux * shift;
                pos[j][1] += uy * shift;
            }
        }
        if clean {
            return true;
        }
    }
    false
}

/// Largest edge distance and smallest non-edge distance of a layout.
/// Missing sides are reported as `0` and `inf` respectively.
pub fn udg_window(g: &SchedGraph, pos: &[[f64; 2]]) -> (f64, f64) {
    let (mut d_l, mut d_r) = (0.0f64, f64::INFINITY);
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            let d = dist(pos[i], pos[j]);
            if g.has_edge(i, j) {
                d_l = d_l.max(d);
            } else {
                d_r = d_r.min(d);
            }
        }
    }
    (d_l, d_r)
}

enum Attempt {
    NoWindow,
    Hardware(String),
    Done(AtomRegister),
}

fn scale_to_hardware(pos: &[[f64; 2]], d_l: f64, d_r: f64, hw: &HardwareLimits) -> Attempt {
    let (xs, ys): (Vec<f64>, Vec<f64>) = pos.iter().map(|p| (p[0], p[1])).unzip();
    let mid = |v: &[f64]| {
        0.5 * (v.iter().cloned().fold(f64::INFINITY, f64::min) + v.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    };
    let center = [mid(&xs), mid(&ys)];
    let centered: Vec<[f64; 2]> = pos.iter().map(|p| [p[0] - center[0], p[1] - center[1]]).collect();
    let max_radius = centered.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
    let min_pair = min_pair_distance(&centered);
    let r_target = match (d_l > 0.0, d_r.is_finite()) {
        (true, true) => (d_l * d_r).sqrt(),
        (true, false) => {
            // Tight cliques may not afford the full factor within the omega range.
            let room = blockade_radius(hw.c6, hw.omega_min) * min_pair / (hw.d_min * d_l) * (1.0 - SCALE_GUARD);
            d_l * ONE_SIDED_FACTOR.min(room).max(1.0 + WINDOW_BUFFER)
        }
        (false, true) => d_r / ONE_SIDED_FACTOR,
        (false, false) => 1.0,
    };

    // Feasible blockade radii: the layout scale is r_b / r_target.
    let mut lo = blockade_radius(hw.c6, hw.omega_max);
    let mut hi = blockade_radius(hw.c6, hw.omega_min);
    if min_pair.is_finite() {
        lo = lo.max(hw.d_min * r_target / min_pair * (1.0 + SCALE_GUARD));
    }
    if max_radius > 0.0 {
        hi = hi.min(hw.r_area * r_target / max_radius * (1.0 - SCALE_GUARD));
    }
    if lo > hi {
        return Attempt::Hardware(format!(
            "layout needs blockade radius in [{lo:.3}, {hi:.3}] um, which the allowed omega range and area cannot provide"
        ));
    }
    let r_b = blockade_radius(hw.c6, hw.omega_default).clamp(lo, hi);
    let omega = hw.c6 / r_b.powi(6);
    let s = r_b / r_target;
    Attempt::Done(AtomRegister {
        positions: centered.iter().map(|p| [p[0] * s, p[1] * s]).collect(),
        omega_max: omega,
        c6: hw.c6,
    })
}

fn min_pair_distance(pos: &[[f64; 2]]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            best = best.min(dist(pos[i], pos[j]));
        }
    }
    best
}

fn attempt(g: &SchedGraph, hw: &HardwareLimits, params: &LayoutParams, seed: u64, index: u64) -> Attempt {
    let mut rng = seeds::stream(seed, index);
    let mut pos = fruchterman_reingold(g, params, &mut rng);
    if params.refine_sweeps > 0 && g.n() > 1 {
        let (d_l, d_r) = udg_window(g, &pos);
        let unit = match (d_l > 0.0, d_r.is_finite()) {
            (true, true) => (d_l * d_r).sqrt(),
            (true, false) => d_l,
            (false, true) => d_r,
            (false, false) => 1.0,
        };
        pos.iter_mut().for_each(|p| *p = [p[0] / unit, p[1] / unit]);
        // Try generous spacing first and step down to the hardware floor;
        // dense cliques cannot keep all pairs far apart.
        let floor = hw.d_min / hw.blockade_radius(hw.omega_default);
        let mut spacings = Vec::new();
        let mut s = params.refine_spacing;
        while s > floor {
            spacings.push(s);
            s -= SPACING_STEP;
        }
        spacings.push(floor);
        for spacing in spacings {
            let mut trial = pos.clone();
            let clean = refine_layout(g, &mut trial, params.refine_margin, spacing, params.refine_sweeps);
            if clean || spacing == floor {
                pos = trial;
                break;
            }
        }
    }
    let (d_l, d_r) = udg_window(g, &pos);
    if d_l > 0.0 && d_r.is_finite() && d_r / d_l <= 1.0 + WINDOW_BUFFER {
        return Attempt::NoWindow;
    }
    scale_to_hardware(&pos, d_l, d_r, hw)
}

pub fn embed_graph(
    g: &SchedGraph,
    hw: &HardwareLimits,
    max_restarts: usize,
    rng_seed: u64,
) -> Result<AtomRegister, EmbeddingError> {
    embed_graph_with(g, hw, &LayoutParams::default(), max_restarts, rng_seed)
}

/// Runs up to `max_restarts` independent layouts (at least one) and returns
/// the lowest-index success, so the result does not depend on scheduling.
pub fn embed_graph_with(
    g: &SchedGraph,
    hw: &HardwareLimits,
    params: &LayoutParams,
    max_restarts: usize,
    rng_seed: u64,
) -> Result<AtomRegister, EmbeddingError> {
    if g.n() == 0 {
        return Err(EmbeddingError::EmptyGraph);
    }
    if g.n() > hw.max_atoms {
        return Err(EmbeddingError::HardwareInfeasible(format!(
            "{} atoms exceed the {} atom limit",
            g.n(),
            hw.max_atoms
        )));
    }
    let attempts = max_restarts.max(1);
    let chunk = rayon::current_num_threads().max(1) as u64;
    let mut hardware = None;
    let mut start = 0;
    while start < attempts as u64 {
        let end = (start + chunk).min(attempts as u64);
        let results: Vec<Attempt> = (start..end).into_par_iter().map(|i| attempt(g, hw, params, rng_seed, i)).collect();
        for r in results {
            match r {
                Attempt::Done(reg) => return Ok(reg),
                Attempt::Hardware(msg) => hardware = hardware.or(Some(msg)),
                Attempt::NoWindow => {}
            }
        }
        start = end;
    }
    Err(match hardware {
        Some(msg) => EmbeddingError::HardwareInfeasible(msg),
        None => EmbeddingError::NoUdgWindowFound { restarts: attempts },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// Edges at or beyond the blockade radius, with their length.
    pub edge_violations: Vec<(usize, usize, f64)>,
    /// Non-edges at or inside the blockade radius, with their length.
    pub non_edge_violations: Vec<(usize, usize, f64)>,
    /// Pairs closer than the hardware minimum spacing.
    pub spacing_violations: Vec<(usize, usize, f64)>,
    /// Atoms outside the allowed disk, with their distance from the origin.
    pub area_violations: Vec<(usize, f64)>,
    pub d_l: f64,
    pub d_r: f64,
    /// `d_r - d_l`; positive when a unit-disk window exists.
    pub margin: f64,
    pub r_blockade: f64,
    pub atom_count_ok: bool,
}

impl ValidationReport {
    pub fn udg_ok(&self) -> bool {
        self.edge_violations.is_empty() && self.non_edge_violations.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        self.udg_ok() && self.spacing_violations.is_empty() && self.area_violations.is_empty() && self.atom_count_ok
    }

    pub fn violation_count(&self) -> usize {
        self.edge_violations.len()
            + self.non_edge_violations.len()
            + self.spacing_violations.len()
            + self.area_violations.len()
            + usize::from(!self.atom_count_ok)
    }
}

pub fn validate_register(reg: &AtomRegister, g: &SchedGraph, hw: &HardwareLimits) -> ValidationReport {
    assert_eq!(reg.n(), g.n(), "register and graph sizes differ");
    let r_b = reg.r_blockade();
    let mut report = ValidationReport {
        edge_violations: Vec::new(),
        non_edge_violations: Vec::new(),
        spacing_violations: Vec::new(),
        area_violations: Vec::new(),
        d_l: 0.0,
        d_r: f64::INFINITY,
        margin: 0.0,
        r_blockade: r_b,
        atom_count_ok: reg.n() <= hw.max_atoms,
    };
    for i in 0..reg.n() {
        let r = reg.positions[i][0].hypot(reg.positions[i][1]);
        if r > hw.r_area {
            report.area_violations.push((i, r));
        }
        for j in i + 1..reg.n() {
            let d = reg.distance(i, j);
            if g.has_edge(i, j) {
                report.d_l = report.d_l.max(d);
                if d >= r_b {
                    report.edge_violations.push((i, j, d));
                }
            } else {
                report.d_r = report.d_r.min(d);
                if d <= r_b {
                    report.non_edge_violations.push((i, j, d));
                }
            }
            if d < hw.d_min {
                report.spacing_violations.push((i, j, d));
            }
        }
    }
    report.margin = report.d_r - report.d_l;
    report
}
