//! JSON files owned by the command line: tuning grids and schedules.

use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use ddpp_core::embedding::AtomRegister;
use ddpp_core::pulses::{
    make_schedule, PulseSchedule, TuneResult, DEFAULT_DELTA_FACTORS, DEFAULT_DURATIONS_NS, DEFAULT_PILOT_SHOTS,
};

pub const GRID_FILE_VERSION: u32 = 1;
pub const SCHEDULE_FILE_VERSION: u32 = 1;

/// Bad flags or input files (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Valid input that admits no acceptable result (exit code 2).
#[derive(Debug)]
pub struct Infeasible(pub String);

impl fmt::Display for Infeasible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Infeasible {}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn check_version(found: u32, expected: u32, what: &str) -> Result<()> {
    if found != expected {
        return Err(UsageError(format!("{what} file version {found} is not supported (expected {expected})")).into());
    }
    Ok(())
}

/// `(δ_max, T)` candidates. Detunings are multiples of the register's Ω_max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridFile {
    pub version: u32,
    pub delta_factors: Vec<f64>,
    pub durations_ns: Vec<f64>,
    pub pilot_shots: usize,
}

impl Default for GridFile {
    fn default() -> Self {
        GridFile {
            version: GRID_FILE_VERSION,
            delta_factors: DEFAULT_DELTA_FACTORS.to_vec(),
            durations_ns: DEFAULT_DURATIONS_NS.to_vec(),
            pilot_shots: DEFAULT_PILOT_SHOTS,
        }
    }
}

impl GridFile {
    pub fn validate(&self) -> Result<()> {
        check_version(self.version, GRID_FILE_VERSION, "grid")?;
        if self.points(1.0).is_empty() {
            return Err(UsageError("tuning grid is empty".into()).into());
        }
        Ok(())
    }

    pub fn points(&self, omega_max: f64) -> Vec<(f64, f64)> {
        self.delta_factors.iter().flat_map(|&f| self.durations_ns.iter().map(move |&t| (f * omega_max, t))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub delta_max: f64,
    pub total_time_ns: f64,
    pub mean_weight: f64,
}

/// A pulse schedule. Only the first four fields are needed to rebuild the
/// waveforms, so hand-written files can omit the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub version: u32,
    pub total_time_ns: f64,
    pub omega_max: f64,
    pub delta_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_mean_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evaluations: Vec<Evaluation>,
}

impl ScheduleFile {
    pub fn tuned(reg: &AtomRegister, target: f64, tuning: &TuneResult, hash: &str) -> Self {
        ScheduleFile {
            version: SCHEDULE_FILE_VERSION,
            total_time_ns: tuning.total_time_ns,
            omega_max: reg.omega_max,
            delta_max: tuning.delta_max,
            target_weight: Some(target),
            pilot_mean_weight: Some(tuning.mean_weight),
            schedule_hash: Some(hash.to_string()),
            evaluations: tuning
                .evaluations
                .iter()
                .map(|&(delta_max, total_time_ns, mean_weight)| Evaluation { delta_max, total_time_ns, mean_weight })
                .collect(),
        }
    }

    pub fn schedule(&self) -> Result<PulseSchedule> {
        check_version(self.version, SCHEDULE_FILE_VERSION, "schedule")?;
        Ok(make_schedule(self.total_time_ns, self.omega_max, self.delta_max)?)
    }
}
