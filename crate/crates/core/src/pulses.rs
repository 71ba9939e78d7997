//! Piecewise-linear adiabatic drive: Ω rises, holds, falls; δ holds at
//! `-3 Ω_max`, ramps linearly to `δ_max`, then holds. Times are in
//! nanoseconds and frequencies in rad/µs.

use std::fmt::Write as _;

pub const DELTA_MIN_FACTOR: f64 = -3.0;
pub const DEFAULT_PILOT_SHOTS: usize = 100;
pub const DEFAULT_DELTA_FACTORS: [f64; 7] = [-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5];
pub const DEFAULT_DURATIONS_NS: [f64; 5] = [300.0, 450.0, 600.0, 1000.0, 2000.0];
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PulseError {
    #[error("pulse duration {duration_ns} ns is invalid (minimum {floor_ns} ns)")]
    InvalidDuration { duration_ns: f64, floor_ns: f64 },
    #[error("omega_max must be positive and finite, got {0}")]
    InvalidAmplitude(f64),
    #[error("delta_max must be finite, got {0}")]
    InvalidDetuning(f64),
    #[error("tuning grid is empty")]
    EmptyGrid,
}

/// Time-dependent drive seen by the emulator. Between consecutive
/// breakpoints both waveforms are smooth.
pub trait Drive {
    fn duration_ns(&self) -> f64;
    fn omega(&self, t_ns: f64) -> f64;
    fn delta(&self, t_ns: f64) -> f64;
    /// Sorted segment boundaries, starting at 0 and ending at the duration.
    fn breakpoints(&self) -> Vec<f64>;
    /// Canonical text used to fingerprint the drive.
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSchedule {
    total_time_ns: f64,
    omega_max: f64,
    delta_min: f64,
    delta_max: f64,
    t_rise: f64,
    t_sweep: f64,
    t_fall: f64,
}

pub fn make_schedule(total_time_ns: f64, omega_max: f64, delta_max: f64) -> Result<PulseSchedule, PulseError> {
    make_schedule_with_floor(total_time_ns, omega_max, delta_max, 0.0)
}

/// As [`make_schedule`], rejecting durations below `floor_ns`.
pub fn make_schedule_with_floor(
    total_time_ns: f64,
    omega_max: f64,
    delta_max: f64,
    floor_ns: f64,
) -> Result<PulseSchedule, PulseError> {
    if !total_time_ns.is_finite() || total_time_ns <= 0.0 || total_time_ns < floor_ns {
        return Err(PulseError::InvalidDuration { duration_ns: total_time_ns, floor_ns });
    }
    if !omega_max.is_finite() || omega_max <= 0.0 {
        return Err(PulseError::InvalidAmplitude(omega_max));
    }
    if !delta_max.is_finite() {
        return Err(PulseError::InvalidDetuning(delta_max));
    }
    let t_rise = total_time_ns / 9.0;
    let t_sweep = 2.0 * total_time_ns / 3.0;
    Ok(PulseSchedule {
        total_time_ns,
        omega_max,
        delta_min: DELTA_MIN_FACTOR * omega_max,
        delta_max,
        t_rise,
        t_sweep,
        t_fall: total_time_ns - t_rise - t_sweep,
    })
}

impl PulseSchedule {
    pub fn total_time_ns(&self) -> f64 {
        self.total_time_ns
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    pub fn delta_min(&self) -> f64 {
        self.delta_min
    }

    pub fn delta_max(&self) -> f64 {
        self.delta_max
    }

    /// `(T_rise, T_sweep, T_fall)` in nanoseconds.
    pub fn segments(&self) -> (f64, f64, f64) {
        (self.t_rise, self.t_sweep, self.t_fall)
    }

    fn sweep_end(&self) -> f64 {
        self.t_rise + self.t_sweep
    }

    /// Samples both waveforms every `step_ns`, always including `t = T`.
    pub fn to_csv(&self, step_ns: f64) -> String {
        assert!(step_ns > 0.0, "step must be positive");
        let mut out = String::from("t_ns,omega,delta\n");
        let steps = (self.total_time_ns / step_ns).floor() as usize;
        let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * step_ns).collect();
        if times.last().is_some_and(|&t| t < self.total_time_ns) {
            times.push(self.total_time_ns);
        }
        for t in times {
            let _ = writeln!(out, "{t},{},{}", self.omega(t), self.delta(t));
        }
        out
    }
}

impl Drive for PulseSchedule {
    fn duration_ns(&self) -> f64 {
        self.total_time_ns
    }

    fn omega(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.total_time_ns {
            0.0
        } else if t < self.t_rise {
            self.omega_max * t / self.t_rise
        } else if t <= self.sweep_end() {
            self.omega_max
        } else {
            self.omega_max * (self.total_time_ns - t) / self.t_fall
        }
    }

    fn delta(&self, t: f64) -> f64 {
        if t <= self.t_rise {
            self.delta_min
        } else if t < self.sweep_end() {
            self.delta_min + (self.delta_max - self.delta_min) * (t - self.t_rise) / self.t_sweep
        } else {
            self.delta_max
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0, self.t_rise, self.sweep_end(), self.total_time_ns]
    }

    fn describe(&self) -> String {
        format!(
            "pulse T={:e} omega_max={:e} delta_min={:e} delta_max={:e}",
            self.total_time_ns, self.omega_max, self.delta_min, self.delta_max
        )
    }
}

/// Constant Ω and δ for a fixed duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantDrive {
    pub duration_ns: f64,
    pub omega: f64,
    pub delta: f64,
}

impl Drive for ConstantDrive {
    fn duration_ns(&self) -> f64 {
        self.duration_ns
    }

    fn omega(&self, _: f64) -> f64 {
        self.omega
    }

    fn delta(&self, _: f64) -> f64 {
        self.delta
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0, self.duration_ns]
    }

    fn describe(&self) -> String {
        format!("constant T={:e} omega={:e} delta={:e}", self.duration_ns, self.omega, self.delta)
    }
}

/// The default `(δ_max, T)` candidates for a given `Ω_max`.
pub fn default_grid(omega_max: f64) -> Vec<(f64, f64)> {
    DEFAULT_DELTA_FACTORS.iter().flat_map(|&f| DEFAULT_DURATIONS_NS.iter().map(move |&t| (f * omega_max, t))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub delta_max: f64,
    pub total_time_ns: f64,
    pub mean_weight: f64,
    /// `(δ_max, T, mean weight)` for every grid point, in grid order.
    pub evaluations: Vec<(f64, f64, f64)>,
}

/// Picks the grid point whose pilot mean weight is closest to `target`.
/// Ties go to the point at or below the target, then to the shorter pulse.
pub fn tune_delta_max<F>(target: f64, mut eval: F, grid: &[(f64, f64)]) -> Result<TuneResult, PulseError>
where
    F: FnMut(f64, f64) -> f64,
{
    if grid.is_empty() {
        return Err(PulseError::EmptyGrid);
    }
    let evaluations: Vec<(f64, f64, f64)> = grid.iter().map(|&(d, t)| (d, t, eval(d, t))).collect();
    Ok(select_tuned(target, evaluations))
}

/// Selection step of [`tune_delta_max`] on already evaluated points.
pub fn select_tuned(target: f64, evaluations: Vec<(f64, f64, f64)>) -> TuneResult {
    let better = |a: &(f64, f64, f64), b: &(f64, f64, f64)| {
        let (ea, eb) = ((a.2 - target).abs(), (b.2 - target).abs());
        if (ea - eb).abs() > TIE_TOLERANCE {
            return ea < eb;
        }
        let (below_a, below_b) = (a.2 <= target + TIE_TOLERANCE, b.2 <= target + TIE_TOLERANCE);
        if below_a != below_b {
            return below_a;
        }
        a.1 < b.1
    };
    let mut best = evaluations[0];
    for e in &evaluations[1..] {
        if better(e, &best) {
            best = *e;
        }
    }
    TuneResult { delta_max: best.0, total_time_ns: best.1, mean_weight: best.2, evaluations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const OMEGA: f64 = 2.0 * PI;

    #[test]
    fn reference_schedule_shape() {
        let s = make_schedule(450.0, OMEGA, -0.5 * OMEGA).unwrap();
        assert_eq!(s.segments(), (50.0, 300.0, 100.0));
        assert_eq!(s.delta(0.0), -3.0 * OMEGA);
        assert_eq!(s.omega(0.0), 0.0);
        assert_eq!(s.omega(450.0), 0.0);
        assert!((s.delta(200.0) - (s.delta_min() + s.delta_max()) / 2.0).abs() < 1e-12);
        assert_eq!(s.breakpoints(), vec![0.0, 50.0, 350.0, 450.0]);
    }

    #[test]
    fn segments_sum_exactly() {
        for t in [1.0, 7.0, 300.0, 451.3, 1000.0, 2000.0, 20000.0, 1e-3] {
            let s = make_schedule(t, OMEGA, 0.0).unwrap();
            let (a, b, c) = s.segments();
            assert!((a + b + c - t).abs() <= f64::EPSILON * t);
            assert!((a / t - 1.0 / 9.0).abs() < 1e-12 && (c / t - 2.0 / 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn waveforms_are_continuous() {
        let s = make_schedule(600.0, OMEGA, 0.25 * OMEGA).unwrap();
        for b in s.breakpoints() {
            for f in [|s: &PulseSchedule, t| s.omega(t), |s: &PulseSchedule, t| s.delta(t)] {
                assert!((f(&s, b - 1e-9) - f(&s, b + 1e-9)).abs() < 1e-6, "jump at {b}");
            }
        }
        assert_eq!(s.omega(s.segments().0), OMEGA);
        assert_eq!(s.delta(600.0), 0.25 * OMEGA);
    }

    #[test]
    fn invalid_parameters() {
        assert!(matches!(make_schedule(0.0, OMEGA, 0.0), Err(PulseError::InvalidDuration { .. })));
        assert!(matches!(make_schedule(-5.0, OMEGA, 0.0), Err(PulseError::InvalidDuration { .. })));
        assert!(matches!(make_schedule_with_floor(100.0, OMEGA, 0.0, 200.0), Err(PulseError::InvalidDuration { .. })));
        assert_eq!(make_schedule(100.0, 0.0, 0.0), Err(PulseError::InvalidAmplitude(0.0)));
        assert!(make_schedule(100.0, OMEGA, f64::NAN).is_err());
    }

    #[test]
    fn csv_dump() {
        let s = make_schedule(450.0, OMEGA, 0.0).unwrap();
        let csv = s.to_csv(100.0);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t_ns,omega,delta");
        assert_eq!(lines.len(), 1 + 6);
        assert!(lines[1].starts_with("0,0,"));
        assert!(lines[6].starts_with("450,0,0"));
    }

    #[test]
    fn single_point_grid() {
        let r = tune_delta_max(5.0, |_, _| 1.0, &[(0.3, 450.0)]).unwrap();
        assert_eq!((r.delta_max, r.total_time_ns, r.mean_weight), (0.3, 450.0, 1.0));
        assert_eq!(tune_delta_max(5.0, |_, _| 1.0, &[]), Err(PulseError::EmptyGrid));
    }

    #[test]
    fn ties_prefer_below_then_shorter() {
        let weights = |d: f64, _t: f64| if d > 0.0 { 5.4 } else { 4.6 };
        let r = tune_delta_max(5.0, weights, &[(1.0, 300.0), (-1.0, 300.0)]).unwrap();
        assert_eq!(r.delta_max, -1.0);
        let r = tune_delta_max(5.0, |_, _| 4.0, &[(0.0, 1000.0), (0.0, 450.0), (0.0, 2000.0)]).unwrap();
        assert_eq!(r.total_time_ns, 450.0);
        let r = tune_delta_max(5.0, |d, _| 5.0 + d, &[(-0.1, 300.0), (0.05, 600.0), (0.3, 300.0)]).unwrap();
        assert_eq!(r.delta_max, 0.05);
    }

    #[test]
    fn default_grid_shape() {
        let g = default_grid(OMEGA);
        assert_eq!(g.len(), 35);
        assert!(g.contains(&(-0.5 * OMEGA, 450.0)));
        assert!(g.contains(&(0.5 * OMEGA, 2000.0)));
    }
}
