//! State-vector emulation of a Rydberg atom register.
//!
//! The Hamiltonian, in rad/µs, is
//!
//! ```text
//! H(t) = Ω(t)/2 Σ_i σx_i − δ(t) Σ_i n_i + Σ_{i<j} C6/r_ij⁶ n_i n_j
//! ```
//!
//! so that a lone atom under constant Ω without detuning has
//! `P(|1⟩) = sin²(Ωt/2)`. Bit `j` of a basis index is the occupation of
//! atom `j`. The evolution starts from all atoms in the ground state and is
//! integrated with an adaptive Dormand–Prince 5(4) scheme, one drive segment
//! at a time so that no step straddles a kink in the waveforms.

use num_complex::Complex64;
use rand::Rng as _;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::embedding::AtomRegister;
use crate::nodeset::NodeSet;
use crate::pulses::Drive;
use crate::samples::SamplePool;
use crate::seeds;

pub const DEFAULT_N_CAP: usize = 16;
pub const DEFAULT_RTOL: f64 = 1e-8;
pub const DEFAULT_ATOL: f64 = 1e-10;
const NORM_DRIFT_LIMIT: f64 = 1e-6;
const NS_PER_US: f64 = 1e3;
const DENSE_MATRIX_CAP: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmulatorError {
    #[error("register has {n} atoms, the state-vector cap is {cap}; use the classical sampler")]
    RegisterTooLarge { n: usize, cap: usize },
    #[error("state norm drifted by {drift:e}; integration failed")]
    NormDriftExceeded { drift: f64 },
    #[error("step size underflow at t = {t_ns} ns")]
    StepSizeUnderflow { t_ns: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub n_cap: usize,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { n_cap: DEFAULT_N_CAP, rtol: DEFAULT_RTOL, atol: DEFAULT_ATOL, max_steps: 10_000_000 }
    }
}

/// Time-independent parts of the Hamiltonian, tabulated per basis state.
#[derive(Debug, Clone, PartialEq)]
pub struct RydbergHamiltonian {
    n: usize,
    /// `(i, j, V_ij)` for every pair `i < j`.
    pairs: Vec<(usize, usize, f64)>,
    interaction: Vec<f64>,
    occupation: Vec<f64>,
}

impl RydbergHamiltonian {
    /// `v(i, j)` gives the interaction of atoms `i < j` in rad/µs.
    pub fn new(n: usize, v: impl Fn(usize, usize) -> f64) -> Self {
        let pairs: Vec<(usize, usize, f64)> =
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| (i, j, v(i, j))).collect();
        let dim = 1usize << n;
        let mut interaction = vec![0.0; dim];
        for &(i, j, vij) in &pairs {
            let both = (1usize << i) | (1usize << j);
            for (k, e) in interaction.iter_mut().enumerate() {
                if k & both == both {
                    *e += vij;
                }
            }
        }
        let occupation = (0..dim).map(|k: usize| k.count_ones() as f64).collect();
        RydbergHamiltonian { n, pairs, interaction, occupation }
    }

    pub fn from_register(reg: &AtomRegister) -> Self {
        Self::new(reg.n(), |i, j| reg.c6 / reg.distance(i, j).powi(6))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }

    /// `out = -i H ψ` for the given drive values.
    fn rhs(&self, omega: f64, delta: f64, psi: &[Complex64], out: &mut [Complex64]) {
        for ((o, p), (v, occ)) in out.iter_mut().zip(psi).zip(self.interaction.iter().zip(&self.occupation)) {
            *o = p * (v - delta * occ);
        }
        let half = 0.5 * omega;
        if half != 0.0 {
            // Flipping bit j pairs index blocks [base, base + b) and [base + b, base + 2b).
            for j in 0..self.n {
                let b = 1usize << j;
                if b < 8 {
                    // Blocks too short for the slice loops to pay off.
                    for (i, o) in out.iter_mut().enumerate() {
                        *o += psi[i ^ b] * half;
                    }
                    continue;
                }
                for (o, p) in out.chunks_exact_mut(2 * b).zip(psi.chunks_exact(2 * b)) {
                    let (o_lo, o_hi) = o.split_at_mut(b);
                    let (p_lo, p_hi) = p.split_at(b);
                    for (x, y) in o_lo.iter_mut().zip(p_hi) {
                        *x += y * half;
                    }
                    for (x, y) in o_hi.iter_mut().zip(p_lo) {
                        *x += y * half;
                    }
                }
            }
        }
        // -i (a + ib) = b - ia
        for o in out.iter_mut() {
            *o = Complex64::new(o.im, -o.re);
        }
    }

    /// Upper bound on the spectral radius for drive values up to the given
    /// magnitudes.
    fn spectral_bound(&self, omega: f64, delta: f64) -> f64 {
        let diag =
            self.interaction.iter().zip(&self.occupation).map(|(v, o)| (v - delta * o).abs()).fold(0.0, f64::max);
        diag + 0.5 * omega.abs() * self.n as f64
    }

    /// Dense `H` for small registers, row-major.
    pub fn dense_matrix(&self, omega: f64, delta: f64) -> Vec<Vec<Complex64>> {
        assert!(self.n <= DENSE_MATRIX_CAP, "dense matrix limited to {DENSE_MATRIX_CAP} atoms");
        let dim = 1usize << self.n;
        let mut h = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
        for (k, row) in h.iter_mut().enumerate() {
            row[k] = Complex64::new(self.interaction[k] - delta * self.occupation[k], 0.0);
            for j in 0..self.n {
                row[k ^ (1 << j)] += Complex64::new(0.5 * omega, 0.0);
            }
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    n: usize,
    amplitudes: Vec<Complex64>,
    /// Fingerprint of the register and drive that produced the state.
    pub label: String,
}

impl QuantumState {
    /// All atoms in the ground state.
    pub fn ground(n: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        QuantumState { n, amplitudes, label: String::new() }
    }

    /// Wraps raw amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Self {
        assert!(amplitudes.len().is_power_of_two(), "length must be a power of two");
        QuantumState { n: amplitudes.len().trailing_zeros() as usize, amplitudes, label: String::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(Complex64::norm_sqr).collect()
    }

    pub fn probability_of(&self, set: &NodeSet) -> f64 {
        let index = set.nodes().fold(0usize, |k, j| k | 1 << j);
        self.amplitudes[index].norm_sqr()
    }

    /// Exact expectation of the number of excited atoms.
    pub fn mean_weight(&self) -> f64 {
        self.amplitudes.iter().enumerate().map(|(k, a)| a.norm_sqr() * k.count_ones() as f64).sum()
    }

    /// Probability that atom `j` is excited.
    pub fn excitation(&self, j: usize) -> f64 {
        self.amplitudes.iter().enumerate().filter(|(k, _)| k >> j & 1 == 1).map(|(_, a)| a.norm_sqr()).sum()
    }

    /// Probability that atoms `i` and `j` are both excited.
    pub fn pair_excitation(&self, i: usize, j: usize) -> f64 {
        let both = (1usize << i) | (1usize << j);
        self.amplitudes.iter().enumerate().filter(|(k, _)| k & both == both).map(|(_, a)| a.norm_sqr()).sum()
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 7] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

struct Integrator<'a, D: Drive + ?Sized> {
    h: &'a RydbergHamiltonian,
    drive: &'a D,
    opts: EvolveOptions,
    k: [Vec<Complex64>; 7],
    stage: Vec<Complex64>,
    steps: usize,
}

impl<D: Drive + ?Sized> Integrator<'_, D> {
    fn eval(&mut self, idx: usize, t_us: f64, y: &[Complex64]) {
        let t_ns = t_us * NS_PER_US;
        let (omega, delta) = (self.drive.omega(t_ns), self.drive.delta(t_ns));
        let mut out = std::mem::take(&mut self.k[idx]);
        self.h.rhs(omega, delta, y, &mut out);
        self.k[idx] = out;
    }

    /// Integrates `y` across one smooth segment `[t0, t1]` (µs).
    fn segment(&mut self, y: &mut Vec<Complex64>, t0: f64, t1: f64) -> Result<(), EmulatorError> {
        let len = t1 - t0;
        if len <= 0.0 {
            return Ok(());
        }
        let probe = |t: f64| (self.drive.omega(t * NS_PER_US).abs(), self.drive.delta(t * NS_PER_US).abs());
        let (o0, d0) = probe(t0);
        let (o1, d1) = probe(t1);
        let (om, dm) = probe(0.5 * (t0 + t1));
        let lambda = self
            .h
            .spectral_bound(o0.max(o1).max(om), d0.max(d1).max(dm))
            .max(self.h.spectral_bound(o0.max(o1).max(om), -d0.max(d1).max(dm)));
        let mut dt = if lambda > 0.0 { (0.1 / lambda).min(len) } else { len };
        let mut t = t0;
        let mut y_new = vec![Complex64::new(0.0, 0.0); y.len()];
        self.eval(0, t, y);
        while t < t1 {
            if self.steps >= self.opts.max_steps {
                return Err(EmulatorError::TooManySteps(self.opts.max_steps));
            }
            let last = t + dt >= t1 - 1e-12 * len;
            if last {
                dt = t1 - t;
            }
            for s in 1..7 {
                self.stage.copy_from_slice(y);
                for (m, &a) in A[s].iter().enumerate() {
                    if a != 0.0 {
                        let w = a * dt;
                        for (st, km) in self.stage.iter_mut().zip(&self.k[m]) {
                            st.re += km.re * w;
                            st.im += km.im * w;
                        }
                    }
                }
                let stage = std::mem::take(&mut self.stage);
                self.eval(s, t + C[s] * dt, &stage);
                self.stage = stage;
            }
            // Stage 7 was evaluated at the fifth-order solution, which is the stage-6 input.
            y_new.copy_from_slice(&self.stage);
            let mut err_sq = 0.0;
            let k = &self.k;
            for i in 0..y.len() {
                let e =
                    k[0][i] * E[0] + k[2][i] * E[2] + k[3][i] * E[3] + k[4][i] * E[4] + k[5][i] * E[5] + k[6][i] * E[6];
                let scale = self.opts.atol + self.opts.rtol * y[i].norm_sqr().max(y_new[i].norm_sqr()).sqrt();
                err_sq += e.norm_sqr() * dt * dt / (scale * scale);
            }
            let err = (err_sq / y.len() as f64).sqrt();
            self.steps += 1;
            if err <= 1.0 {
                t = if last { t1 } else { t + dt };
                std::mem::swap(y, &mut y_new);
                self.k.swap(0, 6);
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                dt *= grow;
            } else {
                dt *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                if dt < 1e-14 * len.max(1e-3) {
                    return Err(EmulatorError::StepSizeUnderflow { t_ns: t * NS_PER_US });
                }
            }
        }
        Ok(())
    }
}

/// Evolves the all-ground state of `h` under `drive`.
pub fn evolve_hamiltonian<D: Drive + ?Sized>(
    h: &RydbergHamiltonian,
    drive: &D,
    opts: &EvolveOptions,
) -> Result<QuantumState, EmulatorError> {
    if h.n() > opts.n_cap {
        return Err(EmulatorError::RegisterTooLarge { n: h.n(), cap: opts.n_cap });
    }
    let mut state = QuantumState::ground(h.n());
    let dim = state.amplitudes.len();
    let zero = || vec![Complex64::new(0.0, 0.0); dim];
    let mut integ = Integrator {
        h,
        drive,
        opts: *opts,
        k: [zero(), zero(), zero(), zero(), zero(), zero(), zero()],
        stage: zero(),
        steps: 0,
    };
    let bounds = drive.breakpoints();
    for w in bounds.windows(2) {
        integ.segment(&mut state.amplitudes, w[0] / NS_PER_US, w[1] / NS_PER_US)?;
    }
    let norm = state.norm();
    let drift = (norm - 1.0).abs();
    if !(drift < NORM_DRIFT_LIMIT) {
        return Err(EmulatorError::NormDriftExceeded { drift });
    }
    state.amplitudes.iter_mut().for_each(|a| *a /= norm);
    Ok(state)
}

/// Evolves an embedded register under `drive`.
pub fn evolve<D: Drive + ?Sized>(
    reg: &AtomRegister,
    drive: &D,
    opts: &EvolveOptions,
) -> Result<QuantumState, EmulatorError> {
    if reg.n() > opts.n_cap {
        return Err(EmulatorError::RegisterTooLarge { n: reg.n(), cap: opts.n_cap });
    }
    let mut state = evolve_hamiltonian(&RydbergHamiltonian::from_register(reg), drive, opts)?;
    state.label = schedule_hash(reg, drive);
    Ok(state)
}

/// Short hex fingerprint of a register and a drive.
pub fn schedule_hash<D: Drive + ?Sized>(reg: &AtomRegister, drive: &D) -> String {
    let mut hasher = Sha256::new();
    hasher.update(drive.describe().as_bytes());
    hasher.update(format!(" omega_max={:e} c6={:e}", reg.omega_max, reg.c6).as_bytes());
    for p in &reg.positions {
        hasher.update(format!(" {:e},{:e}", p[0], p[1]).as_bytes());
    }
    hasher.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// `n_meas` independent computational-basis measurements. Shot `i` uses
/// stream `i` of `rng_seed`, so smaller runs are prefixes of larger ones.
pub fn sample(state: &QuantumState, n_meas: usize, rng_seed: u64) -> SamplePool {
    let mut cumulative = Vec::with_capacity(state.amplitudes.len());
    let mut acc = 0.0;
    for a in &state.amplitudes {
        acc += a.norm_sqr();
        cumulative.push(acc);
    }
    let total = acc;
    let last_nonzero = state.amplitudes.iter().rposition(|a| a.norm_sqr() > 0.0).unwrap_or(0);
    let samples = (0..n_meas)
        .into_par_iter()
        .map(|i| {
            let u = seeds::stream(rng_seed, i as u64).random::<f64>() * total;
            let k = cumulative.partition_point(|&c| c <= u).min(last_nonzero);
            NodeSet::from_mask(state.n, k as u64)
        })
        .collect();
    let source = if state.label.is_empty() { "emulator".to_string() } else { state.label.clone() };
    SamplePool::new(state.n, samples, Some(rng_seed), source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulses::{make_schedule, ConstantDrive};
    use crate::samples::mean_hamming_weight;
    use std::f64::consts::PI;

    fn lone_atom() -> RydbergHamiltonian {
        RydbergHamiltonian::new(1, |_, _| 0.0)
    }

    #[test]
    fn rabi_oscillation() {
        let omega = 2.0 * PI;
        for (phase, expected) in [(PI, 1.0), (PI / 2.0, 0.5), (PI / 3.0, 0.25)] {
            let drive = ConstantDrive { duration_ns: phase / omega * 1e3, omega, delta: 0.0 };
            let s = evolve_hamiltonian(&lone_atom(), &drive, &EvolveOptions::default()).unwrap();
            assert!((s.excitation(0) - expected).abs() < 1e-6, "phase {phase}");
        }
    }

    #[test]
    fn non_interacting_pair_factorizes() {
        let reg = AtomRegister { positions: vec![[0.0, 0.0], [200.0, 0.0]], omega_max: 2.0 * PI, c6: 5.42e6 };
        let drive = make_schedule(450.0, 2.0 * PI, -PI).unwrap();
        let pair = evolve(&reg, &drive, &EvolveOptions::default()).unwrap();
        let single = evolve_hamiltonian(&lone_atom(), &drive, &EvolveOptions::default()).unwrap();
        let p = single.excitation(0);
        assert!((pair.excitation(0) - p).abs() < 1e-4);
        assert!((pair.excitation(1) - p).abs() < 1e-4);
        assert!((pair.pair_excitation(0, 1) - p * p).abs() < 1e-4);
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        for n in 1..=6 {
            let h = RydbergHamiltonian::new(n, |i, j| 10.0 / (1.0 + (i + 2 * j) as f64));
            let m = h.dense_matrix(1.3, -0.7);
            for a in 0..m.len() {
                for b in 0..m.len() {
                    assert_eq!(m[a][b], m[b][a].conj());
                }
            }
        }
    }

    #[test]
    fn dense_matrix_matches_rhs() {
        let h = RydbergHamiltonian::new(3, |i, j| (i + j) as f64 + 0.5);
        let m = h.dense_matrix(2.0, 0.3);
        let psi: Vec<Complex64> = (0..8).map(|k| Complex64::new(k as f64 * 0.1, 1.0 - k as f64 * 0.05)).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); 8];
        h.rhs(2.0, 0.3, &psi, &mut out);
        for a in 0..8 {
            let hpsi: Complex64 = (0..8).map(|b| m[a][b] * psi[b]).sum();
            assert!((out[a] - hpsi * Complex64::new(0.0, -1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn register_cap() {
        let reg = AtomRegister { positions: vec![[0.0, 0.0]; 3], omega_max: 1.0, c6: 1.0 };
        let opts = EvolveOptions { n_cap: 2, ..Default::default() };
        let drive = ConstantDrive { duration_ns: 1.0, omega: 1.0, delta: 0.0 };
        assert_eq!(evolve(&reg, &drive, &opts), Err(EmulatorError::RegisterTooLarge { n: 3, cap: 2 }));
    }

    #[test]
    fn ground_state_samples() {
        let pool = sample(&QuantumState::ground(3), 50, 1);
        assert!(pool.samples().iter().all(|s| s.to_bitstring() == "000"));
    }

    #[test]
    fn uniform_state_frequencies() {
        let state = QuantumState::from_amplitudes(vec![Complex64::new(0.5, 0.0); 4]);
        let pool = sample(&state, 100_000, 3);
        let mut counts = [0usize; 4];
        for s in pool.samples() {
            counts[s.nodes().fold(0, |k, j| k | 1 << j)] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 0.25).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn sampling_prefix_and_bit_order() {
        let mut amps = vec![Complex64::new(0.0, 0.0); 8];
        amps[0b001] = Complex64::new(1.0, 0.0);
        let state = QuantumState::from_amplitudes(amps);
        let pool = sample(&state, 20, 5);
        assert!(pool.samples().iter().all(|s| s.to_bitstring() == "100"));
        let mixed = QuantumState::from_amplitudes(vec![Complex64::new(0.5, 0.0); 4]);
        assert_eq!(sample(&mixed, 10, 9).samples(), &sample(&mixed, 40, 9).samples()[..10]);
    }

    #[test]
    fn path_mean_weight_matches_state() {
        let r = 7.0;
        let reg =
            AtomRegister { positions: vec![[0.0, 0.0], [r, 0.0], [2.0 * r, 0.0]], omega_max: 2.0 * PI, c6: 5.42e6 };
        let drive = make_schedule(450.0, 2.0 * PI, -PI).unwrap();
        let state = evolve(&reg, &drive, &EvolveOptions::default()).unwrap();
        assert!((state.norm() - 1.0).abs() < 1e-12);
        let pool = sample(&state, 20_000, 11);
        let exact = state.mean_weight();
        let var: f64 =
            state.probabilities().iter().enumerate().map(|(k, p)| p * (k.count_ones() as f64 - exact).powi(2)).sum();
        let se = (var / 20_000.0).sqrt();
        assert!((mean_hamming_weight(&pool).unwrap() - exact).abs() < 3.0 * se + 1e-12);
        assert_eq!(pool.source, state.label);
        assert_eq!(state.label.len(), 16);
    }
}
