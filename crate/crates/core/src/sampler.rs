//! Classical surrogate for the atom register: randomized greedy independent
//! sets with a calibrated stopping probability, plus optional injected
//! blockade violations.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rayon::prelude::*;

use crate::nodeset::NodeSet;
use crate::samples::SamplePool;
use crate::schedgraph::SchedGraph;
use crate::seeds;

pub const DEFAULT_PILOT_SHOTS: usize = 2_000;
const PILOT_STREAM: u64 = 0x9170_7000;
const BISECTION_STEPS: usize = 60;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplerError {
    #[error("noise rate must lie in [0, 1], got {0}")]
    NoiseRate(f64),
    #[error("n_meas must be at least 1")]
    NoShots,
    #[error("target weight must be positive, got {0}")]
    TargetWeight(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub target_weight: f64,
    pub n_meas: usize,
    /// Probability that a sample receives one blockade-violating node.
    pub noise_rate: f64,
    pub rng_seed: u64,
    /// Samples used to calibrate the stopping probability. Independent of
    /// `n_meas`, so a smaller run is always a prefix of a larger one.
    pub pilot_shots: usize,
}

impl SamplerConfig {
    pub fn new(target_weight: f64, n_meas: usize, noise_rate: f64, rng_seed: u64) -> Result<Self, SamplerError> {
        let cfg = SamplerConfig { target_weight, n_meas, noise_rate, rng_seed, pilot_shots: DEFAULT_PILOT_SHOTS };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(SamplerError::NoiseRate(self.noise_rate));
        }
        if self.n_meas == 0 {
            return Err(SamplerError::NoShots);
        }
        if self.target_weight.is_nan() || self.target_weight <= 0.0 {
            return Err(SamplerError::TargetWeight(self.target_weight));
        }
        Ok(())
    }
}

/// One greedy pass. The k-th acceptance consumes the k-th uniform, so for a
/// fixed stream the resulting weight is non-increasing in `stop_prob`.
fn greedy_sample(g: &SchedGraph, stop_prob: f64, rng: &mut seeds::Rng) -> NodeSet {
    let n = g.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut set = NodeSet::empty(n);
    for v in order {
        if g.neighbors(v).is_disjoint(&set) {
            set.insert(v);
            if rng.random::<f64>() < stop_prob {
                break;
            }
        }
    }
    set
}

/// Per pilot sample: the uniform drawn after each acceptance of a full
/// (never stopping) pass. Weight under stop probability q is the first k
/// with `u_k < q`, or the full length.
fn pilot_traces(g: &SchedGraph, seed: u64, shots: usize) -> Vec<Vec<f64>> {
    (0..shots)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds::stream(seeds::derive(seed, PILOT_STREAM), i as u64);
            let mut order: Vec<usize> = (0..g.n()).collect();
            order.shuffle(&mut rng);
            let mut set = NodeSet::empty(g.n());
            let mut trace = Vec::new();
            for v in order {
                if g.neighbors(v).is_disjoint(&set) {
                    set.insert(v);
                    trace.push(rng.random::<f64>());
                }
            }
            trace
        })
        .collect()
}

fn pilot_mean(traces: &[Vec<f64>], q: f64) -> f64 {
    let total: usize = traces.iter().map(|t| t.iter().position(|&u| u < q).map_or(t.len(), |k| k + 1)).sum();
    total as f64 / traces.len().max(1) as f64
}

/// Stopping probability whose pilot mean weight matches
/// `min(target, greedy mean)`, plus the greedy (q = 0) mean itself.
pub fn calibrate_stop_probability(g: &SchedGraph, cfg: &SamplerConfig) -> (f64, f64) {
    if g.n() == 0 {
        return (0.0, 0.0);
    }
    let traces = pilot_traces(g, cfg.rng_seed, cfg.pilot_shots.max(1));
    let greedy_mean = pilot_mean(&traces, 0.0);
    if cfg.target_weight >= greedy_mean {
        return (0.0, greedy_mean);
    }
    if cfg.target_weight <= 1.0 {
        return (1.0, greedy_mean);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if pilot_mean(&traces, mid) > cfg.target_weight {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi), greedy_mean)
}

fn inject_violation(g: &SchedGraph, set: &mut NodeSet, rng: &mut seeds::Rng) {
    let candidates: Vec<usize> = (0..g.n()).filter(|&v| !set.contains(v) && !g.neighbors(v).is_disjoint(set)).collect();
    if let Some(&v) = candidates.choose(rng) {
        set.insert(v);
    }
}

pub fn sample_classical(g: &SchedGraph, cfg: &SamplerConfig) -> Result<SamplePool, SamplerError> {
    cfg.validate()?;
    let (stop_prob, _) = calibrate_stop_probability(g, cfg);
    let samples = (0..cfg.n_meas)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds::stream(cfg.rng_seed, i as u64);
            let mut set = greedy_sample(g, stop_prob, &mut rng);
            if rng.random::<f64>() < cfg.noise_rate {
                inject_violation(g, &mut set, &mut rng);
            }
            set
        })
        .collect();
    Ok(SamplePool::new(g.n(), samples, Some(cfg.rng_seed), "classical"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples::mean_hamming_weight;

    fn path(n: usize) -> SchedGraph {
        SchedGraph::from_edges(n, (1..n).map(|i| (i - 1, i)))
    }

    #[test]
    fn edgeless_graph_gives_all_ones() {
        let g = SchedGraph::from_edges(6, []);
        let pool = sample_classical(&g, &SamplerConfig::new(6.0, 200, 0.0, 1).unwrap()).unwrap();
        assert!(pool.samples().iter().all(|s| s.weight() == 6));
    }

    #[test]
    fn complete_graph_gives_singletons() {
        let g = SchedGraph::from_edges(5, (0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j))));
        let pool = sample_classical(&g, &SamplerConfig::new(3.0, 500, 0.0, 2).unwrap()).unwrap();
        assert!(pool.samples().iter().all(|s| s.weight() <= 1));
    }

    #[test]
    fn calibration_hits_lower_targets() {
        let g = path(30);
        for target in [2.0, 4.0, 7.5] {
            let cfg = SamplerConfig::new(target, 4000, 0.0, 3).unwrap();
            let pool = sample_classical(&g, &cfg).unwrap();
            let mean = mean_hamming_weight(&pool).unwrap();
            assert!((mean - target).abs() < 0.25, "target {target} got {mean}");
        }
    }

    #[test]
    fn noise_injects_exactly_one_violation() {
        let g = path(12);
        let cfg = SamplerConfig::new(3.0, 300, 1.0, 4).unwrap();
        for s in sample_classical(&g, &cfg).unwrap().samples() {
            let degrees = g.conflict_degrees(s).unwrap();
            let violators = degrees.iter().filter(|&&d| d > 0).count();
            assert!((2..=3).contains(&violators), "{s}");
        }
    }

    #[test]
    fn prefix_property_and_determinism() {
        let g = path(15);
        let small = sample_classical(&g, &SamplerConfig::new(4.0, 100, 0.1, 9).unwrap()).unwrap();
        let big = sample_classical(&g, &SamplerConfig::new(4.0, 400, 0.1, 9).unwrap()).unwrap();
        assert_eq!(small.samples(), &big.samples()[..100]);
        let again = sample_classical(&g, &SamplerConfig::new(4.0, 400, 0.1, 9).unwrap()).unwrap();
        assert_eq!(big, again);
    }

    #[test]
    fn config_validation() {
        assert_eq!(SamplerConfig::new(2.0, 10, 1.5, 0), Err(SamplerError::NoiseRate(1.5)));
        assert_eq!(SamplerConfig::new(2.0, 0, 0.0, 0), Err(SamplerError::NoShots));
        assert!(SamplerConfig::new(0.0, 1, 0.0, 0).is_err());
    }
}
