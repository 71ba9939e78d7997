use std::f64::consts::PI;

use rand::Rng as _;

use ddpp_core::bench::draw_instance;
use ddpp_core::embedding::{embed_graph, validate_register, AtomRegister, EmbeddingError, HardwareLimits};
use ddpp_core::emulator::{evolve, sample, EvolveOptions};
use ddpp_core::fixed::Fixed;
use ddpp_core::pulses::make_schedule;
use ddpp_core::schedgraph::{build_graph, SchedGraph};
use ddpp_core::seeds;

/// The first embeddable instance at or after draw `k`.
fn embedded(n: usize, k: usize) -> (SchedGraph, AtomRegister) {
    (k..k + 20)
        .find_map(|k| {
            let g = build_graph(&draw_instance(n, Fixed::from_int(3), 31, k).unwrap());
            embed_graph(&g, &HardwareLimits::default(), 50, k as u64).ok().map(|reg| (g, reg))
        })
        .unwrap()
}

#[test]
fn mean_weight_grows_with_final_detuning() {
    for k in 0..3 {
        let (_, reg) = embedded(8, k);
        let weights: Vec<f64> = [-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5]
            .iter()
            .map(|f| {
                let s = make_schedule(450.0, reg.omega_max, f * reg.omega_max).unwrap();
                evolve(&reg, &s, &EvolveOptions::default()).unwrap().mean_weight()
            })
            .collect();
        assert!(weights.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{weights:?}");
    }
}

#[test]
fn edges_are_rarely_both_excited() {
    for (n, k) in [(6, 0), (10, 1)] {
        let (g, reg) = embedded(n, k);
        for (f, t) in [(-0.5, 450.0), (0.5, 1000.0)] {
            let s = make_schedule(t, reg.omega_max, f * reg.omega_max).unwrap();
            let state = evolve(&reg, &s, &EvolveOptions::default()).unwrap();
            let pool = sample(&state, 10_000, 17);
            for &(i, j) in g.edges() {
                let both = pool.samples().iter().filter(|s| s.contains(i) && s.contains(j)).count();
                assert!((both as f64) < 0.05 * 10_000.0, "edge ({i},{j}) excited together {both} times");
            }
        }
    }
}

fn star(leaves: usize) -> SchedGraph {
    SchedGraph::from_edges(leaves + 1, (1..=leaves).map(|l| (0, l)))
}

/// Random search for unit-disk placements of a star's leaves around a
/// centre at the origin with radius 1.
fn star_placement_exists(leaves: usize, tries: usize) -> bool {
    let mut rng = seeds::rng(8);
    (0..tries).any(|_| {
        let pts: Vec<[f64; 2]> = (0..leaves)
            .map(|_| {
                let (a, r): (f64, f64) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..1.0));
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        (0..leaves).all(|i| (i + 1..leaves).all(|j| (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]) > 1.0))
    })
}

#[test]
fn six_leaf_star_has_no_unit_disk_layout() {
    assert!(star_placement_exists(4, 20_000));
    assert!(!star_placement_exists(6, 200_000));
    let err = embed_graph(&star(6), &HardwareLimits::default(), 30, 0).unwrap_err();
    assert_eq!(err, EmbeddingError::NoUdgWindowFound { restarts: 30 });
    assert!(embed_graph(&star(4), &HardwareLimits::default(), 30, 0).is_ok());
}

fn lattice(side: usize, spacing: f64) -> Vec<[f64; 2]> {
    let half = (side - 1) as f64 * spacing / 2.0;
    (0..side * side).map(|k| [(k % side) as f64 * spacing - half, (k / side) as f64 * spacing - half]).collect()
}

fn lattice_graph(side: usize) -> SchedGraph {
    let mut edges = Vec::new();
    for k in 0..side * side {
        if k % side + 1 < side {
            edges.push((k, k + 1));
        }
        if k + side < side * side {
            edges.push((k, k + side));
        }
    }
    SchedGraph::from_edges(side * side, edges)
}

#[test]
fn hand_placed_hundred_atom_lattice() {
    // A 10x10 square lattice does not fit the default field, so widen it.
    let hw = HardwareLimits { r_area: 60.0, ..HardwareLimits::default() };
    let mut reg = AtomRegister { positions: lattice(10, 8.0), omega_max: hw.omega_default, c6: hw.c6 };
    let rb = reg.r_blockade();
    assert!(8.0 < rb && rb < 8.0 * 2f64.sqrt(), "{rb}");
    let g = lattice_graph(10);

    // Brute-force unit-disk edges straight from the coordinates.
    let mut brute = Vec::new();
    for i in 0..100 {
        for j in i + 1..100 {
            let (a, b) = (reg.positions[i], reg.positions[j]);
            if (a[0] - b[0]).hypot(a[1] - b[1]) < rb {
                brute.push((i, j));
            }
        }
    }
    assert_eq!(brute, g.edges());
    let report = validate_register(&reg, &g, &hw);
    assert!(report.is_valid(), "{report:?}");
    assert!(!validate_register(&reg, &g, &HardwareLimits::default()).area_violations.is_empty());

    // Pushing a corner atom inwards blockades it with its diagonal partner only.
    reg.positions[0] = [reg.positions[0][0] + 4.0, reg.positions[0][1] + 4.0];
    let report = validate_register(&reg, &g, &hw);
    let pairs: Vec<(usize, usize)> = report.non_edge_violations.iter().map(|v| (v.0, v.1)).collect();
    assert_eq!(pairs, vec![(0, 11)]);
    assert!(report.edge_violations.is_empty() && report.spacing_violations.is_empty());
    assert!(!report.is_valid());
}
