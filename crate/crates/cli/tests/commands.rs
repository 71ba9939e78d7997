use std::path::Path;
use std::process::{Command, Output};

use rand::Rng as _;
use serde_json::Value;

use ddpp_core::correction::FeasiblePool;
use ddpp_core::instances::DdppInstance;
use ddpp_core::nodeset::NodeSet;
use ddpp_core::samples::SamplePool;
use ddpp_core::schedgraph::build_graph;
use ddpp_core::seeds;

fn ddpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddpp")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ddpp(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn drones(file: &str) -> u64 {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(file).unwrap()).unwrap();
    v["drones"].as_u64().unwrap()
}

#[test]
fn exact_and_solve_over_the_full_family_agree() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| path(dir.path(), n);
    ok(&["gen", "--n", "8", "--battery", "30", "--seed", "42", "--out", &p("inst.json")]);
    ok(&["exact", "--inst", &p("inst.json"), "--out", &p("exact.json"), "--family", &p("family.txt")]);
    ok(&["solve", "--inst", &p("inst.json"), "--pool", &p("family.txt"), "--out", &p("solve.json")]);
    assert_eq!(drones(&p("exact.json")), drones(&p("solve.json")));
    ok(&["baseline", "--inst", &p("inst.json"), "--out", &p("baseline.json")]);
    assert!(drones(&p("baseline.json")) >= drones(&p("exact.json")));
}

#[test]
fn corrected_random_bitstrings_satisfy_the_solver() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| path(dir.path(), n);
    ok(&["gen", "--n", "12", "--battery", "2", "--seed", "5", "--out", &p("inst.json")]);
    let inst = DdppInstance::load(p("inst.json")).unwrap();
    let mut rng = seeds::rng(3);
    let samples = (0..300).map(|_| NodeSet::from_mask(12, rng.random::<u64>() & 0xfff)).collect();
    SamplePool::new(12, samples, None, "external").save(p("raw.txt")).unwrap();

    let out = ddpp(&["correct", "--inst", &p("inst.json"), "--pool", &p("raw.txt"), "--out", &p("pool.txt")]);
    if inst.infeasible_delivery().is_some() {
        assert_eq!(out.status.code(), Some(2));
        return;
    }
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pool = FeasiblePool::load(p("pool.txt")).unwrap();
    assert_eq!(pool.missing_singleton(), None);
    assert_eq!(pool.first_infeasible(&build_graph(&inst), &inst), None);
    assert_eq!(pool.sidecar().stats.raw_samples, 300);
    assert!(pool.origin_counts().iter().sum::<usize>() <= 300);
    ok(&["solve", "--inst", &p("inst.json"), "--pool", &p("pool.txt"), "--out", &p("sol.json")]);
}

#[test]
fn stages_are_pure_functions_of_inputs_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| path(dir.path(), n);
    ok(&["gen", "--n", "14", "--battery", "4.5", "--seed", "9", "--out", &p("a.json")]);
    ok(&["gen", "--n", "14", "--battery", "4.5", "--seed", "9", "--out", &p("b.json")]);
    let read = |f: &str| std::fs::read_to_string(p(f)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    for (seed, out) in [("3", "r1.txt"), ("3", "r2.txt"), ("4", "r3.txt")] {
        ok(&["sample", "--inst", &p("a.json"), "--shots", "300", "--noise", "0.1", "--seed", seed, "--out", &p(out)]);
    }
    assert_eq!(read("r1.txt"), read("r2.txt"));
    assert_ne!(read("r1.txt"), read("r3.txt"));
    for out in ["c1.txt", "c2.txt"] {
        ok(&["correct", "--inst", &p("a.json"), "--pool", &p("r1.txt"), "--seed", "8", "--out", &p(out)]);
    }
    assert_eq!(read("c1.txt"), read("c2.txt"));
    assert_eq!(read("c1.txt.json"), read("c2.txt.json"));
}

#[test]
fn classical_pipeline_matches_exact_at_twenty_deliveries() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| path(dir.path(), n);
    ok(&["gen", "--n", "20", "--battery", "90", "--seed", "42", "--out", &p("inst.json")]);
    ok(&["exact", "--inst", &p("inst.json"), "--out", &p("exact.json")]);
    let exact = drones(&p("exact.json"));
    let hits = (0..10)
        .filter(|seed| {
            let seed = seed.to_string();
            ok(&["sample", "--inst", &p("inst.json"), "--shots", "500", "--seed", &seed, "--out", &p("raw.txt")]);
            ok(&[
                "correct",
                "--inst",
                &p("inst.json"),
                "--pool",
                &p("raw.txt"),
                "--seed",
                &seed,
                "--out",
                &p("pool.txt"),
            ]);
            ok(&[
                "solve",
                "--inst",
                &p("inst.json"),
                "--pool",
                &p("pool.txt"),
                "--time-limit",
                "60",
                "--out",
                &p("sol.json"),
            ]);
            drones(&p("sol.json")) == exact
        })
        .count();
    assert!(hits >= 9, "{hits}/10 seeds reached {exact} drones");
}

#[test]
fn emulator_stages_hand_off_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| path(dir.path(), n);
    ok(&["gen", "--n", "6", "--battery", "30", "--seed", "1", "--out", &p("inst.json")]);
    ok(&["embed", "--inst", &p("inst.json"), "--seed", "2", "--out", &p("reg.json")]);
    let report: Value =
        serde_json::from_str(&ok(&["embed", "validate", "--reg", &p("reg.json"), "--inst", &p("inst.json")])).unwrap();
    assert!(report["edge_violations"].as_array().unwrap().is_empty());
    std::fs::write(p("grid.json"), r#"{"delta_factors": [-0.5, 0.5], "durations_ns": [450]}"#).unwrap();
    ok(&[
        "tune",
        "--inst",
        &p("inst.json"),
        "--reg",
        &p("reg.json"),
        "--grid",
        &p("grid.json"),
        "--out",
        &p("sched.json"),
        "--dump",
        &p("sched.csv"),
    ]);
    let sched: Value = serde_json::from_str(&std::fs::read_to_string(p("sched.json")).unwrap()).unwrap();
    assert_eq!(sched["evaluations"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(p("sched.csv")).unwrap();
    assert!(csv.starts_with("t_ns,omega,delta\n") && csv.lines().count() == 452);

    ok(&[
        "sample",
        "--backend",
        "emulator",
        "--inst",
        &p("inst.json"),
        "--reg",
        &p("reg.json"),
        "--sched",
        &p("sched.json"),
        "--shots",
        "400",
        "--out",
        &p("raw.txt"),
    ]);
    let raw = SamplePool::load(p("raw.txt")).unwrap();
    assert_eq!(raw.len(), 400);
    assert_eq!(Some(raw.source.as_str()), sched["schedule_hash"].as_str());
    ok(&["correct", "--inst", &p("inst.json"), "--pool", &p("raw.txt"), "--out", &p("pool.txt")]);
    ok(&["solve", "--inst", &p("inst.json"), "--pool", &p("pool.txt"), "--out", &p("sol.json")]);
    ok(&["exact", "--inst", &p("inst.json"), "--out", &p("exact.json")]);
    assert!(drones(&p("sol.json")) >= drones(&p("exact.json")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| path(dir.path(), n);
    assert_eq!(ddpp(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(ddpp(&["gen", "--n", "8"]).status.code(), Some(1));
    assert_eq!(ddpp(&["--help"]).status.code(), Some(0));
    assert_eq!(ddpp(&["exact", "--inst", &p("missing.json"), "--out", &p("x.json")]).status.code(), Some(1));
    std::fs::write(p("bad.json"), "{ not json").unwrap();
    assert_eq!(ddpp(&["graph", "--inst", &p("bad.json"), "--out", &p("g.txt")]).status.code(), Some(1));

    ok(&["gen", "--n", "8", "--battery", "30", "--seed", "42", "--out", &p("inst.json")]);
    assert_eq!(ddpp(&["exact", "--inst", &p("inst.json"), "--cap", "5", "--out", &p("x.json")]).status.code(), Some(2));
    let bad_sample = ["sample", "--inst", &p("inst.json"), "--noise", "2", "--out", &p("raw.txt")];
    assert_eq!(ddpp(&bad_sample).status.code(), Some(1));
    let no_reg = ["sample", "--backend", "emulator", "--inst", &p("inst.json"), "--out", &p("raw.txt")];
    assert_eq!(ddpp(&no_reg).status.code(), Some(1));

    // A pool without singletons is rejected by the solver.
    ok(&["gen", "--n", "5", "--battery", "30", "--seed", "3", "--out", &p("small.json")]);
    std::fs::write(p("pool.txt"), "# ddpp-pool v1 n=5 sets=1\n10000\n").unwrap();
    assert_eq!(
        ddpp(&["solve", "--inst", &p("small.json"), "--pool", &p("pool.txt"), "--out", &p("s.json")]).status.code(),
        Some(2)
    );

    // Seventeen atoms exceed the emulator cap.
    ok(&["gen", "--n", "17", "--battery", "30", "--seed", "3", "--out", &p("big.json")]);
    let reg = serde_json::json!({
        "version": 1, "omega_max": std::f64::consts::TAU, "c6": 5420158.53,
        "r_blockade": (5420158.53f64 / std::f64::consts::TAU).powf(1.0 / 6.0),
        "atoms": (0..17).map(|i| serde_json::json!({"id": i, "x": 6.0 * (i % 5) as f64, "y": 6.0 * (i / 5) as f64})).collect::<Vec<_>>(),
    });
    std::fs::write(p("big_reg.json"), reg.to_string()).unwrap();
    std::fs::write(
        p("sched.json"),
        r#"{"version": 1, "total_time_ns": 450, "omega_max": 6.283185307179586, "delta_max": 0}"#,
    )
    .unwrap();
    let args = [
        "sample",
        "--backend",
        "emulator",
        "--inst",
        &p("big.json"),
        "--reg",
        &p("big_reg.json"),
        "--sched",
        &p("sched.json"),
        "--out",
        &p("r.txt"),
    ];
    assert_eq!(ddpp(&args).status.code(), Some(2));
}

#[test]
fn bench_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| path(dir.path(), n);
    let summary: Value = serde_json::from_str(&ok(&[
        "bench",
        "quality",
        "--sizes",
        "5,6",
        "--per-size",
        "2",
        "--battery",
        "30",
        "--seed",
        "1",
        "--shots",
        "200",
        "--out",
        &p("q.csv"),
    ]))
    .unwrap();
    assert_eq!(summary["per_size"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(p("q.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(p("q.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["study"], "quality");
    assert_eq!(manifest["rows"], 4);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 16);

    ok(&[
        "bench",
        "sampling",
        "--sizes",
        "8",
        "--battery",
        "4.5",
        "--n-meas",
        "10,100",
        "--reps",
        "3",
        "--out",
        &p("s.csv"),
    ]);
    assert_eq!(std::fs::read_to_string(p("s.csv")).unwrap().lines().count(), 3);
    ok(&[
        "bench",
        "histogram",
        "--sizes",
        "8",
        "--battery",
        "4.5",
        "--noise",
        "0.3",
        "--shots",
        "300",
        "--out",
        &p("h.csv"),
    ]);
    let hist: Value = serde_json::from_str(&std::fs::read_to_string(p("h.manifest.json")).unwrap()).unwrap();
    assert_eq!(hist["summary"]["corrected_invalid_fraction"], 0.0);
    assert!(hist["summary"]["raw_invalid_fraction"].as_f64().unwrap() > 0.0);
}
