use pyo3::ffi::c_str;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::sync::Once;

use ::ddpp::ddpp;

static INIT: Once = Once::new();

fn run(code: &std::ffi::CStr) {
    INIT.call_once(|| {
        pyo3::append_to_inittab!(ddpp);
        Python::initialize();
    });
    Python::attach(|py| {
        let globals = PyDict::new(py);
        if let Err(e) = py.run(code, Some(&globals), None) {
            e.display(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn module_round_trip() {
    run(c_str!(
        r#"
import ddpp
inst = ddpp.Instance.draw(8, "3", 11)
assert inst.n == 8
again = ddpp.Instance.from_json(inst.to_json())
assert again.deliveries == inst.deliveries
assert inst.max_overlap_depth() <= inst.drone_lower_bound()

d = ddpp.exact(inst)
raw = ddpp.sample_classical(inst, 200, seed=1)
assert len(raw) == 200 and all(len(b) == 8 for b in raw)
sets, counts = ddpp.correct(inst, raw, seed=1)
assert all(inst.is_feasible(s) for s in sets)
sol = ddpp.solve(inst, sets)
assert sol["drones"] >= d
assert sorted(i for s in sol["sets"] for i in s) == list(range(8))
assert ddpp.baseline(inst)["drones"] >= d

run = ddpp.run_pipeline(inst, shots=300, seed=4)
assert run["drones"] >= d and run["raw_samples"] == 300

try:
    ddpp.solve(inst, ["11111111"])
    raise AssertionError("expected ValueError")
except ValueError:
    pass
"#
    ));
}

#[test]
fn register_and_emulator() {
    run(c_str!(
        r#"
import ddpp
inst = ddpp.Instance.draw(5, "90", 3)
reg = ddpp.Register.embed(inst, seed=0)
assert len(reg) == 5
report = reg.validate(inst)
assert not report["edge_violations"] and not report["non_edge_violations"]
assert not report["spacing_violations"] and not report["area_violations"]
back = ddpp.Register.from_json(reg.to_json())
assert back.positions == reg.positions and back.omega_max == reg.omega_max
shots = ddpp.emulate(reg, 600.0, 0.5 * reg.omega_max, 100, seed=2)
assert len(shots) == 100
edges = set(inst.edges())
both = sum(1 for b in shots for (i, j) in edges if b[i] == "1" and b[j] == "1")
assert both < 0.05 * 100 * max(1, len(edges))
"#
    ));
}
