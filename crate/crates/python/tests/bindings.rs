use std::ffi::CString;
use std::sync::Once;

use pyo3::prelude::*;

use mabpy::mabpy as ext;

fn python() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        pyo3::append_to_inittab!(ext);
        Python::initialize();
    });
}

fn run(code: &str) -> PyResult<()> {
    python();
    let code = CString::new(code).unwrap();
    Python::attach(|py| py.run(&code, None, None))
}

#[test]
fn online_rule_from_python() {
    run("import mabpy\nassert mabpy.online_duty_ratios([400.0, 500.0, 200.0, 300.0], [1.0, 1.0, 0.5, 1.0]) == [0.25, 0.4, 0.25, 0.0]")
        .unwrap();
}

#[test]
fn dab_report_from_python() {
    run(r#"
import mabpy
c = mabpy.Converter([400.0, 400.0], [1.0, 1.0], [30e-6, 30e-6])
r = c.report([0.0, 0.25], [0.0, 0.0])
assert abs(r.ports[0].current_at_t1 + 50.0 / 3.0) < 1e-9
assert abs(r.ports[1].dc_power + 5000.0) < 1e-6
assert r.statuses() == ["ZVS", "ZVS"]
assert c.oracle_error([0.0, 0.1], [0.2, 0.5]) < 1e-9
assert abs(c.inductor_current(1, 0.0, [0.0, 0.25], [0.0, 0.0]) - 50.0 / 3.0) < 1e-9
"#)
    .unwrap();
}

#[test]
fn errors_map_to_python_exceptions() {
    run(r#"
import mabpy
try:
    mabpy.Converter([400.0, 400.0], [1.0, 1.0], [30e-6, -1.0])
    raise SystemExit("accepted")
except ValueError as e:
    assert "inductance" in str(e)
try:
    mabpy.Scenario.from_json("{}")
    raise SystemExit("accepted")
except ValueError:
    pass
"#)
    .unwrap();
}

#[test]
fn scenario_from_python() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/golden.json");
    run(&format!(
        r#"
import mabpy
s = mabpy.Scenario.load({path:?})
assert s.mode == "zvs"
r = s.steady()
assert r.inner == [0.25, 0.4, 0.25, 0.0]
assert "HARD" not in r.statuses()
s.set_load(3, 2000.0)
c = s.compare()
assert 0.45 <= c["rms_ratio"] <= 0.75
"#
    ))
    .unwrap();
}
