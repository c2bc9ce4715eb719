"""Smoke test for the mabpy extension.

Build and run from the repository root:

    cargo build --release -p mab-py --features extension-module
    cp target/release/libmabpy.so python/mabpy.so
    python3 python/smoke.py
"""

import math
import pathlib
import sys

import mabpy

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    d = mabpy.online_duty_ratios([400.0, 500.0, 200.0, 300.0], [1.0, 1.0, 0.5, 1.0])
    assert d == [0.25, 0.4, 0.25, 0.0], d

    dab = mabpy.Converter([400.0, 400.0], [1.0, 1.0], [30e-6, 30e-6])
    rep = dab.report([0.0, 0.25], [0.0, 0.0])
    assert abs(rep.ports[0].current_at_t1 + 50.0 / 3.0) < 1e-9
    assert abs(rep.ports[0].dc_power - 5000.0) < 1e-6
    assert abs(rep.ports[0].rms_current - 50.0 / 3.0 * math.sqrt(0.25 / 3 + 0.75)) < 1e-9
    assert dab.oracle_error([0.0, 0.25], [0.0, 0.3]) < 1e-9

    conv = mabpy.Converter([400.0, 500.0, 200.0, 300.0], [1.0, 1.0, 0.5, 1.0], [15e-6, 20e-6, 8e-6, 15e-6])
    inner = conv.online_inner()
    rep = conv.report([0.0, -0.05, 0.03, 0.15], inner)
    assert "HARD" not in rep.statuses(), rep.statuses()
    waves = conv.waveforms([0.0, -0.05, 0.03, 0.15], inner, points_per_period=100)
    assert len(waves["time"]) == 100 and len(waves["currents"]) == 4

    try:
        mabpy.Converter([400.0], [1.0], [1e-5])
    except ValueError as e:
        print("rejected one-port converter:", e)
    else:
        raise AssertionError("one-port converter accepted")

    sc = mabpy.Scenario.load(str(ROOT / "scenarios" / "golden.json"))
    sc.set_load(3, 2000.0)
    cmp = sc.compare()
    print(f"heavy load: rms_ratio {cmp['rms_ratio']:.4f}, ZVS statuses {cmp['zvs'].statuses()}")
    assert 0.45 <= cmp["rms_ratio"] <= 0.75

    sc.set_load(3, 400.0)
    run = sc.dynamic()
    print("settling times [s]:", run["settling_times"])
    assert all(t is not None and t <= 5e-3 for t in run["settling_times"])

    rows = sc.sweep()
    assert len(rows) == 20

    v = mabpy.verify(seed=1, draws=100)
    assert v["passed"], v
    print(f"verify: max oracle error {v['max_oracle_error']:.2e}")
    print("ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
