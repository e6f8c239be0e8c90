"""Smoke test for the Python bindings.

Build the extension and put it on the path first, e.g.

    PYO3_BUILD_EXTENSION_MODULE=1 cargo build --release -p collapse-timing-py
    cp target/release/libcollapse_timing_py.so python/collapse_timing.so
    python3 python/smoke_test.py
"""

import math
import sys
import tempfile
from pathlib import Path

import collapse_timing as ct

CONFIG = """
[grid]
n_points = 2048
length = 800.0
origin = -400.0

[scenario]
kind = "two_pulse"
pulse_gap = 150.0
t_final = 70.0
dt = 0.01
sample_every = 2

[packet]
center = -40.0
width = 4.0
momentum = 3.0

[detector]
center = 0.0
half_width = 15.0
strength = 0.6

[trials]
n_trials = 2000
"""


def main():
    grid = ct.Grid(2048, 800.0, -400.0)
    assert math.isclose(grid.spacing, 800.0 / 2048)

    psi = ct.gaussian_packet(grid, -40.0, 4.0, 3.0)
    assert abs(psi.norm_sqr() - 1.0) < 1e-10
    assert abs(psi.mean_position() + 40.0) < 1e-9

    # p ~ N(p0, s²), s = 1/(2σ)
    s = 1.0 / 8.0
    mean, spread = ct.energy_moments(psi)
    assert math.isclose(mean, (9.0 + s * s) / 2.0, rel_tol=1e-6)
    assert math.isclose(spread, math.sqrt(9.0 * s * s + s**4 / 2.0), rel_tol=1e-6)

    weights, final = ct.run_evolution(psi, 0.0, 15.0, 0.6, 30.0, 0.01, 2)
    assert len(weights) == 1501
    assert weights.p_capture[0] < 1e-9
    assert weights.final_capture() > 0.9
    assert abs(final.norm_sqr() + weights.final_capture() - 1.0) < 1e-9
    gap = max(abs(a - b) for a, b in zip(weights.integrated_current(), weights.p_capture))
    assert gap < 1e-5, gap

    window = ct.zero_current_window(weights)
    assert not window["exists"]

    jumps = ct.run_trials(weights, "current_jump", 2000, base_seed=3)
    assert [r["seed"] for r in jumps[:3]] == [3, 4, 5]
    times = [r["collapse_time"] for r in jumps if r["chosen"] == "capture"]
    assert ct.ks_distance(times, weights) < 0.05
    env = ct.run_trials(weights, "penrose_env", 10)
    assert all("zero_weight_collapse" in r["flags"] for r in env)

    try:
        ct.Grid(1000, 800.0, -400.0)
    except ValueError as e:
        assert "power of two" in str(e)
    else:
        raise AssertionError("non power-of-two grid accepted")

    with tempfile.TemporaryDirectory() as out:
        claims = ct.run_experiment(CONFIG, out)
        status = {c["id"]: c["status"] for c in claims}
        assert status["current_jump_between_pulses"] == "FAIL-as-expected"
        assert status["zero_current_window"] == "PASS"
        w = ct.Weights.from_csv(str(Path(out) / "weights.csv"))
        assert w.final_capture() > 0.99

    print("smoke test ok")


if __name__ == "__main__":
    sys.exit(main())
