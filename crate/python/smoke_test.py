"""Smoke test for the conformable_py extension.

Build and run from the repository root:

    cargo build --release -p conformable-py --features extension-module
    cp target/release/libconformable_py.so python/conformable_py.so
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import conformable_py as cp  # noqa: E402

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def close(a, b, tol):
    assert abs(a - b) <= tol * max(1.0, abs(b)), (a, b)


def main():
    close(cp.conformable_gamma(5.0, alpha=1.0), 24.0, 1e-12)
    close(cp.conformable_gamma(2.0, alpha=0.5, method="quadrature"), 0.5, 1e-9)
    close(cp.conformable_beta(0.5, 0.5, alpha=0.5), 4.0, 1e-12)
    close(cp.pochhammer(3.0, 2, 1.0, 1.0), 12.0, 0.0)
    close(cp.n_constant(1.0, 0.0, 2.0), 2.0, 1e-12)

    heat = cp.Propagator.heat(alpha=0.8, n_modes=4, n_nodes=101, potential=1.0)
    span = heat.tau[-1] - heat.tau[0]
    for n in range(1, 5):
        close(heat.matrix(100, 0)[n - 1][n - 1], math.exp(-(n * n + 1.0) * span), 1e-12)
    assert heat.composition_defect() < 1e-12

    dense = cp.Propagator.random_dense(alpha=0.75, dim=3, seed=17, n_nodes=61, tau0=0.5, tau1=1.5)
    traj = dense.evolve([1.0, 0.0, -1.0])
    assert len(traj) == 61 and len(traj[0]) == 3
    assert dense.composition_defect() < 1e-5

    gram = heat.gramian()
    out = gram.null_control([1.0, 0.5, 0.0, 0.0], gain=0.05)
    assert out["final_state_norm"] < 1e-8, out["final_state_norm"]
    gamma, passes = gram.verify(1.0, trials=100, seed=3)
    assert passes and gamma > 0.5

    try:
        cp.Propagator.heat(alpha=0.8, n_modes=3, n_nodes=51).gramian([[0.0] * 3] * 3)
    except cp.ConformableError as e:
        assert "E_CONTROLLABILITY" in str(e)
    else:
        raise AssertionError("zero control matrix must fail")

    scenario = cp.Scenario.load(os.path.join(ROOT, "configs", "heat_null_control.toml"))
    with tempfile.TemporaryDirectory() as out_dir:
        summary = scenario.run("control", out_dir)
        assert summary["status"] == "ok"
        assert float(summary["final_state_norm"]) <= 1e-5
        assert os.path.exists(os.path.join(out_dir, "control.csv"))

    print("smoke test passed")


if __name__ == "__main__":
    main()
