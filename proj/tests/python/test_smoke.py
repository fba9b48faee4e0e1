"""Smoke tests for the compiled extension.

Run directly (``python test_smoke.py``) with the build directory on
``PYTHONPATH``, or through pytest.  Coverage here is intentionally thin: the
numerical depth lives in the C++ suites, this file only proves the bindings
round-trip real values.
"""

import math

try:
    import lab as core  # packaged layout
except ImportError:
    import _core as core  # build-tree layout


def test_design_bounds():
    assert core.optimal_error(4, 16, 2.0) == 2.5
    err = core.design_error(4, 16, 2.0, "optimal", 0)
    assert abs(err - 2.5) < 1e-9
    rnd = core.design_error(4, 16, 2.0, "random", 0)
    assert rnd >= 2.5 - 1e-12
    assert abs(core.greedy_floor(2) - math.sqrt(0.5)) < 1e-12


def test_kinematics_series():
    symbols = [0, 1, 0, 1, 0, 1, 1, 0, 1, 0] * 5
    series = core.ngram_series(symbols, 2, order=2, smoothing=1.0)
    v, d = series["velocity"], series["distance"]
    assert len(v) == len(symbols)
    assert len(series["acceleration"]) == len(symbols) - 1
    assert abs(d[-1] - sum(v)) < 1e-9
    curve = core.expected_bayes_velocity_curve([0.5, 0.5], 1.0, 3)
    assert abs(curve[0] - math.log(2.0)) < 1e-12


def test_control():
    out = core.lqr_compare(
        [[1.0, 0.1], [0.0, 0.95]], [[0.0], [0.1]],
        [[1.0, 0.0], [0.0, 0.5]], [[0.1]], [1.0, -0.5], 8,
    )
    assert out["converged"]
    assert abs(out["j_forward_backward"] - out["j_riccati"]) < 1e-6

    vi = core.value_iteration(
        [[[1.0]]], [[1.0]], discount=0.5, tol=1e-12,
    )
    assert abs(vi["values"][0] - 2.0) < 1e-10
    assert vi["bellman_residual"] <= 1e-12


def test_fisher():
    f = core.exact_fisher("bernoulli", [0.5])
    assert abs(f[0][0] - 4.0) < 1e-12
    fit = core.mle_fit("gauss-mean", "flow", n=200, seed=0, alpha=0.5)
    assert fit["converged"]
    study = core.cramer_rao("bernoulli", n=150, replicates=150, seed=0)
    assert study["failures"] == 0
    assert study["bound_satisfied"]


def main():
    for name, fn in sorted(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"ok {name}")
    print("python smoke tests passed")


if __name__ == "__main__":
    main()
