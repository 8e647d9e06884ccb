"""Parity between the compiled kernel core and the pure-NumPy fallback."""

import numpy as np
import pytest

from sthawkes._kernels import backend_name, pure

try:
    from sthawkes._kernels import _core
except ImportError:
    _core = None

needs_core = pytest.mark.skipif(_core is None, reason="compiled core not built")


def _random_events(rng, n=300):
    t = np.sort(rng.uniform(0, 30.0, n))
    x = rng.uniform(0, 8.0, n)
    y = rng.uniform(0, 8.0, n)
    return t, x, y


@needs_core
@pytest.mark.parametrize("omega,sigma,max_lag", [
    (2.0, 0.3, np.inf),
    (50.0, 0.1, np.inf),
    (2.0, 0.3, 1.5),
    (0.5, 2.0, np.inf),
])
def test_trig_sums_backends_agree(omega, sigma, max_lag):
    rng = np.random.default_rng(12)
    t, x, y = _random_events(rng)
    a = pure.trig_sums(t, x, y, omega, sigma, max_lag)
    b = _core.trig_sums(t, x, y, omega, sigma, max_lag)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-300)


@needs_core
def test_trig_sums_handles_time_ties():
    t = np.array([1.0, 1.0, 1.0, 2.0])
    x = np.array([0.0, 0.1, 0.2, 0.1])
    y = np.zeros(4)
    a = pure.trig_sums(t, x, y, 2.0, 0.5, np.inf)
    b = _core.trig_sums(t, x, y, 2.0, 0.5, np.inf)
    # simultaneous events do not excite each other
    assert a[0][0] == a[0][1] == a[0][2] == 0.0
    assert b[0][0] == b[0][1] == b[0][2] == 0.0
    assert a[0][3] > 0 and a[0][3] == pytest.approx(b[0][3], rel=1e-12)


def test_trig_sums_truncation_error_is_tiny():
    rng = np.random.default_rng(5)
    t, x, y = _random_events(rng, n=200)
    omega, sigma = 2.0, 0.5
    exact = pure.trig_sums(t, x, y, omega, sigma, np.inf)[0]
    trunc = pure.trig_sums(t, x, y, omega, sigma, 30.0 / omega)[0]
    # every dropped pair contributes at most exp(-30) of its lag-0 value
    per_pair_cap = omega * np.exp(-30.0) / (2 * np.pi * sigma * sigma)
    assert np.all(np.abs(exact - trunc) <= len(t) * per_pair_cap)
    assert np.all(trunc <= exact)


@needs_core
def test_epan_grid_backends_agree():
    rng = np.random.default_rng(3)
    ex = rng.uniform(0, 10, 200)
    ey = rng.uniform(0, 10, 200)
    w = rng.uniform(0.5, 2.0, 200)
    gx = np.linspace(0, 10, 101)
    gy = np.linspace(0, 10, 81)
    a = pure.epan2_grid(ex, ey, w, gx, gy, 1.3)
    b = _core.epan2_grid(ex, ey, w, gx, gy, 1.3)
    np.testing.assert_allclose(a, b, rtol=1e-12)
    et = rng.uniform(0, 20, 200)
    gt = np.linspace(0, 20, 201)
    a1 = pure.epan1_grid(et, w, gt, 2.5)
    b1 = _core.epan1_grid(et, w, gt, 2.5)
    np.testing.assert_allclose(a1, b1, rtol=1e-12)


@needs_core
def test_epan_points_backends_agree():
    rng = np.random.default_rng(4)
    ex = rng.uniform(0, 10, 150)
    ey = rng.uniform(0, 10, 150)
    w = rng.uniform(0.5, 2.0, 150)
    qx = rng.uniform(0, 10, 77)
    qy = rng.uniform(0, 10, 77)
    a = pure.epan2_points(ex, ey, w, qx, qy, 1.1)
    b = _core.epan2_points(ex, ey, w, qx, qy, 1.1)
    np.testing.assert_allclose(a, b, rtol=1e-12)
    qt = rng.uniform(0, 10, 55)
    a1 = pure.epan1_points(ex, w, qt, 0.8)
    b1 = _core.epan1_points(ex, w, qt, 0.8)
    np.testing.assert_allclose(a1, b1, rtol=1e-12)


def test_backend_reports_name():
    assert backend_name() in ("cython", "pure")


def test_trig_sums_deterministic():
    rng = np.random.default_rng(6)
    t, x, y = _random_events(rng, n=100)
    from sthawkes._kernels import trig_sums
    a = trig_sums(t, x, y, 3.0, 0.2, np.inf)
    b = trig_sums(t, x, y, 3.0, 0.2, np.inf)
    for u, v in zip(a, b):
        assert np.array_equal(u, v)
