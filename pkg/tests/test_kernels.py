import os
import subprocess
import sys

import numpy as np
import pytest

from qtrack import _accel, kernels


@pytest.fixture
def backend():
    previous = _accel.get_backend()
    yield _accel.set_backend
    _accel.set_backend(previous)


def naive_forward(u, f, g, s0):
    out = np.empty_like(u)
    s = s0
    for k in range(u.size):
        out[k] = s
        s = f[k] * s + g[k] * u[k]
    return out


def test_forward_matches_definition():
    rng = np.random.default_rng(0)
    u = rng.standard_normal(50)
    f, g = rng.uniform(0.5, 1, 50), rng.uniform(-1, 1, 50)
    assert np.allclose(kernels.forward_recursion(u, f, g, 2.0), naive_forward(u, f, g, 2.0), rtol=1e-14)


def test_backward_is_reversed_forward():
    rng = np.random.default_rng(1)
    u = rng.standard_normal((3, 2, 40))
    f, g = rng.uniform(0.5, 1, 40), rng.uniform(-1, 1, 40)
    back = kernels.backward_recursion(u, f, g, 1.5)
    # out[k] = f[k] out[k+1] + g[k] u[k], with out[n] = s_end
    manual = np.empty_like(u)
    s = np.full(u.shape[:-1], 1.5)
    for k in range(39, -1, -1):
        s = f[k] * s + g[k] * u[..., k]
        manual[..., k] = s
    assert np.allclose(back, manual, rtol=1e-14)


def test_scalar_coefficients_broadcast():
    u = np.ones((2, 5))
    out = kernels.forward_recursion(u, 0.5, 1.0)
    assert np.allclose(out[0], [0, 1, 1.5, 1.75, 1.875])


@pytest.mark.skipif(_accel.numba is None, reason="numba not installed")
def test_backends_agree(backend):
    rng = np.random.default_rng(2)
    u = rng.standard_normal((4, 2, 300))
    f, g = rng.uniform(0.9, 1, 300), rng.uniform(0, 1, 300)
    t = np.linspace(0, 1e-3, 101)
    results = {}
    for name in ("numba", "numpy"):
        backend(name)
        results[name] = (
            kernels.forward_recursion(u, f, g, 0.3),
            kernels.backward_recursion(u, f, g, -0.2),
            kernels.quadratic_rk4(22.0, -800.0, 3.6e4, 4.7e4, t, 1e-6),
        )
    for a, b in zip(results["numba"], results["numpy"]):
        assert np.allclose(a, b, rtol=1e-13, atol=0)


def test_rk4_solves_logistic():
    # dy/dt = y - y^2, y(0) = 0.1: y = 1 / (1 + 9 e^{-t})
    t = np.linspace(0, 5, 51)
    y = kernels.quadratic_rk4(0.1, 1.0, 0.0, 1.0, t, 1e-2)
    assert np.allclose(y, 1 / (1 + 9 * np.exp(-t)), rtol=1e-9)


def test_set_backend_validates(backend):
    with pytest.raises(ValueError):
        backend("fortran")


@pytest.mark.parametrize("flag, expected", [("1", "numpy"), ("0", None)])
def test_environment_flag(flag, expected):
    env = dict(os.environ, QTRACK_NO_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from qtrack import _accel; print(_accel.get_backend())"],
        env=env, capture_output=True, text=True, check=True,
    ).stdout.strip()
    if expected is None:
        expected = "numpy" if _accel.numba is None else "numba"
    assert out == expected
