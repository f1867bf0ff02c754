"""Linear time-varying recursions shared by the simulator and the filters.

Every sequential loop in the package reduces to

    s[k+1] = f[k] * s[k] + g[k] * u[k]

run either forward in time (truth OU process, predicted mean) or backward
(retrodicted mean). Rows of ``u`` are independent series; coefficients are
shared across rows.
"""

import numpy as np

from . import _accel


@_accel.njit
def _forward_numba(u, f, g, s0, out):
    m, n = u.shape
    for j in range(m):
        s = s0[j]
        out[j, 0] = s
        for k in range(n - 1):
            s = f[k] * s + g[k] * u[j, k]
            out[j, k + 1] = s


@_accel.njit
def _backward_numba(u, f, g, s_end, out):
    m, n = u.shape
    for j in range(m):
        s = s_end[j]
        for k in range(n - 1, -1, -1):
            s = f[k] * s + g[k] * u[j, k]
            out[j, k] = s


def _forward_numpy(u, f, g, s0, out):
    s = s0.copy()
    out[:, 0] = s
    for k in range(u.shape[1] - 1):
        s = f[k] * s + g[k] * u[:, k]
        out[:, k + 1] = s


def _backward_numpy(u, f, g, s_end, out):
    s = s_end.copy()
    for k in range(u.shape[1] - 1, -1, -1):
        s = f[k] * s + g[k] * u[:, k]
        out[:, k] = s


def _prepare(u, f, g, s_init):
    u = np.asarray(u, dtype=np.float64)
    lead = u.shape[:-1]
    n = u.shape[-1]
    u2 = np.ascontiguousarray(u.reshape(-1, n))
    f = np.ascontiguousarray(np.broadcast_to(np.asarray(f, dtype=np.float64), (n,)))
    g = np.ascontiguousarray(np.broadcast_to(np.asarray(g, dtype=np.float64), (n,)))
    if s_init is None:
        s_init = np.zeros(u2.shape[0])
    else:
        s_init = np.ascontiguousarray(
            np.broadcast_to(np.asarray(s_init, dtype=np.float64), lead).reshape(-1)
        )
    return u2, f, g, s_init, lead, n


def forward_recursion(u, f, g, s0=None):
    """Causal recursion; ``out[..., 0] = s0`` and ``out[..., k]`` depends on ``u[..., :k]``.

    Parameters
    ----------
    u : ndarray, shape (..., n)
        Driving sequences, time on the last axis.
    f, g : float or ndarray, shape (n,)
        Per-step propagation factor and input gain.
    s0 : float or ndarray broadcastable to ``u.shape[:-1]``, optional
        Initial state, zero by default.
    """
    u2, f, g, s0, lead, n = _prepare(u, f, g, s0)
    out = np.empty_like(u2)
    if _accel.get_backend() == "numba":
        _forward_numba(u2, f, g, s0, out)
    else:
        _forward_numpy(u2, f, g, s0, out)
    return out.reshape(lead + (n,))


def backward_recursion(u, f, g, s_end=None):
    """Anticausal recursion; ``out[..., k]`` depends on ``u[..., k:]`` and ``s_end``.

    ``s_end`` is the state one step past the last sample.
    """
    u2, f, g, s_end, lead, n = _prepare(u, f, g, s_end)
    out = np.empty_like(u2)
    if _accel.get_backend() == "numba":
        _backward_numba(u2, f, g, s_end, out)
    else:
        _backward_numpy(u2, f, g, s_end, out)
    return out.reshape(lead + (n,))


def _quadratic_rk4(y0, a, b, c, t_grid, h_max, out):
    # dy/dt = b + a y - c y^2, classical RK4 with substeps of at most h_max
    y = y0
    out[0] = y
    for j in range(1, t_grid.size):
        span = t_grid[j] - t_grid[j - 1]
        n_sub = max(1, int(np.ceil(span / h_max - 1e-9)))
        h = span / n_sub
        for _ in range(n_sub):
            k1 = b + a * y - c * y * y
            y1 = y + 0.5 * h * k1
            k2 = b + a * y1 - c * y1 * y1
            y2 = y + 0.5 * h * k2
            k3 = b + a * y2 - c * y2 * y2
            y3 = y + h * k3
            k4 = b + a * y3 - c * y3 * y3
            y += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        out[j] = y


_quadratic_rk4_numba = _accel.njit(_quadratic_rk4)


def quadratic_rk4(y0, a, b, c, t_grid, h_max):
    """Integrate dy/dt = b + a y - c y^2 on ``t_grid`` with fixed RK4 substeps."""
    t_grid = np.ascontiguousarray(t_grid, dtype=np.float64)
    out = np.empty_like(t_grid)
    if _accel.get_backend() == "numba":
        _quadratic_rk4_numba(float(y0), float(a), float(b), float(c), t_grid, float(h_max), out)
    else:
        _quadratic_rk4(float(y0), float(a), float(b), float(c), t_grid, float(h_max), out)
    return out
