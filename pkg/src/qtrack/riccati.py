"""Deterministic conditional-variance dynamics.

Forward variance obeys

    dV/dt = -Gamma_m V + Gamma_m v_bath - 4 Gamma_meas V^2
          = -4 Gamma_meas (V - V_s)(V + V_Es),

and the backward (effect-operator) variance, in reversed time s = T - t,

    dV_E/ds = +Gamma_m V_E + Gamma_m v_bath - 4 Gamma_meas V_E^2
            = -4 Gamma_meas (V_E - V_Es)(V_E + V_s).

Both are Bernoulli equations for the deviation u from the fixed point with
the same linear rate k = 4 Gamma_meas (V_s + V_Es) = 8 Gamma_meas V_s + Gamma_m:

    u(t) = u0 e^{-kt} / (1 + u0 (1 - e^{-kt}) / (V_s + V_Es)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import DerivedRates, steady_variance

STEADY_RTOL = 1e-3


class DomainError(ValueError):
    pass


class StepSizeError(ValueError):
    pass


@dataclass(frozen=True)
class VarianceCurve:
    t: np.ndarray
    v: np.ndarray
    direction: str = "forward"


def _check_v0(v0):
    if np.any(np.asarray(v0) < 0.5):
        raise DomainError(f"initial variance must be >= 1/2 (quantum limit), got {v0!r}")


def _relax(v_s, v0, t, k, inv_s):
    """v_s + u(t) with u(0) = v0 - v_s; returns v0 itself at t = 0."""
    t = np.asarray(t, dtype=np.float64)
    u0 = v0 - v_s
    decay = np.exp(-k * t)
    out = np.where(t == 0, v0, v_s + u0 * decay / (1.0 + u0 * inv_s * (1.0 - decay)))
    if out.ndim == 0:
        return float(out)
    return out


def _coefficients(rates, gamma_meas=None):
    """(fixed point, decay rate k, 1/(V_s + V_Es)) for the forward equation."""
    gm = rates.params.gamma_m
    g_meas = rates.params.gamma_meas if gamma_meas is None else gamma_meas
    if g_meas == 0:
        return rates.v_bath, gm, 0.0
    v_s = steady_variance(gm, rates.v_bath, g_meas)
    k = 8.0 * g_meas * v_s + gm
    return v_s, k, 4.0 * g_meas / k


def v_analytic(rates: DerivedRates, v0, t, *, gamma_meas=None):
    """Forward conditional variance V(t) from V(0) = v0.

    ``gamma_meas`` overrides the measurement rate; ``gamma_meas=0`` gives the
    unconditioned relaxation toward ``v_bath`` at rate Gamma_m.
    """
    _check_v0(v0)
    if np.any(np.asarray(t) < 0):
        raise DomainError("t must be >= 0")
    v_s, k, inv_s = _coefficients(rates, gamma_meas)
    return _relax(v_s, v0, t, k, inv_s)


def v_thermal_closed_form(rates: DerivedRates, t):
    """V(t) for a thermal start v0 = v_bath, in the form quoted alongside the Bernoulli solution.

    V(t) = V + (2V + Gamma_m/(4 Gamma_meas)) /
               (e^{(8 V Gamma_meas + Gamma_m) t} [1 + Gamma_m/(4 Gamma_meas V)]^2 - 1)

    Evaluated directly (no overflow guard) so it can check :func:`v_analytic`.
    """
    p = rates.params
    v = rates.v_steady
    ratio = p.gamma_m / (4.0 * p.gamma_meas)
    growth = np.exp((8.0 * v * p.gamma_meas + p.gamma_m) * np.asarray(t, dtype=np.float64))
    return v + (2.0 * v + ratio) / (growth * (1.0 + ratio / v) ** 2 - 1.0)


def v_e_backward(rates: DerivedRates, ve_final, t_before_end):
    """Retrodiction variance a time ``t_before_end`` before the final condition."""
    _check_v0(ve_final)
    if np.any(np.asarray(t_before_end) < 0):
        raise DomainError("t_before_end must be >= 0")
    inv_s = 1.0 / rates.sigma2_steady
    return _relax(rates.v_e_steady, ve_final, t_before_end, rates.collapse_rate, inv_s)


def forward_rhs(rates, v, gamma_meas=None):
    p = rates.params
    g_meas = p.gamma_meas if gamma_meas is None else gamma_meas
    return -p.gamma_m * v + rates.diffusion - 4.0 * g_meas * v * v


def backward_rhs(rates, v_e):
    """d V_E / ds in reversed time; the forward form with the damping sign flipped."""
    p = rates.params
    return p.gamma_m * v_e + rates.diffusion - 4.0 * p.gamma_meas * v_e * v_e


def _check_grid(t_grid, stiffness):
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.ndim != 1 or t_grid.size < 2:
        raise StepSizeError("t_grid needs at least two points")
    steps = np.diff(t_grid)
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-6, atol=0):
        raise StepSizeError("t_grid must be uniform and increasing")
    if steps[0] * stiffness >= 0.1:
        raise StepSizeError(
            f"grid step {steps[0]:g} s too coarse: step * (8 Gamma_meas v0 + Gamma_m) = "
            f"{steps[0] * stiffness:.3g} >= 0.1"
        )
    return t_grid, steps[0]


def v_ode_oracle(rates: DerivedRates, v0, t_grid, *, gamma_meas=None, direction="forward"):
    """Fixed-step RK4 integration of the variance equation (test oracle).

    The internal step is min(1e-3 / (8 Gamma_meas v0 + Gamma_m), grid step).
    For ``direction="backward"`` ``t_grid`` is time before the final condition.
    """
    _check_v0(v0)
    p = rates.params
    g_meas = p.gamma_meas if gamma_meas is None else gamma_meas
    stiffness = 8.0 * g_meas * v0 + p.gamma_m
    t_grid, step = _check_grid(t_grid, stiffness)
    h_max = min(1e-3 / stiffness, step)
    if direction == "forward":
        damping = -p.gamma_m
    elif direction == "backward":
        if gamma_meas is not None:
            raise ValueError("gamma_meas override applies to the forward equation only")
        damping = p.gamma_m
    else:
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    v = kernels.quadratic_rk4(v0, damping, rates.diffusion, 4.0 * g_meas, t_grid, h_max)
    return VarianceCurve(t=t_grid, v=v, direction=direction)


def forward_curve(rates, v0, t_grid):
    return VarianceCurve(t=np.asarray(t_grid, float), v=v_analytic(rates, v0, t_grid))


def backward_curve(rates, ve_final, t_grid, t_end):
    """V_E on ``t_grid`` for a final condition ``ve_final`` at time ``t_end``."""
    t_grid = np.asarray(t_grid, float)
    return VarianceCurve(
        t=t_grid, v=v_e_backward(rates, ve_final, t_end - t_grid), direction="backward"
    )


def is_steady(v, v_steady, rtol=STEADY_RTOL):
    return np.abs(np.asarray(v) - v_steady) < rtol * v_steady


def time_to_steady(rates, v0, rtol=STEADY_RTOL):
    """First time at which |V - V_s| < rtol V_s, starting from v0."""
    _check_v0(v0)
    u0 = v0 - rates.v_steady
    target = rtol * rates.v_steady
    if abs(u0) < target:
        return 0.0
    k = rates.collapse_rate
    inv_s = 1.0 / rates.sigma2_steady
    # |u0| e / (1 + u0 inv_s (1 - e)) = target, solved for e = exp(-k t)
    e = target * (1.0 + u0 * inv_s) / (abs(u0) + target * u0 * inv_s)
    return float(-math.log(e) / k)
