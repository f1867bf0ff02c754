"""Forward (prediction) and backward (retrodiction) Gaussian state filters.

Both filters are linear in the record for a fixed, data-independent
variance schedule. Records and trajectories carry the two quadratures on
axis -2 and time on axis -1; any leading axes index independent
realizations and are processed in one kernel call.

Index convention: the record sample i_k stands for the increment over
[t_k, t_k + dt). The predicted mean at t_k uses samples before k, the
retrodicted mean at t_k uses samples k and later, so the two estimates at a
common time never share data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from . import kernels, riccati
from .model import DerivedRates
from .simulate import MeasurementRecord


class ParameterMismatchError(ValueError):
    pass


class RecordTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    variance: float
    kind: str
    t: float

    def __post_init__(self):
        if self.variance < 0.5 - 1e-12:
            raise ValueError(f"variance {self.variance} is below the quantum limit 1/2")

    @property
    def purity(self):
        return 1.0 / (2.0 * self.variance)


@dataclass
class StateTrajectory:
    t: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    kind: str
    conditioned: np.ndarray

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])

    @property
    def purity(self):
        return 1.0 / (2.0 * self.variance)

    def index_of(self, t0):
        k = int(round((t0 - self.t[0]) / self.dt))
        if not 0 <= k < self.t.size:
            raise IndexError(f"t0 = {t0:g} s outside the trajectory")
        return k

    def state(self, t0, realization=()):
        k = self.index_of(t0)
        mean = self.mean[realization] if realization != () else self.mean
        return GaussianState(
            mean=np.array(mean[..., :, k]), variance=float(self.variance[k]),
            kind=self.kind, t=float(self.t[k]),
        )

    def __getitem__(self, item):
        return StateTrajectory(self.t, self.mean[item], self.variance, self.kind, self.conditioned)


def _check_record(record: MeasurementRecord, rates: DerivedRates):
    h = record.params_hash
    if h is not None and h != rates.params.params_hash:
        raise ParameterMismatchError(
            "record was generated with different model parameters than the filter's"
        )


@dataclass(frozen=True)
class SampledModel:
    """The record as the filters see it on the dt grid.

    x_{k+1} = a x_k + q xi_k,   y_k = i_k dt = c dt x_k + w_k,   Var w_k = dt,

    with a = 1 - Gamma_m dt/2, q^2 = Gamma_m v_bath dt and c = sqrt(4 Gamma_meas).
    """

    a: float
    q2: float
    c: float
    dt: float

    @classmethod
    def from_rates(cls, rates: DerivedRates, dt):
        return cls(
            a=1.0 - 0.5 * rates.gamma_m * dt,
            q2=rates.diffusion * dt,
            c=math.sqrt(4.0 * rates.gamma_meas),
            dt=dt,
        )

    @property
    def h(self):
        """Information per sample per unit variance, c^2 dt."""
        return self.c * self.c * self.dt

    def forward_step(self, p):
        return self.a * self.a * p / (1.0 + self.h * p) + self.q2

    def backward_step(self, p_next):
        return 1.0 / (self.a * self.a / (p_next + self.q2) + self.h)

    def _root(self, b):
        # positive root of h P^2 + b P - q^2 = 0, written without cancellation
        disc = math.sqrt(b * b + 4.0 * self.h * self.q2)
        if b >= 0:
            return 2.0 * self.q2 / (b + disc)
        return (disc - b) / (2.0 * self.h)

    def steady(self):
        """Fixed points (P_forward, P_backward) of the two variance recursions."""
        b = 1.0 - self.a * self.a - self.q2 * self.h
        return self._root(b), self._root(-b)


def _orbit(step, p0, p_inf, n):
    out = np.empty(n)
    p = p0
    for k in range(n):
        out[k] = p
        if abs(p - p_inf) <= 1e-15 * p_inf:
            out[k:] = p
            break
        p = step(p)
    return out


def sampled_variances(rates: DerivedRates, dt, n, v0=None, ve_final=None):
    """Variances that set the per-step gains: forward P_k and backward P_E,k.

    P_k is the prior variance at t_k given samples before k; P_E,k the effect
    variance at t_k given samples k and later, with P_E,n = ``ve_final``. As
    dt -> 0 they follow V(t) and V_E(t) of the continuous equations.
    """
    model = SampledModel.from_rates(rates, dt)
    p_f, p_b = model.steady()
    v0 = rates.v_bath if v0 is None else v0
    ve_final = rates.v_e_steady if ve_final is None else ve_final
    forward = _orbit(model.forward_step, v0, p_f, n)
    backward = _orbit(model.backward_step, model.backward_step(ve_final), p_b, n)[::-1]
    return forward, backward


def _forward_coefficients(model: SampledModel, p):
    gain = model.a / (1.0 + model.h * p)
    return gain, model.c * p * gain


def _backward_coefficients(model: SampledModel, p, p_next):
    return model.a * p / (p_next + model.q2), model.c * p


def steady_coefficients(rates: DerivedRates, dt):
    """Steady (f, g) of the forward and backward recursions: ``{"forward": (f, g), ...}``."""
    model = SampledModel.from_rates(rates, dt)
    p_f, p_b = model.steady()
    return {
        "forward": _forward_coefficients(model, p_f),
        "backward": _backward_coefficients(model, p_b, p_b),
    }


def predict(record: MeasurementRecord, rates: DerivedRates, v0=None):
    """Conditional mean and variance from past data.

    r_{k+1} = r_k - (Gamma_m/2) r_k dt + sqrt(4 Gamma_meas) G_k (i_k dt - sqrt(4 Gamma_meas) r_k dt)

    This is the Euler-Maruyama form of the continuous update. The gain
    variance G_k = a P_k / (1 + 4 Gamma_meas P_k dt) is the exact optimum for the
    sampled record. Its prior P_k follows V(t_k) to O(dt), and the gain stays
    stable when 4 Gamma_meas V dt is of order 1 early in a collapse. The
    reported variance is the continuous V(t).
    """
    _check_record(record, rates)
    v0 = rates.v_bath if v0 is None else v0
    dt = record.dt
    t = record.t
    model = SampledModel.from_rates(rates, dt)
    p, _ = sampled_variances(rates, dt, record.n, v0=v0)
    f, g = _forward_coefficients(model, p)
    mean = kernels.forward_recursion(record.i * dt, f, g)
    v = riccati.v_analytic(rates, v0, t)
    return StateTrajectory(t, mean, v, "predicted", np.ones(t.size, dtype=bool))


def retrodict(record: MeasurementRecord, rates: DerivedRates, ve_final=None):
    """Effect-operator mean and variance from future data, run from the record end.

    r_k = P_E,k (a r_{k+1} / (P_E,k+1 + q^2) + sqrt(4 Gamma_meas) i_k dt)

    This is the exact backward information update of the sampled record. To
    first order in dt it is
    r_k = r_{k+1} + (Gamma_m/2) r_{k+1} dt + sqrt(4 Gamma_meas) V_E (i_k dt - sqrt(4 Gamma_meas) r_{k+1} dt).
    The final condition sits at t_n = n dt with zero mean and variance
    ``ve_final`` (steady value by default). The reported variance is the
    continuous V_E(t).
    """
    _check_record(record, rates)
    ve_final = rates.v_e_steady if ve_final is None else ve_final
    dt = record.dt
    t = record.t
    model = SampledModel.from_rates(rates, dt)
    _, p = sampled_variances(rates, dt, record.n, ve_final=ve_final)
    p_next = np.append(p[1:], ve_final)
    f, g = _backward_coefficients(model, p, p_next)
    mean = kernels.backward_recursion(record.i * dt, f, g)
    v_e = riccati.v_e_backward(rates, ve_final, record.n * dt - t)
    return StateTrajectory(t, mean, v_e, "retrodicted", np.ones(t.size, dtype=bool))


def predict_unconditioned(traj: StateTrajectory, rates: DerivedRates, t_star):
    """Stop conditioning at ``t_star``; afterwards the state evolves without the record.

    The mean decays exactly as r(t*) exp(-Gamma_m (t - t*)/2) and the variance
    relaxes toward v_bath along the Gamma_meas = 0 variance equation.
    """
    t = traj.t
    if not t[0] <= t_star <= t[-1]:
        raise ValueError(f"t_star = {t_star:g} s outside [{t[0]:g}, {t[-1]:g}]")
    k_star = int(np.searchsorted(t, t_star + 1e-9 * traj.dt, side="right") - 1)
    lag = t[k_star:] - t[k_star]
    mean = np.array(traj.mean, copy=True)
    mean[..., k_star:] = mean[..., k_star : k_star + 1] * np.exp(-0.5 * rates.gamma_m * lag)
    variance = np.array(traj.variance, copy=True)
    variance[k_star:] = riccati.v_analytic(rates, variance[k_star], lag, gamma_meas=0.0)
    conditioned = np.array(traj.conditioned, copy=True)
    conditioned[k_star + 1 :] = False
    return StateTrajectory(t, mean, variance, traj.kind, conditioned)


def kernel_taps(rates: DerivedRates, dt, direction, tol=1e-16):
    """Sampled exponential kernel matching the steady-state recursion.

    The per-sample ratio is the recursion's f (about 1 - alpha dt), so the
    taps are e^{-alpha t} as realized on the grid.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    ratio, gain = steady_coefficients(rates, dt)[direction]
    if not 0 < ratio < 1:
        raise ValueError("dt too large for the steady-state kernel")
    length = int(math.ceil(math.log(tol) / math.log(ratio))) + 1
    powers = gain * ratio ** np.arange(length)
    if direction == "forward":
        return np.concatenate([[0.0], powers])
    return powers


def steady_kernel_filter(record: MeasurementRecord, rates: DerivedRates, direction="forward"):
    """Steady-state mean as an FFT convolution of the record with the exponential kernel.

    Forward: causal kernel sqrt(4 Gamma_meas) V e^{-alpha t} H(t).
    Backward: anticausal kernel sqrt(4 Gamma_meas) V_E e^{alpha t} H(-t).
    """
    _check_record(record, rates)
    dt = record.dt
    if record.n * dt < 10.0 / rates.alpha:
        raise RecordTooShortError(
            f"record of {record.n * dt:g} s is shorter than twice the 5/alpha edge transient"
        )
    taps = kernel_taps(rates, dt, direction)
    y = record.i * dt
    shape = (1,) * (y.ndim - 1) + (taps.size,)
    if direction == "forward":
        mean = signal.fftconvolve(y, taps.reshape(shape), axes=-1)[..., : record.n]
        v = np.full(record.n, rates.v_steady)
        kind = "predicted"
    else:
        rev = signal.fftconvolve(y[..., ::-1], taps.reshape(shape), axes=-1)[..., : record.n]
        mean = rev[..., ::-1]
        v = np.full(record.n, rates.v_e_steady)
        kind = "retrodicted"
    return StateTrajectory(record.t, mean, v, kind, np.ones(record.n, dtype=bool))


def innovations(record: MeasurementRecord, traj: StateTrajectory, rates: DerivedRates):
    """dW_k = i_k dt - sqrt(4 Gamma_meas) r_k dt for a predicted trajectory."""
    c = math.sqrt(4.0 * rates.gamma_meas)
    return (record.i - c * traj.mean) * record.dt
