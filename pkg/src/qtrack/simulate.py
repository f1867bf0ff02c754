"""Synthetic measurement records.

The generative model is the classical state-space equivalent of the
conditional dynamics: each true quadrature is an Ornstein-Uhlenbeck process

    dx = -(Gamma_m / 2) x dt + sqrt(Gamma_m v_bath) dB,

started from its stationary law, and the baseband record is

    i_k = sqrt(4 Gamma_meas) x_k + w_k / dt,   w_k ~ N(0, dt),

so pure noise has unit two-sided spectral density. Backaction and shot noise
are independent.

Randomness is drawn from Philox streams keyed by (seed, realization index,
purpose, channel), which makes every realization reproducible on its own and
independent of how an ensemble is split across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import ModelParams, derive_rates

DEFAULT_DT = 1e-6
DEFAULT_SEGMENT = 3.2e-3
CARRIER_OVERSAMPLE = 16

_INIT, _PROCESS, _SHOT, _CARRIER = 0, 1, 2, 3


class StepSizeError(ValueError):
    pass


class SamplingRateError(ValueError):
    pass


def rng(seed, index, purpose, channel=0):
    """Counter-based generator for one (seed, realization, purpose, channel) stream."""
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index), purpose, channel))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class TruthTrajectory:
    """True quadratures ``x`` of shape (..., 2, n) on the grid k * dt."""

    dt: float
    x: np.ndarray
    seed: int | None = None
    params_hash: int | None = None

    @property
    def n(self):
        return self.x.shape[-1]

    @property
    def t(self):
        return np.arange(self.n) * self.dt


@dataclass
class MeasurementRecord:
    """Two-channel baseband record ``i`` of shape (..., 2, n), shot-noise normalized.

    ``n_invalid`` leading samples are filter transients and must not enter
    statistics.
    """

    dt: float
    i: np.ndarray
    seed: int | None = None
    params_hash: int | None = None
    n_invalid: int = 0

    def __post_init__(self):
        self.i = np.asarray(self.i, dtype=np.float64)
        if self.i.ndim < 2 or self.i.shape[-2] != 2:
            raise ValueError(f"record must have shape (..., 2, n), got {self.i.shape}")
        if not (self.dt > 0):
            raise ValueError("dt must be positive")

    @property
    def n(self):
        return self.i.shape[-1]

    @property
    def t(self):
        return np.arange(self.n) * self.dt

    def __getitem__(self, item):
        """Select realizations from a batched record."""
        return MeasurementRecord(
            self.dt, self.i[item], self.seed, self.params_hash, self.n_invalid
        )


@dataclass
class CarrierRecord:
    """Raw photocurrent sampled at ``fs`` (shape (..., n)); one-sided noise background 1."""

    fs: float
    current: np.ndarray
    omega_m: float
    seed: int | None = None
    params_hash: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.current.shape[-1]

    @property
    def t(self):
        return np.arange(self.n) / self.fs


def check_step(p, dt):
    # dt = 1 us must be admissible for the membrane parameters (Gamma_meas dt ~ 0.012).
    if not (dt > 0):
        raise StepSizeError("dt must be positive")
    if dt * p.gamma_meas > 0.02 or dt * p.gamma_m > 1e-3:
        raise StepSizeError(
            f"dt = {dt:g} s does not resolve the rates "
            f"(Gamma_meas dt = {dt * p.gamma_meas:.3g}, Gamma_m dt = {dt * p.gamma_m:.3g})"
        )


def _as_indices(index):
    idx = np.atleast_1d(np.asarray(index, dtype=np.int64))
    if idx.ndim != 1 or np.any(idx < 0):
        raise ValueError("realization indices must be non-negative integers")
    return idx


def _truth_noise(seed, indices, n):
    init = np.empty((indices.size, 2))
    noise = np.zeros((indices.size, 2, n))
    for row, idx in enumerate(indices):
        for ch in range(2):
            init[row, ch] = rng(seed, idx, _INIT, ch).standard_normal()
            noise[row, ch, : n - 1] = rng(seed, idx, _PROCESS, ch).standard_normal(n - 1)
    return init, noise


def simulate_truth(p: ModelParams, dt, n, seed, index=0):
    """Euler-Maruyama OU truth for one realization (scalar ``index``) or many.

    A sequence of indices yields ``x`` with shape (len(index), 2, n); row j is
    bit-identical to ``simulate_truth(p, dt, n, seed, index[j])``.
    """
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    check_step(p, dt)
    if n < 2:
        raise ValueError("n must be >= 2")
    rates = derive_rates(p)
    indices = _as_indices(index)
    init, noise = _truth_noise(seed, indices, n)
    x0 = math.sqrt(rates.v_bath) * init
    decay = 1.0 - 0.5 * p.gamma_m * dt
    kick = math.sqrt(rates.diffusion * dt)
    x = kernels.forward_recursion(noise, decay, kick, x0)
    if np.ndim(index) == 0:
        x = x[0]
    return TruthTrajectory(dt=dt, x=x, seed=seed, params_hash=p.params_hash)


def measure(truth: TruthTrajectory, p: ModelParams, seed, index=0):
    """Shot-noise-limited baseband record of ``truth``.

    For a batched truth, ``index`` must list one realization index per row.
    """
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    x = np.asarray(truth.x, dtype=np.float64)
    if x.shape[-2] != 2:
        raise ValueError("truth must have shape (..., 2, n)")
    indices = _as_indices(index)
    batch = x.reshape(-1, 2, x.shape[-1])
    if batch.shape[0] != indices.size:
        raise ValueError("need one realization index per truth row")
    dt = truth.dt
    n = x.shape[-1]
    scale = 1.0 / math.sqrt(dt)
    shot = np.empty_like(batch)
    for row, idx in enumerate(indices):
        for ch in range(2):
            shot[row, ch] = rng(seed, idx, _SHOT, ch).standard_normal(n)
    i = math.sqrt(4.0 * p.gamma_meas) * batch + scale * shot
    return MeasurementRecord(dt=dt, i=i.reshape(x.shape), seed=seed, params_hash=p.params_hash)


def simulate_record(p, dt, n, seed, index=0):
    """Convenience: truth and its measurement record for the same realization(s)."""
    truth = simulate_truth(p, dt, n, seed, index)
    return truth, measure(truth, p, seed, index)


def default_carrier_rate(p):
    return CARRIER_OVERSAMPLE * p.omega_m / (2.0 * math.pi)


def carrier_baseband_dt(p, oversample=CARRIER_OVERSAMPLE):
    """Baseband step that makes the carrier rate an integer multiple: one mechanical period."""
    return 2.0 * math.pi / p.omega_m * (CARRIER_OVERSAMPLE / oversample)


def synthesize_carrier(truth: TruthTrajectory, p: ModelParams, fs=None, seed=None, index=0):
    """Photocurrent at the carrier frequency carrying the true quadratures.

    I(t) = sqrt(4 Gamma_meas) [X(t) cos(Omega_m t) + Y(t) sin(Omega_m t)] + n(t),

    with ``n`` white of one-sided density 1 (per-sample variance fs/2). Coherent
    demodulation with gain 2 then returns unit-background quadratures carrying
    sqrt(4 Gamma_meas) X and sqrt(4 Gamma_meas) Y, the same scaling as
    :func:`measure`. The truth is held constant over each of its steps.
    """
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    f_m = p.omega_m / (2.0 * math.pi)
    fs = default_carrier_rate(p) if fs is None else float(fs)
    if fs <= 8.0 * f_m:
        raise SamplingRateError(f"carrier rate {fs:g} Hz must exceed 8 x {f_m:g} Hz")
    x = np.asarray(truth.x, dtype=np.float64)
    indices = _as_indices(index)
    batch = x.reshape(-1, 2, x.shape[-1])
    if batch.shape[0] != indices.size:
        raise ValueError("need one realization index per truth row")

    ratio = fs * truth.dt
    n_c = int(round(truth.n * ratio))
    j = np.arange(n_c)
    if abs(ratio - round(ratio)) < 1e-9 * ratio:
        hold = j // int(round(ratio))
    else:
        hold = np.minimum((j / ratio).astype(np.int64), truth.n - 1)
    phase = p.omega_m * (j / fs)
    cos, sin = np.cos(phase), np.sin(phase)
    amp = math.sqrt(4.0 * p.gamma_meas)
    noise_scale = math.sqrt(fs / 2.0)
    current = np.empty((batch.shape[0], n_c))
    for row, idx in enumerate(indices):
        sig = batch[row, 0, hold] * cos + batch[row, 1, hold] * sin
        current[row] = amp * sig + noise_scale * rng(seed, idx, _CARRIER).standard_normal(n_c)
    current = current.reshape(x.shape[:-2] + (n_c,))
    return CarrierRecord(
        fs=fs, current=current, omega_m=p.omega_m, seed=seed, params_hash=p.params_hash
    )
