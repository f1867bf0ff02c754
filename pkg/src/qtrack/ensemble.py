"""Monte Carlo ensembles of independent measurement segments.

Segments are generated and filtered in fixed-size chunks, optionally on a
thread pool. Every segment draws from its own (seed, index) random streams
and is filtered row by row, so the assembled arrays do not depend on the
chunking or on the number of workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import demod, filters, simulate
from .model import ModelParams, derive_rates

CHUNK = 50


def resolve_threads(threads=None):
    if threads is None:
        threads = int(os.environ.get("QTRACK_THREADS", "1") or 1)
    return max(1, int(threads))


@dataclass(frozen=True)
class EnsembleConfig:
    """How segments are produced.

    pipeline:
      ``baseband`` direct two-channel record;
      ``carrier`` carrier photocurrent at 16 x Omega_m/2pi, then IQ demodulation;
      ``lowpass`` baseband record passed through the demodulation low-pass.
    ``ve_final`` is the retrodiction's final variance (v_bath when None).
    """

    n_segments: int = 1000
    segment: float = simulate.DEFAULT_SEGMENT
    dt: float = simulate.DEFAULT_DT
    seed: int = 0
    pipeline: str = "baseband"
    demod: demod.DemodFilterSpec = field(default_factory=demod.DemodFilterSpec)
    ve_final: float | None = None
    t_star: float | None = None
    keep_truth: bool = True
    threads: int | None = None
    first_index: int = 0

    def __post_init__(self):
        if self.n_segments < 1:
            raise ValueError("n_segments must be >= 1")
        if self.pipeline not in ("baseband", "carrier", "lowpass"):
            raise ValueError(f"unknown pipeline {self.pipeline!r}")


@dataclass
class TrajectoryEnsemble:
    """Predicted, retrodicted and (optionally) true quadratures, each (m, 2, n)."""

    params: ModelParams
    config: EnsembleConfig
    dt: float
    truth: np.ndarray | None
    pred: filters.StateTrajectory
    retro: filters.StateTrajectory
    n_invalid: int = 0

    @property
    def t(self):
        return self.pred.t

    @property
    def n_realizations(self):
        return self.pred.mean.shape[0]


def _grid(params, config):
    if config.pipeline == "carrier":
        dt = simulate.carrier_baseband_dt(params)
    else:
        dt = config.dt
    return dt, int(round(config.segment / dt))


def _run_chunk(params, rates, config, dt, n, indices):
    truth = simulate.simulate_truth(params, dt, n, config.seed, indices)
    if config.pipeline == "carrier":
        carrier = simulate.synthesize_carrier(truth, params, seed=config.seed, index=indices)
        record = demod.demodulate(carrier, spec=config.demod)
        if record.n != n:
            raise RuntimeError("demodulated grid does not match the truth grid")
    else:
        record = simulate.measure(truth, params, config.seed, indices)
        if config.pipeline == "lowpass":
            record = demod.lowpass_record(record, config.demod)
    ve_final = rates.v_bath if config.ve_final is None else config.ve_final
    pred = filters.predict(record, rates)
    if config.t_star is not None:
        pred = filters.predict_unconditioned(pred, rates, config.t_star)
    retro = filters.retrodict(record, rates, ve_final)
    x = truth.x if config.keep_truth else None
    return x, pred, retro, record.n_invalid


def run_ensemble(params: ModelParams, config: EnsembleConfig) -> TrajectoryEnsemble:
    rates = derive_rates(params)
    dt, n = _grid(params, config)
    start = config.first_index
    bounds = list(range(start, start + config.n_segments, CHUNK)) + [start + config.n_segments]
    chunks = [np.arange(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]

    def job(indices):
        return _run_chunk(params, rates, config, dt, n, indices)

    workers = resolve_threads(config.threads)
    if workers == 1:
        parts = [job(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, chunks))

    pred0, retro0 = parts[0][1], parts[0][2]
    pred = filters.StateTrajectory(
        pred0.t, np.concatenate([p[1].mean for p in parts]), pred0.variance,
        pred0.kind, pred0.conditioned,
    )
    retro = filters.StateTrajectory(
        retro0.t, np.concatenate([p[2].mean for p in parts]), retro0.variance,
        retro0.kind, retro0.conditioned,
    )
    truth = np.concatenate([p[0] for p in parts]) if config.keep_truth else None
    return TrajectoryEnsemble(
        params=params, config=config, dt=dt, truth=truth, pred=pred, retro=retro,
        n_invalid=parts[0][3],
    )


def steady_window(rates, dt, n, n_invalid=0, margin=10.0):
    """Index range where both variances are steady: ``margin`` collapse times from each end."""
    edge = int(math.ceil(margin / rates.collapse_rate / dt))
    lo = max(edge, n_invalid + edge)
    hi = n - edge
    if hi <= lo:
        raise ValueError("segment too short for a steady-state window")
    return lo, hi
