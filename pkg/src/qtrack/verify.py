"""Retrodictive verification statistics over ensembles of trajectories."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import riccati, spectral
from .ensemble import EnsembleConfig, TrajectoryEnsemble, run_ensemble, steady_window
from .filters import StateTrajectory
from .model import DerivedRates, ModelParams, derive_rates

MIN_REALIZATIONS = 100


class InsufficientEnsembleError(ValueError):
    pass


class NonSteadyStateWarning(UserWarning):
    pass


@dataclass
class VerificationReport:
    n_realizations: int
    t0: list
    sigma2: float
    sigma2_stderr: float
    sigma2_xx: float
    sigma2_yy: float
    sigma2_xy: float
    sigma2_raw: float
    v_e_steady: float
    v_impl: float
    purity: float
    purity_stderr: float
    n_cond: float
    purity_symmetric: float
    filter_corrected: bool
    correction_factor: float

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


@dataclass
class CollapseCurve:
    t0: np.ndarray
    sigma2: np.ndarray
    stderr: np.ndarray
    theory: np.ndarray
    n_realizations: int
    t_star: float | None = None

    def max_zscore(self):
        return float(np.max(np.abs(self.sigma2 - self.theory) / self.stderr))

    def rows(self):
        return zip(self.t0, self.sigma2, self.stderr, self.theory)


def _stack(traj):
    if isinstance(traj, StateTrajectory):
        mean = traj.mean
        return traj.t, mean.reshape((-1,) + mean.shape[-2:]), traj.variance
    trajs = list(traj)
    mean = np.stack([tr.mean for tr in trajs])
    return trajs[0].t, mean.reshape((-1,) + mean.shape[-2:]), trajs[0].variance


def _indices(t, t0):
    dt = t[1] - t[0]
    k = np.rint((np.atleast_1d(np.asarray(t0, dtype=np.float64)) - t[0]) / dt).astype(int)
    if np.any(k < 0) or np.any(k >= t.size):
        raise IndexError("t0 outside the trajectories")
    return k


def _differences(pred, retro, t0):
    t, rp, vp = _stack(pred)
    t_r, rr, vr = _stack(retro)
    if rp.shape != rr.shape or not np.allclose(t, t_r):
        raise ValueError("prediction and retrodiction ensembles must share shape and time grid")
    k = _indices(t, t0)
    return rp[..., k] - rr[..., k], vp[k], vr[k]


def _covariance(d):
    """Unbiased 2x2 covariance of d (m, 2, j) pooled over the j time points."""
    m = d.shape[0]
    centred = d - d.mean(axis=0, keepdims=True)
    cov = np.einsum("mak,mbk->ab", centred, centred) / ((m - 1) * d.shape[-1])
    per_real = np.mean(centred**2, axis=(1, 2)) * m / (m - 1)
    stderr = float(np.std(per_real, ddof=1) / math.sqrt(m))
    return cov, stderr


def relative_variance(pred, retro, t0, rates: DerivedRates | None = None, correction=None):
    """Ensemble covariance of r_pred(t0) - r_retro(t0).

    ``t0`` may be a sequence of steady-state times; they are pooled and the
    standard error is computed from per-realization averages. ``correction``
    multiplies sigma^2 (demodulation-filter correction). ``rates`` supplies
    V_E for the implied conditional variance; otherwise the retrodiction's
    own variance at t0 is used.
    """
    d, v_pred, v_retro = _differences(pred, retro, t0)
    m = d.shape[0]
    if m < MIN_REALIZATIONS:
        raise InsufficientEnsembleError(f"need >= {MIN_REALIZATIONS} realizations, got {m}")
    if rates is not None:
        steady = riccati.is_steady(v_pred, rates.v_steady) & riccati.is_steady(
            v_retro, rates.v_e_steady
        )
        if not np.all(steady):
            warnings.warn("t0 outside the steady-state region", NonSteadyStateWarning, stacklevel=2)
        v_e = rates.v_e_steady
    else:
        v_e = float(np.mean(v_retro))
    cov, stderr = _covariance(d)
    raw = 0.5 * (cov[0, 0] + cov[1, 1])
    factor = 1.0 if correction is None else float(correction)
    sigma2 = raw * factor
    stderr *= factor
    v_impl = sigma2 - v_e
    purity = 1.0 / (2.0 * v_impl) if v_impl > 0 else math.inf
    return VerificationReport(
        n_realizations=m,
        t0=[float(x) for x in np.atleast_1d(t0)],
        sigma2=float(sigma2),
        sigma2_stderr=stderr,
        sigma2_xx=float(cov[0, 0] * factor),
        sigma2_yy=float(cov[1, 1] * factor),
        sigma2_xy=float(cov[0, 1] * factor),
        sigma2_raw=float(raw),
        v_e_steady=float(v_e),
        v_impl=float(v_impl),
        purity=float(purity),
        purity_stderr=float(stderr / (2.0 * v_impl**2)) if v_impl > 0 else math.inf,
        n_cond=float(v_impl - 0.5),
        purity_symmetric=float(1.0 / sigma2),
        filter_corrected=correction is not None,
        correction_factor=factor,
    )


def steady_t0(t, rates: DerivedRates, n_invalid=0, stride=10):
    """Steady-state times to pool over: every ``stride``-th sample of the steady window.

    Neighbouring samples are correlated over about 1/alpha, so pooling many of
    them mainly averages down the quadrature-to-quadrature scatter.
    """
    t = np.asarray(t)
    lo, hi = steady_window(rates, t[1] - t[0], t.size, n_invalid)
    return t[lo:hi:stride]


def sigma2_curve(pred, retro, t0_grid):
    """sigma^2 and its standard error at each t0 (no pooling, no steady-state check)."""
    d, _, _ = _differences(pred, retro, t0_grid)
    m = d.shape[0]
    centred = d - d.mean(axis=0, keepdims=True)
    sq = 0.5 * np.sum(centred**2, axis=1) * m / (m - 1)
    return sq.mean(axis=0), sq.std(axis=0, ddof=1) / math.sqrt(m)


def _ensemble(params, config, ensemble, **overrides):
    if ensemble is not None:
        return ensemble
    config = replace(config or EnsembleConfig(), **overrides)
    return run_ensemble(params, config)


def collapse_curve(params: ModelParams, t0_grid, config=None, ensemble=None):
    """Monte Carlo sigma^2(t0) for predictions started at t = 0, overlaid with V(t0) + V_E(t0)."""
    ens = _ensemble(params, config, ensemble)
    rates = derive_rates(params)
    t0_grid = np.asarray(t0_grid, dtype=np.float64)
    sigma2, stderr = sigma2_curve(ens.pred, ens.retro, t0_grid)
    k = _indices(ens.t, t0_grid)
    theory = ens.pred.variance[k] + ens.retro.variance[k]
    return CollapseCurve(t0_grid, sigma2, stderr, theory, ens.n_realizations, ens.config.t_star)


def decoherence_curve(params: ModelParams, t_star, t_grid, config=None, ensemble=None):
    """Monte Carlo sigma^2(t) with conditioning stopped at ``t_star``, against the closed form."""
    ens = _ensemble(params, config, ensemble, t_star=t_star)
    if ens.config.t_star is None or not math.isclose(ens.config.t_star, t_star):
        raise ValueError("ensemble was not unconditioned at t_star")
    rates = derive_rates(params)
    t_grid = np.asarray(t_grid, dtype=np.float64)
    sigma2, stderr = sigma2_curve(ens.pred, ens.retro, t_grid)
    k = _indices(ens.t, t_grid)
    before = ens.pred.variance[k] + ens.retro.variance[k]
    after = spectral.decoherence_theory(rates, t_grid, t_star)
    theory = np.where(t_grid > t_star, after, before)
    return CollapseCurve(t_grid, sigma2, stderr, theory, ens.n_realizations, t_star)


def unconditional_variance(retro, t0=None, rates: DerivedRates | None = None):
    """Ensemble variance of the retrodicted mean (pooled over quadratures)."""
    if rates is not None and rates.gamma_meas <= 1e-6 * rates.gamma_m:
        raise ValueError("retrodiction is undefined without measurement (gamma_meas -> 0)")
    t, r, _ = _stack(retro)
    if t0 is None:
        t0 = t[t.size // 2]
    k = _indices(t, t0)
    vals = r[..., k]
    return float(np.var(vals, axis=0, ddof=1).mean())


def unconditional_theory(rates: DerivedRates):
    return 4.0 * rates.gamma_meas / rates.gamma_m * rates.v_e_steady**2


def truth_errors(ensemble: TrajectoryEnsemble, window):
    """Mean-square error of prediction and retrodiction against the true state."""
    if ensemble.truth is None:
        raise ValueError("ensemble was generated without truth")
    lo, hi = window
    x = ensemble.truth[..., lo:hi]
    e_pred = float(np.mean((x - ensemble.pred.mean[..., lo:hi]) ** 2))
    e_retro = float(np.mean((x - ensemble.retro.mean[..., lo:hi]) ** 2))
    return e_pred, e_retro


def innovation_autocorrelation(dw, max_lag=100):
    """Sample autocorrelation of innovations at lags 1..max_lag, pooled over leading axes.

    Returns ``(rho, sigma)``: the normalized autocorrelation and its standard
    error 1/sqrt(N_lag) under the white-noise hypothesis.
    """
    dw = np.asarray(dw, dtype=np.float64)
    n = dw.shape[-1]
    rows = dw.reshape(-1, n)
    if n <= max_lag:
        raise ValueError("series shorter than max_lag")
    nfft = 1 << int(math.ceil(math.log2(2 * n)))
    spec = np.fft.rfft(rows, nfft, axis=-1)
    acf = np.fft.irfft(np.abs(spec) ** 2, nfft, axis=-1)[:, : max_lag + 1].sum(axis=0)
    lags = np.arange(1, max_lag + 1)
    counts = rows.shape[0] * (n - lags)
    rho = (acf[1:] / counts) / (acf[0] / (rows.shape[0] * n))
    return rho, 1.0 / np.sqrt(counts)
