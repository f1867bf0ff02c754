"""Frequency-domain statistics of the steady-state estimators.

In steady state both estimates are convolutions of the record with
exponential kernels,

    K[W]    = sqrt(4 Gamma_meas) V   / (alpha + iW)   (causal),
    Kbar[W] = sqrt(4 Gamma_meas) V_E / (alpha - iW)   (anticausal),

and the record, optionally passed through the demodulation low-pass D, has
two-sided density

    S_ii(W) = 1 + 4 Gamma_meas S_xx(W),  S_xx(W) = v_bath Gamma_m / (Gamma_m^2/4 + W^2).

S_xx is the Lorentzian of the OU quadrature; its weight (1/2pi) int S_xx dW
is v_bath. Variances and covariances are (1/2pi) int G(W) |D|^2 S_ii dW with
G = |K|^2, |Kbar|^2, K[-W] Kbar[W] or |K - Kbar|^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import demod
from .model import DerivedRates


class ResolutionError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralModel:
    rates: DerivedRates
    demod: demod.DemodFilterSpec | None = None
    fs: float | None = None

    @property
    def _c(self):
        return math.sqrt(4.0 * self.rates.gamma_meas)

    def s_xx(self, w):
        r = self.rates
        return r.v_bath * r.gamma_m / (0.25 * r.gamma_m**2 + np.asarray(w) ** 2)

    def s_ii(self, w):
        return 1.0 + 4.0 * self.rates.gamma_meas * self.s_xx(w)

    def k_forward(self, w):
        return self._c * self.rates.v_steady / (self.rates.alpha + 1j * np.asarray(w))

    def k_backward(self, w):
        return self._c * self.rates.v_e_steady / (self.rates.alpha - 1j * np.asarray(w))

    def d(self, w):
        if self.demod is None:
            return np.ones_like(np.asarray(w, dtype=np.float64), dtype=complex)
        return demod.response(self.demod, np.asarray(w) / (2 * math.pi), self.fs)

    def without_filter(self):
        return SpectralModel(self.rates, None, None)

    def with_filter(self, spec=None):
        spec = spec or self.demod or demod.DemodFilterSpec()
        return SpectralModel(self.rates, spec, self.fs)

    def breakpoints(self):
        r = self.rates
        lo = r.gamma_m / 100.0
        hi = 1e4 * r.alpha
        pts = [np.geomspace(lo, hi, int(8 * math.log10(hi / lo)) + 1)]
        pts.append(np.linspace(0.0, 2.0 * r.gamma_m, 9))
        if self.demod is not None:
            wc = 2 * math.pi * self.demod.cutoff
            hi = max(hi, 100.0 * wc)
            pts.append(np.linspace(0.5 * wc, 2.0 * wc, 31))
            pts.append(np.geomspace(2.0 * wc, hi, 25))
        return np.unique(np.concatenate(pts + [[0.0, hi]]))


@dataclass(frozen=True)
class SpectralStatistics:
    pred_var: float
    retro_var: float
    cross: float
    sigma2: float

    def as_dict(self):
        return {
            "pred_var": self.pred_var,
            "retro_var": self.retro_var,
            "cross": self.cross,
            "sigma2": self.sigma2,
        }


def _gauss_panels(func, edges, order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    x = 0.5 * (b - a) * nodes + 0.5 * (b + a)
    vals = func(x.ravel()).reshape(x.shape)
    return float(np.sum(0.5 * (b - a) * weights * vals))


def _half_line(func, edges, order):
    """int_0^inf func, with [edges[-1], inf) mapped onto u in (0, 1] by W = W_max / u."""
    w_max = edges[-1]
    body = _gauss_panels(func, edges, order)

    def tail(u):
        return func(w_max / u) * w_max / u**2

    tail_edges = np.geomspace(1e-8, 1.0, 17)
    tail_edges[0] = 0.0
    return body + _gauss_panels(tail, tail_edges, order)


def _refine(edges):
    mids = 0.5 * (edges[:-1] + edges[1:])
    return np.sort(np.concatenate([edges, mids]))


def integrate_spectrum(func, edges, order=24, rtol=1e-9):
    """(1/2pi) int_{-inf}^{inf} func dW for a func with even real part.

    Returns the finer of two estimates; raises ResolutionError when the
    doubled-resolution estimate differs by more than ``rtol`` (relative).
    """

    def even_part(w):
        return np.real(func(w))

    coarse = _half_line(even_part, edges, order) / math.pi
    fine = _half_line(even_part, _refine(edges), order) / math.pi
    scale = max(abs(fine), 1e-300)
    if abs(fine - coarse) > rtol * scale:
        raise ResolutionError(
            f"spectral quadrature not converged: {coarse!r} vs {fine!r} at doubled resolution"
        )
    return fine


def spectral_statistics(model: SpectralModel, edges=None, order=24, rtol=1e-9):
    edges = model.breakpoints() if edges is None else edges

    def weighted(g):
        return lambda w: g(w) * np.abs(model.d(w)) ** 2 * model.s_ii(w)

    kf, kb = model.k_forward, model.k_backward
    pred = integrate_spectrum(weighted(lambda w: np.abs(kf(w)) ** 2), edges, order, rtol)
    retro = integrate_spectrum(weighted(lambda w: np.abs(kb(w)) ** 2), edges, order, rtol)
    cross = integrate_spectrum(weighted(lambda w: kf(-w) * kb(w)), edges, order, rtol)
    sigma2 = integrate_spectrum(weighted(lambda w: np.abs(kf(w) - kb(w)) ** 2), edges, order, rtol)
    return SpectralStatistics(pred, retro, cross, sigma2)


def table_s1(model: SpectralModel, with_filter=True):
    """Prediction, retrodiction and cross (co)variances and sigma^2 with or without D."""
    target = model.with_filter() if with_filter else model.without_filter()
    return spectral_statistics(target)


def closed_form(rates: DerivedRates):
    """Unfiltered steady-state values: 4 (Gamma_meas/Gamma_m) {V^2, V_E^2, V^2} and V + V_E."""
    scale = 4.0 * rates.gamma_meas / rates.gamma_m
    return SpectralStatistics(
        pred_var=scale * rates.v_steady**2,
        retro_var=scale * rates.v_e_steady**2,
        cross=scale * rates.v_steady**2,
        sigma2=rates.sigma2_steady,
    )


def filter_correction(model: SpectralModel):
    """sigma^2 without the demodulation filter divided by sigma^2 with it."""
    if model.demod is None:
        return 1.0
    return table_s1(model, False).sigma2 / table_s1(model, True).sigma2


def difference(with_filter: SpectralStatistics, without: SpectralStatistics):
    """Row-wise |without / with - 1|, the relative size of the filter effect."""
    a, b = with_filter.as_dict(), without.as_dict()
    return {k: abs(b[k] / a[k] - 1.0) for k in a}


def table_s1_rows(model: SpectralModel):
    with_f = table_s1(model, True)
    without = table_s1(model, False)
    diff = difference(with_f, without)
    return [
        (name, with_f.as_dict()[name], without.as_dict()[name], 100.0 * diff[name])
        for name in ("pred_var", "retro_var", "cross", "sigma2")
    ]


def decoherence_theory(rates: DerivedRates, t, t_star):
    """sigma^2(t) when conditioning stops at t_star: V + V_E + 4 (Gamma_meas/Gamma_m) V^2 (1 - e^{-Gamma_m (t - t*)})."""
    lag = np.maximum(np.asarray(t, dtype=np.float64) - t_star, 0.0)
    scale = 4.0 * rates.gamma_meas / rates.gamma_m
    return rates.sigma2_steady + scale * rates.v_steady**2 * (1.0 - np.exp(-rates.gamma_m * lag))


def discrete_statistics(rates: DerivedRates, dt, sos=None, n_freq=2**21):
    """Exact stationary statistics of the simulator and filters on the dt grid.

    Truth: x_{k+1} = (1 - Gamma_m dt/2) x_k + sqrt(Gamma_m v_bath dt) xi_k.
    Record increments y_k = sqrt(4 Gamma_meas) x_k dt + w_k, optionally passed
    through the digital low-pass ``sos``. Steady-state predicted and
    retrodicted means are the filters' steady geometric recursions of y.
    Statistics are evaluated as averages of the transfer functions over the
    unit circle.
    """
    from scipy import signal

    from .filters import steady_coefficients

    c = math.sqrt(4.0 * rates.gamma_meas)
    a = 1.0 - 0.5 * rates.gamma_m * dt
    q2 = rates.diffusion * dt
    coeffs = steady_coefficients(rates, dt)
    rho_f, g_f = coeffs["forward"]
    rho_b, g_b = coeffs["backward"]
    w = np.linspace(-math.pi, math.pi, n_freq, endpoint=False)
    z = np.exp(1j * w)
    s_x = q2 / np.abs(1.0 - a / z) ** 2
    h_f = g_f / z / (1.0 - rho_f / z)
    h_b = g_b / (1.0 - rho_b * z)
    if sos is None:
        d = np.ones_like(z)
    else:
        _, d = signal.sosfreqz(sos, worN=w)
    s_y = np.abs(d) ** 2 * (c * c * dt * dt * s_x + dt)
    cross_xy = np.conj(d) * c * dt * s_x  # E[x y*] spectrum

    def mean(v):
        return float(np.mean(np.real(v)))

    pred = mean(np.abs(h_f) ** 2 * s_y)
    retro = mean(np.abs(h_b) ** 2 * s_y)
    cross = mean(np.conj(h_f) * h_b * s_y)
    sigma2 = mean(np.abs(h_f - h_b) ** 2 * s_y)
    err_f = mean(s_x - 2 * np.real(h_f * cross_xy) + np.abs(h_f) ** 2 * s_y)
    err_b = mean(s_x - 2 * np.real(h_b * cross_xy) + np.abs(h_b) ** 2 * s_y)
    return {
        "pred_var": pred,
        "retro_var": retro,
        "cross": cross,
        "sigma2": sigma2,
        "pred_error": err_f,
        "retro_error": err_b,
        "x_var": mean(s_x),
    }
