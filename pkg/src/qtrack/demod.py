"""IQ demodulation of the carrier photocurrent and PSD estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal

from .simulate import CarrierRecord, MeasurementRecord


class FilterSpecError(ValueError):
    pass


class AliasingError(ValueError):
    pass


class RecordLengthError(ValueError):
    pass


@dataclass(frozen=True)
class DemodFilterSpec:
    """Low-pass applied after mixing: ``stages`` identical Butterworth sections of ``order``.

    ``cutoff`` is the one-sided -3 dB frequency of each stage, in Hz.
    """

    order: int = 7
    stages: int = 2
    cutoff: float = 60e3
    zero_phase: bool = False

    def __post_init__(self):
        if self.order < 1 or self.stages < 1:
            raise FilterSpecError("order and stages must be positive")
        if not (self.cutoff > 0):
            raise FilterSpecError("cutoff must be positive")


def design_sos(spec: DemodFilterSpec, fs):
    """Second-order sections of the full cascade at sampling rate ``fs``."""
    if spec.cutoff >= fs / 2:
        raise AliasingError(f"cutoff {spec.cutoff:g} Hz is above Nyquist for fs = {fs:g} Hz")
    sos = signal.butter(spec.order, spec.cutoff, btype="low", fs=fs, output="sos")
    sos = np.vstack([sos] * spec.stages)
    _, poles, _ = signal.sos2zpk(sos)
    if np.any(np.abs(poles) >= 1.0):
        raise FilterSpecError("demodulation filter is unstable")
    dc = np.prod(sos[:, :3].sum(axis=1) / sos[:, 3:].sum(axis=1))
    if abs(dc - 1.0) > 1e-9:
        sos = sos.copy()
        sos[0, :3] /= dc
    return sos


def group_delay(spec: DemodFilterSpec, fs):
    """Low-frequency group delay of the cascade in seconds (0 for zero-phase filtering)."""
    if spec.zero_phase:
        return 0.0
    sos = design_sos(spec, fs)
    df = spec.cutoff * 1e-4
    _, h = signal.sosfreqz(sos, worN=[df, 2 * df], fs=fs)
    phase = np.unwrap(np.angle(h))
    return float(-(phase[1] - phase[0]) / (2 * math.pi * df))


def settling_time(spec: DemodFilterSpec, fs):
    """Leading stretch excluded from statistics: five filter time constants.

    The time constant of the cascade is taken as its DC group delay; for
    zero-phase filtering the single-pole 1/(2 pi f_c) is used instead.
    """
    tau = group_delay(spec, fs)
    if tau == 0.0:
        tau = 1.0 / (2 * math.pi * spec.cutoff)
    return 5.0 * tau


def response(spec: DemodFilterSpec, freq_hz, fs=None):
    """Complex transfer function; digital when ``fs`` is given, analog prototype otherwise."""
    freq_hz = np.abs(np.asarray(freq_hz, dtype=np.float64))
    if fs is None:
        b, a = signal.butter(spec.order, 2 * math.pi * spec.cutoff, analog=True)
        _, h = signal.freqs(b, a, worN=2 * math.pi * freq_hz)
        h = h**spec.stages
    else:
        _, h = signal.sosfreqz(design_sos(spec, fs), worN=freq_hz, fs=fs)
    if spec.zero_phase:
        h = np.abs(h) ** 2
    return h


def _apply(sos, data, zero_phase):
    if zero_phase:
        return signal.sosfiltfilt(sos, data, axis=-1)
    return signal.sosfilt(sos, data, axis=-1)


def demodulate(carrier: CarrierRecord, omega_m=None, spec=None, decimation=None):
    """Mix down at ``omega_m``, low-pass, decimate.

    i_X = LP[2 I cos(Omega_m t)], i_Y = LP[2 I sin(Omega_m t)]. The default
    decimation keeps one sample per mechanical period.
    """
    spec = DemodFilterSpec() if spec is None else spec
    omega_m = carrier.omega_m if omega_m is None else omega_m
    fs = carrier.fs
    f_m = omega_m / (2 * math.pi)
    if fs / 2 <= f_m + spec.cutoff:
        raise AliasingError(
            f"fs = {fs:g} Hz cannot represent the band up to {f_m + spec.cutoff:g} Hz"
        )
    if decimation is None:
        decimation = max(1, int(round(fs / f_m)))
    if fs / decimation < 2 * spec.cutoff:
        raise AliasingError(
            f"baseband rate {fs / decimation:g} Hz aliases the {spec.cutoff:g} Hz passband"
        )
    sos = design_sos(spec, fs)
    current = np.asarray(carrier.current, dtype=np.float64)
    phase = omega_m * (np.arange(current.shape[-1]) / fs)
    mixed = np.stack(
        [2.0 * current * np.cos(phase), 2.0 * current * np.sin(phase)], axis=-2
    )
    filtered = _apply(sos, mixed, spec.zero_phase)
    i = filtered[..., ::decimation]
    dt = decimation / fs
    n_invalid = int(math.ceil(settling_time(spec, fs) / dt))
    return MeasurementRecord(
        dt=dt, i=i, seed=carrier.seed, params_hash=carrier.params_hash, n_invalid=n_invalid
    )


def lowpass_record(record: MeasurementRecord, spec=None):
    """Apply the demodulation low-pass directly to a baseband record."""
    spec = DemodFilterSpec() if spec is None else spec
    fs = 1.0 / record.dt
    sos = design_sos(spec, fs)
    i = _apply(sos, record.i, spec.zero_phase)
    n_invalid = max(record.n_invalid, int(math.ceil(settling_time(spec, fs) / record.dt)))
    return MeasurementRecord(record.dt, i, record.seed, record.params_hash, n_invalid)


def noise_bandwidth(spec: DemodFilterSpec, fs=None):
    """Integral of |D|^2 over all frequencies in Hz: variance of filtered unit-density noise."""
    if fs is None:
        f_max = 50 * spec.cutoff
        f = np.linspace(0, f_max, 200001)
    else:
        f = np.linspace(0, fs / 2, 200001)
    g = np.abs(response(spec, f, fs)) ** 2
    return float(2 * integrate.trapezoid(g, f))


@dataclass
class Psd:
    """Averaged spectral density on non-negative frequencies.

    ``sides="two"``: two-sided density, white noise of per-sample variance
    1/dt reads 1. ``sides="one"``: one-sided density (twice the two-sided
    value away from DC), the convention for the carrier photocurrent.
    """

    freq: np.ndarray
    density: np.ndarray
    sides: str
    window: str
    n_averages: int
    segment_len: int

    @property
    def df(self):
        return float(self.freq[1] - self.freq[0])

    def _weights(self):
        w = np.full(self.freq.shape, 2.0 if self.sides == "two" else 1.0)
        w[self.freq == 0] = 1.0
        return w

    def band_power(self, f_lo=0.0, f_hi=np.inf, background=0.0):
        """Variance contributed by |f| in [f_lo, f_hi] after subtracting ``background``."""
        sel = (self.freq >= f_lo) & (self.freq <= f_hi)
        excess = (self.density - background) * self._weights()
        return float(np.sum(excess[sel]) * self.df)

    def total_power(self):
        return self.band_power()

    def scaled(self, factor):
        return Psd(
            self.freq, self.density * factor, self.sides, self.window,
            self.n_averages, self.segment_len,
        )


def estimate_psd(x, dt, segment_len, overlap=0.5, sides="two", window="hann"):
    """Welch estimate; leading axes of ``x`` are averaged as independent realizations."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if segment_len > n or segment_len < 2:
        raise RecordLengthError(f"segment_len {segment_len} must lie in [2, {n}]")
    if sides not in ("one", "two"):
        raise ValueError("sides must be 'one' or 'two'")
    noverlap = int(round(overlap * segment_len))
    fs = 1.0 / dt
    f, p = signal.welch(
        x, fs=fs, window=window, nperseg=segment_len, noverlap=noverlap,
        return_onesided=False, scaling="density", detrend=False, axis=-1,
    )
    # scipy's two-sided density integrates to the variance over [-fs/2, fs/2).
    keep = f >= 0
    order = np.argsort(f[keep])
    freq = f[keep][order]
    dens = p[..., keep][..., order]
    per_record = 1 + (n - segment_len) // (segment_len - noverlap)
    if dens.ndim > 1:
        n_avg = per_record * int(np.prod(dens.shape[:-1]))
        dens = dens.reshape(-1, dens.shape[-1]).mean(axis=0)
    else:
        n_avg = per_record
    if sides == "one":
        dens = dens * np.where(freq == 0, 1.0, 2.0)
    return Psd(freq, dens, sides, window, n_avg, segment_len)
