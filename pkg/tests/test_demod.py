import math

import numpy as np
import pytest

from qtrack import demod, ensemble, simulate, spectral, verify
from qtrack.demod import AliasingError, DemodFilterSpec, FilterSpecError


@pytest.fixture(scope="module")
def quiet(params):
    """Default parameters with a negligible measurement rate: the carrier is pure noise."""
    return params.replace(gamma_meas=1e-9 * params.gamma_m)


def constant_truth(p, n, x, y, rows):
    arr = np.empty((rows, 2, n))
    arr[:, 0], arr[:, 1] = x, y
    return simulate.TruthTrajectory(simulate.carrier_baseband_dt(p), arr)


def test_noise_only_demodulation(quiet):
    truth = constant_truth(quiet, 1024, 0.0, 0.0, 8)
    carrier = simulate.synthesize_carrier(truth, quiet, seed=3, index=np.arange(8))
    rec = demod.demodulate(carrier)
    spec = DemodFilterSpec()
    assert rec.dt == pytest.approx(truth.dt)
    assert rec.n == truth.n
    nbw = demod.noise_bandwidth(spec, carrier.fs)
    assert nbw == pytest.approx(demod.noise_bandwidth(spec), rel=0.02)
    settled = rec.i[..., rec.n_invalid:]
    assert np.var(settled) == pytest.approx(nbw, rel=0.05)
    psd = demod.estimate_psd(settled, rec.dt, 256)
    assert np.mean(psd.density[psd.freq < 20e3]) == pytest.approx(1.0, rel=0.1)


def test_signal_scaling(params):
    truth = constant_truth(params, 1024, 3.0, -2.0, 8)
    carrier = simulate.synthesize_carrier(truth, params, seed=5, index=np.arange(8))
    rec = demod.demodulate(carrier)
    gain = math.sqrt(4 * params.gamma_meas)
    settled = rec.i[..., rec.n_invalid:].mean(axis=(0, 2))
    assert settled[0] / gain == pytest.approx(3.0, abs=0.15)
    assert settled[1] / gain == pytest.approx(-2.0, abs=0.15)


def test_aliasing_rejected(params):
    truth = constant_truth(params, 16, 0.0, 0.0, 1)
    carrier = simulate.synthesize_carrier(truth, params, seed=0)
    with pytest.raises(AliasingError):
        demod.demodulate(carrier, spec=DemodFilterSpec(cutoff=8 * 1.138e6))
    with pytest.raises(AliasingError):
        demod.demodulate(carrier, decimation=256)
    with pytest.raises(AliasingError):
        demod.design_sos(DemodFilterSpec(cutoff=1e6), fs=1e6)


def test_filter_spec_validation():
    with pytest.raises(FilterSpecError):
        DemodFilterSpec(order=0)
    with pytest.raises(FilterSpecError):
        DemodFilterSpec(cutoff=-1.0)


def test_unit_dc_gain_and_delay():
    spec = DemodFilterSpec()
    fs = 1e6
    sos = demod.design_sos(spec, fs)
    assert np.prod(sos[:, :3].sum(axis=1) / sos[:, 3:].sum(axis=1)) == pytest.approx(1.0, abs=1e-9)
    tau = demod.group_delay(spec, fs)
    assert 1e-5 < tau < 1e-4
    assert demod.settling_time(spec, fs) == pytest.approx(5 * tau)
    assert demod.group_delay(DemodFilterSpec(zero_phase=True), fs) == 0.0
    # digital response approaches the analog prototype well below Nyquist
    f = np.array([1e3, 2e4, 6e4])
    assert np.allclose(np.abs(demod.response(spec, f, 18e6)), np.abs(demod.response(spec, f)), rtol=1e-3)
    assert abs(demod.response(spec, [60e3])[0]) == pytest.approx(0.5, rel=1e-6)


def test_lowpass_record_marks_transient(params):
    _, rec = simulate.simulate_record(params, 1e-6, 500, seed=0)
    out = demod.lowpass_record(rec)
    assert out.n_invalid == math.ceil(demod.settling_time(DemodFilterSpec(), 1e6) / 1e-6)
    assert out.i.shape == rec.i.shape


def test_psd_conventions():
    rng = np.random.default_rng(0)
    dt = 1e-3
    x = rng.standard_normal((20, 4096)) / math.sqrt(dt)
    two = demod.estimate_psd(x, dt, 512)
    one = demod.estimate_psd(x, dt, 512, sides="one")
    assert np.mean(two.density[1:-1]) == pytest.approx(1.0, rel=0.02)
    assert np.allclose(one.density[1:], 2 * two.density[1:])
    assert two.total_power() == pytest.approx(np.var(x), rel=0.02)
    assert one.total_power() == pytest.approx(two.total_power(), rel=1e-3)
    assert two.n_averages == 20 * 15
    with pytest.raises(demod.RecordLengthError):
        demod.estimate_psd(x, dt, 8192)
    with pytest.raises(ValueError):
        demod.estimate_psd(x, dt, 512, sides="three")


@pytest.mark.slow
def test_carrier_pipeline_recovers_sigma2(params, rates):
    ens = ensemble.run_ensemble(
        params, ensemble.EnsembleConfig(n_segments=200, seed=1, pipeline="carrier", keep_truth=False)
    )
    t0 = verify.steady_t0(ens.t, rates, ens.n_invalid)
    model = spectral.SpectralModel(rates, ens.config.demod)
    correction = spectral.filter_correction(model)
    report = verify.relative_variance(ens.pred, ens.retro, t0, rates=rates, correction=correction)
    assert report.filter_corrected
    assert report.sigma2_raw < report.sigma2
    assert report.sigma2 == pytest.approx(rates.sigma2_steady, rel=0.05)


def test_psd_calibration_per_bin():
    # Welch bins scatter by about 1/sqrt(averages): 7% at 200 averages
    rng = np.random.default_rng(1)
    dt = 1e-6
    x = rng.standard_normal((4, 2, 256 * 51)) / math.sqrt(dt)
    psd = demod.estimate_psd(x, dt, 512)
    assert psd.n_averages >= 200
    bins = psd.density[1:-1]
    assert np.mean(bins) == pytest.approx(1.0, rel=0.01)
    # Hann with 50% overlap: effective averages about n/1.9; 5 sigma bound
    assert np.all(np.abs(bins - 1.0) < 5 * math.sqrt(1.9 / psd.n_averages))


def test_sine_peak_parseval():
    dt = 1e-6
    t = np.arange(2**16) * dt
    amp, f0 = 3.0, 12_345.0
    x = amp * np.sin(2 * math.pi * f0 * t)
    psd = demod.estimate_psd(x, dt, 4096)
    peak = psd.band_power(f0 - 5 * psd.df, f0 + 5 * psd.df)
    assert peak == pytest.approx(amp**2 / 2, rel=0.02)
