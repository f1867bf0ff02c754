import math

import numpy as np
import pytest

from qtrack import spectral
from qtrack.demod import DemodFilterSpec


@pytest.fixture(scope="module")
def sm(rates):
    return spectral.SpectralModel(rates, DemodFilterSpec())


def test_unfiltered_integrals_match_closed_form(sm, rates):
    got = spectral.table_s1(sm, with_filter=False).as_dict()
    want = spectral.closed_form(rates).as_dict()
    for key in want:
        assert got[key] == pytest.approx(want[key], rel=1e-8), key
    assert want["sigma2"] == pytest.approx(rates.v_steady + rates.v_e_steady)
    assert want["pred_var"] == pytest.approx(21.430, abs=1e-3)
    assert want["retro_var"] == pytest.approx(22.664, abs=1e-3)


def test_filtered_values(sm):
    with_f = spectral.table_s1(sm)
    without = spectral.table_s1(sm, with_filter=False)
    assert with_f.sigma2 == pytest.approx(1.1691, abs=1e-4)
    diff = spectral.difference(with_f, without)
    assert diff["sigma2"] == pytest.approx(without.sigma2 / with_f.sigma2 - 1)
    assert spectral.filter_correction(sm) == pytest.approx(1 + diff["sigma2"])
    assert spectral.filter_correction(sm.without_filter()) == 1.0
    rows = spectral.table_s1_rows(sm)
    assert [r[0] for r in rows] == ["pred_var", "retro_var", "cross", "sigma2"]
    assert rows[3][3] == pytest.approx(5.61, abs=0.01)


def test_quadrature_on_lorentzian(rates):
    # (1/2pi) int S_xx dW = v_bath
    sm = spectral.SpectralModel(rates)
    val = spectral.integrate_spectrum(sm.s_xx, sm.breakpoints())
    assert val == pytest.approx(rates.v_bath, rel=1e-9)


def test_resolution_error(rates):
    sm = spectral.SpectralModel(rates)
    with pytest.raises(spectral.ResolutionError):
        spectral.integrate_spectrum(sm.s_xx, np.array([0.0, 1e6]), order=2, rtol=1e-12)


def test_discrete_oracle_converges(rates):
    cont = spectral.closed_form(rates)
    coarse = spectral.discrete_statistics(rates, 1e-6)
    fine = spectral.discrete_statistics(rates, 1e-7, n_freq=2**22)
    assert coarse["sigma2"] == pytest.approx(cont.sigma2, rel=1e-3)
    assert abs(fine["sigma2"] / cont.sigma2 - 1) < abs(coarse["sigma2"] / cont.sigma2 - 1) + 1e-6
    assert coarse["x_var"] == pytest.approx(rates.v_bath, rel=1e-3)
    assert coarse["cross"] == pytest.approx(coarse["pred_var"], rel=1e-9)
    assert coarse["pred_var"] + coarse["retro_var"] - 2 * coarse["cross"] == pytest.approx(
        coarse["sigma2"], rel=1e-9)


def test_decoherence_theory(rates):
    t_star = 0.7e-3
    assert spectral.decoherence_theory(rates, 0.5e-3, t_star) == pytest.approx(rates.sigma2_steady)
    far = spectral.decoherence_theory(rates, np.inf, t_star)
    assert far == pytest.approx(rates.v_bath + rates.v_e_steady, rel=1e-12)
    t = np.linspace(t_star, 10e-3, 50)
    assert np.all(np.diff(spectral.decoherence_theory(rates, t, t_star)) > 0)


def test_filter_response_enters_as_gain(sm):
    w = 2 * math.pi * np.array([0.0, 60e3])
    assert np.allclose(np.abs(sm.d(w)) ** 2, [1.0, 0.25], rtol=1e-6)
    assert np.all(sm.without_filter().d(w) == 1)


def test_halving_dt_changes_sigma2_below_one_percent(rates):
    a = spectral.discrete_statistics(rates, 1e-6)["sigma2"]
    b = spectral.discrete_statistics(rates, 0.5e-6, n_freq=2**22)["sigma2"]
    assert abs(b / a - 1) < 0.01


def test_hermitian_symmetry(sm):
    w = np.geomspace(1.0, 1e7, 50)
    assert np.array_equal(sm.s_ii(-w), sm.s_ii(w))
    assert np.allclose(sm.k_forward(-w), np.conj(sm.k_forward(w)), rtol=1e-15)
    assert np.allclose(sm.k_backward(-w), np.conj(sm.k_backward(w)), rtol=1e-15)
    assert np.array_equal(np.abs(sm.d(-w)), np.abs(sm.d(w)))


def test_row_differences_sign_and_size(sm):
    with_f = spectral.table_s1(sm).as_dict()
    without = spectral.table_s1(sm, with_filter=False).as_dict()
    assert with_f["pred_var"] < without["pred_var"]
    assert with_f["retro_var"] < without["retro_var"]
    assert with_f["cross"] > without["cross"]
    diff = spectral.difference(spectral.table_s1(sm), spectral.table_s1(sm, with_filter=False))
    for key in ("pred_var", "retro_var", "cross"):
        assert 1e-4 < diff[key] < 1e-3
