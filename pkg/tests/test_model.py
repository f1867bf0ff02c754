import math
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtrack import model
from qtrack.model import ConfigError, ParameterError

TWO_PI = 2 * math.pi


@st.composite
def valid_params(draw):
    gamma_m = TWO_PI * draw(st.floats(1.0, 1e4))
    n_th = draw(st.floats(0.0, 1e3))
    gamma_qba = gamma_m * draw(st.floats(1e-3, 1e3))
    eta = draw(st.floats(1e-4, 1.0))
    gamma_meas = min(eta * (gamma_qba + gamma_m * n_th), gamma_qba)
    return model.ModelParams(
        omega_m=TWO_PI * 1e6, gamma_m=gamma_m, n_th=n_th,
        gamma_qba=gamma_qba, gamma_meas=gamma_meas, eta_det=draw(st.floats(0.01, 1.0)),
    )


def test_table_s2_values(params, rates):
    assert params.omega_m == pytest.approx(TWO_PI * 1.138e6)
    assert rates.v_bath == pytest.approx(2 + 0.5 + 2540 / 130, rel=1e-12)
    assert rates.v_steady == pytest.approx(0.6087, abs=1e-4)
    assert rates.v_e_steady - rates.v_steady == pytest.approx(130 / (4 * 1880), rel=1e-12)
    assert rates.v_e_steady == pytest.approx(0.626, abs=1e-3)
    assert rates.eta_meas == pytest.approx(1880 / (2540 + 260), rel=1e-12)
    assert 0.66 < rates.eta_meas < 0.69
    assert rates.alpha == pytest.approx(29167, rel=1e-4)
    assert rates.gamma_th == pytest.approx(TWO_PI * 260)


def test_steady_variance_matches_textbook_form(rates, params):
    ratio = params.gamma_meas / params.gamma_m
    textbook = (math.sqrt(1 + 16 * rates.v_bath * ratio) - 1) / (8 * ratio)
    assert rates.v_steady == pytest.approx(textbook, rel=1e-13)


def test_weak_measurement_leaves_bath_variance(params):
    p = params.replace(gamma_meas=1e-9 * params.gamma_m)
    r = model.derive_rates(p)
    assert r.v_steady == pytest.approx(r.v_bath, rel=1e-6)


def test_fast_measurement_limit():
    gm = TWO_PI * 10.0
    p = model.ModelParams(TWO_PI * 1e6, gm, 0.0, 1e3 * gm, 1e3 * gm)
    r = model.derive_rates(p)
    assert r.eta_meas == pytest.approx(1.0)
    assert r.v_steady == pytest.approx(1 / (2 * math.sqrt(r.eta_meas)), rel=1e-3)


@settings(max_examples=200, deadline=None)
@given(valid_params())
def test_derived_invariants(p):
    r = model.derive_rates(p)
    scale = p.gamma_m * r.v_bath
    assert abs(model.riccati_rhs(p, r.v_steady)) < 1e-12 * scale
    assert r.alpha == pytest.approx(r.lam, rel=4 * 2.2e-16, abs=0)
    assert 0.5 - 1e-12 <= r.v_steady <= r.v_bath
    assert r.eta_meas <= 1 + 1e-12


@settings(max_examples=100, deadline=None)
@given(valid_params(), st.floats(1.0001, 10.0))
def test_more_measurement_never_increases_variance(p, factor):
    r = model.derive_rates(p)
    stronger = p.replace(gamma_meas=min(p.gamma_meas * factor, p.gamma_qba))
    assert model.derive_rates(stronger).v_steady <= r.v_steady * (1 + 1e-14)


@given(st.floats(1e-3, 1e9))
def test_unit_round_trip(f_hz):
    assert model.rad_to_hz(model.hz_to_rad(f_hz)) == pytest.approx(f_hz, rel=2.3e-16)


@pytest.mark.parametrize("change, match", [
    ({"gamma_m": -1.0}, "gamma_m"),
    ({"gamma_meas": 0.0}, "gamma_meas"),
    ({"n_th": -0.1}, "n_th"),
    ({"eta_det": 1.2}, "eta_det"),
    ({"eta_det": 0.0}, "eta_det"),
    ({"gamma_meas": TWO_PI * 3000.0}, "exceeds gamma_qba"),
])
def test_invalid_parameters(params, change, match):
    with pytest.raises(ParameterError, match=match):
        params.replace(**change)


def test_params_hash_tracks_dynamics(params):
    assert params.params_hash == model.table_s2().params_hash
    assert params.replace(n_th=2.5).params_hash != params.params_hash
    assert 0 < params.params_hash < 2**64


def test_config_round_trip(params):
    again = model.params_from_config(params.to_config())
    assert again == params
    assert again.provenance == params.provenance


def test_config_reads_provenance(params):
    prov = params.provenance
    assert prov.kappa == pytest.approx(TWO_PI * 18.5e6)
    assert prov.q_factor == 8740
    assert prov.temperature == 11


def test_empty_document():
    with pytest.raises(ConfigError, match="missing required key"):
        model.params_from_config("")


def test_unknown_key(params):
    doc = params.to_config()
    doc["gamma_bogus_hz"] = 1.0
    with pytest.raises(ConfigError, match="unknown key"):
        model.params_from_config(doc)


def test_parse_error_reports_line():
    with pytest.raises(ConfigError, match="line 2, column 13"):
        model.params_from_config("omega_m_hz: 1.0\ngamma_m_hz: @1\nn_th: 2\n")


def test_bad_efficiency_in_config(params):
    doc = params.to_config()
    doc["eta_det"] = 1.2
    with pytest.raises(ParameterError, match="eta_det"):
        model.params_from_config(doc)


def test_non_numeric_value(params):
    doc = params.to_config()
    doc["n_th"] = "two"
    with pytest.raises(ConfigError, match="n_th"):
        model.params_from_config(doc)


def test_rates_derived_from_coupling():
    text = """
omega_m_hz: 1.138e6
gamma_m_hz: 130
n_th: 2
eta_det: 0.5
provenance:
  g0_hz: 129
  kappa_hz: 18.5e6
  n_cav: 1000
"""
    p = model.params_from_config(text)
    g2 = 1000 * (TWO_PI * 129) ** 2
    assert p.gamma_qba == pytest.approx(4 * g2 / (TWO_PI * 18.5e6))
    assert p.gamma_meas == pytest.approx(0.5 * p.gamma_qba)


def test_detuning_warns(params):
    doc = params.to_config()
    doc["provenance"]["detuning_hz"] = 1e3
    with pytest.warns(UserWarning, match="detuning"):
        model.params_from_config(doc)
    doc["provenance"]["detuning_hz"] = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        model.params_from_config(doc)
