"""Physical parameters of the continuously measured oscillator.

Units: hbar = 1, quadratures in zero-point units (ground-state variance 1/2),
every rate in rad/s. Config files carry rates in Hz and are converted on load.
"""

from __future__ import annotations

import hashlib
import math
import struct
import warnings
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import yaml

TWO_PI = 2.0 * math.pi


class ParameterError(ValueError):
    """A ModelParams invariant is violated."""


class ConfigError(ValueError):
    """A parameter document could not be parsed or has unexpected content."""


def hz_to_rad(f_hz):
    return TWO_PI * f_hz


def rad_to_hz(omega):
    return omega / TWO_PI


@dataclass(frozen=True)
class Provenance:
    """Hardware-level numbers kept for documentation; filters never read them.

    Rates are in rad/s, ``temperature`` in K, ``m_eff`` in kg, ``x_zpf`` in m.
    """

    g0: float | None = None
    kappa: float | None = None
    n_cav: float | None = None
    eta_c: float | None = None
    q_factor: float | None = None
    temperature: float | None = None
    m_eff: float | None = None
    x_zpf: float | None = None
    detuning: float | None = None


@dataclass(frozen=True)
class ModelParams:
    omega_m: float
    gamma_m: float
    n_th: float
    gamma_qba: float
    gamma_meas: float
    eta_det: float = 1.0
    provenance: Provenance = field(default_factory=Provenance, compare=False)

    def __post_init__(self):
        validate(self)

    @property
    def params_hash(self):
        """64-bit identifier of the dynamical parameters (provenance excluded)."""
        packed = struct.pack(
            "<6d",
            self.omega_m, self.gamma_m, self.n_th,
            self.gamma_qba, self.gamma_meas, self.eta_det,
        )
        return int.from_bytes(hashlib.sha256(packed).digest()[:8], "little")

    def replace(self, **changes):
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return ModelParams(**values)

    def to_config(self):
        """Inverse of :func:`params_from_config` (Hz units)."""
        doc = {
            "omega_m_hz": rad_to_hz(self.omega_m),
            "gamma_m_hz": rad_to_hz(self.gamma_m),
            "n_th": self.n_th,
            "gamma_qba_hz": rad_to_hz(self.gamma_qba),
            "gamma_meas_hz": rad_to_hz(self.gamma_meas),
            "eta_det": self.eta_det,
        }
        prov = {}
        keys = {attr: key for key, attr in _PROVENANCE_KEYS.items()}
        for attr, value in asdict(self.provenance).items():
            if value is None:
                continue
            key = keys[attr]
            prov[key] = rad_to_hz(value) if key.endswith("_hz") else value
        if prov:
            doc["provenance"] = prov
        return doc


@dataclass(frozen=True)
class DerivedRates:
    params: ModelParams
    gamma_th: float
    v_bath: float
    eta_meas: float
    v_steady: float
    v_e_steady: float
    alpha: float
    lam: float

    @property
    def gamma_m(self):
        return self.params.gamma_m

    @property
    def gamma_meas(self):
        return self.params.gamma_meas

    @property
    def diffusion(self):
        """Variance injection rate Gamma_m (n_th + 1/2) + Gamma_qba, equal to Gamma_m v_bath."""
        p = self.params
        return p.gamma_m * (p.n_th + 0.5) + p.gamma_qba

    @property
    def collapse_rate(self):
        """Decay rate 8 Gamma_meas V + Gamma_m of the deviation from the fixed point."""
        return 8.0 * self.params.gamma_meas * self.v_steady + self.params.gamma_m

    @property
    def sigma2_steady(self):
        return self.v_steady + self.v_e_steady

    @property
    def purity(self):
        return 1.0 / (2.0 * self.v_steady)


def validate(p):
    for name in ("omega_m", "gamma_m", "gamma_qba", "gamma_meas"):
        value = getattr(p, name)
        if not (math.isfinite(value) and value > 0):
            raise ParameterError(f"{name} must be a finite positive rate, got {value!r}")
    if not (math.isfinite(p.n_th) and p.n_th >= 0):
        raise ParameterError(f"n_th must be >= 0, got {p.n_th!r}")
    if not (0 < p.eta_det <= 1):
        raise ParameterError(f"eta_det must lie in (0, 1], got {p.eta_det!r}")
    if p.gamma_meas > p.gamma_qba * (1 + 1e-12):
        raise ParameterError(
            f"gamma_meas ({p.gamma_meas:g}) exceeds gamma_qba ({p.gamma_qba:g}): unphysical"
        )
    eta_meas = p.gamma_meas / (p.gamma_qba + p.gamma_m * p.n_th)
    if eta_meas > 1 + 1e-12:
        raise ParameterError(f"eta_meas = {eta_meas:g} > 1")


def steady_variance(gamma_m, v_bath, gamma_meas):
    """Forward fixed point of the Riccati equation.

    Written as 2 v_bath / (1 + sqrt(1 + 16 v_bath Gamma_meas / Gamma_m)), which is
    algebraically the usual (sqrt(...) - 1) / (8 Gamma_meas / Gamma_m) form but
    stays accurate when Gamma_meas << Gamma_m.
    """
    return 2.0 * v_bath / (1.0 + math.sqrt(1.0 + 16.0 * v_bath * gamma_meas / gamma_m))


def derive_rates(p):
    validate(p)
    gamma_th = p.gamma_m * p.n_th
    v_bath = p.n_th + 0.5 + p.gamma_qba / p.gamma_m
    v = steady_variance(p.gamma_m, v_bath, p.gamma_meas)
    v_e = v + p.gamma_m / (4.0 * p.gamma_meas)
    return DerivedRates(
        params=p,
        gamma_th=gamma_th,
        v_bath=v_bath,
        eta_meas=p.gamma_meas / (p.gamma_qba + gamma_th),
        v_steady=v,
        v_e_steady=v_e,
        alpha=p.gamma_m / 2.0 + 4.0 * p.gamma_meas * v,
        lam=4.0 * p.gamma_meas * v_e - p.gamma_m / 2.0,
    )


def riccati_rhs(p, v):
    """Right-hand side of the forward conditional-variance equation."""
    return (
        -p.gamma_m * v
        + p.gamma_m * (p.n_th + 0.5)
        + p.gamma_qba
        - 4.0 * p.gamma_meas * v * v
    )


def rates_from_coupling(g0, kappa, n_cav, eta_det):
    """Backaction and measurement rates 4 g^2 / kappa and eta_det 4 g^2 / kappa, g = sqrt(n_cav) g0."""
    gamma_qba = 4.0 * n_cav * g0 * g0 / kappa
    return gamma_qba, eta_det * gamma_qba


# --- config loading -------------------------------------------------------

_REQUIRED = ("omega_m_hz", "gamma_m_hz", "n_th", "eta_det")
_RATE_KEYS = ("gamma_qba_hz", "gamma_meas_hz")
_PROVENANCE_KEYS = {
    "g0_hz": "g0",
    "kappa_hz": "kappa",
    "detuning_hz": "detuning",
    "n_cav": "n_cav",
    "eta_c": "eta_c",
    "q_factor": "q_factor",
    "temperature_k": "temperature",
    "m_eff_kg": "m_eff",
    "x_zpf_m": "x_zpf",
}


def _number(doc, key, where):
    value = doc[key]
    # YAML 1.1 reads exponents without a sign ("18.5e6") as strings.
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}{key}: expected a number, got {value!r}")
    return float(value)


def params_from_config(document):
    """Build ModelParams from a YAML parameter document (string or mapping).

    Frequencies (keys ending in ``_hz``) are converted to rad/s. When
    ``gamma_qba_hz``/``gamma_meas_hz`` are absent they are derived from the
    provenance block's ``g0_hz``, ``kappa_hz`` and ``n_cav``.
    """
    if isinstance(document, str):
        try:
            doc = yaml.safe_load(document)
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark
            line = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
            raise ConfigError(f"could not parse parameter document{line}: {exc.problem}") from exc
    else:
        doc = document
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("parameter document must be a mapping")

    allowed = set(_REQUIRED) | set(_RATE_KEYS) | {"provenance"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    for key in _REQUIRED:
        if key not in doc:
            raise ConfigError(f"missing required key {key!r}")

    prov_doc = doc.get("provenance") or {}
    if not isinstance(prov_doc, dict):
        raise ConfigError("provenance must be a mapping")
    unknown = sorted(set(prov_doc) - set(_PROVENANCE_KEYS))
    if unknown:
        raise ConfigError(f"unknown provenance key(s): {', '.join(unknown)}")
    prov = {}
    for key, attr in _PROVENANCE_KEYS.items():
        if key in prov_doc:
            value = _number(prov_doc, key, "provenance.")
            prov[attr] = hz_to_rad(value) if key.endswith("_hz") else value
    provenance = Provenance(**prov)

    eta_det = _number(doc, "eta_det", "")
    if all(k in doc for k in _RATE_KEYS):
        gamma_qba = hz_to_rad(_number(doc, "gamma_qba_hz", ""))
        gamma_meas = hz_to_rad(_number(doc, "gamma_meas_hz", ""))
    elif not any(k in doc for k in _RATE_KEYS):
        if None in (provenance.g0, provenance.kappa, provenance.n_cav):
            raise ConfigError(
                "missing required key 'gamma_qba_hz' (or provenance g0_hz, kappa_hz, n_cav)"
            )
        gamma_qba, gamma_meas = rates_from_coupling(
            provenance.g0, provenance.kappa, provenance.n_cav, eta_det
        )
    else:
        missing = [k for k in _RATE_KEYS if k not in doc]
        raise ConfigError(f"missing required key {missing[0]!r}")

    if provenance.detuning:
        warnings.warn(
            "nonzero probe detuning is ignored by the resonant-probe dynamics",
            stacklevel=2,
        )

    try:
        return ModelParams(
            omega_m=hz_to_rad(_number(doc, "omega_m_hz", "")),
            gamma_m=hz_to_rad(_number(doc, "gamma_m_hz", "")),
            n_th=_number(doc, "n_th", ""),
            gamma_qba=gamma_qba,
            gamma_meas=gamma_meas,
            eta_det=eta_det,
            provenance=provenance,
        )
    except ParameterError as exc:
        raise ParameterError(f"invalid parameters: {exc}") from exc


def load_params(path):
    path = Path(path)
    return params_from_config(path.read_text(encoding="utf-8"))


def table_s2_text():
    return resources.files("qtrack.data").joinpath("table_s2.yaml").read_text(encoding="utf-8")


def table_s2():
    """Parameters of the soft-clamped membrane experiment."""
    return params_from_config(table_s2_text())
