"""Physical parameter sets and the Purcell-derived quantities built from them.

All rates are angular frequencies (rad/s). Conversion from ``2pi*Hz`` style
inputs happens at the boundary (JSON presets, CLI), see :func:`parse_rate`.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

TWO_PI = 2.0 * math.pi

# Empirical weight of pure dephasing in the effective cooperativity C* = C gamma / (gamma + c gamma*).
COOPERATIVITY_DEPHASING_COEFF = 0.61

# Physical constants (CODATA 2018).
HBAR = 1.054571817e-34
PLANCK = 6.62607015e-34
EPS0 = 8.8541878128e-12
MU0_OVER_4PI = 1e-7
NUCLEAR_MAGNETON = 5.0507837461e-27
SPEED_OF_LIGHT = 299792458.0


class ParameterError(ValueError):
    """Raised when a parameter set violates its invariants."""


def _check_nonneg(obj, *names):
    for name in names:
        v = getattr(obj, name)
        if not np.isfinite(v) or v < 0:
            raise ParameterError(f"{type(obj).__name__}.{name} must be finite and >= 0, got {v!r}")


@dataclass(frozen=True)
class IonParams:
    gamma_r: float
    gamma_nr: float
    gamma_star: float
    chi: float = 0.0
    beta: float = 0.9
    omega_e: float = 0.0
    omega_g: float = 0.0
    delta_eg: Optional[float] = None

    def __post_init__(self):
        _check_nonneg(self, "gamma_r", "gamma_nr", "gamma_star", "chi")
        if not 0.0 <= self.beta <= 1.0:
            raise ParameterError(f"beta must lie in [0, 1], got {self.beta}")
        if self.delta_eg is None:
            object.__setattr__(self, "delta_eg", self.omega_e - self.omega_g)

    @property
    def gamma(self) -> float:
        """Total bare decay rate gamma_r + gamma_nr."""
        return self.gamma_r + self.gamma_nr


@dataclass(frozen=True)
class CavityParams:
    g: float
    kappa: float
    delta: float = 0.0
    optical_frequency: Optional[float] = None
    n_max: int = 2

    def __post_init__(self):
        if not np.isfinite(self.g) or self.g < 0:
            raise ParameterError(f"g must be finite and >= 0, got {self.g}")
        if not np.isfinite(self.kappa) or self.kappa <= 0:
            raise ParameterError(f"kappa must be > 0, got {self.kappa}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ParameterError(f"n_max must be an integer >= 1, got {self.n_max}")


@dataclass(frozen=True)
class DerivedRates:
    gamma: float
    F_p: float
    gamma_prime: float
    Gamma: float
    Gamma_prime: float
    zeta: float
    I: float
    I_prime: float
    C: float
    C_star: float
    gamma_r: float
    gamma_star: float


def derive_rates(ion: IonParams, cavity: Optional[CavityParams] = None,
                 purcell_override: Optional[float] = None,
                 bad_cavity: bool = True) -> DerivedRates:
    """Purcell factor, enhanced decay/linewidth, indistinguishabilities and cooperativities.

    With ``purcell_override`` the coupling ``g`` is ignored and the cooperativity
    is reported as ``F_p * gamma_r / gamma``. ``bad_cavity=False`` uses the
    general transfer rate ``4g^2/(kappa + Gamma)`` instead of ``4g^2/kappa``.
    """
    gamma = ion.gamma
    if gamma <= 0 or ion.gamma_r <= 0:
        raise ParameterError("gamma_r and the total decay rate must be > 0")
    Gamma = gamma + 2.0 * ion.gamma_star
    if purcell_override is not None:
        if not np.isfinite(purcell_override) or purcell_override < 0:
            raise ParameterError(f"purcell_override must be >= 0, got {purcell_override}")
        F_p = float(purcell_override)
        C = F_p * ion.gamma_r / gamma
    else:
        if cavity is None:
            raise ParameterError("cavity parameters are required without purcell_override")
        if cavity.g <= 0:
            raise ParameterError("g must be > 0 to derive a Purcell factor")
        denom = cavity.kappa if bad_cavity else cavity.kappa + Gamma
        F_p = 4.0 * cavity.g ** 2 / (denom * ion.gamma_r)
        C = 4.0 * cavity.g ** 2 / (cavity.kappa * gamma)
    gamma_prime = ion.gamma_r * F_p + gamma
    Gamma_prime = gamma_prime + 2.0 * ion.gamma_star
    return DerivedRates(
        gamma=gamma,
        F_p=F_p,
        gamma_prime=gamma_prime,
        Gamma=Gamma,
        Gamma_prime=Gamma_prime,
        zeta=ion.gamma_r / gamma,
        I=gamma / Gamma,
        I_prime=gamma_prime / Gamma_prime,
        C=C,
        C_star=effective_cooperativity(C, gamma, ion.gamma_star),
        gamma_r=ion.gamma_r,
        gamma_star=ion.gamma_star,
    )


def effective_cooperativity(C, gamma, gamma_star, coeff=COOPERATIVITY_DEPHASING_COEFF):
    """C* = C gamma / (gamma + coeff * gamma_star)."""
    return C / (1.0 + coeff * gamma_star / gamma)


def dephasing_from_t2(T2: float, gamma: float) -> float:
    """Optical pure dephasing rate from the optical coherence time: 1/T2 - gamma/2."""
    if T2 <= 0:
        raise ParameterError("T2 must be > 0")
    return 1.0 / T2 - gamma / 2.0


def quality_factor_kappa(Q: float, optical_frequency: float) -> float:
    """Cavity energy decay rate kappa = omega / Q (both sides in rad/s)."""
    if Q <= 0 or optical_frequency <= 0:
        raise ParameterError("Q and optical_frequency must be > 0")
    return optical_frequency / Q


def kappa_quality_factor(kappa: float, optical_frequency: float) -> float:
    if kappa <= 0 or optical_frequency <= 0:
        raise ParameterError("kappa and optical_frequency must be > 0")
    return optical_frequency / kappa


def wavelength_to_angular(wavelength_m: float) -> float:
    return TWO_PI * SPEED_OF_LIGHT / wavelength_m


# ---------------------------------------------------------------------------
# units at the I/O boundary

UNIT_FACTORS = {
    "rad/s": 1.0,
    "1/s": 1.0,
    "2pi*Hz": TWO_PI,
    "2pi*kHz": TWO_PI * 1e3,
    "2pi*MHz": TWO_PI * 1e6,
    "Hz": 1.0,
    "kHz": 1e3,
    "MHz": 1e6,
    "s": 1.0,
    "ms": 1e-3,
    "us": 1e-6,
    "km": 1.0,
    "m": 1.0,
    "nm": 1e-9,
    "m/s": 1.0,
    "C*m": 1.0,
    "V/m": 1.0,
    "J/T": 1.0,
    "mu_N": NUCLEAR_MAGNETON,
    "1": 1.0,
    "": 1.0,
}

_RATE_RE = re.compile(
    r"^\s*(?P<twopi>2\s*\*?\s*pi\s*\*?\s*(?:x|×)?\s*)?(?P<num>[-+0-9.eE]+)\s*(?P<unit>[kM]?Hz|rad/s)?\s*$"
)


def parse_rate(text) -> float:
    """Parse '2pi*14', '2pi*14 Hz', '14 Hz' (cycles, converted), '88.0' or '88 rad/s' to rad/s."""
    if isinstance(text, (int, float)):
        return float(text)
    m = _RATE_RE.match(str(text))
    if not m:
        raise ParameterError(f"cannot parse rate {text!r}")
    value = float(m.group("num"))
    unit = m.group("unit")
    scale = {"kHz": 1e3, "MHz": 1e6}.get(unit, 1.0)
    if m.group("twopi") or (unit and unit.endswith("Hz")):
        return TWO_PI * value * scale
    return value


def quantity(entry: Any) -> float:
    """Convert a ``{"value": v, "unit": u}`` entry (or bare number) to internal units."""
    if isinstance(entry, dict):
        unit = entry.get("unit", "")
        if unit not in UNIT_FACTORS:
            raise ParameterError(f"unknown unit {unit!r}")
        return float(entry["value"]) * UNIT_FACTORS[unit]
    if isinstance(entry, str):
        return parse_rate(entry)
    return float(entry)


@dataclass
class Preset:
    """A resolved parameter document: ion, cavity and the per-module sections."""

    name: str
    ion: IonParams
    cavity: CavityParams
    purcell: Optional[float]
    sections: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict)

    def rates(self, purcell: Optional[float] = None) -> DerivedRates:
        F_p = self.purcell if purcell is None else purcell
        return derive_rates(self.ion, self.cavity, purcell_override=F_p)

    def section(self, name: str) -> dict:
        return {k: v if isinstance(v, (bool, list, str)) else quantity(v)
                for k, v in self.sections.get(name, {}).items()}

    def sha256(self) -> str:
        import hashlib
        blob = json.dumps(self.source, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _build(cls, raw: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ParameterError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {}
    for k, v in raw.items():
        kw[k] = int(quantity(v)) if k == "n_max" else (None if v is None else quantity(v))
    return cls(**kw)


def preset_from_dict(doc: dict) -> Preset:
    # an explicit kappa wins over one implied by Q; Q is then informational only
    cavity = dict(doc.get("cavity", {}))
    Q = cavity.pop("Q", None)
    wl = cavity.pop("wavelength", None)
    if wl is not None and "optical_frequency" not in cavity:
        cavity["optical_frequency"] = wavelength_to_angular(quantity(wl))
    if Q is not None and "kappa" not in cavity:
        cavity["kappa"] = quality_factor_kappa(quantity(Q), quantity(cavity["optical_frequency"]))
    cavity.setdefault("g", 0.0)
    purcell = doc.get("purcell_factor")
    sections = {k: v for k, v in doc.items()
                if k not in ("name", "ion", "cavity", "purcell_factor", "description")}
    return Preset(
        name=doc.get("name", "custom"),
        ion=_build(IonParams, doc["ion"]),
        cavity=_build(CavityParams, cavity),
        purcell=None if purcell is None else quantity(purcell),
        sections=sections,
        source=doc,
    )


def load_preset(path=None) -> Preset:
    """Load a JSON preset; ``None`` gives the bundled Er:YSO set."""
    if path is None:
        text = resources.files("er_repeater.presets").joinpath("er167_yso.json").read_text()
    else:
        text = Path(path).read_text()
    return preset_from_dict(json.loads(text))


def params_to_dict(obj) -> dict:
    """Serialise a parameter dataclass to the annotated JSON form (rates as 2pi*Hz)."""
    units = {"gamma_r", "gamma_nr", "gamma_star", "chi", "omega_e", "omega_g", "delta_eg",
             "g", "kappa", "delta", "optical_frequency"}
    out = {}
    for k, v in asdict(obj).items():
        if v is None:
            out[k] = None
        elif k in units:
            out[k] = {"value": v / TWO_PI, "unit": "2pi*Hz"}
        else:
            out[k] = v
    return out


def with_overrides(obj, **kw):
    return replace(obj, **kw)
