"""Closed-form models for each repeater step: heralded entanglement, initialisation,
the two swapping gates, readout and the cavity/Stark tuning estimates."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .params import (
    EPS0,
    HBAR,
    MU0_OVER_4PI,
    PLANCK,
    TWO_PI,
    DerivedRates,
    IonParams,
    ParameterError,
    effective_cooperativity,
)

# Coefficient of the gamma* T_gate term in the dispersive exchange-gate fidelity.
EXCHANGE_DEPHASING_COEFF = 0.29

# Validity flags fire when either lowest-order correction parameter exceeds this.
EXCHANGE_VALIDITY_LIMIT = 0.3


class ValidityWarning(UserWarning):
    """A closed-form model is being used outside its stated validity range."""


@dataclass(frozen=True)
class LinkParams:
    L0: float
    L_att: float = 22.0
    c: float = 2.0e8
    eta_c: float = 1.0
    eta_d: float = 1.0
    T_init: float = 0.0
    delta_w: float = 0.0

    def __post_init__(self):
        if not self.L0 >= 0:
            raise ParameterError(f"L0 must be >= 0, got {self.L0}")
        if self.L_att <= 0 or self.c <= 0:
            raise ParameterError("L_att and c must be > 0")
        for name in ("eta_c", "eta_d"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {v}")
        if self.T_init < 0:
            raise ParameterError("T_init must be >= 0")

    @property
    def slot_time(self) -> float:
        """Duration of one generation attempt: heralding delay L0/c plus initialisation."""
        return self.L0 * 1e3 / self.c + self.T_init


@dataclass(frozen=True)
class ReadoutConfig:
    N: int
    T_p: float
    xi: float
    p_eta_d: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ParameterError(f"N must be an integer >= 1, got {self.N}")
        if not 0.0 <= self.xi <= 1.0 or not 0.0 <= self.p_eta_d <= 1.0:
            raise ParameterError("xi and p_eta_d must lie in [0, 1]")
        if self.T_p < 0:
            raise ParameterError("T_p must be >= 0")


@dataclass(frozen=True)
class DipolePairParams:
    delta_mu_i: float
    delta_mu_j: float
    r_vec: Sequence[float]
    mu_hat_i: Sequence[float]
    mu_hat_j: Sequence[float]
    epsilon: float = 3.2
    delta_nu_err: float = 0.0
    magnetic_moment: Optional[float] = None

    def __post_init__(self):
        r = np.asarray(self.r_vec, dtype=float)
        if r.shape != (3,) or not np.linalg.norm(r) > 0:
            raise ParameterError("r_vec must be a nonzero 3-vector")
        for name in ("mu_hat_i", "mu_hat_j"):
            u = np.asarray(getattr(self, name), dtype=float)
            if u.shape != (3,) or abs(np.linalg.norm(u) - 1.0) > 1e-12:
                raise ParameterError(f"{name} must be a unit 3-vector")
        if self.epsilon <= 0:
            raise ParameterError("epsilon must be > 0")

    @property
    def r(self) -> float:
        return float(np.linalg.norm(self.r_vec))

    def angular_factor(self) -> float:
        """(mu_i . mu_j) - 3 (mu_i . r)(mu_j . r)."""
        mi = np.asarray(self.mu_hat_i, float)
        mj = np.asarray(self.mu_hat_j, float)
        rh = np.asarray(self.r_vec, float) / self.r
        return float(mi @ mj - 3.0 * (mi @ rh) * (mj @ rh))


# ---------------------------------------------------------------------------
# entanglement generation

@dataclass(frozen=True)
class EntangleResult:
    fidelity: float
    M_prime: float
    I_prime: float


def entangle_fidelity(rates: DerivedRates, delta_w: float = 0.0) -> EntangleResult:
    """Barrett-Kok heralding fidelity with Purcell-enhanced emission.

    Also returns the mean wavepacket overlap M' and the single-photon
    indistinguishability I'; ``fidelity == (1 + M' I') / 2``.
    """
    gp, Gp = rates.gamma_prime, rates.Gamma_prime
    denom = Gp ** 2 + delta_w ** 2
    F = 0.5 * (1.0 + gp ** 2 / denom)
    return EntangleResult(F, Gp * gp / denom, gp / Gp)


@dataclass(frozen=True)
class Efficiency:
    p: float
    eta_t: float
    eta: float
    p_en: float


def emission_probability(rates: DerivedRates, eta_c: float = 1.0) -> float:
    """Probability of a photon leaving through the collected cavity mode."""
    enhanced = rates.gamma_r * rates.F_p
    return eta_c * enhanced / (enhanced + rates.gamma)


def entangle_efficiency(rates: DerivedRates, link: LinkParams) -> Efficiency:
    p = emission_probability(rates, link.eta_c)
    eta_t = math.exp(-link.L0 / (2.0 * link.L_att))
    eta = p * eta_t * link.eta_d
    return Efficiency(p=p, eta_t=eta_t, eta=eta, p_en=eta ** 2 / 2.0)


def init_fidelity(rates: DerivedRates, beta: float, T_init: float) -> float:
    """Lower bound on optical-pumping initialisation fidelity after a single pulse."""
    if T_init < 0:
        raise ParameterError("T_init must be >= 0")
    gp = rates.gamma_prime
    return (rates.gamma_r * rates.F_p + beta * rates.gamma) * (1.0 - math.exp(-T_init * gp)) / gp


# ---------------------------------------------------------------------------
# virtual-photon exchange gate

@dataclass(frozen=True)
class ExchangeOptimum:
    C_star: float
    delta_opt: float
    F_max: float
    T0: float
    flags: tuple = ()


@dataclass(frozen=True)
class ExchangeGateResult:
    fidelity: float
    T_gate: float
    optimum: ExchangeOptimum
    flags: tuple = field(default=())


def exchange_gate_time(delta, C, kappa, gamma):
    """T_gate = pi Delta / g^2 written through the cooperativity, 4 pi Delta / (C kappa gamma)."""
    return 4.0 * math.pi * delta / (C * kappa * gamma)


def _eq4_penalty(T, delta_w, delta_eg):
    pen = 0.0
    if delta_w:
        pen += (T * delta_w / TWO_PI) ** 2
    if delta_eg is not None and np.isfinite(delta_eg) and delta_eg != 0:
        pen += (TWO_PI / (T * delta_eg)) ** 2
    return 6.0 * math.pi ** 2 / 32.0 * pen


def _validity_flags(T, delta_w, delta_eg):
    flags = []
    if delta_w and T * abs(delta_w) / TWO_PI > EXCHANGE_VALIDITY_LIMIT:
        flags.append("ion-ion detuning too large: T*delta_w/2pi > %.2g" % EXCHANGE_VALIDITY_LIMIT)
    if delta_eg is not None and np.isfinite(delta_eg) and (
            delta_eg == 0 or TWO_PI / (T * abs(delta_eg)) > EXCHANGE_VALIDITY_LIMIT):
        flags.append("spectator splitting too small: 2pi/(T*delta_eg) > %.2g" % EXCHANGE_VALIDITY_LIMIT)
    return tuple(flags)


def exchange_gate_optimum(C, kappa, gamma, gamma_star=0.0, delta_w=0.0, delta_eg=math.inf,
                          c_star_coeff=None) -> ExchangeOptimum:
    """Optimal detuning, maximum fidelity and gate time with dephasing folded into C*."""
    if C <= 0 or kappa <= 0 or gamma <= 0:
        raise ParameterError("C, kappa and gamma must be > 0")
    kw = {} if c_star_coeff is None else {"coeff": c_star_coeff}
    C_star = effective_cooperativity(C, gamma, gamma_star, **kw)
    root = math.sqrt(C_star)
    T0 = TWO_PI * root / (C * gamma)
    F = 1.0 - TWO_PI / root - _eq4_penalty(T0, delta_w, delta_eg)
    flags = _validity_flags(T0, delta_w, delta_eg)
    return ExchangeOptimum(C_star=C_star, delta_opt=kappa * root / 2.0, F_max=F, T0=T0, flags=flags)


def exchange_gate_analytic(C, kappa, delta, gamma, gamma_star=0.0, delta_w=0.0,
                           delta_eg=math.inf, dephasing_coeff=EXCHANGE_DEPHASING_COEFF,
                           warn=True) -> ExchangeGateResult:
    """Dispersive CZ fidelity at cavity detuning ``delta`` (all rates in rad/s).

    F = (exp(-2 pi D / C k - pi k / 2 D) + 1)^2 / 4 - c gamma* T_gate, with the
    ion-ion detuning and spectator-splitting corrections subtracted when finite.
    """
    if not delta > 0:
        raise ParameterError(f"cavity detuning must be > 0, got {delta}")
    T = exchange_gate_time(delta, C, kappa, gamma)
    amp = math.exp(-TWO_PI * delta / (C * kappa) - math.pi * kappa / (2.0 * delta))
    F = 0.25 * (amp + 1.0) ** 2 - dephasing_coeff * gamma_star * T
    F -= _eq4_penalty(T, delta_w, delta_eg)
    opt = exchange_gate_optimum(C, kappa, gamma, gamma_star, delta_w, delta_eg)
    flags = tuple(dict.fromkeys(_validity_flags(T, delta_w, delta_eg) + opt.flags))
    if flags and warn:
        warnings.warn("; ".join(flags), ValidityWarning, stacklevel=2)
    return ExchangeGateResult(fidelity=F, T_gate=T, optimum=opt, flags=flags)


# ---------------------------------------------------------------------------
# electric dipole-dipole gate

def dipole_gate_time(delta_nu: float) -> float:
    """T_gate = 5 pi sqrt(3) / delta_nu with delta_nu in cycles/s (Hz)."""
    if not delta_nu > 0:
        raise ParameterError(f"frequency shift must be > 0, got {delta_nu}")
    return 5.0 * math.pi * math.sqrt(3.0) / delta_nu


def dipole_gate_fidelity(ion: IonParams, delta_nu: float, delta_nu_err: float = 0.0,
                         purcell_off_resonant: float = 0.0):
    """Blockade CNOT fidelity and duration for a shift ``delta_nu`` (Hz).

    ``purcell_off_resonant`` adds F_off * gamma_r to the decay rate to model a
    cavity that still weakly enhances the gate transition.
    Returns ``(fidelity, T_gate)``.
    """
    delta_nu = abs(delta_nu)
    T = dipole_gate_time(delta_nu)
    gamma = ion.gamma + purcell_off_resonant * ion.gamma_r
    F = (1.0 - T / 80.0 * (42.0 * gamma + 25.0 * ion.gamma_star + 25.0 * ion.chi)
         - 43.0 * math.pi ** 2 / 128.0 * (delta_nu_err / delta_nu) ** 2)
    return F, T


def electric_dipole_shift(pair: DipolePairParams) -> float:
    """Signed optical frequency shift (Hz) of one ion when its neighbour is excited."""
    r = pair.r
    pref = pair.delta_mu_i * pair.delta_mu_j / (4.0 * math.pi * pair.epsilon * EPS0 * PLANCK * r ** 3)
    return pref * pair.angular_factor()


def magnetic_dipole_shift(pair: DipolePairParams) -> float:
    """Point magnetic dipole coupling mu0/4pi * mu^2 * |angular| / (h r^3), in Hz."""
    if pair.magnetic_moment is None:
        raise ParameterError("magnetic_moment is required for the magnetic dipole shift")
    mu = pair.magnetic_moment
    return MU0_OVER_4PI * mu ** 2 * abs(pair.angular_factor()) / (PLANCK * pair.r ** 3)


def shift_at_distance(r, delta_nu_ref, r_ref):
    """Scale a reference shift by the 1/r^3 law."""
    return delta_nu_ref * (r_ref / np.asarray(r, dtype=float)) ** 3


# ---------------------------------------------------------------------------
# readout

@dataclass(frozen=True)
class ReadoutResult:
    fidelity: float
    T_readout: float
    dark_product: float


def pulse_emission_probabilities(N, T_p, gamma_prime):
    """Emission probability between pulse k and k+1 for k = 1..N under a train of pi pulses."""
    k = np.arange(1, int(N) + 1)
    x = T_p * gamma_prime
    return (1.0 - (-1.0) ** k * np.exp(-k * x)) * np.tanh(x / 2.0)


def readout_fidelity(cfg: ReadoutConfig, gamma_prime: Optional[float] = None,
                     mode: str = "pulse-train") -> ReadoutResult:
    """Spin readout fidelity by repeated cycling excitation.

    ``fixed`` assumes every cycle emits (ignores T_p and gamma'); ``pulse-train``
    accounts for coherent de-excitation when pulses arrive before the ion decays.
    """
    N = int(cfg.N)
    if mode == "fixed":
        dark = (1.0 - cfg.p_eta_d) ** N
    elif mode == "pulse-train":
        if gamma_prime is None or gamma_prime <= 0:
            raise ParameterError("pulse-train mode requires gamma_prime > 0")
        eta_p = pulse_emission_probabilities(N, cfg.T_p, gamma_prime)
        dark = float(np.prod(1.0 - cfg.p_eta_d * eta_p))
    else:
        raise ParameterError(f"unknown readout mode {mode!r}")
    return ReadoutResult(fidelity=1.0 - N * cfg.xi / 2.0 - dark / 2.0, T_readout=N * cfg.T_p,
                         dark_product=dark)


def readout_scan(T_total, T_p_values, gamma_prime, xi, p_eta_d):
    """Pulse-train fidelity at a fixed readout window: N = floor(T_total / T_p) pulses each."""
    rows = []
    for T_p in np.asarray(T_p_values, dtype=float):
        N = int(math.floor(T_total / T_p + 1e-9))
        if N < 1:
            continue
        res = readout_fidelity(ReadoutConfig(N, T_p, xi, p_eta_d), gamma_prime, "pulse-train")
        rows.append((T_p, N, res.fidelity))
    return rows


# ---------------------------------------------------------------------------
# cavity detuning and Stark tuning

def detuned_cavity_effects(delta: float, kappa: float, F_p_resonant: float):
    """Lorentzian suppression of a transition detuned by ``delta`` from a cavity of width kappa.

    Returns ``(line_enhancement_ratio, off_resonant_purcell)``.
    """
    ratio = 1.0 + 4.0 * (delta / kappa) ** 2
    return ratio, F_p_resonant / ratio


def lorentz_factor(epsilon: float) -> float:
    return (2.0 + epsilon) / 3.0


def stark_detuning(delta_mu, E_field, epsilon: float = 1.0) -> float:
    """DC Stark detuning (rad/s); vectors are dotted, scalars assumed collinear."""
    dmu = np.asarray(delta_mu, dtype=float)
    E = np.asarray(E_field, dtype=float)
    proj = float(dmu @ E) if dmu.ndim else float(dmu * E)
    return proj * lorentz_factor(epsilon) / HBAR
