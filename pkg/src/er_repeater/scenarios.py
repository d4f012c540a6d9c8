"""Preset-driven building blocks shared by the CLI and the experiment scripts."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import analytic as an
from . import chain as ch
from .lindblad import ExchangeGateModel, optimize_detuning
from .params import Preset


def link_params(preset: Preset, L0: float, F_p: Optional[float] = None,
                include_T_init: Optional[bool] = None) -> an.LinkParams:
    link = preset.section("link")
    rates = preset.rates(F_p)
    if include_T_init is None:
        include_T_init = bool(link.get("include_T_init", False))
    T_init = link.get("T_init_lifetimes", 8.0) / rates.gamma_prime if include_T_init else 0.0
    return an.LinkParams(L0=L0, L_att=link.get("L_att", 22.0), c=link.get("c", 2e8),
                         eta_c=link.get("eta_c", 1.0), eta_d=link.get("eta_d", 1.0),
                         T_init=T_init, delta_w=link.get("delta_w", 0.0))


def readout_config(preset: Preset, F_p: Optional[float] = None, T_p: Optional[float] = None):
    """Readout settings; ``T_p`` defaults to the chain's lifetimes-per-pulse setting."""
    ro = preset.section("readout")
    rates = preset.rates(F_p)
    if T_p is None:
        T_p = preset.section("chain").get("T_p_lifetimes", 2.0) / rates.gamma_prime
    return an.ReadoutConfig(N=int(ro.get("N", 7)), T_p=T_p, xi=ro.get("xi", 1e-5),
                            p_eta_d=ro.get("p_eta_d", 0.9))


@dataclass(frozen=True)
class StepFidelities:
    F_init: float
    F_entangle: float
    F_readout: float
    p_en: float
    link: an.LinkParams


def step_fidelities(preset: Preset, F_p: float, L: float, m: int,
                    include_T_init: Optional[bool] = None) -> StepFidelities:
    rates = preset.rates(F_p)
    link = link_params(preset, L / m, F_p, include_T_init)
    T_init = preset.section("link").get("T_init_lifetimes", 8.0) / rates.gamma_prime
    return StepFidelities(
        F_init=an.init_fidelity(rates, preset.ion.beta, T_init),
        F_entangle=an.entangle_fidelity(rates, link.delta_w).fidelity,
        F_readout=an.readout_fidelity(readout_config(preset, F_p), rates.gamma_prime).fidelity,
        p_en=an.entangle_efficiency(rates, link).p_en,
        link=link,
    )


def exchange_model(preset: Preset, **kw) -> ExchangeGateModel:
    """Parametric exchange-gate model scaled to the preset's physical cavity linewidth."""
    kw.setdefault("kappa", preset.cavity.kappa)
    return ExchangeGateModel.from_section(preset.section("exchange_sim"), **kw)


@dataclass(frozen=True)
class GateChoice:
    scheme: ch.SchemeKind
    F_gate: float
    delta_over_kappa: Optional[float] = None


def postselected_gate(preset: Preset, F_p: float, p_eta_d: Optional[float] = None,
                      lo: float = 5.0, hi: float = 200.0) -> GateChoice:
    """Simulated post-selected exchange gate at the cooperativity implied by F_p.

    The swap success probability is the no-click probability with the control
    ion excited, which bounds the per-swap heralding rate from below.
    """
    rates = preset.rates(F_p)
    if p_eta_d is None:
        p_eta_d = preset.section("chain").get("p_eta_d", 0.9)
    model = exchange_model(preset, cooperativity=rates.C)
    grid = np.geomspace(lo, hi, 13)
    F = [model.simulate(d, p_eta_d).fidelity for d in grid]
    k = int(np.clip(np.argmax(F), 1, len(grid) - 2))
    best = optimize_detuning(model, p_eta_d, grid[k - 1], grid[k + 1])
    res = model.simulate(best.delta_over_kappa, p_eta_d)
    return GateChoice(ch.ExchangePostselected(res.p_gate_excited, res.fidelity), res.fidelity,
                      best.delta_over_kappa)


def deterministic_gate(preset: Preset, F_p: float) -> GateChoice:
    """Analytic optimum of the exchange gate without post-selection."""
    rates = preset.rates(F_p)
    opt = an.exchange_gate_optimum(rates.C, preset.cavity.kappa, rates.gamma, rates.gamma_star)
    return GateChoice(ch.ExchangeDeterministic(opt.F_max), opt.F_max, opt.delta_opt / preset.cavity.kappa)


def dipole_gate(preset: Preset) -> GateChoice:
    dp = preset.section("dipole")
    dnu = dp["delta_nu_ref"]
    F, _ = an.dipole_gate_fidelity(preset.ion, dnu, dp.get("delta_nu_err_ratio", 0.0) * dnu)
    return GateChoice(ch.DipoleDipole(F), F)


def chain_config(preset: Preset, gate: GateChoice, F_p: float, L: float, m: int,
                 mode: str = "parallel", include_T_init: Optional[bool] = None) -> ch.ChainConfig:
    steps = step_fidelities(preset, F_p, L, m, include_T_init)
    return ch.ChainConfig(L=L, m=m, link=steps.link, scheme=gate.scheme, F_init=steps.F_init,
                          F_entangle=steps.F_entangle, F_gate=gate.F_gate,
                          F_readout=steps.F_readout, p_en=steps.p_en, mode=mode)


def two_link_waiting_time(preset: Preset, L: float, m: int, F_p: Optional[float] = None,
                          p_s: float = 1.0) -> float:
    """Time to connect two neighbouring links of an m-link chain spanning L km."""
    rates = preset.rates(F_p)
    link = link_params(preset, L / m, F_p)
    p_en = an.entangle_efficiency(rates, link).p_en
    return ch.two_link_time(p_en, link, p_s)


def dipole_pair(preset: Preset, r: float, geometry: str = "broadside") -> an.DipolePairParams:
    """Identical ions a distance r apart; ``broadside`` puts both dipoles normal to the
    separation (angular factor 1), ``inline`` along it (factor -2)."""
    dp = preset.section("dipole")
    z = (0.0, 0.0, 1.0)
    r_vec = (r, 0.0, 0.0) if geometry == "broadside" else (0.0, 0.0, r)
    return an.DipolePairParams(dp["delta_mu"], dp["delta_mu"], r_vec, z, z,
                               epsilon=dp.get("epsilon", 3.2),
                               magnetic_moment=dp.get("magnetic_moment"))


def repeater_rate_fn(preset: Preset, gate: GateChoice, F_p: float, m: int,
                     include_T_init: bool = True, mode: str = "parallel"):
    def rate(L):
        cfg = chain_config(preset, gate, F_p, L, m, mode, include_T_init)
        return 1.0 / ch.avg_time(cfg)
    return rate


def nested_m_values(max_m: int = 64):
    return [2 ** k for k in range(1, int(math.log2(max_m)) + 1)]

