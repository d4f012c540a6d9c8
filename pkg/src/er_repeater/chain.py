"""Repeater-chain bookkeeping: end-to-end fidelity from per-step fidelities,
expected distribution times, the direct-transmission baseline and a Monte Carlo
check of the waiting-time approximation."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .analytic import LinkParams
from .params import ParameterError

SCHEDULING_MODES = ("parallel", "sequential")

# Monte Carlo trials are drawn in fixed-size chunks, each from its own spawned
# seed, so results do not depend on the worker count.
MC_CHUNK = 10_000


@dataclass(frozen=True)
class SchemeKind:
    """Swap-gate variant. ``p_gate`` is the heralded success probability of one swap."""

    kind: str
    p_gate: float = 1.0
    F_gate: Optional[float] = None

    KINDS = ("exchange", "exchange-postselected", "dipole", "er-eu")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ParameterError(f"unknown scheme {self.kind!r}")
        if not 0.0 < self.p_gate <= 1.0:
            raise ParameterError("p_gate must lie in (0, 1]")
        if self.F_gate is not None and not 0.0 <= self.F_gate <= 1.0:
            raise ParameterError("F_gate must lie in [0, 1]")


def ExchangeDeterministic(F_gate=None):
    return SchemeKind("exchange", 1.0, F_gate)


def ExchangePostselected(p_gate, F_gate=None):
    return SchemeKind("exchange-postselected", p_gate, F_gate)


def DipoleDipole(F_gate=None):
    return SchemeKind("dipole", 1.0, F_gate)


def ErEuHybrid(F_gate, p_gate=1.0):
    return SchemeKind("er-eu", p_gate, F_gate)


@dataclass(frozen=True)
class ChainConfig:
    L: float
    m: int
    link: LinkParams
    scheme: SchemeKind
    F_init: float = 1.0
    F_entangle: float = 1.0
    F_gate: Optional[float] = None
    F_readout: float = 1.0
    p_en: Optional[float] = None
    mode: str = "parallel"

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ParameterError(f"m must be an integer >= 2, got {self.m}")
        if not math.isclose(self.L, self.m * self.link.L0, rel_tol=1e-9, abs_tol=1e-12):
            raise ParameterError(f"L={self.L} km is not m*L0 = {self.m}*{self.link.L0}")
        for name in ("F_init", "F_entangle", "F_readout"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {v}")
        if self.gate_fidelity is None:
            raise ParameterError("a gate fidelity is required (config or scheme)")
        if not 0.0 <= self.gate_fidelity <= 1.0:
            raise ParameterError("gate fidelity must lie in [0, 1]")
        if self.mode not in SCHEDULING_MODES:
            raise ParameterError(f"mode must be one of {SCHEDULING_MODES}")

    @classmethod
    def over_distance(cls, L, m, link: LinkParams, scheme: SchemeKind, **kw):
        return cls(L=L, m=m, link=replace(link, L0=L / m), scheme=scheme, **kw)

    @property
    def gate_fidelity(self) -> Optional[float]:
        return self.F_gate if self.F_gate is not None else self.scheme.F_gate

    @property
    def p_s(self) -> float:
        return self.scheme.p_gate


@dataclass
class ChainResult:
    fidelity: float
    time: float
    rate: float
    breakdown: dict = field(default_factory=dict)


def end_to_end_fidelity(cfg: ChainConfig) -> float:
    """Product of all step fidelities. Only meaningful close to unit fidelity."""
    m = cfg.m
    Fg, Fr = cfg.gate_fidelity, cfg.F_readout
    if cfg.scheme.kind == "er-eu":
        F_swap = F_map = (Fg * Fr) ** 2
        return cfg.F_init ** (3 * m + 1) * cfg.F_entangle ** m * F_swap ** (m - 1) * F_map ** (m / 2)
    F_swap = Fg * Fr ** 2
    return cfg.F_init ** (2 * m) * cfg.F_entangle ** m * F_swap ** (m - 1)


def attempts_factor(m: int) -> float:
    """Approximate expected number of generation epochs until all m links are up."""
    if m == 2:
        return 1.5
    return 0.64 * math.log2(m) + 0.83


def _require_p_en(cfg: ChainConfig) -> float:
    if cfg.p_en is None or not cfg.p_en > 0:
        raise ParameterError("p_en must be > 0")
    return cfg.p_en


def avg_time(cfg: ChainConfig) -> float:
    """Expected time (s) to distribute one entangled pair over the full chain."""
    p_en = _require_p_en(cfg)
    slot = cfg.link.slot_time
    denom = p_en * cfg.p_s ** (cfg.m - 1)
    if cfg.mode == "parallel":
        return attempts_factor(cfg.m) * slot / denom
    return 2.0 * attempts_factor(cfg.m // 2) * slot / denom


def two_link_time(p_en: float, link: LinkParams, p_s: float = 1.0) -> float:
    """Expected time to entangle two neighbouring links and swap them."""
    if not p_en > 0:
        raise ParameterError("p_en must be > 0")
    return 1.5 * link.slot_time / (p_en * p_s)


def evaluate_chain(cfg: ChainConfig) -> ChainResult:
    F = end_to_end_fidelity(cfg)
    T = avg_time(cfg)
    return ChainResult(fidelity=F, time=T, rate=1.0 / T, breakdown={
        "F_init": cfg.F_init, "F_entangle": cfg.F_entangle, "F_gate": cfg.gate_fidelity,
        "F_readout": cfg.F_readout, "p_en": cfg.p_en, "p_s": cfg.p_s, "slot_time": cfg.link.slot_time,
        "m": cfg.m, "L0": cfg.link.L0, "mode": cfg.mode,
    })


def direct_transmission_rate(L: float, source_rate: float = 1e9, L_att: float = 22.0) -> float:
    return source_rate * math.exp(-L / L_att)


def find_crossover(repeater_rate, L_lo: float = 1.0, L_hi: float = 1000.0,
                   source_rate: float = 1e9, L_att: float = 22.0) -> Optional[float]:
    """Distance (km) beyond which ``repeater_rate(L)`` beats direct transmission, or None."""
    def gap(L):
        return math.log(repeater_rate(L)) - math.log(direct_transmission_rate(L, source_rate, L_att))
    a, b = gap(L_lo), gap(L_hi)
    if a > 0 or b < 0:
        return None
    return brentq(gap, L_lo, L_hi, xtol=1e-6)


# ---------------------------------------------------------------------------
# Monte Carlo

def _geometric(rng, p, n):
    return rng.geometric(p, size=n).astype(float)


def _span_slots(rng, links: int, n: int, p_en: float, p_s: float) -> np.ndarray:
    """Slots until a span of ``links`` elementary links is entangled end to end.

    Both halves are built concurrently; the joining swap succeeds with p_s and a
    failure consumes both halves, which are then rebuilt from scratch.
    """
    if links == 1:
        return _geometric(rng, p_en, n)
    half = links // 2
    total = np.zeros(n)
    pending = np.arange(n)
    while pending.size:
        k = pending.size
        total[pending] += np.maximum(_span_slots(rng, half, k, p_en, p_s),
                                     _span_slots(rng, links - half, k, p_en, p_s))
        if p_s >= 1.0:
            break
        pending = pending[rng.random(k) >= p_s]
    return total


def _sequential_slots(rng, m: int, n: int, p_en: float, p_s: float) -> np.ndarray:
    """Odd links first, then even links; all m-1 swaps at the end, any failure restarts the chain."""
    total = np.zeros(n)
    pending = np.arange(n)
    p_all = p_s ** (m - 1)
    while pending.size:
        k = pending.size
        odd = rng.geometric(p_en, size=(k, (m + 1) // 2)).max(axis=1)
        even = rng.geometric(p_en, size=(k, m // 2)).max(axis=1)
        total[pending] += odd + even
        if p_all >= 1.0:
            break
        pending = pending[rng.random(k) >= p_all]
    return total


def _mc_chunk(args):
    seed_seq, n, m, p_en, p_s, mode = args
    rng = np.random.default_rng(seed_seq)
    if mode == "parallel":
        return _span_slots(rng, m, n, p_en, p_s)
    return _sequential_slots(rng, m, n, p_en, p_s)


def monte_carlo_time(cfg: ChainConfig, trials: int = 100_000, seed: int = 0, jobs: int = 1):
    """Sampled mean distribution time and its standard error, in seconds."""
    p_en = _require_p_en(cfg)
    if trials < 2:
        raise ParameterError("need at least 2 trials")
    n_chunks = -(-trials // MC_CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(MC_CHUNK, trials - k * MC_CHUNK) for k in range(n_chunks)]
    tasks = [(s, n, cfg.m, p_en, cfg.p_s, cfg.mode) for s, n in zip(children, sizes)]
    if jobs and jobs > 1 and n_chunks > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_mc_chunk, tasks))
    else:
        parts = [_mc_chunk(t) for t in tasks]
    slots = np.concatenate(parts) * cfg.link.slot_time
    return float(slots.mean()), float(slots.std(ddof=1) / math.sqrt(slots.size))
