import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from er_repeater import chain as ch
from er_repeater import scenarios as sc
from er_repeater.analytic import LinkParams
from er_repeater.params import ParameterError

LINK = LinkParams(L0=37.5, eta_d=0.9)


def _cfg(m=8, p_en=0.05, p_s=1.0, mode="parallel", L0=37.5, **kw):
    link = replace(LINK, L0=L0)
    kw.setdefault("F_gate", 0.99)
    return ch.ChainConfig(L=m * L0, m=m, link=link, scheme=ch.ExchangePostselected(p_s),
                          p_en=p_en, mode=mode, **kw)


# ---- fidelity ------------------------------------------------------------------

@pytest.mark.parametrize("m", [2, 4, 8, 16, 64])
def test_perfect_components_give_perfect_chain(m):
    assert ch.end_to_end_fidelity(_cfg(m, F_gate=1.0)) == 1.0
    hyb = ch.ChainConfig(L=m * 10.0, m=m, link=replace(LINK, L0=10.0), scheme=ch.ErEuHybrid(1.0))
    assert ch.end_to_end_fidelity(hyb) == 1.0


def test_dipole_two_link_product(preset):
    gate = sc.dipole_gate(preset)
    cfg = sc.chain_config(preset, gate, 5e3, 300.0, 2)
    steps = sc.step_fidelities(preset, 5e3, 300.0, 2)
    expected = steps.F_init ** 4 * steps.F_entangle ** 2 * (gate.F_gate * steps.F_readout ** 2)
    assert ch.end_to_end_fidelity(cfg) == pytest.approx(expected, rel=1e-14)
    assert gate.F_gate == pytest.approx(0.987, abs=1e-3)
    assert ch.end_to_end_fidelity(cfg) == pytest.approx(0.9765, abs=1e-3)


def test_hybrid_exponents():
    cfg = ch.ChainConfig(L=40.0, m=4, link=replace(LINK, L0=10.0), scheme=ch.ErEuHybrid(0.98),
                         F_init=0.999, F_entangle=0.99, F_readout=0.995)
    swap = (0.98 * 0.995) ** 2
    expected = 0.999 ** 13 * 0.99 ** 4 * swap ** 3 * swap ** 2
    assert ch.end_to_end_fidelity(cfg) == pytest.approx(expected, rel=1e-14)


def test_scheme_ordering_at_eight_links(preset):
    hi, lo = 4.5e5, 5e3
    A = sc.postselected_gate(preset, hi)
    B = sc.dipole_gate(preset)
    C = sc.deterministic_gate(preset, hi)
    f = {k: ch.end_to_end_fidelity(sc.chain_config(preset, g, fp, 1000.0, 8))
         for k, (g, fp) in {"A": (A, hi), "B": (B, lo), "C": (C, hi)}.items()}
    assert f["A"] > f["B"] > f["C"]
    assert A.scheme.p_gate == pytest.approx(0.93, abs=0.01)


fid = st.floats(0.5, 1.0)


@given(fid, fid, fid, fid, st.sampled_from(["F_init", "F_entangle", "F_gate", "F_readout"]),
       st.floats(0, 1), st.sampled_from([2, 4, 8, 16]))
def test_fidelity_monotone_in_components(a, b, c, d, which, t, m):
    cfg = _cfg(m, F_init=a, F_entangle=b, F_gate=c, F_readout=d)
    better = replace(cfg, **{which: getattr(cfg, which) + t * (1 - getattr(cfg, which))})
    assert ch.end_to_end_fidelity(better) >= ch.end_to_end_fidelity(cfg)


def test_config_validation():
    with pytest.raises(ParameterError):
        _cfg(m=1)
    with pytest.raises(ParameterError):
        ch.ChainConfig(L=100.0, m=4, link=LINK, scheme=ch.DipoleDipole(0.99))
    with pytest.raises(ParameterError):
        _cfg(F_init=1.2)
    with pytest.raises(ParameterError):
        ch.ChainConfig(L=75.0, m=2, link=LINK, scheme=ch.DipoleDipole())
    with pytest.raises(ParameterError):
        ch.SchemeKind("teleport")
    with pytest.raises(ParameterError):
        ch.ExchangePostselected(0.0)
    with pytest.raises(ParameterError):
        ch.avg_time(_cfg(p_en=0.0))
    with pytest.raises(ParameterError):
        _cfg(mode="serial")


# ---- timing ------------------------------------------------------------------

@pytest.mark.parametrize("L,expected_ms", [(300.0, 3.82), (500.0, 19.83)])
def test_two_link_waiting_times(preset, L, expected_ms):
    assert sc.two_link_waiting_time(preset, L, 8) * 1e3 == pytest.approx(expected_ms, rel=0.01)


def test_attempts_factor():
    assert ch.attempts_factor(2) == 1.5
    assert ch.attempts_factor(8) == pytest.approx(0.64 * 3 + 0.83)
    cfg = _cfg(m=2, L0=150.0)
    assert ch.avg_time(cfg) == ch.two_link_time(cfg.p_en, cfg.link)


@given(st.floats(1e-4, 0.5), st.floats(0.05, 1.0), st.sampled_from([2, 4, 8, 16, 32]),
       st.sampled_from(ch.SCHEDULING_MODES))
def test_time_decreases_with_probabilities(p_en, p_s, m, mode):
    t = ch.avg_time(_cfg(m, p_en, p_s, mode))
    assert ch.avg_time(_cfg(m, p_en * 1.01, p_s, mode)) < t
    if p_s < 1 and m > 1:
        assert ch.avg_time(_cfg(m, p_en, min(1.0, p_s * 1.01), mode)) < t


@pytest.mark.parametrize("m", [4, 8, 16, 32, 64])
def test_parallel_not_slower_than_sequential(m):
    assert ch.avg_time(_cfg(m)) <= ch.avg_time(_cfg(m, mode="sequential"))


def test_direct_transmission():
    assert ch.direct_transmission_rate(0.0) == 1e9
    assert ch.direct_transmission_rate(22.0 * math.log(10)) == pytest.approx(1e8)


def test_crossover_exists(preset):
    gate = sc.postselected_gate(preset, 5e3)
    L = ch.find_crossover(sc.repeater_rate_fn(preset, gate, 5e3, 8), 1.0, 1000.0)
    assert L is not None and 0 < L < 1000


def test_repeater_rate_falls_slower_than_direct(preset):
    gate = sc.dipole_gate(preset)
    rate = sc.repeater_rate_fn(preset, gate, 5e3, 8)
    L = np.array([400.0, 800.0])
    rep = np.log([rate(x) for x in L])
    direct = np.log([ch.direct_transmission_rate(x) for x in L])
    assert np.diff(rep)[0] > np.diff(direct)[0]


def test_evaluate_chain_rate():
    res = ch.evaluate_chain(_cfg())
    assert res.rate == pytest.approx(1 / res.time)
    assert res.breakdown["m"] == 8


# ---- Monte Carlo ---------------------------------------------------------------

def test_mc_certain_success_has_no_spread():
    cfg = _cfg(m=8, p_en=1.0)
    mean, se = ch.monte_carlo_time(cfg, 2000, seed=1)
    assert mean == pytest.approx(cfg.link.slot_time)
    assert se == pytest.approx(0.0, abs=1e-12 * cfg.link.slot_time)
    seq = replace(cfg, mode="sequential")
    assert ch.monte_carlo_time(seq, 2000, seed=1)[0] == pytest.approx(2 * cfg.link.slot_time)


def test_mc_reproducible_and_independent_of_jobs():
    cfg = _cfg(m=4, p_en=0.1, p_s=0.9)
    a = ch.monte_carlo_time(cfg, 25_000, seed=7)
    b = ch.monte_carlo_time(cfg, 25_000, seed=7)
    c = ch.monte_carlo_time(cfg, 25_000, seed=7, jobs=2)
    assert a == b == c
    assert ch.monte_carlo_time(cfg, 25_000, seed=8) != a


def test_mc_swap_failure_regenerates_links():
    cfg = _cfg(m=2, p_en=1.0, p_s=0.5)
    mean, se = ch.monte_carlo_time(cfg, 40_000, seed=3)
    assert mean == pytest.approx(2 * cfg.link.slot_time, abs=4 * se)


def test_mc_two_links_exact_discrete_mean():
    """Mean of the max of two geometric variables: 2/p - 1/(p(2-p)) slots."""
    p = 0.2
    cfg = _cfg(m=2, p_en=p)
    mean, se = ch.monte_carlo_time(cfg, 100_000, seed=11)
    exact = (2 / p - 1 / (p * (2 - p))) * cfg.link.slot_time
    assert mean == pytest.approx(exact, abs=3 * se)


@pytest.mark.parametrize("m", [4, 8, 16])
def test_mc_matches_attempts_formula(m):
    cfg = _cfg(m=m, p_en=0.01)
    mean, _ = ch.monte_carlo_time(cfg, 20_000, seed=m)
    assert mean == pytest.approx(ch.avg_time(cfg), rel=0.1)


def test_mc_sequential_matches_formula():
    cfg = _cfg(m=8, p_en=0.01, mode="sequential")
    mean, _ = ch.monte_carlo_time(cfg, 20_000, seed=5)
    assert mean == pytest.approx(ch.avg_time(cfg), rel=0.1)
