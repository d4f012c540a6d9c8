import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from er_repeater.params import (TWO_PI, CavityParams, IonParams, ParameterError, derive_rates,
                                dephasing_from_t2, effective_cooperativity, kappa_quality_factor,
                                load_preset, parse_rate, preset_from_dict, quality_factor_kappa,
                                quantity, wavelength_to_angular)

rate = st.floats(min_value=1e-3, max_value=1e7)


def test_preset_values(preset):
    ion = preset.ion
    assert ion.gamma_r == pytest.approx(TWO_PI * 3)
    assert ion.gamma == pytest.approx(TWO_PI * 14)
    assert ion.gamma_star == pytest.approx(TWO_PI * 32)
    assert ion.chi == pytest.approx(TWO_PI * 0.12)
    assert ion.delta_eg == pytest.approx(TWO_PI * 100e6)
    assert preset.purcell == 5000


def test_dephasing_from_coherence_time():
    # 4 ms optical coherence with a 2pi*14 Hz decay leaves roughly 2pi*32 Hz of pure dephasing
    g = dephasing_from_t2(4e-3, TWO_PI * 14)
    assert g == pytest.approx(1 / 4e-3 - TWO_PI * 7)
    assert abs(g / TWO_PI - 32) < 1.0


def test_lifetime_at_purcell_5000(preset):
    r = preset.rates(5000)
    assert r.gamma_prime == pytest.approx(TWO_PI * 15014)
    assert 1e6 / r.gamma_prime == pytest.approx(10.6, abs=0.05)


def test_high_purcell_cooperativity(preset):
    r = preset.rates(4.5e5)
    assert r.C == pytest.approx(4.5e5 * 3 / 14)
    assert r.C == pytest.approx(9.6e4, rel=0.01)


def test_no_dephasing_limit():
    ion = IonParams(TWO_PI * 3, TWO_PI * 11, 0.0)
    r = derive_rates(ion, purcell_override=100.0)
    assert r.Gamma_prime == r.gamma_prime
    assert r.I == 1.0 and r.I_prime == 1.0
    assert r.C_star == r.C


def test_purcell_from_coupling():
    ion = IonParams(2.0, 3.0, 1.0)
    cav = CavityParams(g=10.0, kappa=400.0)
    r = derive_rates(ion, cav)
    assert r.F_p == pytest.approx(4 * 100 / (2.0 * 400.0))
    assert r.C == pytest.approx(4 * 100 / (400.0 * 5.0))
    general = derive_rates(ion, cav, bad_cavity=False)
    assert general.F_p == pytest.approx(4 * 100 / ((400.0 + 5.0 + 2.0) * 2.0))
    assert general.F_p < r.F_p


def test_kappa_from_quality_factor():
    w = wavelength_to_angular(1536e-9)
    kappa = quality_factor_kappa(1.2e7, w)
    assert kappa / TWO_PI == pytest.approx(16e6, rel=0.02)
    assert quality_factor_kappa(w, w) == pytest.approx(1.0)
    assert kappa_quality_factor(kappa, w) == pytest.approx(1.2e7, rel=1e-14)
    # the preset carries the quoted linewidth, which Q implies to within 2%
    assert load_preset().cavity.kappa == pytest.approx(kappa, rel=0.02)
    assert load_preset().cavity.kappa == pytest.approx(TWO_PI * 16e6)


@pytest.mark.parametrize("bad", [dict(gamma_r=-1, gamma_nr=0, gamma_star=0),
                                 dict(gamma_r=1, gamma_nr=0, gamma_star=0, beta=1.2),
                                 dict(gamma_r=1, gamma_nr=math.nan, gamma_star=0)])
def test_ion_rejects_invalid(bad):
    with pytest.raises(ParameterError):
        IonParams(**bad)


@pytest.mark.parametrize("bad", [dict(g=1, kappa=0), dict(g=-1, kappa=1), dict(g=1, kappa=1, n_max=0)])
def test_cavity_rejects_invalid(bad):
    with pytest.raises(ParameterError):
        CavityParams(**bad)


def test_derive_rates_needs_positive_inputs():
    with pytest.raises(ParameterError):
        derive_rates(IonParams(0.0, 1.0, 0.0), purcell_override=10)
    with pytest.raises(ParameterError):
        derive_rates(IonParams(1.0, 1.0, 0.0), CavityParams(g=0.0, kappa=1.0))
    with pytest.raises(ParameterError):
        derive_rates(IonParams(1.0, 1.0, 0.0))


@pytest.mark.parametrize("text,expected", [
    ("2pi*14", TWO_PI * 14), ("2pi*14 Hz", TWO_PI * 14), ("14 Hz", TWO_PI * 14),
    ("2*pi*3 kHz", TWO_PI * 3e3), ("88.5", 88.5), ("88.5 rad/s", 88.5), (3, 3.0),
])
def test_parse_rate(text, expected):
    assert parse_rate(text) == pytest.approx(expected)


def test_quantity_units():
    assert quantity({"value": 21.4, "unit": "us"}) == pytest.approx(21.4e-6)
    assert quantity({"value": 100, "unit": "2pi*MHz"}) == pytest.approx(TWO_PI * 1e8)
    with pytest.raises(ParameterError):
        quantity({"value": 1, "unit": "furlong"})
    with pytest.raises(ParameterError):
        parse_rate("fast")


def test_preset_rejects_unknown_keys(preset):
    doc = dict(preset.source)
    doc["ion"] = dict(doc["ion"], spin=1)
    with pytest.raises(ParameterError, match="spin"):
        preset_from_dict(doc)


def test_preset_sections_keep_strings(preset):
    assert preset.section("exchange_sim")["dephasing_convention"] == "rate"
    assert preset.section("readout")["T_p"] == pytest.approx(21.4e-6)


@given(rate, rate, rate, st.floats(1e-3, 1e6))
def test_width_and_indistinguishability_relations(gr, gnr, gs, F_p):
    r = derive_rates(IonParams(gr, gnr, gs), purcell_override=F_p)
    assert r.Gamma_prime - r.gamma_prime == pytest.approx(2 * gs, rel=1e-12, abs=1e-9 * r.Gamma_prime)
    assert r.gamma_prime >= r.gamma
    assert r.I_prime >= r.I * (1 - 1e-12)
    assert 0 < r.I <= 1 and r.I_prime <= 1
    assert r.C_star <= r.C
    assert r.C_star / r.C == pytest.approx(r.gamma / (r.gamma + 0.61 * gs), rel=1e-12)


@given(rate, rate, rate)
def test_indistinguishability_monotone_in_purcell(gr, gnr, gs):
    ion = IonParams(gr, gnr, gs)
    I = [derive_rates(ion, purcell_override=f).I_prime for f in np.geomspace(1e-2, 1e7, 40)]
    assert np.all(np.diff(I) >= -1e-12)


@given(rate, rate)
def test_effective_cooperativity_equality_only_without_dephasing(C, gamma):
    assert effective_cooperativity(C, gamma, 0.0) == C
    assert effective_cooperativity(C, gamma, gamma) < C
