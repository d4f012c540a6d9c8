"""Command-line front end: named scenarios that write CSV tables plus a JSON run manifest.

Exit status is 0 on success, 2 when a model was evaluated outside its validity
range (results are still written), and 1 on any error (nothing is written).
"""
from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import sys
import warnings
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import analytic as an
from . import chain as ch
from . import lindblad as lb
from . import scenarios as sc
from .params import (TWO_PI, UNIT_FACTORS, ParameterError, load_preset, params_to_dict,
                     preset_from_dict, quantity)

WARNING_TYPES = (an.ValidityWarning, lb.TruncationWarning, lb.BoundaryOptimumWarning)


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return "%.9g" % v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


class Table:
    def __init__(self, name, columns, rows, meta=None):
        self.name = name
        self.columns = list(columns)
        self.rows = [list(r) for r in rows]
        self.meta = dict(meta or {})

    def render(self) -> str:
        buf = io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([fmt(v) for v in r])
        return buf.getvalue()


class Context:
    def __init__(self, args, preset, source):
        self.args = args
        self.preset = preset
        self.source = source
        self.summary = {}
        self.extra_files = {}

    @property
    def jobs(self):
        return self.args.jobs

    def meta(self, **kw):
        out = {"tool": f"er-repeater {__version__}", "preset": self.preset.name,
               "preset_sha256": self.preset.sha256()}
        out.update(kw)
        return out


# ---------------------------------------------------------------------------
# overrides

def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``section.key=value`` (or top-level ``key=value``) overrides to a preset document."""
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise CliError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        parts = key.split(".")
        target = doc
        for p in parts[:-1]:
            if not isinstance(target.get(p), dict):
                raise CliError(f"unknown parameter key {key!r}")
            target = target[p]
        leaf = parts[-1]
        if leaf not in target and not (parts[0] == "cavity" and leaf in ("g", "kappa", "delta")):
            raise CliError(f"unknown parameter key {key!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        old = target.get(leaf)
        if isinstance(old, dict) and "unit" in old and not isinstance(value, dict):
            # keep the documented unit; strings such as 2pi*20 are parsed first
            if isinstance(value, str):
                num, _, unit = value.strip().partition(" ")
                if unit.strip() in UNIT_FACTORS:
                    value = quantity({"value": float(num), "unit": unit.strip()})
                else:
                    value = quantity(value)
                value /= UNIT_FACTORS[old["unit"]]
            value = {"value": value, "unit": old["unit"]}
        target[leaf] = value
    return doc


# ---------------------------------------------------------------------------
# scenario handlers; each returns a list of Tables and fills ctx.summary

def cmd_derive_params(ctx, a):
    rates = ctx.preset.rates(a.purcell)
    d = asdict(rates)
    ctx.summary = {"ion": params_to_dict(ctx.preset.ion), "cavity": params_to_dict(ctx.preset.cavity),
                   "derived": d, "lifetime_s": 1.0 / rates.gamma_prime}
    rows = [(k, v) for k, v in d.items()] + [("lifetime_s", 1.0 / rates.gamma_prime)]
    return [Table("derived_params.csv", ("quantity", "value"), rows,
                  ctx.meta(units="rates in rad/s", purcell=rates.F_p))]


def cmd_fig3(ctx, a):
    ion = ctx.preset.ion
    F_p = np.geomspace(a.fp_min, a.fp_max, a.points)
    rows = []
    for f in F_p:
        rates = ctx.preset.rates(float(f))
        res = an.entangle_fidelity(rates, a.delta_w * TWO_PI)
        rows.append((f, res.fidelity, res.M_prime, res.I_prime, rates.gamma_prime))
    ref = an.entangle_fidelity(ctx.preset.rates(), a.delta_w * TWO_PI).fidelity
    ctx.summary = {"F_entangle_at_preset_purcell": ref, "gamma_star": ion.gamma_star}
    return [Table("fig3.csv", ("F_p", "F_entangle", "M_prime", "I_prime", "gamma_prime"), rows,
                  ctx.meta(units="gamma_prime in rad/s"))]


def _fig4_models(ctx, a):
    base = sc.exchange_model(ctx.preset)
    if a.convention:
        base = replace(base, dephasing_convention=a.convention)
    if a.input != "uniform":
        base = replace(base, input_state=a.input)
    models = [base]
    if a.small_deleg:
        models.append(replace(base, delta_eg_over_kappa=1.0 / 50.0))
    return models


def _checkpoint_key(model, grid, peds):
    blob = json.dumps({"model": model.to_dict(), "grid": [fmt(g) for g in grid],
                       "p_eta_d": [fmt(p) for p in peds]}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def cmd_fig4(ctx, a):
    peds = [float(x) for x in a.p_eta_d.split(",")]
    if any(not 0 <= p <= 1 for p in peds):
        raise CliError("--p-eta-d values must lie in [0, 1]")
    grid = [float(x) for x in np.geomspace(a.delta_min, a.delta_max, a.points)]
    out = Path(a.out)
    curve_rows, opt_rows, opt_summary = [], [], []
    for model in _fig4_models(ctx, a):
        ckpt = out / f"fig4_checkpoint_{model.delta_eg_over_kappa:g}.json"
        key = _checkpoint_key(model, grid, peds)
        done = {}
        if a.resume and ckpt.exists():
            state = json.loads(ckpt.read_text())
            if state.get("key") == key:
                done = {(p[0], p[1]): lb.SweepPoint(*p) for p in state["points"]}
        todo = [(d, p) for p in peds for d in grid if (d, p) not in done]
        batch = max(1, a.checkpoint_every)
        for i in range(0, len(todo), batch):
            for pt in lb.map_points(model, todo[i:i + batch], ctx.jobs):
                done[(pt.delta_over_kappa, pt.p_eta_d)] = pt
            out.mkdir(parents=True, exist_ok=True)
            ckpt.write_text(json.dumps({"key": key, "model": model.to_dict(),
                                        "points": [list(asdict(p).values()) for p in done.values()]}))
        res = lb.sweep_and_optimize(model, grid, peds, refine=not a.no_refine, jobs=ctx.jobs,
                                    precomputed=done)
        for p in peds:
            for pt in res.curves[p]:
                curve_rows.append((model.delta_eg_over_kappa, pt.delta_over_kappa, p, pt.fidelity,
                                   pt.p_gate, pt.p_gate_excited, pt.gate_time))
            o = res.optima[p]
            opt_rows.append((model.delta_eg_over_kappa, p, o.delta_over_kappa, o.fidelity, o.p_gate,
                             o.p_gate_excited, o.gate_time))
            opt_summary.append({"delta_eg_over_kappa": model.delta_eg_over_kappa, "p_eta_d": p,
                                "delta_over_kappa": o.delta_over_kappa, "fidelity": o.fidelity,
                                "p_gate": o.p_gate, "p_gate_excited": o.p_gate_excited,
                                "gate_time": o.gate_time})
    ctx.summary = {"optima": opt_summary, "model": _fig4_models(ctx, a)[0].to_dict()}
    meta = ctx.meta(kappa_rad_per_s=_fig4_models(ctx, a)[0].kappa,
                    convention=_fig4_models(ctx, a)[0].dephasing_convention)
    return [
        Table("fig4.csv", ("delta_eg_over_kappa", "delta_over_kappa", "p_eta_d", "fidelity", "p_gate",
                           "p_gate_excited", "gate_time_s"), curve_rows, meta),
        Table("fig4_optima.csv", ("delta_eg_over_kappa", "p_eta_d", "delta_over_kappa", "fidelity",
                                  "p_gate", "p_gate_excited", "gate_time_s"), opt_rows, meta),
    ]


def cmd_simulate_gate(ctx, a):
    model = sc.exchange_model(ctx.preset)
    if a.convention:
        model = replace(model, dephasing_convention=a.convention)
    res = model.simulate(a.delta, a.p_eta_d_single, input_state=a.input)
    ctx.summary = {"fidelity": res.fidelity, "p_gate": res.p_gate, "p_gate_excited": res.p_gate_excited,
                   "gate_time": res.T_gate, "truncation_population": res.truncation_population,
                   "params": res.params}
    return [Table("simulate_gate.csv",
                  ("delta_over_kappa", "p_eta_d", "fidelity", "p_gate", "p_gate_excited", "gate_time_s"),
                  [(a.delta, a.p_eta_d_single, res.fidelity, res.p_gate, res.p_gate_excited, res.T_gate)],
                  ctx.meta(input=a.input, convention=model.dephasing_convention))]


def cmd_fig5_dipole(ctx, a):
    P = ctx.preset
    dp = P.section("dipole")
    ratio = dp.get("delta_nu_err_ratio", 0.0)
    rows = []
    for r_nm in np.linspace(a.r_min, a.r_max, a.points):
        r = r_nm * 1e-9
        dnu_ref = float(an.shift_at_distance(r, dp["delta_nu_ref"], dp["r_ref"]))
        formula = abs(an.electric_dipole_shift(sc.dipole_pair(P, r)))
        F, T = an.dipole_gate_fidelity(P.ion, dnu_ref, ratio * dnu_ref)
        rows.append((r_nm, dnu_ref, formula, F, T))
    F0, T0 = an.dipole_gate_fidelity(P.ion, dp["delta_nu_ref"], ratio * dp["delta_nu_ref"])
    ctx.summary = {"reference_fidelity": F0, "reference_gate_time": T0}
    return [Table("fig5_dipole.csv", ("r_nm", "delta_nu_hz", "delta_nu_formula_hz", "fidelity", "gate_time_s"),
                  rows, ctx.meta(scaling="1/r^3 from the reference shift"))]


def cmd_readout_scan(ctx, a):
    P = ctx.preset
    rates = P.rates(a.purcell)
    ro = P.section("readout")
    T_p = np.linspace(a.tp_min * 1e-6, a.tp_max * 1e-6, a.points)
    rows = an.readout_scan(a.t_total * 1e-6, T_p, rates.gamma_prime, ro.get("xi", 1e-5),
                           ro.get("p_eta_d", 0.9))
    cfg = sc.readout_config(P, a.purcell, ro.get("T_p"))
    ref = an.readout_fidelity(cfg, rates.gamma_prime)
    ctx.summary = {"reference_fidelity": ref.fidelity, "reference_T_readout": ref.T_readout}
    return [Table("readout_scan.csv", ("T_p_s", "N", "fidelity"), rows,
                  ctx.meta(T_total_s=a.t_total * 1e-6, purcell=rates.F_p))]


def _gates(ctx, a):
    P = ctx.preset
    c = P.section("chain")
    hi, lo = c.get("high_purcell", 4.5e5), c.get("low_purcell", 5e3)
    gates = {
        "A": (sc.postselected_gate(P, hi), hi),
        "B": (sc.dipole_gate(P), lo),
        "C": (sc.deterministic_gate(P, hi), hi),
    }
    if a.er_eu_gate is not None:
        gates["D"] = (sc.GateChoice(ch.ErEuHybrid(a.er_eu_gate), a.er_eu_gate), hi)
    return gates


def cmd_fig6(ctx, a):
    rows = []
    gates = _gates(ctx, a)
    for label, (gate, F_p) in gates.items():
        for m in sc.nested_m_values(a.max_m):
            cfg = sc.chain_config(ctx.preset, gate, F_p, a.L, m)
            rows.append((label, gate.scheme.kind, F_p, m, ch.end_to_end_fidelity(cfg), gate.F_gate,
                         gate.scheme.p_gate))
    ctx.summary = {k: {"F_gate": g.F_gate, "p_gate": g.scheme.p_gate, "F_p": F_p}
                   for k, (g, F_p) in gates.items()}
    return [Table("fig6.csv", ("curve", "scheme", "F_p", "m", "fidelity", "F_gate", "p_gate"), rows,
                  ctx.meta(note="product of step fidelities; estimate valid near unit fidelity"))]


def cmd_fig7(ctx, a):
    P = ctx.preset
    c = P.section("chain")
    src = c.get("source_rate", 1e9)
    L_att = P.section("link").get("L_att", 22.0)
    gates = _gates(ctx, a)
    gate, _ = gates[a.curve]
    F_p = a.purcell or c.get("low_purcell", 5e3)
    ms = [int(x) for x in a.m.split(",")]
    rows, cross = [], {}
    for m in ms:
        f = sc.repeater_rate_fn(P, gate, F_p, m, include_T_init=True, mode=a.mode)
        for L in np.linspace(a.L_min, a.L_max, a.points):
            rows.append((L, m, f(L), ch.direct_transmission_rate(L, src, L_att)))
        cross[m] = ch.find_crossover(f, max(a.L_min, 1.0), a.L_max, src, L_att)
    ctx.summary = {"crossover_km": cross, "curve": a.curve, "F_p": F_p}
    return [Table("fig7.csv", ("L_km", "m", "repeater_rate_hz", "direct_rate_hz"), rows,
                  ctx.meta(curve=a.curve, mode=a.mode, F_p=F_p))]


def cmd_mc_rate(ctx, a):
    P = ctx.preset
    gate, F_p = _gates(ctx, a)[a.curve]
    rows = []
    for m in [int(x) for x in a.m.split(",")]:
        cfg = sc.chain_config(P, gate, F_p, a.L, m, a.mode, include_T_init=a.include_t_init)
        if a.p_s is not None:
            cfg = replace(cfg, scheme=replace(cfg.scheme, p_gate=a.p_s))
        mean, se = ch.monte_carlo_time(cfg, a.trials, a.seed, ctx.jobs)
        rows.append((m, a.mode, cfg.p_en, cfg.p_s, ch.avg_time(cfg), mean, se))
    ctx.summary = {"rows": [dict(zip(("m", "mode", "p_en", "p_s", "analytic_s", "mc_mean_s", "mc_se_s"), r))
                            for r in rows]}
    return [Table("mc_rate.csv", ("m", "mode", "p_en", "p_s", "analytic_s", "mc_mean_s", "mc_se_s"), rows,
                  ctx.meta(seed=a.seed, trials=a.trials, L_km=a.L))]


# ---------------------------------------------------------------------------
# batch evaluation over CSV tables

def _preset_ion(P, row):
    kw = {}
    for name in ("gamma_r", "gamma_nr", "gamma_star", "chi", "beta"):
        if name in row and row[name] != "":
            kw[name] = quantity(row[name])
    return replace(P.ion, **kw)


def _num(row, key, default=None):
    v = row.get(key, "")
    if v == "" or v is None:
        if default is None:
            raise ValueError(f"missing value for {key!r}")
        return default
    return quantity(v)


def _op_dipole(P, row):
    dnu = _num(row, "delta_nu_hz")
    F, T = an.dipole_gate_fidelity(_preset_ion(P, row), dnu, _num(row, "delta_nu_err_hz", 0.0),
                                   _num(row, "purcell_off_resonant", 0.0))
    return {"fidelity": F, "gate_time_s": T}


def _rates_row(P, row):
    ion = _preset_ion(P, row)
    from .params import derive_rates
    return derive_rates(ion, purcell_override=_num(row, "purcell", P.purcell)), ion


def _op_entangle(P, row):
    rates, _ = _rates_row(P, row)
    res = an.entangle_fidelity(rates, _num(row, "delta_w", 0.0))
    return {"fidelity": res.fidelity, "M_prime": res.M_prime, "I_prime": res.I_prime,
            "gamma_prime": rates.gamma_prime}


def _op_init(P, row):
    rates, ion = _rates_row(P, row)
    T = _num(row, "T_init_s", _num(row, "T_init_lifetimes", 8.0) / rates.gamma_prime)
    return {"fidelity": an.init_fidelity(rates, ion.beta, T), "T_init_s": T}


def _op_readout(P, row):
    rates, _ = _rates_row(P, row)
    ro = P.section("readout")
    cfg = an.ReadoutConfig(int(_num(row, "N", ro.get("N", 7))), _num(row, "T_p_s", ro.get("T_p")),
                           _num(row, "xi", ro.get("xi", 1e-5)), _num(row, "p_eta_d", ro.get("p_eta_d", 0.9)))
    res = an.readout_fidelity(cfg, rates.gamma_prime, row.get("mode") or "pulse-train")
    return {"fidelity": res.fidelity, "T_readout_s": res.T_readout}


def _op_efficiency(P, row):
    rates, _ = _rates_row(P, row)
    link = P.section("link")
    lp = an.LinkParams(L0=_num(row, "L0_km"), L_att=_num(row, "L_att", link.get("L_att", 22.0)),
                       eta_c=_num(row, "eta_c", link.get("eta_c", 1.0)),
                       eta_d=_num(row, "eta_d", link.get("eta_d", 1.0)))
    e = an.entangle_efficiency(rates, lp)
    return {"p": e.p, "eta_t": e.eta_t, "eta": e.eta, "p_en": e.p_en}


def _op_exchange(P, row):
    C = _num(row, "C")
    ratio = _num(row, "gamma_star_over_gamma", 0.0)
    kappa, gamma = 1.0, 1.0
    opt = an.exchange_gate_optimum(C, kappa, gamma, ratio * gamma)
    out = {"C_star": opt.C_star, "delta_opt_over_kappa": opt.delta_opt / kappa, "F_max": opt.F_max,
           "T0_over_gamma": opt.T0 * gamma}
    if row.get("delta_over_kappa"):
        res = an.exchange_gate_analytic(C, kappa, _num(row, "delta_over_kappa") * kappa, gamma,
                                        ratio * gamma, warn=False)
        out.update(fidelity=res.fidelity, T_gate_over_gamma=res.T_gate * gamma)
    return out


def _op_electric_shift(P, row):
    r = _num(row, "r_nm") * 1e-9
    pair = sc.dipole_pair(P, r, row.get("geometry") or "broadside")
    if row.get("delta_mu") or row.get("epsilon"):
        pair = replace(pair, delta_mu_i=_num(row, "delta_mu", pair.delta_mu_i),
                       delta_mu_j=_num(row, "delta_mu", pair.delta_mu_j),
                       epsilon=_num(row, "epsilon", pair.epsilon))
    return {"delta_nu_hz": an.electric_dipole_shift(pair)}


EVAL_OPS = {
    "dipole": (_op_dipole, ("delta_nu_hz",)),
    "entangle": (_op_entangle, ()),
    "init": (_op_init, ()),
    "readout": (_op_readout, ()),
    "efficiency": (_op_efficiency, ("L0_km",)),
    "exchange": (_op_exchange, ("C",)),
    "electric-shift": (_op_electric_shift, ("r_nm",)),
}


def eval_table(text: str, op: str, preset, report=None):
    """Evaluate ``op`` on every row of a CSV table. Returns (columns, rows, errors)."""
    if op not in EVAL_OPS:
        raise CliError(f"unknown operation {op!r}; choose from {sorted(EVAL_OPS)}")
    fn, required = EVAL_OPS[op]
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    if not any(ln.strip() for ln in lines):
        return [], [], []
    reader = csv.DictReader(lines)
    header = list(reader.fieldnames or [])
    missing = [c for c in required if c not in header]
    if missing:
        raise CliError(f"missing required column(s): {', '.join(missing)}")
    rows, errors, extra = [], [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            if None in row:
                raise ValueError("too many fields")
            if any(row.get(c) in (None, "") for c in required):
                raise ValueError("missing required value")
            with warnings.catch_warnings():
                warnings.simplefilter("error", an.ValidityWarning)
                res = fn(preset, row)
        except (ValueError, ParameterError, ZeroDivisionError) as exc:
            errors.append((lineno, str(exc)))
            if report:
                report(f"line {lineno}: {exc}")
            continue
        for k in res:
            if k not in extra:
                extra.append(k)
        rows.append((row, res))
    cols = header + [c for c in extra if c not in header]
    out = [[r.get(c, res.get(c, "")) if c in header else res.get(c, "") for c in cols] for r, res in rows]
    return cols, out, errors


def cmd_eval(ctx, a):
    try:
        text = Path(a.input).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {a.input}: {exc}")
    cols, rows, errors = eval_table(text, a.operation, ctx.preset,
                                    report=lambda m: print(m, file=sys.stderr))
    conv = [[_maybe_float(v) for v in r] for r in rows]
    ctx.summary = {"operation": a.operation, "rows": len(rows),
                   "errors": [{"line": ln, "message": msg} for ln, msg in errors]}
    name = a.output or f"eval_{a.operation}.csv"
    return [Table(name, cols, conv, ctx.meta(operation=a.operation, skipped=len(errors)))]


def _maybe_float(v):
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return v
    return v


# ---------------------------------------------------------------------------
# wiring

SCENARIOS = {
    "derive-params": cmd_derive_params,
    "eval": cmd_eval,
    "simulate-gate": cmd_simulate_gate,
    "fig3": cmd_fig3,
    "fig4": cmd_fig4,
    "fig5-dipole": cmd_fig5_dipole,
    "readout-scan": cmd_readout_scan,
    "fig6": cmd_fig6,
    "fig7": cmd_fig7,
    "mc-rate": cmd_mc_rate,
}


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--preset", help="parameter preset JSON (default: bundled Er:YSO)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    common.add_argument("--trials", type=int, default=100_000)
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a preset entry, e.g. link.eta_d=0.8 or ion.gamma_star=2pi*20")
    common.add_argument("--quiet", action="store_true")

    p = _Parser(prog="er-repeater", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("derive-params", parents=[common], help="Purcell-derived rates")
    s.add_argument("--purcell", type=float)

    s = sub.add_parser("eval", parents=[common], help="evaluate a model over a CSV table")
    s.add_argument("operation", help=", ".join(sorted(EVAL_OPS)))
    s.add_argument("--input", required=True)
    s.add_argument("--output")

    s = sub.add_parser("simulate-gate", parents=[common], help="one exchange-gate simulation")
    s.add_argument("--delta", type=float, default=95.0, help="cavity detuning in units of kappa")
    s.add_argument("--p-eta-d", dest="p_eta_d_single", type=float, default=0.0)
    s.add_argument("--input", default="uniform", choices=("uniform", "average16"))
    s.add_argument("--convention", choices=lb.DEPHASING_CONVENTIONS)

    s = sub.add_parser("fig3", parents=[common], help="entanglement fidelity versus Purcell factor")
    s.add_argument("--fp-min", type=float, default=10.0)
    s.add_argument("--fp-max", type=float, default=1e6)
    s.add_argument("--points", type=int, default=101)
    s.add_argument("--delta-w", type=float, default=0.0, help="ion-ion detuning in Hz")

    s = sub.add_parser("fig4", parents=[common], help="exchange-gate fidelity versus cavity detuning")
    s.add_argument("--p-eta-d", default="0,0.25,0.5,0.75,1")
    s.add_argument("--delta-min", type=float, default=5.0)
    s.add_argument("--delta-max", type=float, default=400.0)
    s.add_argument("--points", type=int, default=30)
    s.add_argument("--small-deleg", action="store_true", help="add curves with delta_eg = kappa/50")
    s.add_argument("--convention", choices=lb.DEPHASING_CONVENTIONS)
    s.add_argument("--input", default="uniform", choices=("uniform", "average16"))
    s.add_argument("--no-refine", action="store_true")
    s.add_argument("--resume", action="store_true", help="reuse points from a matching checkpoint")
    s.add_argument("--checkpoint-every", type=int, default=10)

    s = sub.add_parser("fig5-dipole", parents=[common], help="dipole-gate fidelity versus ion distance")
    s.add_argument("--r-min", type=float, default=1.0)
    s.add_argument("--r-max", type=float, default=20.0)
    s.add_argument("--points", type=int, default=39)

    s = sub.add_parser("readout-scan", parents=[common], help="readout fidelity versus pulse period")
    s.add_argument("--t-total", type=float, default=150.0, help="readout window in us")
    s.add_argument("--tp-min", type=float, default=2.0)
    s.add_argument("--tp-max", type=float, default=150.0)
    s.add_argument("--points", type=int, default=297)
    s.add_argument("--purcell", type=float)

    for name, helptext in (("fig6", "end-to-end fidelity versus link count"),
                           ("fig7", "distribution rate versus distance"),
                           ("mc-rate", "Monte Carlo check of the waiting-time formula")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--er-eu-gate", type=float, help="gate fidelity for the hybrid Er-Eu curve")
    sub.choices["fig6"].add_argument("--max-m", type=int, default=64)
    sub.choices["fig6"].add_argument("--L", type=float, default=1000.0)
    f7 = sub.choices["fig7"]
    f7.add_argument("--curve", default="A", choices=("A", "B", "C", "D"))
    f7.add_argument("--purcell", type=float)
    f7.add_argument("--m", default="2,4,8,16")
    f7.add_argument("--mode", default="parallel", choices=ch.SCHEDULING_MODES)
    f7.add_argument("--L-min", type=float, default=0.0)
    f7.add_argument("--L-max", type=float, default=1000.0)
    f7.add_argument("--points", type=int, default=101)
    mc = sub.choices["mc-rate"]
    mc.add_argument("--curve", default="B", choices=("A", "B", "C", "D"))
    mc.add_argument("--L", type=float, default=300.0)
    mc.add_argument("--m", default="2,4,8,16")
    mc.add_argument("--mode", default="parallel", choices=ch.SCHEDULING_MODES)
    mc.add_argument("--p-s", type=float)
    mc.add_argument("--include-t-init", action="store_true")

    s = sub.add_parser("replay", help="re-run the command recorded in a manifest and compare outputs")
    s.add_argument("manifest")
    return p


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _replay(manifest_path) -> int:
    m = json.loads(Path(manifest_path).read_text())
    argv = list(m["argv"])
    tmp = Path(manifest_path).parent / ".replay"
    argv = _replace_out(argv, str(tmp))
    code = main(argv + ["--quiet"])
    if code == 1:
        return 1
    bad = []
    for name, digest in m["outputs"].items():
        path = tmp / name
        if not path.exists() or _sha(path.read_text()) != digest:
            bad.append(name)
    print(json.dumps({"replayed": argv[0], "mismatched": bad}, indent=2))
    return 0 if not bad else 1


def _replace_out(argv, out):
    argv = list(argv)
    if "--out" in argv:
        argv[argv.index("--out") + 1] = out
    else:
        argv += ["--out", out]
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.command is None:
        build_parser().print_help()
        return 1
    if args.command == "replay":
        return _replay(args.manifest)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        base = load_preset(args.preset)
        doc = apply_overrides(base.source, args.overrides)
        preset = preset_from_dict(doc)
        ctx = Context(args, preset, doc)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            tables = SCENARIOS[args.command](ctx, args)
    except (CliError, ParameterError, KeyError, ValueError, OSError, lb.PropagationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    flagged = [str(w.message) for w in caught if issubclass(w.category, WARNING_TYPES)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digests = {}
    for t in tables:
        text = t.render()
        (out / t.name).write_text(text)
        digests[t.name] = _sha(text)
    manifest = {
        "tool": "er-repeater", "version": __version__, "command": args.command,
        "argv": argv, "seed": args.seed, "parameters": doc, "preset_sha256": preset.sha256(),
        "started": started, "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "outputs": digests, "warnings": flagged, "summary": ctx.summary,
    }
    (out / f"{args.command}_manifest.json").write_text(json.dumps(manifest, indent=2, default=_jsonable))
    if not args.quiet:
        print(json.dumps(ctx.summary, indent=2, default=_jsonable))
        for w in flagged:
            print(f"warning: {w}", file=sys.stderr)
    return 2 if flagged else 0


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    return str(o)


def run_scenario(name: str, overrides=(), out="out", args=()) -> int:
    """Programmatic entry point: ``run_scenario("fig3", ["link.eta_d=0.8"], out="results")``."""
    if name not in SCENARIOS:
        print(f"error: unknown scenario {name!r}", file=sys.stderr)
        return 1
    argv = [name, "--out", str(out), *args]
    for o in overrides:
        argv += ["--set", o]
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
