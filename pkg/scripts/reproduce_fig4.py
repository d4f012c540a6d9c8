"""Exchange-gate fidelity versus cavity detuning for several monitoring efficiencies."""
import argparse
import csv

import numpy as np

from er_repeater import lindblad as lb


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--p-eta-d", default="0,0.25,0.5,0.75,1")
    p.add_argument("--delta-min", type=float, default=5.0)
    p.add_argument("--delta-max", type=float, default=400.0)
    p.add_argument("--points", type=int, default=30)
    p.add_argument("--delta-eg", type=float, default=6.25, help="ground splitting in units of kappa")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="fig4.csv")
    a = p.parse_args()

    model = lb.ExchangeGateModel(delta_eg_over_kappa=a.delta_eg)
    peds = [float(x) for x in a.p_eta_d.split(",")]
    grid = np.geomspace(a.delta_min, a.delta_max, a.points)
    res = lb.sweep_and_optimize(model, grid, peds, jobs=a.jobs)
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p_eta_d", "delta_over_kappa", "fidelity", "p_gate", "p_gate_excited", "T_gate_kappa"])
        for ped, curve in res.curves.items():
            for pt in curve:
                w.writerow([ped, pt.delta_over_kappa, pt.fidelity, pt.p_gate, pt.p_gate_excited, pt.gate_time])
    for ped, best in res.optima.items():
        print(f"p_eta_d={ped:.2f}  delta*={best.delta_over_kappa:7.2f} kappa  F={best.fidelity:.5f}  "
              f"p_gate(excited)={best.p_gate_excited:.4f}")


if __name__ == "__main__":
    main()
