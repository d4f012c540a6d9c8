"""Re-estimate the dephasing coefficients of the analytic exchange-gate model from
simulated fidelity peaks without monitoring."""
import argparse

from er_repeater import lindblad as lb


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--ratios", default="0.5,1,2.3,4,6", help="gamma*/gamma values")
    p.add_argument("--cooperativity", type=float, default=9e4)
    p.add_argument("--convention", default="rate", choices=lb.DEPHASING_CONVENTIONS)
    p.add_argument("--jobs", type=int, default=1)
    a = p.parse_args()

    model = lb.ExchangeGateModel(cooperativity=a.cooperativity, dephasing_convention=a.convention)
    ratios = [float(x) for x in a.ratios.split(",")]
    (c1, c2), records = lb.refit_dephasing_coefficients(model, ratios, jobs=a.jobs)
    for r in records:
        print(f"gamma*/gamma={r.gamma_star_over_gamma:5.2f}  delta*={r.delta_over_kappa:7.2f} kappa  "
              f"F={r.fidelity:.5f}")
    print(f"c1={c1:.4f}  c2={c2:.4f}")


if __name__ == "__main__":
    main()
