"""Compare sampled distribution times with the closed-form waiting-time estimate."""
import argparse

from er_repeater import chain as ch
from er_repeater import scenarios as sc
from er_repeater.params import load_preset


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--L", type=float, default=300.0, help="total distance in km")
    p.add_argument("--m", default="2,4,8,16")
    p.add_argument("--purcell", type=float, default=5000.0)
    p.add_argument("--p-s", type=float, default=1.0, help="swap success probability")
    p.add_argument("--mode", default="parallel", choices=ch.SCHEDULING_MODES)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    a = p.parse_args()

    preset = load_preset()
    gate = sc.dipole_gate(preset)
    gate = sc.GateChoice(ch.ExchangePostselected(a.p_s, gate.F_gate), gate.F_gate)
    print("m   p_en        analytic_s    mc_mean_s     mc_se_s     rel_dev")
    for m in (int(x) for x in a.m.split(",")):
        cfg = sc.chain_config(preset, gate, a.purcell, a.L, m, mode=a.mode)
        mean, se = ch.monte_carlo_time(cfg, a.trials, a.seed, a.jobs)
        ref = ch.avg_time(cfg)
        print(f"{m:<3d} {cfg.p_en:.4e}  {ref:.5e}  {mean:.5e}  {se:.3e}  {mean / ref - 1:+.4f}")


if __name__ == "__main__":
    main()
