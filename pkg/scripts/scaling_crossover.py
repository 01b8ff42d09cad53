"""Log-log slopes of W_pm and |dW| against the loop period in both regimes.

Usage: python3 scripts/scaling_crossover.py [--out results/]
"""
import argparse
import math

import numpy as np

from dape_sim.checks import scaling_periods
from dape_sim.sweep import Axis, SweepSpec, fit_scaling, run_sweep, write_outputs


def scan(gamma, lo, hi, name, n=20):
    spec = SweepSpec(
        model="tls",
        base={"omega": 1.0, "theta": math.pi / 4, "delta": 0.1, "gamma": gamma},
        axes=(Axis("period", tuple(scaling_periods(lo, hi, n))),),
        evaluators=("dape", "dape-limits", "bloch-exact"),
        name=name,
    )
    return spec, run_sweep(spec)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    for gamma, lo, hi, name in ((1e-5, 1e2, 1e4, "unitary"), (1e-3, 1e4, 1e6, "dissipative")):
        spec, table = scan(gamma, lo, hi, name)
        write_outputs(spec, table, args.out)
        gt = table.column("gamma_t")
        print(f"{name}: gamma T in [{gt.min():.3g}, {gt.max():.3g}]")
        for col in ("dape_w_pm", "dape_dw", "bloch_dw"):
            slope, err = fit_scaling(table, col, "period")
            print(f"  {col:12s} slope {slope:+.3f} +- {err:.3f}")
        ratio = np.abs(table.column("dape_dw") / table.column("bloch_dw") - 1).max()
        print(f"  max |dape/bloch - 1| = {ratio:.1e}")


if __name__ == "__main__":
    main()
