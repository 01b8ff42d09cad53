"""Chiral work signal for an NMR-like spin: 1 kHz gap, 1 Hz dephasing.

Prints the per-spin and ensemble signal over a range of loop periods.

Usage: python3 scripts/nmr_feasibility.py [--ensemble 1000]
"""
import argparse
import math

import numpy as np

from dape_sim.tls import feasibility_estimate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--omega-hz", type=float, default=1e3)
    ap.add_argument("--gamma-hz", type=float, default=1.0)
    ap.add_argument("--theta", type=float, default=math.pi / 4)
    ap.add_argument("--delta", type=float, default=0.1)
    ap.add_argument("--ensemble", type=int, default=1000)
    args = ap.parse_args()
    print(f"{'T [s]':>8} {'regime':>11} {'L':>8} {'dW_u/h env [Hz]':>16} {'dW_d/h [Hz]':>12} {'finite-gamma [Hz]':>18} {'ensemble [Hz]':>14}")
    for T in np.geomspace(1e-3, 10.0, 9):
        r = feasibility_estimate(args.omega_hz, args.gamma_hz, args.theta, args.delta, float(T), args.ensemble)
        ens = r.ensemble_unitary_hz if r.regime == "unitary" else r.ensemble_dissipative_hz
        print(f"{T:8.3g} {r.regime:>11} {r.length:8.4f} {r.unitary_amplitude_hz:16.4g} {r.dissipative_hz:12.3g} {r.perturbative_hz:18.3g} {ens:14.4g}")


if __name__ == "__main__":
    main()
