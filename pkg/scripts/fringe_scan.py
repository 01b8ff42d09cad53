"""Unitary-regime fringes of the chiral work difference versus the period.

Scans omega T over a few fringes with the Bloch ODE, the finite-gamma formula
and its unitary limit, then locates the zero crossings. Writes a CSV.

Usage: python3 scripts/fringe_scan.py [--k0 400] [--fringes 6] [--out fringes.csv]
"""
import argparse
import csv
import math

import numpy as np
from scipy import optimize

from dape_sim.tls import TlsParams, bloch_chiral_numeric, tls_chiral_exact_dape, tls_chiral_unitary


def params(T, gamma):
    return TlsParams(omega=1.0, theta=math.pi / 4, period=T, gamma=gamma, delta=0.1, min_gap_ratio=1.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k0", type=int, default=400)
    ap.add_argument("--fringes", type=int, default=6)
    ap.add_argument("--gamma", type=float, default=1e-6)
    ap.add_argument("--points", type=int, default=24, help="samples per fringe")
    ap.add_argument("--out", default="fringes.csv")
    args = ap.parse_args()

    ts = np.linspace(args.k0 * math.pi, (args.k0 + args.fringes) * math.pi, args.fringes * args.points + 1)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["period", "omega_T_over_pi", "dw_ode", "dw_formula", "dw_unitary_limit"])
        for T in ts:
            p = params(T, args.gamma)
            w.writerow([repr(T), repr(T / math.pi), repr(bloch_chiral_numeric(p)), repr(tls_chiral_exact_dape(p)), repr(tls_chiral_unitary(p))])
    print(f"wrote {args.out}")

    f = lambda T: bloch_chiral_numeric(params(T, args.gamma), tol=1e-11)
    roots = [optimize.brentq(f, (k - 0.25) * math.pi, (k + 0.25) * math.pi, xtol=1e-10) for k in range(args.k0 + 1, args.k0 + args.fringes)]
    for k, r in zip(range(args.k0 + 1, args.k0 + args.fringes), roots):
        print(f"zero near omega T = {k} pi: offset {(r - k * math.pi) / math.pi:+.2e} fringe spacings")


if __name__ == "__main__":
    main()
