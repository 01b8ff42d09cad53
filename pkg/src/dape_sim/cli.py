"""Command-line entry point: ``dape-sim {sweep, feasibility, verify}``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from .errors import DapeError, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_EVALUATOR = 0, 1, 2


def _cmd_sweep(args) -> int:
    from .sweep import SweepSpec, run_sweep, with_overrides, write_outputs

    spec = SweepSpec.from_yaml(args.config)
    evaluators = [e for e in args.evaluators.split(",") if e] if args.evaluators is not None else None
    spec = with_overrides(spec, evaluators=evaluators, seed=args.seed)
    table = run_sweep(spec, threads=args.threads)
    csv_path, man_path = write_outputs(spec, table, args.out, threads=args.threads)
    print(f"wrote {csv_path} ({len(table)} rows) and {man_path}")
    if table.n_errors:
        print(f"{table.n_errors} row(s) had evaluator failures; see the error column", file=sys.stderr)
        return EXIT_EVALUATOR
    return EXIT_OK


def _cmd_feasibility(args) -> int:
    from .tls import feasibility_estimate

    for name in ("omega_hz", "gamma_hz", "period"):
        if not getattr(args, name) > 0:
            raise ValidationError(f"--{name.replace('_', '-')} must be positive")
    if args.ensemble < 1:
        raise ValidationError("--ensemble must be at least 1")
    rep = feasibility_estimate(args.omega_hz, args.gamma_hz, args.theta, args.delta, args.period, args.ensemble)
    if args.json:
        print(json.dumps(rep.as_dict(), indent=2))
        return EXIT_OK
    print(f"regime               {rep.regime} (gamma T = {rep.gamma_t:.3g}, eps = {rep.epsilon:.3g})")
    print(f"thermodynamic length {rep.length:.4g}")
    print(f"Berry phase diff     {rep.berry_phase:.4g} rad")
    print(f"dW_u / h             {rep.unitary_hz:.4g} Hz (fringe envelope {rep.unitary_amplitude_hz:.4g} Hz)")
    print(f"dW_d / h             {rep.dissipative_hz:.4g} Hz")
    print(f"finite-gamma dW / h  {rep.perturbative_hz:.4g} Hz")
    print(f"ensemble x{rep.ensemble:<10d} {rep.ensemble_unitary_hz:.4g} Hz (unitary), {rep.ensemble_dissipative_hz:.4g} Hz (dissipative)")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .checks import run_all

    selected = {int(x) for x in args.only.split(",")} if args.only else None
    results = run_all(selected)
    for r in results:
        print(r.line(), flush=True)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed" + (f"; failed: {failed}" if failed else ""))
    return EXIT_EVALUATOR if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dape-sim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="run a parameter sweep from a YAML config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory for CSV and manifest")
    s.add_argument("--evaluators", default=None, help="comma list overriding the config (ode,dape,dape-limits,bloch-exact)")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=_cmd_sweep)

    f = sub.add_parser("feasibility", help="chiral work signal for lab parameters (frequencies in Hz)")
    f.add_argument("--omega-hz", type=float, default=1e3)
    f.add_argument("--gamma-hz", type=float, default=1.0)
    f.add_argument("--theta", type=float, default=math.pi / 4)
    f.add_argument("--delta", type=float, default=0.1)
    f.add_argument("--period", type=float, default=0.01, help="loop period in seconds")
    f.add_argument("--ensemble", type=int, default=1)
    f.add_argument("--json", action="store_true")
    f.set_defaults(func=_cmd_feasibility)

    v = sub.add_parser("verify", help="run the acceptance checks; nonzero exit on any failure")
    v.add_argument("--only", default=None, help="comma list of check numbers")
    v.set_defaults(func=_cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR


if __name__ == "__main__":
    sys.exit(main())
