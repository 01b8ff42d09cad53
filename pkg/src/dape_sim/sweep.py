"""Parameter sweeps over the simulator and the analytic expressions.

A sweep is a YAML file naming a model, fixed base parameters, one or more
grid axes and the evaluators to run at each grid point. Grid points are
independent; they may run on a thread pool and are merged back by index, so
serial and parallel runs write identical files.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Any, Optional

import numpy as np
import scipy
import yaml
from scipy import stats

from . import __version__
from .dape import work_decomposition
from .errors import DapeError, InsufficientData, NonPositiveValues, ValidationError
from .geometry import DriveProtocol, SystemSpec
from .master_eq import BathSpec, chiral_difference_numeric, evolve
from .tls import (
    TlsParams,
    spinor_basis,
    tls_analytic_build,
    tls_build,
    tls_chiral_dissipative,
    tls_chiral_exact_bloch,
    tls_chiral_unitary,
    tls_chiral_unitary_amplitude,
    tls_work_exact,
)

MODELS = ("tls", "generator", "analytic-path")
EVALUATORS = ("ode", "dape", "dape-limits", "bloch-exact")
TLS_ONLY = {"dape-limits", "bloch-exact"}
DERIVED_AXES = ("epsilon", "gamma_t")

COLUMN_DOCS = {
    "epsilon": "adiabaticity 2 pi / (omega_min T)",
    "gamma_t": "max dephasing times period",
    "ode_w": "master-equation work W(T), cw",
    "ode_dw": "master-equation W_cw - W_ccw",
    "dape_w": "perturbative W = W_pm + W_pb + W_f",
    "dape_w_pm": "metric work W_pm",
    "dape_w_pb": "Berry work W_pb",
    "dape_w_f": "feedback work W_f",
    "dape_dw": "perturbative chiral work difference",
    "dape_length": "thermodynamic length L",
    "dape_bound": "hbar L^2 / T",
    "dape_phi": "Berry phase difference Phi_10",
    "limits_dw_unitary": "unitary-regime limit of the chiral difference",
    "limits_dw_unitary_env": "fringe envelope of the unitary limit",
    "limits_dw_dissipative": "dissipative-regime limit of the chiral difference",
    "bloch_w": "z-pinned Bloch work W(T), cw",
    "bloch_dw": "chiral difference from the Bloch solution",
    "error": "evaluator failures for this row (empty if none)",
}

EVALUATOR_COLUMNS = {
    "ode": ["ode_w", "ode_dw"],
    "dape": ["dape_w", "dape_w_pm", "dape_w_pb", "dape_w_f", "dape_dw", "dape_length", "dape_bound", "dape_phi"],
    "dape-limits": ["limits_dw_unitary", "limits_dw_unitary_env", "limits_dw_dissipative"],
    "bloch-exact": ["bloch_w", "bloch_dw"],
}


@dataclass(frozen=True)
class Axis:
    name: str
    values: tuple

    @classmethod
    def from_dict(cls, d: dict) -> "Axis":
        if "name" not in d:
            raise ValidationError("every axis needs a name")
        if "values" in d:
            vals = tuple(float(v) for v in d["values"])
        else:
            try:
                start, stop, num = float(d["start"]), float(d["stop"]), int(d["num"])
            except KeyError as exc:
                raise ValidationError(f"axis {d['name']!r} needs values or start/stop/num") from exc
            spacing = d.get("spacing", "linear")
            if spacing == "log":
                if start <= 0 or stop <= 0:
                    raise ValidationError(f"log axis {d['name']!r} needs positive bounds")
                vals = tuple(np.geomspace(start, stop, num).tolist())
            elif spacing == "linear":
                vals = tuple(np.linspace(start, stop, num).tolist())
            else:
                raise ValidationError(f"unknown spacing {spacing!r}")
        if not vals:
            raise ValidationError(f"axis {d['name']!r} is empty")
        return cls(name=str(d["name"]), values=vals)


@dataclass(frozen=True)
class SweepSpec:
    model: str
    base: dict
    axes: tuple
    evaluators: tuple
    seed: int = 0
    tol: float = 1e-9
    min_gap_ratio: float = 1e3
    outputs: Optional[tuple] = None
    name: str = "sweep"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValidationError(f"model must be one of {MODELS}")
        if not self.evaluators:
            raise ValidationError("at least one evaluator is required")
        bad = [e for e in self.evaluators if e not in EVALUATORS]
        if bad:
            raise ValidationError(f"unknown evaluators {bad}")
        if self.model != "tls" and TLS_ONLY & set(self.evaluators):
            raise ValidationError(f"{sorted(TLS_ONLY & set(self.evaluators))} require model 'tls'")
        if not self.axes:
            raise ValidationError("at least one axis is required")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate axis names")
        if self.outputs is not None:
            known = set(self.columns(all_columns=True))
            unknown = [c for c in self.outputs if c not in known]
            if unknown:
                raise ValidationError(f"unknown output columns {unknown}")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        if not isinstance(d, dict):
            raise ValidationError("sweep config must be a mapping")
        try:
            axes = tuple(Axis.from_dict(a) for a in d["axes"])
            return cls(
                model=d["model"],
                base=dict(d.get("base", {})),
                axes=axes,
                evaluators=tuple(d.get("evaluators", ())),
                seed=int(d.get("seed", 0)),
                tol=float(d.get("tol", 1e-9)),
                min_gap_ratio=float(d.get("min_gap_ratio", 1e3)),
                outputs=tuple(d["outputs"]) if d.get("outputs") else None,
                name=str(d.get("name", "sweep")),
            )
        except KeyError as exc:
            raise ValidationError(f"missing config key {exc}") from exc

    @classmethod
    def from_yaml(cls, path) -> "SweepSpec":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["axes"] = [{"name": a.name, "values": list(a.values)} for a in self.axes]
        d["evaluators"] = list(self.evaluators)
        d["outputs"] = list(self.outputs) if self.outputs else None
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=_json_default).encode()
        return hashlib.sha256(blob).hexdigest()

    def grid(self):
        names = [a.name for a in self.axes]
        for combo in product(*(a.values for a in self.axes)):
            yield dict(zip(names, combo))

    def columns(self, all_columns: bool = False) -> list:
        cols = [a.name for a in self.axes]
        cols += [c for c in ("epsilon", "gamma_t") if c not in cols]
        for ev in EVALUATORS if all_columns else self.evaluators:
            cols += EVALUATOR_COLUMNS[ev]
        if not all_columns and self.outputs:
            keep = set(self.outputs) | {a.name for a in self.axes}
            cols = [c for c in cols if c in keep]
        return cols + ["error"]


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


# ---------------------------------------------------------------------------
# model construction
# ---------------------------------------------------------------------------


def _complex_matrix(spec, what):
    if isinstance(spec, dict):
        re = np.asarray(spec.get("real", 0.0), dtype=float)
        im = np.asarray(spec.get("imag", np.zeros_like(re)), dtype=float)
        return re + 1j * im
    return np.asarray(spec, dtype=complex)


def _resolve_point(model: str, base: dict, point: dict) -> dict:
    """Merge grid values into the base, translating epsilon and gamma_t."""
    params = dict(base)
    params.update({k: v for k, v in point.items() if k not in DERIVED_AXES})
    gap = _min_gap(model, params)
    if "epsilon" in point:
        params["period"] = 2 * math.pi / (gap * point["epsilon"])
    if "period" not in params:
        raise ValidationError("period (or an epsilon axis) is required")
    if "gamma_t" in point:
        params["gamma"] = point["gamma_t"] / params["period"]
    return params


def _min_gap(model, params):
    if model in ("tls", "analytic-path"):
        return float(params.get("omega", 1.0))
    e = np.sort(np.asarray(params["energies"], dtype=float))
    return float(np.min(np.diff(e)) / params.get("hbar", 1.0))


_TLS_FIELDS = {"omega", "theta", "period", "gamma", "delta", "gamma_long", "orientation", "hbar"}


def _tls_params(params, min_gap_ratio):
    kw = {k: params[k] for k in _TLS_FIELDS if k in params}
    return TlsParams(min_gap_ratio=min_gap_ratio, **kw)


def spin_loop(theta0: float, modes, winding: int = 1):
    """Closed spin-half path theta(s) = theta0 + sum_k a_k sin(2 pi k s) + b_k (1 - cos(2 pi k s)),
    phi(s) = -2 pi winding s, with s = t / T. Returns (path, velocity) in s units."""
    modes = np.asarray(modes, dtype=float).reshape(-1, 2)
    ks = np.arange(1, len(modes) + 1)

    def path(s):
        x = 2 * np.pi * ks * s
        th = theta0 + np.sum(modes[:, 0] * np.sin(x) + modes[:, 1] * (1 - np.cos(x)))
        return np.array([th, -2 * np.pi * winding * s])

    def velocity(s):
        x = 2 * np.pi * ks * s
        dth = np.sum(2 * np.pi * ks * (modes[:, 0] * np.cos(x) + modes[:, 1] * np.sin(x)))
        return np.array([dth, -2 * np.pi * winding])

    return path, velocity


def build_model(spec: SweepSpec, params: dict):
    """(system, bath, protocol, tls_params or None) for one grid point."""
    ratio = spec.min_gap_ratio
    if spec.model == "tls":
        p = _tls_params(params, ratio)
        system, protocol, bath = tls_build(p)
        return system, bath, protocol, p
    if spec.model == "analytic-path":
        p = _tls_params(params, ratio)
        p.validate()
        system, _, bath = tls_analytic_build(p)
        rng = np.random.default_rng(spec.seed)
        n_modes = int(params.get("modes", 0))
        modes = params.get("theta_modes")
        if modes is None:
            modes = rng.uniform(-0.15, 0.15, size=(n_modes, 2)) if n_modes else np.zeros((1, 2))
        path_s, vel_s = spin_loop(p.theta, modes, int(params.get("winding", 1)))
        T = p.period
        protocol = DriveProtocol(
            period=T,
            path=lambda t: path_s(t / T),
            velocity=lambda t: vel_s(t / T) / T,
            orientation=p.orientation,
        )
        return system, bath, protocol, None
    # generator model: energies, generator (in units of 2 pi / T), basis0, bath
    hbar = float(params.get("hbar", 1.0))
    energies = np.asarray(params["energies"], dtype=float)
    basis0 = _complex_matrix(params["basis0"], "basis0") if "basis0" in params else np.eye(energies.size)
    system = SystemSpec(energies=energies, basis0=basis0, hbar=hbar)
    T = float(params["period"])
    gen = _complex_matrix(params["generator"], "generator") * (2 * math.pi / T)
    protocol = DriveProtocol(period=T, generator=gen, orientation=params.get("orientation", "cw"))
    gamma = float(params["gamma"])
    bath = BathSpec.detailed_balance(
        system,
        float(params.get("beta", 1.0)),
        coupling=0.5 * float(params.get("gamma_long", 2 * gamma)),
        dephasing=gamma,
        min_gap_ratio=ratio,
    )
    return system, bath, protocol, None


# ---------------------------------------------------------------------------
# evaluators
# ---------------------------------------------------------------------------


def _eval_ode(spec, system, bath, protocol, tls):
    fwd = evolve(system, bath, protocol, tol=spec.tol, cache_connections=False)
    bwd = evolve(system, bath, protocol.reversed(), tol=spec.tol, cache_connections=False)
    return {"ode_w": fwd.final_work, "ode_dw": fwd.final_work - bwd.final_work}


def _eval_dape(spec, system, bath, protocol, tls):
    r = work_decomposition(system, bath, protocol)
    return {
        "dape_w": r.w_total,
        "dape_w_pm": r.w_pm,
        "dape_w_pb": r.w_pb,
        "dape_w_f": r.w_f,
        "dape_dw": r.delta_w,
        "dape_length": r.geometry.length,
        "dape_bound": r.length_bound,
        "dape_phi": float(r.geometry.berry_phase_diffs[1, 0]),
    }


def _eval_limits(spec, system, bath, protocol, tls):
    return {
        "limits_dw_unitary": tls_chiral_unitary(tls),
        "limits_dw_unitary_env": tls_chiral_unitary_amplitude(tls),
        "limits_dw_dissipative": tls_chiral_dissipative(tls),
    }


def _eval_bloch(spec, system, bath, protocol, tls):
    return {"bloch_w": tls_work_exact(tls), "bloch_dw": tls_chiral_exact_bloch(tls)}


_EVALUATOR_FUNCS = {
    "ode": _eval_ode,
    "dape": _eval_dape,
    "dape-limits": _eval_limits,
    "bloch-exact": _eval_bloch,
}


@dataclass
class ResultTable:
    columns: list
    rows: list  # list of dicts
    timings: list = field(default_factory=list)  # per row {evaluator: seconds}

    def column(self, name: str) -> np.ndarray:
        vals = [r.get(name) for r in self.rows]
        return np.array([np.nan if v is None or v == "" else v for v in vals], dtype=float)

    @property
    def n_errors(self) -> int:
        return sum(1 for r in self.rows if r.get("error"))

    def __len__(self):
        return len(self.rows)


def _evaluate_point(spec: SweepSpec, index: int, point: dict):
    row: dict[str, Any] = dict(point)
    timing = {}
    errors = []
    try:
        params = _resolve_point(spec.model, spec.base, point)
        system, bath, protocol, tls = build_model(spec, params)
        row["epsilon"] = protocol.epsilon(system)
        off = ~np.eye(system.dimension, dtype=bool)
        row["gamma_t"] = float(np.max(bath.dephasing[off]) * protocol.period)
    except (DapeError, ValueError, KeyError, TypeError) as exc:
        row["error"] = f"model: {type(exc).__name__}: {exc}"
        return index, row, timing
    for ev in spec.evaluators:
        t0 = time.perf_counter()
        try:
            out = _EVALUATOR_FUNCS[ev](spec, system, bath, protocol, tls)
            bad = [k for k, v in out.items() if not math.isfinite(v)]
            if bad:
                raise ValueError(f"non-finite result in {bad}")
            row.update({k: float(v) for k, v in out.items()})
        except Exception as exc:  # recorded per row, sweep continues
            errors.append(f"{ev}: {type(exc).__name__}: {exc}")
        timing[ev] = time.perf_counter() - t0
    row["error"] = "; ".join(errors)
    return index, row, timing


def run_sweep(spec: SweepSpec, threads: int = 1) -> ResultTable:
    """Evaluate every grid point; rows are ordered by the first axis (stable in grid order)."""
    points = list(spec.grid())
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda ip: _evaluate_point(spec, *ip), enumerate(points)))
    else:
        results = [_evaluate_point(spec, i, p) for i, p in enumerate(points)]
    results.sort(key=lambda r: r[0])
    primary = spec.axes[0].name
    results.sort(key=lambda r: r[1][primary])
    cols = spec.columns()
    rows = [{c: r[1].get(c, "") for c in cols} for r in results]
    return ResultTable(columns=cols, rows=rows, timings=[r[2] for r in results])


def fit_scaling(table, column: str, axis: str) -> tuple[float, float]:
    """Least-squares slope of log|column| against log(axis), with its standard error."""
    if isinstance(table, ResultTable):
        y, x = table.column(column), table.column(axis)
    else:
        y = np.asarray([r[column] for r in table], dtype=float)
        x = np.asarray([r[axis] for r in table], dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 10:
        raise InsufficientData(f"need at least 10 rows, got {x.size}")
    y = np.abs(y)
    if np.any(y == 0) or np.any(x <= 0):
        raise NonPositiveValues(f"log fit of {column!r} vs {axis!r} needs nonzero values and a positive axis")
    res = stats.linregress(np.log(x), np.log(y))
    return float(res.slope), float(res.stderr)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def table_to_csv(spec: SweepSpec, table: ResultTable) -> str:
    buf = io.StringIO()
    buf.write(f"# dape-sim sweep: {spec.name}\n")
    buf.write(f"# config_hash: {spec.config_hash()}\n")
    buf.write(f"# model: {spec.model}; evaluators: {','.join(spec.evaluators)}\n")
    buf.write("# units: hbar = 1 unless set; energies and rates in the base angular-frequency unit; times in its inverse\n")
    for c in table.columns:
        doc = COLUMN_DOCS.get(c, "grid axis")
        buf.write(f"# column {c}: {doc}\n")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(table.columns)
    for r in table.rows:
        w.writerow([_fmt(r.get(c, "")) for c in table.columns])
    return buf.getvalue()


def write_outputs(spec: SweepSpec, table: ResultTable, out_dir, threads: int = 1) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{spec.name}.csv"
    csv_path.write_text(table_to_csv(spec, table), newline="")
    manifest = {
        "name": spec.name,
        "config_hash": spec.config_hash(),
        "config": spec.to_dict(),
        "csv": csv_path.name,
        "rows": len(table),
        "errors": table.n_errors,
        "threads": threads,
        "tolerances": {
            "ode_rtol": spec.tol,
            "ode_atol": spec.tol * 1e-3,
            "quad_epsabs_per_hbar_omega": 1e-13,
            "min_gap_ratio": spec.min_gap_ratio,
        },
        "versions": {
            "dape_sim": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_s": table.timings,
    }
    man_path = out / f"{spec.name}.manifest.json"
    man_path.write_text(json.dumps(manifest, indent=2, default=_json_default) + "\n")
    return csv_path, man_path


def with_overrides(spec: SweepSpec, evaluators=None, seed=None) -> SweepSpec:
    kw = {}
    if evaluators is not None:
        kw["evaluators"] = tuple(evaluators)
    if seed is not None:
        kw["seed"] = int(seed)
    return replace(spec, **kw) if kw else spec
