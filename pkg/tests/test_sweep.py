import json
import math
from pathlib import Path

import numpy as np
import pytest

from dape_sim.errors import InsufficientData, NonPositiveValues, ValidationError
from dape_sim.sweep import (
    Axis,
    ResultTable,
    SweepSpec,
    fit_scaling,
    run_sweep,
    table_to_csv,
    with_overrides,
    write_outputs,
)

CONFIGS = Path(__file__).resolve().parents[1] / "scripts" / "configs"
BASE = {"omega": 1.0, "theta": math.pi / 4, "delta": 0.1}


def _spec(axes, evaluators=("dape",), base=None, **kw):
    return SweepSpec(model=kw.pop("model", "tls"), base=dict(BASE if base is None else base), axes=tuple(axes),
                     evaluators=tuple(evaluators), **kw)


# --- spec parsing -------------------------------------------------------------------


def test_axis_spacings():
    lin = Axis.from_dict({"name": "theta", "start": 0.1, "stop": 0.5, "num": 5})
    assert np.allclose(lin.values, [0.1, 0.2, 0.3, 0.4, 0.5])
    log = Axis.from_dict({"name": "period", "start": 10, "stop": 1000, "num": 3, "spacing": "log"})
    assert np.allclose(log.values, [10, 100, 1000])
    assert Axis.from_dict({"name": "x", "values": [3, 1]}).values == (3.0, 1.0)


@pytest.mark.parametrize(
    "d",
    [
        {"values": [1.0]},
        {"name": "x"},
        {"name": "x", "values": []},
        {"name": "x", "start": -1, "stop": 10, "num": 3, "spacing": "log"},
        {"name": "x", "start": 1, "stop": 10, "num": 3, "spacing": "cubic"},
    ],
)
def test_bad_axes(d):
    with pytest.raises(ValidationError):
        Axis.from_dict(d)


@pytest.mark.parametrize(
    "kw",
    [
        {"evaluators": ()},
        {"evaluators": ("magic",)},
        {"model": "generator", "evaluators": ("bloch-exact",)},
        {"model": "spring"},
        {"outputs": ("nonsense",)},
    ],
)
def test_bad_specs(kw):
    axes = [Axis("period", (100.0,))]
    args = {"evaluators": ("dape",)}
    args.update(kw)
    with pytest.raises(ValidationError):
        _spec(axes, **args)


def test_duplicate_axes_rejected():
    with pytest.raises(ValidationError):
        _spec([Axis("period", (100.0,)), Axis("period", (200.0,))])


def test_missing_config_key():
    with pytest.raises(ValidationError):
        SweepSpec.from_dict({"model": "tls", "evaluators": ["dape"]})
    with pytest.raises(ValidationError):
        SweepSpec.from_yaml("/nonexistent/config.yaml")


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    spec = SweepSpec.from_yaml(path)
    assert spec.name == path.stem
    assert len(list(spec.grid())) >= 1


def test_config_hash_tracks_content():
    a = _spec([Axis("period", (100.0,))])
    b = _spec([Axis("period", (100.0,))])
    c = with_overrides(a, seed=5)
    assert a.config_hash() == b.config_hash() != c.config_hash()


# --- evaluation ---------------------------------------------------------------------


def test_single_point_perturbative_and_bloch_agree():
    spec = _spec([Axis("period", (700.0,))], evaluators=("dape", "bloch-exact"), base={**BASE, "gamma": 1e-3})
    table = run_sweep(spec)
    (row,) = table.rows
    assert row["error"] == ""
    assert row["dape_dw"] == pytest.approx(row["bloch_dw"], rel=1e-12)


def test_derived_axes_set_period_and_damping():
    spec = _spec([Axis("epsilon", (0.02,)), Axis("gamma_t", (3.0,))], min_gap_ratio=1.0)
    (row,) = run_sweep(spec).rows
    assert row["epsilon"] == pytest.approx(0.02, rel=1e-14)
    assert row["gamma_t"] == pytest.approx(3.0, rel=1e-14)


def test_period_scan_scaling_at_both_ends():
    """50 log-spaced periods with gamma T from 0.01 to 100."""
    gamma = 1e-4
    spec = SweepSpec(
        model="tls",
        base={**BASE, "gamma": gamma},
        axes=(Axis.from_dict({"name": "period", "start": 100.0, "stop": 1e6, "num": 50, "spacing": "log"}),),
        evaluators=("dape", "dape-limits"),
        name="scan",
    )
    table = run_sweep(spec)
    assert table.n_errors == 0
    gt = table.column("gamma_t")
    assert gt.min() == pytest.approx(0.01) and gt.max() == pytest.approx(100.0)
    uni = [r for r, g in zip(table.rows, gt) if g <= 0.1]
    dis = [r for r, g in zip(table.rows, gt) if g >= 10]
    # point values oscillate through zero at the unitary end; the envelope column carries the scaling
    slope_u, _ = fit_scaling(uni, "limits_dw_unitary_env", "period")
    slope_d, _ = fit_scaling(dis, "dape_dw", "period")
    assert slope_u == pytest.approx(-2.0, abs=0.1)
    assert slope_d == pytest.approx(-2.0, abs=0.1)
    assert fit_scaling(dis, "dape_w_pm", "period")[0] == pytest.approx(-1.0, abs=0.1)
    assert fit_scaling(uni, "dape_w_pm", "period")[0] == pytest.approx(-2.0, abs=0.1)


def test_rows_sorted_by_primary_axis_and_failures_recorded():
    spec = _spec(
        [Axis("theta", (2.0, 4.0, 0.5)), Axis("period", (300.0,))],
        evaluators=("dape", "bloch-exact"),
        base={"omega": 1.0, "delta": 0.1, "gamma": 1e-3},
    )
    table = run_sweep(spec)
    assert list(table.column("theta")) == [0.5, 2.0, 4.0]
    assert table.n_errors == 1
    bad = table.rows[-1]
    assert "ValidationError" in bad["error"] and bad["dape_dw"] == ""
    good = [r for r in table.rows if not r["error"]]
    assert all(math.isfinite(r[c]) for r in good for c in table.columns if c not in ("error",))


def test_evaluator_failure_keeps_other_columns():
    # epsilon 0.5 breaks the adiabatic validation for the analytic path, not the closed forms
    spec = _spec([Axis("period", (500.0, 12.0))], evaluators=("dape-limits", "dape"), base={**BASE, "gamma": 1e-4})
    table = run_sweep(spec)
    short = table.rows[0]
    assert short["period"] == 12.0
    assert short["error"].startswith("model:") or "dape" in short["error"]


def test_outputs_restrict_columns():
    spec = _spec([Axis("period", (700.0,))], base={**BASE, "gamma": 1e-3}, outputs=("dape_dw",))
    table = run_sweep(spec)
    assert table.columns == ["period", "dape_dw", "error"]


def test_generator_and_analytic_path_models():
    gen = SweepSpec.from_yaml(CONFIGS / "three_level.yaml")
    gen = SweepSpec(
        model=gen.model, base=gen.base, axes=(Axis("epsilon", (0.04,)), Axis("gamma_t", (20.0,))),
        evaluators=("dape",), min_gap_ratio=1.0,
    )
    (row,) = run_sweep(gen).rows
    assert row["error"] == "" and row["dape_w_f"] != 0.0
    path = _spec([Axis("epsilon", (0.05,)), Axis("gamma_t", (2.0,))], model="analytic-path",
                 base={**BASE, "modes": 2}, min_gap_ratio=1.0, seed=3)
    a = run_sweep(path).rows[0]
    b = run_sweep(path).rows[0]
    assert a["error"] == "" and a == b
    c = run_sweep(with_overrides(path, seed=4)).rows[0]
    assert c["dape_length"] != a["dape_length"]


# --- output ---------------------------------------------------------------------


def _small_spec():
    return _spec(
        [Axis("period", (900.0, 300.0, 600.0)), Axis("theta", (0.4, 1.1))],
        evaluators=("dape", "dape-limits", "bloch-exact"),
        base={"omega": 1.0, "delta": 0.1, "gamma": 1e-3},
        name="small",
    )


def test_csv_is_reproducible_and_parallel_matches_serial(tmp_path):
    spec = _small_spec()
    serial = run_sweep(spec)
    parallel = run_sweep(spec, threads=4)
    assert serial.rows == parallel.rows
    p1, _ = write_outputs(spec, serial, tmp_path / "a")
    p2, _ = write_outputs(spec, parallel, tmp_path / "b", threads=4)
    assert p1.read_bytes() == p2.read_bytes()


def test_csv_layout_and_manifest(tmp_path):
    spec = _small_spec()
    table = run_sweep(spec)
    csv_path, man_path = write_outputs(spec, table, tmp_path)
    text = csv_path.read_text()
    assert f"# config_hash: {spec.config_hash()}" in text
    header = [ln for ln in text.splitlines() if not ln.startswith("#")][0]
    assert header.split(",") == table.columns
    assert "nan" not in text.lower() and "inf" not in text.lower().replace("info", "")
    man = json.loads(man_path.read_text())
    assert man["config_hash"] == spec.config_hash()
    assert man["rows"] == len(table) == 6
    assert set(man["tolerances"]) >= {"ode_rtol", "ode_atol", "quad_epsabs_per_hbar_omega", "min_gap_ratio"}
    assert set(man["versions"]) == {"dape_sim", "python", "numpy", "scipy"}
    assert len(man["wall_time_s"]) == 6
    assert SweepSpec.from_dict(man["config"]).config_hash() == spec.config_hash()


def test_float_formatting_round_trips():
    spec = _spec([Axis("period", (700.0,))], base={**BASE, "gamma": 1e-3})
    table = run_sweep(spec)
    text = table_to_csv(spec, table)
    values = [ln for ln in text.splitlines() if not ln.startswith("#")][1].split(",")
    assert float(values[table.columns.index("dape_dw")]) == table.rows[0]["dape_dw"]


# --- scaling fits -----------------------------------------------------------------


def test_fit_recovers_exact_power_law():
    x = np.geomspace(10, 1e4, 20)
    rows = [{"T": t, "y": 3.0 * t**-2} for t in x]
    slope, err = fit_scaling(rows, "y", "T")
    assert slope == pytest.approx(-2.0, abs=1e-3)
    assert err < 1e-3


def test_fit_uses_magnitudes():
    x = np.geomspace(10, 1e4, 12)
    rows = [{"T": t, "y": (-1) ** k * t**-1} for k, t in enumerate(x)]
    assert fit_scaling(rows, "y", "T")[0] == pytest.approx(-1.0, abs=1e-12)


def test_fit_errors():
    rows = [{"T": float(t), "y": 1.0 / t} for t in range(1, 6)]
    with pytest.raises(InsufficientData):
        fit_scaling(rows, "y", "T")
    rows = [{"T": float(t), "y": 0.0 if t == 3 else 1.0 / t} for t in range(1, 13)]
    with pytest.raises(NonPositiveValues):
        fit_scaling(rows, "y", "T")
    table = ResultTable(columns=["T", "y"], rows=[{"T": float(t), "y": ""} for t in range(1, 13)])
    with pytest.raises(InsufficientData):
        fit_scaling(table, "y", "T")
