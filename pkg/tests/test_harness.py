from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest
from click.testing import CliRunner

from ffode.errors import ConfigError
from ffode.harness import experiments as ex
from ffode.harness.cli import main
from ffode.harness.config import (
    build_problem,
    load_config,
    preset_config,
    preset_names,
    validate_config,
)


def _decay_cfg(**kw):
    data = {"schema_version": 1, "kind": "decay-curves", "label": "t",
            "problem": {"type": "matrix", "A": [[-1, 0], [0, -2]], "u0": [1, 1], "T": 1.0},
            "params": {"n_points": 11}}
    data.update(kw)
    return data


def test_presets_all_validate():
    names = preset_names()
    assert {"decay-diag", "decay-random4", "scalar-inhomo"} <= set(names)
    for n in names:
        assert preset_config(n).schema_version == 1


def test_validation_reports_field_path():
    bad = _decay_cfg()
    bad["params"] = {"n_points": "many"}
    with pytest.raises(ConfigError, match="params"):
        validate_config(bad)
    with pytest.raises(ConfigError):
        validate_config(_decay_cfg(kind="nonsense"))
    with pytest.raises(ConfigError):
        validate_config(_decay_cfg(schema_version=2))


def test_history_scenario_needs_h():
    data = {"schema_version": 1, "kind": "tm-emulate",
            "problem": {"type": "scalar", "a": -1.0, "u0": 1.0, "T": 2.0},
            "method": {"scenario": "history_homo", "eps_tol": 1e-3}}
    with pytest.raises(ConfigError, match="h"):
        ex.build_table(validate_config(data))


def test_config_hash_ignores_output():
    a = validate_config(_decay_cfg())
    b = validate_config(_decay_cfg(output={"dir": "/elsewhere"}))
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != validate_config(_decay_cfg(seed=3)).config_hash()


def test_load_config_roundtrip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(_decay_cfg()))
    assert load_config(path).kind == "decay-curves"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


@pytest.mark.parametrize("spec", [
    {"type": "scalar", "a": -1.0, "b": 1.0, "u0": 0.0, "T": 3.0},
    {"type": "matrix", "A": {"re": [[-1, 0], [0, -1]], "im": [[0, 1], [1, 0]]}, "u0": [1, 0], "T": 1.0},
    {"type": "random", "dim": 3, "T": 1.0, "eta": 0.5, "inhomogeneous": True},
    {"type": "reaction-diffusion", "d": 1, "N": 5, "T": 0.5},
    {"type": "non-hermitian", "L": [[-1, 0], [0, -1]], "H": [[1, 0], [0, -1]], "T": 1.0},
])
def test_build_problem_types(spec):
    p = build_problem(spec, seed=1)
    assert p.T == spec["T"] and p.dim >= 1


def test_emitted_csv_format(tmp_path):
    res = ex.run(validate_config(_decay_cfg()), tmp_path / "d.csv")
    text = res.csv_path.read_text()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["t", "norm_phi_0_t", "norm_phi_t_T", "bound_0_t", "bound_t_T"]
    assert len(rows) == 12
    assert float(rows[-1][1]) <= float(rows[-1][3]) + 1e-9
    side = json.loads(res.json_path.read_text())
    assert {"config", "versions", "provenance", "wall_time_s"} <= set(side)
    assert all(t in ex.PROVENANCE for row in side["provenance"] for t in row)


def test_decay_refuses_non_dissipative(tmp_path):
    data = _decay_cfg()
    data["problem"] = {"type": "matrix", "A": [[0.1, 0], [0, -1]], "u0": [1, 1], "T": 1.0}
    with pytest.raises(Exception) as info:
        ex.run(validate_config(data), tmp_path / "x.csv")
    assert "dissipative" in str(info.value)


def test_result_table_rejects_bad_tags():
    t = ex.ResultTable(["a"])
    with pytest.raises(ValueError):
        t.add_row([1.0], ["made-up"])
    with pytest.raises(ValueError):
        t.add_row([1.0, 2.0], "bound")


def test_format_cell():
    assert ex.format_cell(0.1) == "0.10000000000000001"
    assert ex.format_cell(np.float64(2.5)) == "2.5"
    assert ex.format_cell(3) == "3"
    assert ex.format_cell(None) == ""
    assert ex.format_cell(float("inf")) == "inf"


def test_estimate_table_shape():
    t = ex.estimate_table(10.0, 1e-6, 1.0, 1.0)
    cells = [r for r in t.rows if r[0] in ("time-marching", "LCHS") and r[1] == "ham_t_queries"]
    assert len(cells) == 2
    numeric = [c for r in cells for c in r[2:]]
    assert len(numeric) == 8 and all(isinstance(c, float) and c > 0 for c in numeric)
    qlsp = [r for r in t.rows if r[0].startswith("QLSP")]
    assert qlsp and all(c == ex.NOT_IMPLEMENTED for r in qlsp for c in r[2:])


def test_scan_T_is_flat_beyond_threshold():
    cfg = preset_config("scalar-inhomo")
    t = ex.build_table(cfg)
    assert t.column("T") == [10.0, 20.0, 40.0, 80.0]
    assert t.meta["ham_t_spread_above_threshold"] <= 1e-10


def test_convergence_quadrature_study():
    t = ex.convergence_study("quadrature", [1, 2, 3, 4])
    meas, pred = t.column("measured_error"), t.column("predicted")
    assert all(m <= p for m, p in zip(meas, pred))


def test_convergence_dyson_study():
    t = ex.convergence_study("dyson", [2, 3, 4, 5, 6])
    meas = t.column("measured_error")
    assert all(a > b for a, b in zip(meas, meas[1:]))


def test_emulation_table_fields():
    cfg = preset_config("lchs-2x2")
    t = ex.build_table(cfg)
    q = dict(zip(t.column("quantity"), t.column("value")))
    assert q["fidelity"] >= 1 - 1e-3
    assert q["ham_t_queries"] > 0


# ---------------------------------------------------------------------------
# CLI


def test_cli_presets_and_where(out_dir):
    r = CliRunner().invoke(main, ["presets"])
    assert r.exit_code == 0 and "decay-diag" in r.output
    r = CliRunner().invoke(main, ["where"])
    assert r.exit_code == 0 and str(out_dir) in r.output


def test_cli_decay_writes_default_location(out_dir):
    r = CliRunner().invoke(main, ["decay", "--preset", "decay-diag"])
    assert r.exit_code == 0, r.output
    assert (out_dir / "decay-diag.csv").exists()
    assert (out_dir / "decay-diag.json").exists()


def test_cli_decay_is_byte_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert CliRunner().invoke(main, ["decay", "--preset", "decay-random4", "--out", str(p)]).exit_code == 0
    assert a.read_bytes() == b.read_bytes()


def test_cli_estimate_single_cell():
    r = CliRunner().invoke(main, ["estimate", "--method", "tm", "--scenario", "final_homo",
                                  "--T", "10", "--eps", "1e-3", "--Q", "2"])
    assert r.exit_code == 0
    assert "ham_t_queries=8555.07" in r.output


def test_cli_estimate_table(tmp_path):
    r = CliRunner().invoke(main, ["estimate", "--table", "--out", str(tmp_path / "e.csv")])
    assert r.exit_code == 0, r.output
    assert "literature: not implemented" in (tmp_path / "e.csv").read_text()


def test_cli_convergence(tmp_path):
    r = CliRunner().invoke(main, ["convergence", "--study", "quadrature", "--ladder", "1,2,3",
                                  "--out", str(tmp_path / "c.csv")])
    assert r.exit_code == 0, r.output


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1, "kind": "decay-curves"}))
    r = CliRunner().invoke(main, ["run", str(bad)])
    assert r.exit_code == 2
    assert "config error" in r.output
    r = CliRunner().invoke(main, ["convergence", "--ladder", "1,x"])
    assert r.exit_code == 2
    r = CliRunner().invoke(main, ["estimate"])
    assert r.exit_code == 2


def test_cli_precondition_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    data = _decay_cfg()
    data["problem"] = {"type": "matrix", "A": [[0.1, 0], [0, -1]], "u0": [1, 1], "T": 1.0}
    cfg.write_text(json.dumps(data))
    assert CliRunner().invoke(main, ["run", str(cfg)]).exit_code == 2


def test_cli_run_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(_decay_cfg()))
    r = CliRunner().invoke(main, ["run", str(cfg), "--out", str(tmp_path / "o.csv")])
    assert r.exit_code == 0, r.output
    assert (tmp_path / "o.json").exists()
