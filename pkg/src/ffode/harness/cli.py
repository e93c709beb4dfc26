"""Command line entry point: ``ffode <command>``.

Exit codes: 0 success, 2 configuration or precondition error, 3 numerical
tolerance failure (including non-convergence and degenerate solutions).
"""

from __future__ import annotations

import functools
import os
import sys
from pathlib import Path

import click

from ..errors import ConfigError, FFODEError, PreconditionError
from . import experiments as ex
from .config import (
    DEFAULT_OUTPUT,
    OUTPUT_ENV,
    STUDIES,
    ExperimentConfig,
    load_config,
    preset_config,
    preset_names,
    validate_config,
)

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _guard(fn):
    """Map library errors onto the documented exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, PreconditionError) as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except FFODEError as exc:
            click.echo(f"numerical failure: {type(exc).__name__}: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)
    return wrapper


def _floats(text: str, name: str) -> list[float]:
    try:
        vals = [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError as exc:
        raise ConfigError(f"{name}: expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise ConfigError(f"{name}: empty list")
    return vals


def _report(res: ex.RunResult) -> None:
    click.echo(f"wrote {res.csv_path} ({len(res.table.rows)} rows) and {res.json_path.name}")


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Emulate and cost fast-forwarded quantum solvers for dissipative ODEs.

    Outputs default to the directory in $FFODE_OUTPUT_DIR (else ./ffode-out).
    """


@main.command("run")
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="CSV path (default: <output dir>/<stem>.csv).")
@_guard
def run_cmd(config: str, out: str | None):
    """Run the experiment described by a JSON CONFIG file."""
    _report(ex.run(load_config(config), out))


@main.command("decay")
@click.option("--preset", required=True, help="Preset name (see `ffode presets`).")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path.")
@click.option("--n-points", type=int, default=None, help="Grid size override.")
@_guard
def decay_cmd(preset: str, out: str | None, n_points: int | None):
    """Emit decay curves ||Phi(0,t)||, ||Phi(t,T)|| with their exponential bounds."""
    base = preset_config(preset)
    cfg = ExperimentConfig(kind="decay-curves", problem=base.problem or {"preset": preset},
                           params=dict(base.params), seed=base.seed,
                           label=base.label or preset, output=dict(base.output))
    if n_points is not None:
        cfg.params["n_points"] = n_points
    _report(ex.run(cfg, out))


@main.command("scan-t")
@click.option("--method", type=click.Choice(["tm", "lchs"]), required=True)
@click.option("--scenario", required=True, help="final_inhomo, history_homo, ...")
@click.option("--t-list", required=True, help="Comma-separated horizons, e.g. 10,20,40,80.")
@click.option("--preset", default="scalar-inhomo", show_default=True,
              help="Preset supplying the problem.")
@click.option("--eps", type=float, default=1e-3, show_default=True)
@click.option("--h", type=float, default=None, help="History step.")
@click.option("--no-fast-forward", is_flag=True, help="Disable truncation.")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_guard
def scan_t_cmd(method, scenario, t_list, preset, eps, h, no_fast_forward, workers, seed, out):
    """Query counts of one scenario across horizons T."""
    data = {"schema_version": 1, "kind": "scan-T", "seed": seed, "label": f"scan-T-{method}",
            "problem": {"preset": preset},
            "method": {"name": method, "scenario": scenario, "eps_tol": eps,
                       "fast_forward": not no_fast_forward},
            "params": {"T_list": _floats(t_list, "--t-list"), "workers": workers}}
    if h is not None:
        data["method"]["h"] = h
    _report(ex.run(validate_config(data), out))


@main.command("estimate")
@click.option("--table", "full_table", is_flag=True, help="Emit the methods x scenarios table.")
@click.option("--method", type=click.Choice(["tm", "lchs"]), default=None)
@click.option("--scenario", default=None)
@click.option("--T", "T", type=float, default=10.0, show_default=True)
@click.option("--eps", type=float, default=1e-6, show_default=True)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--eta", type=float, default=None, help="Omit for the semi-dissipative formula.")
@click.option("--beta", type=float, default=0.9, show_default=True)
@click.option("--Q", "Q", type=float, default=1.0, show_default=True)
@click.option("--homogeneous", is_flag=True, help="Table over homogeneous scenarios.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_guard
def estimate_cmd(full_table, method, scenario, T, eps, alpha, eta, beta, Q, homogeneous, out):
    """Resource estimates (HAM-T and state-preparation queries)."""
    from .. import lchs, timemarching

    if full_table:
        data = {"schema_version": 1, "kind": "estimate-table", "label": "estimate-table",
                "params": {"T": T, "eps_tol": eps, "alpha_A": alpha, "eta": eta or 1.0,
                           "beta": beta, "homogeneous": homogeneous,
                           "norms": {"Q": Q, "Q_hist": Q}}}
        _report(ex.run(validate_config(data), out))
        return
    if method is None or scenario is None:
        raise ConfigError("estimate: give --table, or both --method and --scenario")
    if method == "tm":
        rep = timemarching.tm_resource_estimate(scenario, alpha, T, eta, eps, Q)
    else:
        rep = lchs.lchs_resource_estimate(scenario, alpha, T, eta, beta, eps, {"Q_hist": Q})
    click.echo(f"ham_t_queries={ex.format_cell(rep.ham_t_queries)} "
               f"state_prep_queries={ex.format_cell(rep.state_prep_queries)} "
               f"({rep.convention})")


@main.command("convergence")
@click.option("--study", type=click.Choice(list(STUDIES)), default="dyson", show_default=True)
@click.option("--ladder", required=True, help="Comma-separated levels (>= 3).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_guard
def convergence_cmd(study, ladder, seed, out):
    """Measured error against the predicted bound along a refinement ladder."""
    data = {"schema_version": 1, "kind": "convergence", "seed": seed,
            "label": f"convergence-{study}",
            "params": {"study": study, "ladder": _floats(ladder, "--ladder")}}
    _report(ex.run(validate_config(data), out))


@main.command("presets")
def presets_cmd():
    """List shipped presets."""
    for name in preset_names():
        click.echo(name)


@main.command("where")
def where_cmd():
    """Show the default output directory."""
    click.echo(Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT)).resolve())


if __name__ == "__main__":  # pragma: no cover
    main()
