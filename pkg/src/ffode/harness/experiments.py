"""Experiment drivers and the CSV / JSON emitters.

Every table cell carries a provenance tag:

* ``emulated``: produced by an emulator or a counter of emulated resources;
* ``reference``: produced by the classical reference solver;
* ``bound``: a formula evaluation (analytic bounds, resource estimates, inputs);
* ``literature``: quoted from prior work and not reproduced here.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__, lchs, timemarching
from ..dissipation import check_decay, estimate_eta
from ..emulation import SCENARIOS, fidelity
from ..errors import ConfigError, PreconditionError, ToleranceFailure
from ..kernels import BACKEND
from ..linalg import (
    ODEProblem,
    constant_generator,
    make_problem,
    opnorm,
    propagate_reference,
    random_generator,
    solve_reference,
)
from ..quadrature import gauss_legendre, quadrature_error_bound
from .config import ExperimentConfig, build_problem, resolve_problem_spec

PROVENANCE = ("emulated", "reference", "bound", "literature")
DECAY_TOL = 1e-9
NOT_IMPLEMENTED = "literature: not implemented"


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    provenance: list[list[str]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add_row(self, cells: list, tags) -> None:
        if len(cells) != len(self.columns):
            raise ValueError(f"row has {len(cells)} cells, table has {len(self.columns)} columns")
        if isinstance(tags, str):
            tags = [tags] * len(cells)
        tags = list(tags)
        if len(tags) != len(cells) or any(t not in PROVENANCE for t in tags):
            raise ValueError(f"bad provenance tags {tags!r}")
        self.rows.append(list(cells))
        self.provenance.append(tags)

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([format_cell(c) for c in r])
        return buf.getvalue()


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(value)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def versions() -> dict:
    return {"ffode": __version__, "numpy": np.__version__, "python": platform.python_version(),
            "kernel_backend": BACKEND}


def write_artifacts(table: ResultTable, csv_path: str | Path, config: dict | None = None,
                    wall_time: float | None = None) -> tuple[Path, Path]:
    """Write the CSV and its JSON sidecar (same stem, ``.json``)."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(table.to_csv(), encoding="utf-8")
    side = {"columns": table.columns, "provenance": table.provenance,
            "meta": _jsonable(table.meta), "config": _jsonable(config or {}),
            "versions": versions(), "wall_time_s": wall_time}
    json_path = csv_path.with_suffix(".json")
    json_path.write_text(json.dumps(side, indent=2, sort_keys=True), encoding="utf-8")
    return csv_path, json_path


# ---------------------------------------------------------------------------
# decay curves


def emit_decay_curves(problem: ODEProblem, n_points: int = 101, tol: float = 1e-12,
                      eta: float | None = None) -> ResultTable:
    """Columns t, ||Phi(0,t)||, ||Phi(t,T)||, e^{-eta t}, e^{-eta (T-t)} on a uniform grid.

    Refuses generators whose sampled dissipation rate is not positive and
    raises :class:`ToleranceFailure` if a norm exceeds its bound by more
    than 1e-9.
    """
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    T = problem.T
    if eta is None:
        eta = problem.eta
    if eta is None:
        eta = estimate_eta(problem.gen, t_range=(0.0, T))
        if not eta > 0:
            raise PreconditionError(f"decay curves need a dissipative generator (eta = {eta:.3g})")
    ts = np.linspace(0.0, T, n_points)
    steps = [propagate_reference(problem.gen, a, b, tol) for a, b in zip(ts[:-1], ts[1:])]
    d = problem.dim
    fwd = [np.eye(d, dtype=np.complex128)]
    for S in steps:
        fwd.append(S @ fwd[-1])
    bwd = [np.eye(d, dtype=np.complex128)]
    for S in reversed(steps):
        bwd.append(bwd[-1] @ S)
    bwd.reverse()
    table = ResultTable(["t", "norm_phi_0_t", "norm_phi_t_T", "bound_0_t", "bound_t_T"],
                        meta={"eta": eta, "T": T, "n_points": n_points, "label": problem.label})
    worst = 0.0
    for i, t in enumerate(ts):
        n0, n1 = opnorm(fwd[i]), opnorm(bwd[i])
        b0, b1 = math.exp(-eta * t), math.exp(-eta * (T - t))
        worst = max(worst, n0 - b0, n1 - b1)
        table.add_row([float(t), n0, n1, b0, b1],
                      ["reference", "reference", "reference", "bound", "bound"])
    table.meta["max_excess"] = worst
    if worst > DECAY_TOL:
        raise ToleranceFailure(f"decay bound violated by {worst:.3e}")
    return table


# ---------------------------------------------------------------------------
# emulation


def emulate(problem: ODEProblem, method: str, scenario: str, eps_tol: float, *,
            fast_forward: bool = False, h: float | None = None, seed: int = 0,
            beta: float = lchs.DEFAULT_BETA, mode: str = "ideal", constants: dict | None = None):
    """Dispatch to the emulator of (method, scenario)."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"method/scenario: unknown scenario {scenario!r}")
    k = dict(constants or {})
    homo = scenario.endswith("_homo")
    if homo != problem.homogeneous:
        raise ConfigError(f"method/scenario: {scenario} does not match the problem "
                          f"({'homogeneous' if problem.homogeneous else 'inhomogeneous'})")
    if scenario.startswith("history") and h is None:
        raise ConfigError("method/h: history scenarios need a step h")
    try:
        if method == "tm":
            if scenario == "final_homo":
                return timemarching.tm_final_homogeneous(problem, eps_tol, seed=seed, **k)
            if scenario == "final_inhomo":
                return timemarching.tm_final_inhomogeneous(problem, eps_tol, fast_forward,
                                                           seed=seed, **k)
            return timemarching.tm_history(problem, eps_tol, h, fast_forward, seed=seed, **k)
        if method == "lchs":
            if scenario == "final_homo":
                return lchs.lchs_final_homogeneous(problem, eps_tol, beta=beta, mode=mode,
                                                   seed=seed, **k)
            if scenario == "final_inhomo":
                return lchs.lchs_final_inhomogeneous(problem, eps_tol, fast_forward, beta=beta,
                                                     mode=mode, seed=seed, **k)
            return lchs.lchs_history(problem, eps_tol, h, fast_forward, beta=beta, mode=mode,
                                     seed=seed, **k)
    except TypeError as exc:
        raise ConfigError(f"method/constants: {exc}") from exc
    raise ConfigError(f"method/name: unknown method {method!r}")


def reference_target(problem: ODEProblem, scenario: str, h: float | None = None) -> np.ndarray:
    if scenario.startswith("history"):
        return timemarching.reference_history(problem, h).reshape(-1)
    return solve_reference(problem, [problem.T], 1e-11).states[-1]


def emulation_table(problem: ODEProblem, method: str, scenario: str, eps_tol: float,
                    **kw) -> ResultTable:
    state, rep = emulate(problem, method, scenario, eps_tol, **kw)
    ref = reference_target(problem, scenario, kw.get("h"))
    table = ResultTable(["quantity", "value"],
                        meta={"method": method, "scenario": scenario, "eps_tol": eps_tol,
                              "fast_forward": kw.get("fast_forward", False),
                              "params_echo": rep.params_echo, "convention": rep.convention})
    err = float(np.linalg.norm(state.normalized - ref / np.linalg.norm(ref)))
    rows = [
        ("eps_tol", eps_tol, "bound"),
        ("normalized_error", err, "emulated"),
        ("fidelity", fidelity(state.vector, ref), "emulated"),
        ("success_amplitude", state.success_amp, "emulated"),
        ("norm_factor", state.norm_factor, "emulated"),
        ("Q", state.budget.Q, "reference"),
        ("eps_truncate", state.budget.eps_truncate, "bound"),
        ("ham_t_queries", rep.ham_t_queries, "bound"),
        ("state_prep_queries", rep.state_prep_queries, "bound"),
        ("aa_rounds", rep.aa_rounds, "bound"),
    ]
    for name, value in sorted(rep.counters.items()):
        if isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool):
            rows.append((f"counter:{name}", value, "emulated"))
    for name, value, tag in rows:
        table.add_row([name, value], ["bound", tag])
    return table


# ---------------------------------------------------------------------------
# T scans


def _scan_point(args: tuple) -> dict:
    spec, seed, T, method, scenario, eps_tol, opts = args
    problem = build_problem(spec, seed, T=T)
    state, rep = emulate(problem, method, scenario, eps_tol, seed=seed, **opts)
    plan = state.meta.get("plan")
    window = state.meta.get("window")
    return {"T": T, "ham_t_queries": rep.ham_t_queries,
            "state_prep_queries": rep.state_prep_queries,
            "T0": None if plan is None else plan.T0,
            "window_start": None if window is None else float(window[0]),
            "full_horizon": True if plan is None else bool(plan.full_horizon),
            "error": float(state.meta.get("error_vs_reference", float("nan")))}


def scan_T(spec: dict, T_list, method: str, scenario: str, eps_tol: float, *, seed: int = 0,
           workers: int = 1, **opts) -> ResultTable:
    """Emulate one scenario over several horizons; points run in a process pool."""
    spec = resolve_problem_spec(spec)
    jobs = [(spec, seed, float(T), method, scenario, eps_tol, opts) for T in T_list]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scan_point, jobs))
    else:
        results = [_scan_point(j) for j in jobs]
    table = ResultTable(["T", "ham_t_queries", "state_prep_queries", "T0", "full_horizon",
                         "normalized_error"],
                        meta={"method": method, "scenario": scenario, "eps_tol": eps_tol,
                              **{k: v for k, v in opts.items() if k != "constants"}})
    for r in results:
        table.add_row([r["T"], r["ham_t_queries"], r["state_prep_queries"], r["T0"],
                       r["full_horizon"], r["error"]],
                      ["bound", "bound", "bound", "emulated", "emulated", "emulated"])
    ff = [r["ham_t_queries"] for r in results if not r["full_horizon"]]
    table.meta["ham_t_spread_above_threshold"] = (max(ff) - min(ff)) if ff else None
    return table


# ---------------------------------------------------------------------------
# estimator tables

TABLE_COLUMNS = ("history_semi", "history_dissipative", "final_semi", "final_dissipative")
LITERATURE_ROWS = ("QLSP (homogeneous)", "QLSP (inhomogeneous)")


def estimate_table(T: float, eps_tol: float, alpha_A: float = 1.0, eta: float = 1.0,
                   beta: float = lchs.DEFAULT_BETA, homogeneous: bool = False,
                   norms: dict | None = None) -> ResultTable:
    """Methods x (history, final) x (semi-dissipative, dissipative) query counts.

    The implemented rows give HAM-T queries and state-preparation queries
    from the resource estimators; literature rows are placeholders.
    """
    n = {"u0_norm": 1.0, "uT_norm": 1.0, "b_max": 1.0, "b_L1": 1.0, "rms_norm": 1.0,
         "Q_hist": 1.0, "Q": 1.0}
    n.update(norms or {})
    fin = "final_homo" if homogeneous else "final_inhomo"
    hist = "history_homo" if homogeneous else "history_inhomo"
    cells = [(hist, None), (hist, eta), (fin, None), (fin, eta)]
    table = ResultTable(["method", "quantity", *TABLE_COLUMNS],
                        meta={"T": T, "eps_tol": eps_tol, "alpha_A": alpha_A, "eta": eta,
                              "beta": beta, "norms": n, "homogeneous": homogeneous})
    for name in LITERATURE_ROWS:
        for q in ("ham_t_queries", "state_prep_queries"):
            table.add_row([name, q, *([NOT_IMPLEMENTED] * 4)], "literature")
    for label, method in (("time-marching", "tm"), ("LCHS", "lchs")):
        reps = []
        for scen, e in cells:
            if method == "tm":
                Q = n["Q_hist"] if scen == "history_inhomo" else n["Q"]
                reps.append(timemarching.tm_resource_estimate(scen, alpha_A, T, e, eps_tol, Q, n))
            else:
                reps.append(lchs.lchs_resource_estimate(scen, alpha_A, T, e, beta, eps_tol, n))
        table.add_row([label, "ham_t_queries", *[r.ham_t_queries for r in reps]],
                      ["bound", "bound"] + ["bound"] * 4)
        table.add_row([label, "state_prep_queries", *[r.state_prep_queries for r in reps]],
                      ["bound", "bound"] + ["bound"] * 4)
    return table


# ---------------------------------------------------------------------------
# convergence studies


def _orders(params: list[float], errors: list[float]) -> list[float | None]:
    out: list[float | None] = [None]
    for i in range(1, len(params)):
        e0, e1, p0, p1 = errors[i - 1], errors[i], params[i - 1], params[i]
        if e0 > 0 and e1 > 0 and p0 > 0 and p1 > 0 and p1 != p0:
            out.append(math.log(e0 / e1) / math.log(p1 / p0))
        else:
            out.append(None)
    return out


def convergence_study(study: str, ladder, problem: ODEProblem | None = None, *,
                      h: float = 0.5, a: float = -1.0, eps_a: float = 1e-3,
                      beta: float = lchs.DEFAULT_BETA, seed: int = 0) -> ResultTable:
    """Measured error vs the predicted bound along a refinement ladder.

    * ``dyson``: truncation orders on du/dt = a u over one step h; bound
      |a h|^{m+1}/(m+1)! (leading term of the exponential tail).
    * ``lchs-K``: multiples of the planned K at fixed node count and panel
      width; operator error against the reference propagator.
    * ``quadrature``: Gauss-Legendre n on int_0^1 e^x dx with the printed bound.
    """
    ladder = [float(x) for x in ladder]
    if len(ladder) < 3:
        raise ConfigError("params/ladder: need at least 3 refinement levels")
    table = ResultTable(["level", "parameter", "measured_error", "predicted", "empirical_order"],
                        meta={"study": study})
    params, errors, preds = [], [], []
    if study == "dyson":
        gen = constant_generator(np.array([[a]]))
        exact = math.exp(a * h)
        for m in ladder:
            order = int(m)
            blk = timemarching.dyson_step(gen, 0.0, h, order)
            params.append(float(order))
            errors.append(abs(complex(blk.matrix[0, 0]) - exact))
            preds.append(abs(a * h) ** (order + 1) / math.factorial(order + 1))
        table.meta.update({"a": a, "h": h})
    elif study == "lchs-K":
        if problem is None:
            rng = np.random.default_rng(seed)
            gen = random_generator(4, rng, eta=0.2, kind="dissipative")
            problem = make_problem(gen, np.ones(4), 1.0, eta=0.2)
        gen, T = problem.gen, problem.T
        cal = lchs.calibrate_k_constants(beta, eps_a)
        aL = max(gen.alpha_L((0.0, T)), 1e-12)
        exact = propagate_reference(gen, 0.0, T, 1e-12)
        for f in ladder:
            grid = lchs.plan_k_grid(beta, eps_a, T, aL, cal.c_K * f, cal.c_Q)
            op = lchs.lchs_operator(gen, grid, 0.0, T, tol=min(1e-6, 0.01 * eps_a))
            params.append(grid.K)
            errors.append(opnorm(op - exact))
            preds.append(lchs.tail_mass(grid.K, beta))
        table.meta.update({"eps_a": eps_a, "beta": beta, "c_K": cal.c_K, "c_Q": cal.c_Q,
                           "K_multiples": ladder, "T": T})
    elif study == "quadrature":
        exact = math.e - 1.0
        for n in ladder:
            rule = gauss_legendre(int(n), 0.0, 1.0)
            params.append(float(int(n)))
            errors.append(abs(float(rule.weights @ np.exp(rule.nodes)) - exact))
            preds.append(quadrature_error_bound(0.0, 1.0, int(n), math.e))
    else:
        raise ConfigError(f"params/study: unknown study {study!r}")
    orders = _orders(params, errors)
    for i, (p, e, b, o) in enumerate(zip(params, errors, preds, orders)):
        table.add_row([i, p, e, b, o], ["bound", "bound", "emulated", "bound", "emulated"])
    return table


# ---------------------------------------------------------------------------
# applications


def application_table(problem: ODEProblem, n_samples: int = 32, pairs: int = 10,
                      seed: int = 0) -> ResultTable:
    """Dissipation summary of a generated application problem."""
    meta = problem.meta
    ts = np.linspace(0.0, problem.T, n_samples)
    Ls, Hs = problem.gen.split_samples(ts)
    lam = float(np.max(np.linalg.eigvalsh(Ls)[:, -1]))
    A = problem.gen.samples(ts)
    herm = float(np.max(np.abs(A + np.conj(np.swapaxes(A, 1, 2)) - 2 * Ls)))
    rep = check_decay(problem, pairs, 1e-9, seed)
    table = ResultTable(["quantity", "value"], meta={k: v for k, v in meta.items()})
    rows = [("dim", problem.dim, "bound"), ("eta_problem", problem.eta, "bound"),
            ("lambda_max_L", lam, "reference"), ("cartesian_residual", herm, "reference"),
            ("decay_max_violation", rep.max_violation, "reference")]
    for key in ("eta_rigorous", "eta_asymptotic", "eta_spec"):
        if key in meta:
            rows.append((key, meta[key], "bound"))
    for name, value, tag in rows:
        table.add_row([name, value], ["bound", tag])
    if not rep.ok:
        raise ToleranceFailure(f"decay bound violated by {rep.max_violation:.3e}")
    return table


# ---------------------------------------------------------------------------
# dispatcher


@dataclass
class RunResult:
    table: ResultTable
    csv_path: Path
    json_path: Path
    wall_time: float


def _method_opts(cfg: ExperimentConfig) -> dict:
    m = cfg.method
    opts = {"fast_forward": bool(m.get("fast_forward", False)),
            "beta": float(m.get("beta", lchs.DEFAULT_BETA)), "mode": m.get("mode", "ideal"),
            "constants": dict(m.get("constants", {}))}
    if "h" in m:
        opts["h"] = float(m["h"])
    return opts


def build_table(cfg: ExperimentConfig) -> ResultTable:
    kind, p = cfg.kind, cfg.params
    if kind == "decay-curves":
        problem = build_problem(cfg.problem, cfg.seed)
        return emit_decay_curves(problem, int(p.get("n_points", 101)))
    if kind in ("tm-emulate", "lchs-emulate"):
        problem = build_problem(cfg.problem, cfg.seed)
        method = "tm" if kind == "tm-emulate" else "lchs"
        return emulation_table(problem, method, cfg.method["scenario"],
                               float(cfg.method["eps_tol"]), seed=cfg.seed, **_method_opts(cfg))
    if kind == "scan-T":
        opts = _method_opts(cfg)
        opts.setdefault("fast_forward", True)
        return scan_T(cfg.problem, p["T_list"], cfg.method["name"], cfg.method["scenario"],
                      float(cfg.method["eps_tol"]), seed=cfg.seed,
                      workers=int(p.get("workers", 1)), **opts)
    if kind == "estimate-table":
        return estimate_table(float(p["T"]), float(p["eps_tol"]), float(p.get("alpha_A", 1.0)),
                              float(p.get("eta", 1.0)), float(p.get("beta", lchs.DEFAULT_BETA)),
                              bool(p.get("homogeneous", False)), p.get("norms"))
    if kind == "convergence":
        problem = build_problem(cfg.problem, cfg.seed) if cfg.problem else None
        return convergence_study(p["study"], p["ladder"], problem, h=float(p.get("h", 0.5)),
                                 a=float(p.get("a", -1.0)), eps_a=float(p.get("eps_a", 1e-3)),
                                 beta=float(p.get("beta", lchs.DEFAULT_BETA)), seed=cfg.seed)
    if kind in ("app-rd", "app-nonhermitian"):
        spec = resolve_problem_spec(cfg.problem)
        want = "reaction-diffusion" if kind == "app-rd" else "non-hermitian"
        if spec.get("type") != want:
            raise ConfigError(f"problem/type: {kind} needs a {want} problem")
        problem = build_problem(spec, cfg.seed)
        return application_table(problem, seed=cfg.seed)
    raise ConfigError(f"kind: unknown experiment kind {kind!r}")


def run(cfg: ExperimentConfig, out: str | Path | None = None) -> RunResult:
    """Run one experiment and write ``<stem>.csv`` plus its JSON sidecar."""
    t0 = time.perf_counter()
    table = build_table(cfg)
    wall = time.perf_counter() - t0
    table.meta.update({"config_hash": cfg.config_hash(), "seed": cfg.seed, "kind": cfg.kind})
    path = Path(out) if out is not None else cfg.output_dir() / f"{cfg.stem}.csv"
    csv_path, json_path = write_artifacts(table, path, cfg.to_dict(), wall)
    return RunResult(table, csv_path, json_path, wall)
