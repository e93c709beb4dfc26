"""Versioned JSON experiment configuration and problem construction.

A config is a JSON object::

    {"schema_version": 1, "kind": "decay-curves", "seed": 0,
     "problem": {...}, "method": {...}, "params": {...},
     "output": {"dir": "...", "stem": "..."}}

``problem`` is either ``{"preset": "<name>"}`` (the problem section of a
shipped preset) or an inline spec whose ``type`` is one of ``matrix``,
``scalar``, ``random``, ``reaction-diffusion`` or ``non-hermitian``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ..applications import (
    as_coefficient,
    build_non_hermitian,
    build_reaction_diffusion,
    constant_non_hermitian,
    make_reaction_diffusion,
    random_non_hermitian,
)
from ..errors import ConfigError
from ..linalg import ODEProblem, constant_generator, make_problem, random_generator

SCHEMA_VERSION = 1
OUTPUT_ENV = "FFODE_OUTPUT_DIR"
DEFAULT_OUTPUT = "ffode-out"

KINDS = ("decay-curves", "tm-emulate", "lchs-emulate", "scan-T", "estimate-table",
         "convergence", "app-rd", "app-nonhermitian")
PROBLEM_TYPES = ("matrix", "scalar", "random", "reaction-diffusion", "non-hermitian")
SCENARIOS = ("final_homo", "final_inhomo", "history_homo", "history_inhomo")
STUDIES = ("dyson", "lchs-K", "quadrature")

_number = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

SCHEMA: dict = {
    "type": "object",
    "required": ["schema_version", "kind"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"enum": list(KINDS)},
        "seed": {"type": "integer", "minimum": 0},
        "label": {"type": "string"},
        "problem": {
            "type": "object",
            "properties": {
                "preset": {"type": "string"},
                "type": {"enum": list(PROBLEM_TYPES)},
                "T": _pos,
                "eta": _pos,
                "dim": {"type": "integer", "minimum": 1},
            },
            "oneOf": [{"required": ["preset"]}, {"required": ["type"]}],
        },
        "method": {
            "type": "object",
            "properties": {
                "name": {"enum": ["tm", "lchs"]},
                "scenario": {"enum": list(SCENARIOS)},
                "fast_forward": {"type": "boolean"},
                "eps_tol": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "h": _pos,
                "mode": {"enum": ["ideal", "budgeted"]},
                "constants": {"type": "object", "additionalProperties": _pos},
            },
        },
        "params": {
            "type": "object",
            "properties": {"n_points": {"type": "integer", "minimum": 2},
                           "workers": {"type": "integer", "minimum": 1}},
        },
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"}, "stem": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "allOf": [
        {"if": {"properties": {"kind": {"enum": ["decay-curves", "tm-emulate", "lchs-emulate",
                                                 "scan-T", "app-rd", "app-nonhermitian"]}}},
         "then": {"required": ["problem"]}},
        {"if": {"properties": {"kind": {"enum": ["tm-emulate", "lchs-emulate"]}}},
         "then": {"properties": {"method": {"required": ["scenario", "eps_tol"]}},
                  "required": ["method"]}},
        {"if": {"properties": {"kind": {"const": "scan-T"}}},
         "then": {"required": ["method", "params"],
                  "properties": {
                      "method": {"required": ["name", "scenario", "eps_tol"]},
                      "params": {"required": ["T_list"],
                                 "properties": {"T_list": {"type": "array", "minItems": 1,
                                                           "items": _pos}}}}}},
        {"if": {"properties": {"kind": {"const": "estimate-table"}}},
         "then": {"required": ["params"],
                  "properties": {"params": {"required": ["T", "eps_tol"],
                                            "properties": {"T": _pos, "eps_tol": _pos,
                                                           "alpha_A": _pos, "eta": _pos}}}}},
        {"if": {"properties": {"kind": {"const": "convergence"}}},
         "then": {"required": ["params"],
                  "properties": {"params": {
                      "required": ["study", "ladder"],
                      "properties": {"study": {"enum": list(STUDIES)},
                                     "ladder": {"type": "array", "minItems": 3,
                                                "items": _number}}}}}},
    ],
}


@dataclass
class ExperimentConfig:
    kind: str
    problem: dict | None = None
    method: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seed: int = 0
    label: str = ""
    output: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        d = {"schema_version": self.schema_version, "kind": self.kind, "seed": self.seed,
             "method": self.method, "params": self.params, "output": self.output}
        if self.problem is not None:
            d["problem"] = self.problem
        if self.label:
            d["label"] = self.label
        return d

    def config_hash(self) -> str:
        """sha256 of the canonical JSON, ignoring output locations."""
        d = self.to_dict()
        d.pop("output", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def stem(self) -> str:
        return self.output.get("stem") or self.label or self.kind

    def output_dir(self) -> Path:
        return Path(self.output.get("dir") or os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))


def _path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    return "/".join(parts) if parts else "<root>"


def validate_config(data: dict) -> ExperimentConfig:
    """Check ``data`` against the schema; errors name the offending field path."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = "; ".join(f"{_path(e)}: {e.message}" for e in errors[:5])
        raise ConfigError(f"invalid config: {msgs}")
    cfg = ExperimentConfig(kind=data["kind"], problem=copy.deepcopy(data.get("problem")),
                           method=dict(data.get("method", {})),
                           params=dict(data.get("params", {})), seed=int(data.get("seed", 0)),
                           label=data.get("label", ""), output=dict(data.get("output", {})))
    if cfg.kind in ("tm-emulate", "lchs-emulate") and cfg.method["scenario"].startswith("history"):
        if "h" not in cfg.method:
            raise ConfigError("method/h: history scenarios need a step h")
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return validate_config(data)


# ---------------------------------------------------------------------------
# presets


def preset_names() -> list[str]:
    root = resources.files("ffode.harness") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    root = resources.files("ffode.harness") / "presets"
    f = root / f"{name}.json"
    if not f.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(f.read_text())


def preset_config(name: str) -> ExperimentConfig:
    return validate_config(load_preset(name))


def resolve_problem_spec(spec: dict) -> dict:
    """Inline the problem section of a preset; inline keys override it."""
    if "preset" not in spec:
        return spec
    base = load_preset(spec["preset"]).get("problem")
    if base is None:
        raise ConfigError(f"problem/preset: preset {spec['preset']!r} has no problem section")
    merged = {**resolve_problem_spec(base), **{k: v for k, v in spec.items() if k != "preset"}}
    return merged


# ---------------------------------------------------------------------------
# problem construction


def _matrix(value, where: str) -> np.ndarray:
    """Nested lists of reals, or {"re": ..., "im": ...}."""
    try:
        if isinstance(value, dict):
            re = np.asarray(value.get("re", 0.0), dtype=np.float64)
            im = np.asarray(value.get("im", np.zeros_like(re)), dtype=np.float64)
            M = re + 1j * im
        else:
            M = np.asarray(value, dtype=np.complex128)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: not a numeric array ({exc})") from exc
    return M


def _source(spec, dim: int, where: str):
    """b(t) = profile(t) * vector, or None."""
    if spec is None:
        return None
    if isinstance(spec, (list, int, float)):
        spec = {"vector": spec}
    vec = _matrix(spec.get("vector"), f"{where}/vector").reshape(-1)
    if vec.size == 1 and dim > 1:
        vec = np.full(dim, vec[0])
    if vec.size != dim:
        raise ConfigError(f"{where}/vector: expected {dim} entries, got {vec.size}")
    prof = as_coefficient(spec.get("profile", 1.0))

    def b_vec(ts, vec=vec, prof=prof):
        ts = np.atleast_1d(np.asarray(ts, dtype=np.float64))
        return np.asarray(prof(ts), dtype=np.float64)[:, None] * vec[None, :]

    return b_vec


def build_problem(spec: dict, seed: int = 0, T: float | None = None) -> ODEProblem:
    """ODEProblem from a (resolved) problem spec; ``T`` overrides the horizon."""
    spec = resolve_problem_spec(spec)
    kind = spec.get("type")
    T = float(T if T is not None else spec.get("T", 1.0))
    eta = spec.get("eta")
    label = spec.get("label", kind or "problem")
    where = "problem"
    if kind == "scalar":
        a = complex(spec.get("a", -1.0))
        gen = constant_generator(np.array([[a]]), label=label)
        b = spec.get("b")
        b_vec = _source(b, 1, f"{where}/b") if b not in (None, 0, 0.0) else None
        return make_problem(gen, [spec.get("u0", 1.0)], T, b_vec=b_vec, eta=eta, label=label)
    if kind == "matrix":
        if "A" not in spec:
            raise ConfigError(f"{where}/A: matrix problems need A")
        A = _matrix(spec["A"], f"{where}/A")
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigError(f"{where}/A: must be a square matrix")
        gen = constant_generator(A, label=label)
        u0 = _matrix(spec.get("u0", [1.0] * A.shape[0]), f"{where}/u0").reshape(-1)
        return make_problem(gen, u0, T, b_vec=_source(spec.get("b"), A.shape[0], f"{where}/b"),
                            eta=eta, label=label)
    if kind == "random":
        dim = int(spec.get("dim", 4))
        rng = np.random.default_rng(int(spec.get("seed", seed)))
        g_eta = float(spec.get("eta_target", eta if eta is not None else 0.5))
        gen = random_generator(dim, rng, eta=g_eta, kind=spec.get("kind", "dissipative"),
                               n_terms=int(spec.get("n_terms", 2)),
                               scale=float(spec.get("scale", 1.0)),
                               omega_max=float(spec.get("omega_max", 2.0)), t_range=(0.0, T))
        u0 = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        b_vec = None
        if spec.get("inhomogeneous", False):
            bv = rng.normal(size=dim) + 1j * rng.normal(size=dim)
            w = float(rng.uniform(0.3, 2.0))
            b_vec = lambda ts, bv=bv, w=w: (1.0 + 0.5 * np.cos(w * np.atleast_1d(ts)))[:, None] * bv
        if spec.get("zero_u0", False):
            u0 = np.zeros(dim)
        return make_problem(gen, u0, T, b_vec=b_vec, eta=eta, label=label,
                            meta={"recipe": {k: v for k, v in spec.items() if k != "label"},
                                  "seed": int(spec.get("seed", seed))})
    if kind == "reaction-diffusion":
        try:
            rd = make_reaction_diffusion(int(spec.get("d", 1)), int(spec.get("N", 8)),
                                         spec.get("a", 1.0), spec.get("c", 0.0),
                                         spec.get("a_star"), spec.get("f"), label=label)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        return build_reaction_diffusion(rd, T, spec.get("u0"),
                                        dim_cap=int(spec.get("dim_cap", 1024)))
    if kind == "non-hermitian":
        if "random" in spec:
            r = spec["random"]
            nh = random_non_hermitian(int(r.get("dim", 4)),
                                      np.random.default_rng(int(r.get("seed", seed))),
                                      eta=float(r.get("eta", 0.5)),
                                      omega=float(r.get("omega", 1.0)))
        else:
            if "L" not in spec or "H" not in spec:
                raise ConfigError(f"{where}: non-hermitian problems need L and H (or random)")
            nh = constant_non_hermitian(_matrix(spec["L"], f"{where}/L"),
                                        _matrix(spec["H"], f"{where}/H"), spec.get("eta_spec"))
        dim = nh.check(T, 2)
        u0 = _matrix(spec.get("u0", [1.0] * dim), f"{where}/u0").reshape(-1)
        return build_non_hermitian(nh, u0, T)
    raise ConfigError(f"{where}/type: unknown problem type {kind!r}")
