"""Time the compiled RK4 kernels against the numpy fallback.

Run from the repository root after an editable install::

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --steps 4000 --dim 16 --repeat 5

Each case runs both backends on identical inputs, reports the best wall time
of ``--repeat`` runs, the speedup, and the largest elementwise difference
between the two results.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ffode import _kernels_py, kernels

try:
    from ffode import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on build
    _compiled = None


def _samples(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    X = rng.normal(size=(n, d, d)) + 1j * rng.normal(size=(n, d, d))
    return X / (2 * np.sqrt(d))


def _best(fn, repeat: int) -> tuple[float, object]:
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _diff(a, b) -> float:
    if isinstance(a, tuple):
        return max(_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)), initial=0.0))


def cases(steps: int, dim: int, batch: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    hs = np.full(steps, 1.0 / steps)
    S = _samples(rng, 2 * steps + 1, dim)
    u0 = rng.normal(size=dim) + 0j
    L = -np.abs(_samples(rng, 2 * steps + 1, dim))
    L = 0.5 * (L + L.conj().transpose(0, 2, 1))
    H = 0.5 * (S + S.conj().transpose(0, 2, 1))
    ks = np.linspace(-5, 5, batch)
    U0 = np.tile(u0, (batch, 1))
    return {
        "rk4_matrix": lambda impl: kernels.rk4_matrix(S, hs, np.eye(dim, dtype=complex), impl=impl),
        "rk4_march": lambda impl: kernels.rk4_march(S, hs, u0, impl=impl),
        "rk4_family": lambda impl: kernels.rk4_family(L, H, ks, hs, U0, impl=impl),
    }


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--batch", type=int, default=32, help="k-nodes for rk4_family")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if _compiled is None:
        print("compiled extension not built; only the fallback is available")
        return 1
    print(f"steps={args.steps} dim={args.dim} batch={args.batch} repeat={args.repeat}")
    print(f"{'kernel':<12} {'cython s':>10} {'python s':>10} {'speedup':>9} {'max diff':>10}")
    for name, run in cases(args.steps, args.dim, args.batch, args.seed).items():
        tc, oc = _best(lambda: run(_compiled), args.repeat)
        tp, op = _best(lambda: run(_kernels_py), args.repeat)
        print(f"{name:<12} {tc:>10.4f} {tp:>10.4f} {tp / tc:>8.1f}x {_diff(oc, op):>10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
