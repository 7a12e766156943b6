"""Time the compiled kernels against the numpy fallback on identical inputs.

    python benchmarks/bench_kernels.py [--repeat 5] [--quick]

Each kernel is run on both backends, outputs are compared, and the best wall
time of ``--repeat`` runs is reported with the speedup of the compiled path.
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from stocg.kernels import available_backends, get_backend
from stocg.ratings import synthetic_ratings


def cases(quick: bool):
    rng = np.random.default_rng(0)
    users, items = (50, 10) if quick else (50, 14)
    R = synthetic_ratings(users, items, 0.3, seed=1).astype(np.float64)
    b = 2000 if quick else 20000
    draw = rng.integers(0, users, b)
    S = rng.random((b, items)) < 0.4
    trials = 2000 if quick else 20000
    x = rng.random(12)
    x *= 4 / x.sum()
    U = rng.random((trials, 12))
    m = 40 if quick else 120
    A = rng.normal(size=(m, m))
    G = (A + A.T) / 2
    v0 = np.ones(m) / np.sqrt(m)
    return [
        ("subset_values_facility", (R,), f"{users}x{items} ratings, all 2^{items} sets"),
        ("subset_values_concave", (R,), f"{users}x{items} ratings, all 2^{items} sets"),
        ("facility_marginals", (R, draw, S), f"{b} draws"),
        ("concave_marginals", (R, draw, S), f"{b} draws"),
        ("pipage_batch", (x, U), f"{trials} roundings, n=12"),
        ("power_iteration_min", (G, 1e-10, 100000, v0), f"{m}x{m} symmetric"),
    ]


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        # eigenvector sign is arbitrary; compare the eigenvalue only
        return bool(np.isclose(a[0], b[0], rtol=1e-7))
    return bool(np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-9, atol=1e-12))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="small inputs for a smoke run")
    args = ap.parse_args(argv)
    backends = available_backends()
    if "compiled" not in backends:
        print("compiled kernels not built; timing the python backend only", file=sys.stderr)
    mods = {name: get_backend(name) for name in backends}
    print(f"{'kernel':<24}{'input':<34}" + "".join(f"{b + ' [ms]':>16}" for b in backends)
          + ("   speedup  match" if len(backends) == 2 else ""))
    ok = True
    for name, inputs, desc in cases(args.quick):
        times, outs = {}, {}
        for b, mod in mods.items():
            fn = getattr(mod, name)
            outs[b] = fn(*inputs)
            times[b] = min(timeit.repeat(lambda: fn(*inputs), number=1, repeat=args.repeat)) * 1e3
        line = f"{name:<24}{desc:<34}" + "".join(f"{times[b]:>16.3f}" for b in backends)
        if len(backends) == 2:
            match = _same(outs["compiled"], outs["python"])
            ok &= match
            line += f"{times['python'] / times['compiled']:>10.1f}x  {'yes' if match else 'NO'}"
        print(line)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
