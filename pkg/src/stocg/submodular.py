"""Set functions, their multilinear extension, and discrete diagnostics.

Subsets are bitmasks (bit ``i`` set means element ``i`` is in the set) or,
in batched routines, boolean arrays of shape ``(m, n)``.
"""
from __future__ import annotations

import itertools
import warnings
from typing import Callable, Iterable

import numpy as np

from . import kernels
from .linear_oracles import Matroid, PartitionMatroid, UniformMatroid

MAX_EXACT_N = 20
MAX_CURVATURE_N = 16


def as_mask(S) -> int:
    """Bitmask from an int, a boolean membership vector, or an iterable of elements."""
    if isinstance(S, (int, np.integer)):
        return int(S)
    if isinstance(S, np.ndarray) and S.dtype == bool:
        S = np.flatnonzero(S)
    m = 0
    for i in S:
        m |= 1 << int(i)
    return m


def mask_to_bool(mask: int, n: int) -> np.ndarray:
    return np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)


def bool_to_masks(B: np.ndarray) -> np.ndarray:
    B = np.asarray(B, dtype=bool)
    weights = np.left_shift(np.int64(1), np.arange(B.shape[-1], dtype=np.int64))
    return B.astype(np.int64) @ weights


def mask_to_set(mask: int) -> frozenset:
    return frozenset(i for i in range(mask.bit_length()) if mask >> i & 1)


class SetFunction:
    """A set function on ``range(n)``.

    Stochastic functions (``n_samples`` not ``None``) are averages of
    ``n_samples`` component functions; :meth:`sample_z` draws component
    indices for unbiased estimates.
    """

    n: int
    n_samples: int | None = None
    monotone: bool | None = None

    def value(self, S) -> float:
        raise NotImplementedError

    def __call__(self, S) -> float:
        return self.value(S)

    def values_all(self) -> np.ndarray:
        """``f`` on every bitmask, computed once and cached."""
        cached = getattr(self, "_values_all", None)
        if cached is None:
            _guard_exact(self.n)
            cached = self._compute_values_all()
            cached.flags.writeable = False
            self._values_all = cached
        return cached

    def _compute_values_all(self) -> np.ndarray:
        return np.array([self.value(m) for m in range(1 << self.n)], dtype=float)

    def value_many(self, B: np.ndarray) -> np.ndarray:
        """Values for a batch of subsets given as a boolean ``(m, n)`` array."""
        B = np.asarray(B, dtype=bool)
        if self.n <= MAX_EXACT_N:
            return self.values_all()[bool_to_masks(B)]
        return np.array([self.value(int(m)) for m in bool_to_masks(B)])

    def sample_z(self, rng: np.random.Generator, size: int):
        return None

    def component_value(self, S, z) -> float:
        """``f(S, z)``; deterministic functions ignore ``z``."""
        return self.value(S)

    def marginal_estimate(self, S: np.ndarray, z=None) -> np.ndarray:
        """Mean over rows ``b`` of ``f(S_b + i, z_b) - f(S_b - i, z_b)`` for every ``i``.

        Generic path: ``n + 1`` evaluations per row, reusing ``f(S_b)``.
        """
        S = np.atleast_2d(np.asarray(S, dtype=bool))
        out = np.zeros(self.n)
        for r, row in enumerate(S):
            zr = None if z is None else z[r]
            base_mask = as_mask(np.flatnonzero(row))
            base = self.component_value(base_mask, zr)
            for i in range(self.n):
                bit = 1 << i
                if row[i]:
                    out[i] += base - self.component_value(base_mask & ~bit, zr)
                else:
                    out[i] += self.component_value(base_mask | bit, zr) - base
        return out / S.shape[0]


def _guard_exact(n: int) -> None:
    if n > MAX_EXACT_N:
        raise ValueError(f"exhaustive computation limited to n <= {MAX_EXACT_N} (got n={n}); "
                         "use the sampled estimators instead")


class CallableSetFunction(SetFunction):
    """Deterministic set function from a callable on bitmasks."""

    def __init__(self, n: int, fn: Callable[[int], float], monotone: bool | None = None):
        self.n = int(n)
        self._fn = fn
        self.monotone = monotone

    def value(self, S) -> float:
        return float(self._fn(as_mask(S)))


class EmpiricalSetFunction(SetFunction):
    """Average over users of a per-user valuation of an item set.

    ``kind`` is ``"facility"`` (best rating in the set), ``"concave"``
    (square root of summed ratings) or ``"modular"`` (summed ratings).
    """

    KINDS = ("facility", "concave", "modular")

    def __init__(self, R, kind: str):
        R = np.array(R, dtype=float)
        if R.ndim != 2:
            raise ValueError("ratings must be a users x items matrix")
        if np.any(R < 0) or not np.all(np.isfinite(R)):
            raise ValueError("ratings must be finite and non-negative")
        if kind not in self.KINDS:
            raise ValueError(f"unknown valuation {kind!r}")
        R.flags.writeable = False
        self.R = R
        self.kind = kind
        self.n_samples, self.n = R.shape
        self.monotone = True

    def user_values(self, S: np.ndarray, users=None) -> np.ndarray:
        """Per-user values of one subset ``S`` (boolean vector)."""
        rows = self.R if users is None else self.R[np.asarray(users)]
        cols = rows[:, np.asarray(S, dtype=bool)]
        if self.kind == "facility":
            return cols.max(axis=1) if cols.shape[1] else np.zeros(rows.shape[0])
        s = cols.sum(axis=1)
        return np.sqrt(s) if self.kind == "concave" else s

    def value(self, S) -> float:
        if not (isinstance(S, np.ndarray) and S.dtype == bool):
            S = mask_to_bool(as_mask(S), self.n)
        return float(np.mean(self.user_values(S)))

    def component_value(self, S, z) -> float:
        S = mask_to_bool(as_mask(S), self.n)
        return float(self.user_values(S, [z])[0])

    def _compute_values_all(self) -> np.ndarray:
        if self.kind == "facility":
            return kernels.subset_values_facility(self.R)
        if self.kind == "concave":
            return kernels.subset_values_concave(self.R)
        means = self.R.mean(axis=0)
        out = np.zeros(1 << self.n)
        for i in range(self.n):
            lo = 1 << i
            out[lo:2 * lo] = out[:lo] + means[i]
        return out

    def sample_z(self, rng, size):
        return rng.integers(0, self.n_samples, size=size)

    def marginal_estimate(self, S, z=None):
        S = np.atleast_2d(np.asarray(S, dtype=bool))
        users = np.arange(S.shape[0]) % self.n_samples if z is None else np.asarray(z)
        if z is None:
            # exact expectation over users for each sampled set
            return np.mean([self._marginals_all_users(row) for row in S], axis=0)
        if self.kind == "facility":
            return kernels.facility_marginals(self.R, users, S)
        if self.kind == "concave":
            return kernels.concave_marginals(self.R, users, S)
        return self.R[users].mean(axis=0)

    def _marginals_all_users(self, row):
        users = np.arange(self.n_samples)
        rep = np.repeat(row[None, :], self.n_samples, axis=0)
        if self.kind == "facility":
            return kernels.facility_marginals(self.R, users, rep)
        if self.kind == "concave":
            return kernels.concave_marginals(self.R, users, rep)
        return self.R.mean(axis=0)

    @property
    def max_singleton(self) -> float:
        if self.kind == "modular":
            return float(self.R.mean(axis=0).max(initial=0.0))
        v = self.R.mean(axis=0) if self.kind == "facility" else np.sqrt(self.R).mean(axis=0)
        return float(v.max(initial=0.0))


def facility_location(R) -> EmpiricalSetFunction:
    """``f(S) = mean_u max_{j in S} R[u, j]`` with ``f(empty) = 0``."""
    return EmpiricalSetFunction(R, "facility")


def concave_over_modular(R) -> EmpiricalSetFunction:
    """``f(S) = mean_u sqrt(sum_{j in S} R[u, j])``."""
    return EmpiricalSetFunction(R, "concave")


def modular(R) -> EmpiricalSetFunction:
    R = np.asarray(R, dtype=float)
    return EmpiricalSetFunction(R[None, :] if R.ndim == 1 else R, "modular")


class CutFunction(SetFunction):
    """Weighted cut of an undirected graph: total weight of edges leaving ``S``."""

    def __init__(self, edges: Iterable, n: int | None = None):
        parsed = []
        for e in edges:
            a, b = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) > 2 else 1.0
            if w < 0:
                raise ValueError("cut weights must be non-negative")
            parsed.append((a, b, w))
        n = (max(max(a, b) for a, b, _ in parsed) + 1 if parsed else 0) if n is None else int(n)
        self.n = n
        self.edges = parsed
        W = np.zeros((n, n))
        for a, b, w in parsed:
            if a != b:
                W[a, b] += w
                W[b, a] += w
        W.flags.writeable = False
        self.W = W
        self.monotone = False

    def value(self, S) -> float:
        s = mask_to_bool(as_mask(S), self.n).astype(float)
        return float(s @ self.W @ (1.0 - s))

    def _compute_values_all(self) -> np.ndarray:
        masks = np.arange(1 << self.n, dtype=np.int64)
        out = np.zeros(masks.shape[0])
        for a, b, w in self.edges:
            if a != b:
                out += w * (((masks >> a) ^ (masks >> b)) & 1)
        return out

    def marginal_estimate(self, S, z=None):
        S = np.atleast_2d(np.asarray(S, dtype=bool)).astype(float)
        # f(S+i) - f(S-i) = sum_j W_ij (1 - 2 [j in S])
        return ((1.0 - 2.0 * S) @ self.W).mean(axis=0)

    @property
    def max_singleton(self) -> float:
        return float(self.W.sum(axis=1).max(initial=0.0))


def cut_function(edges, n: int | None = None) -> CutFunction:
    return CutFunction(edges, n)


def random_cut_graph(n: int, p: float = 0.5, seed: int = 0, max_weight: int = 3) -> list[tuple[int, int, float]]:
    """Erdos-Renyi edge list with integer weights in ``1..max_weight``."""
    rng = np.random.default_rng(seed)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges.append((i, j, float(rng.integers(1, max_weight + 1))))
    return edges


def max_singleton(f: SetFunction) -> float:
    """``m_f = max_i f({i})``."""
    ms = getattr(f, "max_singleton", None)
    if ms is not None:
        return float(ms)
    return max((f.value(1 << i) for i in range(f.n)), default=0.0)


# ------------------------------------------------------------ multilinear


def _contract(T: np.ndarray, xs) -> np.ndarray:
    for xj in xs:
        T = T[0] * (1.0 - xj) + T[1] * xj
    return T


def _check_point(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"point has shape {x.shape}, expected ({n},)")
    if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        raise ValueError("multilinear extension is defined on [0, 1]^n")
    return x


def multilinear_exact(f: SetFunction, x) -> float:
    """``F(x) = sum_S f(S) prod_{i in S} x_i prod_{j not in S} (1 - x_j)`` by enumeration."""
    _guard_exact(f.n)
    x = _check_point(x, f.n)
    V = f.values_all().reshape((2,) * f.n) if f.n else f.values_all()
    return float(_contract(V, x[::-1]))


def multilinear_grad_exact(f: SetFunction, x) -> np.ndarray:
    """``dF/dx_i = F(x; x_i <- 1) - F(x; x_i <- 0)`` for every ``i``."""
    _guard_exact(f.n)
    x = _check_point(x, f.n)
    n = f.n
    V = f.values_all().reshape((2,) * n)
    grad = np.zeros(n)
    for i in range(n):
        axis = n - 1 - i
        D = np.take(V, 1, axis=axis) - np.take(V, 0, axis=axis)
        rest = [x[j] for j in range(n - 1, -1, -1) if j != i]
        grad[i] = float(_contract(D, rest))
    return grad


def sample_grad_estimate(f: SetFunction, x, rng: np.random.Generator, batch: int = 1) -> np.ndarray:
    """Unbiased estimate of the multilinear gradient: one set (and one component) per draw.

    Each draw samples ``S`` by independent inclusion with probabilities ``x``
    and returns the vector of ``f(S + i, z) - f(S - i, z)``; ``batch`` draws
    are averaged.
    """
    x = np.asarray(x, dtype=float)
    if batch < 1:
        raise ValueError("batch must be >= 1")
    z = f.sample_z(rng, batch)
    S = rng.random((batch, f.n)) < x
    return f.marginal_estimate(S, z)


class MultilinearOracle:
    """Gradient oracle for the multilinear extension of ``f``."""

    def __init__(self, f: SetFunction, mc_samples: int = 10_000, mc_seed: int = 0):
        self.f = f
        self.shape = (f.n,)
        self.exact_available = f.n <= MAX_EXACT_N
        self._mc_samples = mc_samples
        self._mc_seed = mc_seed

    def sample(self, x, rng, batch: int = 1):
        return sample_grad_estimate(self.f, x, rng, batch)

    def exact(self, x):
        return multilinear_grad_exact(self.f, np.clip(x, 0.0, 1.0))

    def objective(self, x) -> float:
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        if self.exact_available:
            return multilinear_exact(self.f, x)
        return multilinear_mc(self.f, x, np.random.default_rng(self._mc_seed), self._mc_samples)

    @property
    def objective_is_exact(self) -> bool:
        return self.exact_available


def multilinear_mc(f: SetFunction, x, rng, samples: int = 10_000) -> float:
    """Monte Carlo estimate of ``F(x)`` with independently sampled sets."""
    B = rng.random((samples, f.n)) < np.asarray(x)
    return float(np.mean(f.value_many(B)))


# ------------------------------------------------------------ diagnostics


CURVATURE_SNAP = 1e-12


def curvature(f: SetFunction) -> float:
    """``c = 1 - min_{S, j not in S} (f(S + j) - f(S)) / f({j})`` by exhaustive search.

    Elements with ``f({j}) = 0`` are skipped; if every element is skipped the
    curvature is reported as 0 with a warning.
    """
    if f.n > MAX_CURVATURE_N:
        raise ValueError(f"curvature enumeration limited to n <= {MAX_CURVATURE_N}")
    vals = f.values_all()
    masks = np.arange(1 << f.n, dtype=np.int64)
    best = np.inf
    for j in range(f.n):
        bit = 1 << j
        single = vals[bit]
        if single <= 0:
            continue
        base = masks[(masks & bit) == 0]
        best = min(best, float(np.min((vals[base | bit] - vals[base]) / single)))
    if best == np.inf:
        warnings.warn("curvature undefined: every singleton has zero value; reporting 0", RuntimeWarning,
                      stacklevel=2)
        return 0.0
    c = 1.0 - best
    # marginal ratios carry roundoff from the per-user averages
    if abs(c) <= CURVATURE_SNAP:
        return 0.0
    if abs(c - 1.0) <= CURVATURE_SNAP:
        return 1.0
    return float(min(max(c, 0.0), 1.0))


def weak_dr_gamma_estimate(grad: Callable[[np.ndarray], np.ndarray], n: int, resolution: int,
                           rng: np.random.Generator, trials: int = 1000) -> float:
    """Upper-bound estimate of the weak-DR ratio ``inf_{x <= y, i} grad(x)_i / grad(y)_i``.

    Points live on the grid ``{0, 1/resolution, ..., 1}^n``. When the grid has
    at most ``trials`` comparable pairs they are all enumerated, otherwise
    ``trials`` random pairs are drawn. The true infimum can only be smaller.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    m = resolution + 1
    per_coord = [(a, b) for a in range(m) for b in range(a, m)]
    total = len(per_coord) ** n

    def pairs():
        if total <= trials:
            for combo in itertools.product(per_coord, repeat=n):
                xs = np.array([c[0] for c in combo])
                ys = np.array([c[1] for c in combo])
                yield xs, ys
        else:
            for _ in range(trials):
                xs = rng.integers(0, m, n)
                ys = xs + rng.integers(0, m - xs)
                yield xs, ys

    best = np.inf
    for xs, ys in pairs():
        gx = np.asarray(grad(xs / resolution), dtype=float)
        gy = np.asarray(grad(ys / resolution), dtype=float)
        if np.any(gx <= 0) or np.any(gy <= 0):
            raise ValueError("weak-DR estimate requires strictly positive gradients")
        best = min(best, float(np.min(gx / gy)))
    return best


# ------------------------------------------------------------ rounding


def _pipage_block(xb: np.ndarray, rng, trials: int) -> np.ndarray:
    if xb.shape[0] == 0:
        return np.zeros((trials, 0), dtype=bool)
    U = rng.random((trials, xb.shape[0]))
    return kernels.pipage_batch(xb, U).astype(bool)


def pipage_round_many(x, constraint, rng: np.random.Generator, trials: int) -> np.ndarray:
    """``trials`` independent randomized pipage roundings of ``x``; boolean ``(trials, n)``.

    ``constraint`` is an integer budget (uniform matroid), a
    :class:`UniformMatroid` or a :class:`PartitionMatroid`.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < -1e-9) or np.any(x > 1 + 1e-9):
        raise ValueError("pipage rounding needs x in [0, 1]^n")
    x = np.clip(x, 0.0, 1.0)
    if isinstance(constraint, (int, np.integer, float)) and not isinstance(constraint, bool):
        constraint = UniformMatroid(x.shape[0], int(constraint))
    if isinstance(constraint, UniformMatroid):
        if x.sum() > constraint.k + 1e-9:
            raise ValueError(f"sum(x) = {x.sum():.6g} exceeds the budget {constraint.k}")
        return _pipage_block(x, rng, trials)
    if isinstance(constraint, PartitionMatroid):
        out = np.zeros((trials, x.shape[0]), dtype=bool)
        for part, cap in zip(constraint.parts, constraint.caps):
            idx = list(part)
            if x[idx].sum() > cap + 1e-9:
                raise ValueError(f"block {part} has mass {x[idx].sum():.6g} over its capacity {cap}")
            out[:, idx] = _pipage_block(x[idx], rng, trials)
        return out
    raise TypeError("pipage rounding supports uniform and partition matroids only")


def pipage_round(x, constraint, rng: np.random.Generator) -> frozenset:
    """One mean-preserving randomized rounding of ``x`` to a feasible set."""
    row = pipage_round_many(x, constraint, rng, 1)[0]
    return frozenset(int(i) for i in np.flatnonzero(row))


# ------------------------------------------------------------ brute force


def brute_force_opt(f: SetFunction, constraint) -> tuple[frozenset, float]:
    """Exhaustive maximum of ``f`` over independent sets (lowest bitmask among ties)."""
    _guard_exact(f.n)
    if isinstance(constraint, (int, np.integer)):
        constraint = UniformMatroid(f.n, int(constraint))
    if not isinstance(constraint, Matroid):
        raise TypeError("constraint must be a matroid or an integer budget")
    masks = constraint.independent_masks()
    vals = f.values_all()[masks]
    best = int(np.argmax(vals))
    return mask_to_set(int(masks[best])), float(vals[best])
