"""Feasible regions and exact linear optimization oracles over them.

Tie-breaking is lowest-index everywhere, and maximization oracles never
select a coordinate whose direction entry is zero.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np

from . import kernels

FEAS_TOL = 1e-9
MAX_ENUM_N = 20


class PowerIterationError(RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


def _vec(d, n: int | None = None, name: str = "direction") -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {d.shape}")
    if n is not None and d.shape[0] != n:
        raise ValueError(f"{name} has length {d.shape[0]}, expected {n}")
    return d


def _order_desc(d: np.ndarray) -> np.ndarray:
    # stable sort on -d puts equal entries in index order
    return np.argsort(-d, kind="stable")


# --------------------------------------------------------------------------- box


@dataclass(frozen=True, eq=False)
class BoxRegion:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds differ in length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper componentwise")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, n: int, lower: float, upper: float) -> "BoxRegion":
        return cls(np.full(n, float(lower)), np.full(n, float(upper)))

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def down_closed(self) -> bool:
        return bool(np.all(self.lower == 0.0))

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = _vec(x, self.n, "point")
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def lmo_min(self, d) -> np.ndarray:
        return lmo_box_min(d, self)

    def lmo_max(self, d) -> np.ndarray:
        d = _vec(d, self.n)
        return np.where(d > 0, self.upper, self.lower)

    def project(self, y) -> np.ndarray:
        return np.clip(_vec(y, self.n, "point"), self.lower, self.upper)

    def vertices(self) -> Iterator[np.ndarray]:
        if self.n > MAX_ENUM_N:
            raise ValueError(f"vertex enumeration limited to n <= {MAX_ENUM_N}")
        for bits in itertools.product((0, 1), repeat=self.n):
            b = np.array(bits, dtype=bool)
            yield np.where(b, self.upper, self.lower)


def lmo_box_min(d, region: BoxRegion) -> np.ndarray:
    """Box corner minimizing ``<d, v>``; zero entries take the lower bound."""
    d = _vec(d, region.n)
    return np.where(d < 0, region.upper, region.lower)


# ------------------------------------------------------------------- cardinality


@dataclass(frozen=True)
class CardinalityPolytope:
    """``{x in [0, 1]^n : sum(x) <= k}``."""

    n: int
    k: float

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be non-negative")
        if not (0 <= self.k <= self.n):
            raise ValueError(f"budget k must satisfy 0 <= k <= n, got k={self.k}, n={self.n}")

    down_closed = True

    @property
    def diameter(self) -> float:
        return float(np.sqrt(min(self.k, self.n))) if self.k >= 1 else float(self.k)

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = _vec(x, self.n, "point")
        return bool(np.all(x >= -tol) and np.all(x <= 1 + tol) and x.sum() <= self.k + tol)

    def lmo_max(self, d) -> np.ndarray:
        return lmo_cardinality_max(d, self)

    def lmo_min(self, d) -> np.ndarray:
        return lmo_cardinality_max(-_vec(d, self.n), self)

    def project(self, y, tol: float = 1e-12) -> np.ndarray:
        return project_capped_simplex(y, self, tol)

    def vertices(self) -> Iterator[np.ndarray]:
        """0/1 vectors with at most ``floor(k)`` ones (the vertex set for integral ``k``)."""
        if self.n > MAX_ENUM_N:
            raise ValueError(f"vertex enumeration limited to n <= {MAX_ENUM_N}")
        kk = int(np.floor(self.k + 1e-12))
        for size in range(kk + 1):
            for comb in itertools.combinations(range(self.n), size):
                v = np.zeros(self.n)
                v[list(comb)] = 1.0
                yield v


def lmo_cardinality_max(d, poly: CardinalityPolytope) -> np.ndarray:
    d = _vec(d, poly.n)
    v = np.zeros(poly.n)
    whole = int(np.floor(poly.k + 1e-12))
    frac = poly.k - whole if poly.k - whole > 1e-12 else 0.0
    positive = [i for i in _order_desc(d) if d[i] > 0]
    v[positive[:whole]] = 1.0
    if frac and len(positive) > whole:
        v[positive[whole]] = frac
    return v


def project_capped_simplex(y, poly: CardinalityPolytope, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Euclidean projection onto ``{x in [0,1]^n : sum(x) <= k}``.

    Solves for the threshold ``tau >= 0`` in ``x = clip(y - tau, 0, 1)`` by
    bisection, then snaps ``tau`` to its closed form on the detected active set.
    """
    y = _vec(y, poly.n, "point")
    if not np.all(np.isfinite(y)):
        raise ValueError("cannot project a non-finite point")
    k = poly.k
    x = np.clip(y, 0.0, 1.0)
    if x.sum() <= k + tol:
        return x

    def excess(tau):
        return np.clip(y - tau, 0.0, 1.0).sum() - k

    lo, hi = 0.0, float(np.max(y))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(hi)):
            break
    tau = 0.5 * (lo + hi)
    ys = y - tau
    free = (ys > 0) & (ys < 1)
    if free.any():
        ones = ys >= 1
        tau_exact = (y[free].sum() + ones.sum() - k) / free.sum()
        cand = np.clip(y - tau_exact, 0.0, 1.0)
        if abs(cand.sum() - k) <= abs(excess(tau)) + tol:
            return cand
    return np.clip(ys, 0.0, 1.0)


# ---------------------------------------------------------------------- matroids


def _popcount(masks: np.ndarray) -> np.ndarray:
    masks = np.asarray(masks, dtype=np.int64)
    out = np.zeros(masks.shape, dtype=np.int64)
    m = masks.copy()
    while np.any(m):
        out += m & 1
        m >>= 1
    return out


class Matroid:
    """Independence system with the exchange property over ``range(n)``.

    Subclasses provide ``is_independent``; sets are bitmasks or iterables.
    """

    n: int

    def is_independent(self, S) -> bool:
        raise NotImplementedError

    def independent_masks(self) -> np.ndarray:
        """All independent sets as bitmasks (exhaustive; ``n <= 20``)."""
        if self.n > MAX_ENUM_N:
            raise ValueError(f"enumeration limited to n <= {MAX_ENUM_N}")
        return np.array([m for m in range(1 << self.n) if self.is_independent(m)], dtype=np.int64)

    @property
    def rank(self) -> int:
        return len(self.greedy_basis(np.arange(self.n, 0, -1, dtype=float)))

    def greedy_basis(self, d) -> list[int]:
        d = _vec(d, self.n)
        chosen: list[int] = []
        mask = 0
        for i in _order_desc(d):
            if d[i] <= 0:
                break
            if self.is_independent(mask | (1 << int(i))):
                mask |= 1 << int(i)
                chosen.append(int(i))
        return chosen

    def lmo_max(self, d) -> np.ndarray:
        return lmo_matroid_max(d, self)

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        """Matroid-polytope membership by the rank inequalities (exhaustive)."""
        x = _vec(x, self.n, "point")
        if np.any(x < -tol) or np.any(x > 1 + tol):
            return False
        if self.n > 16:
            raise ValueError("generic polytope membership limited to n <= 16")
        indep = self.independent_masks()
        sizes = _popcount(indep)
        for A in range(1, 1 << self.n):
            members = [i for i in range(self.n) if A >> i & 1]
            r = int(sizes[(indep & ~A) == 0].max())
            if x[members].sum() > r + tol:
                return False
        return True

    def vertices(self) -> Iterator[np.ndarray]:
        for m in self.independent_masks():
            yield mask_to_vector(int(m), self.n)

    down_closed = True


def _as_mask(S) -> int:
    if isinstance(S, (int, np.integer)):
        return int(S)
    m = 0
    for i in S:
        m |= 1 << int(i)
    return m


def mask_to_vector(mask: int, n: int) -> np.ndarray:
    return np.array([(mask >> i) & 1 for i in range(n)], dtype=float)


class UniformMatroid(Matroid):
    def __init__(self, n: int, k: int):
        if not (0 <= k <= n):
            raise ValueError(f"rank must satisfy 0 <= k <= n, got k={k}, n={n}")
        self.n = int(n)
        self.k = int(k)

    def is_independent(self, S) -> bool:
        return bin(_as_mask(S)).count("1") <= self.k

    def independent_masks(self) -> np.ndarray:
        if self.n > MAX_ENUM_N:
            raise ValueError(f"enumeration limited to n <= {MAX_ENUM_N}")
        masks = np.arange(1 << self.n, dtype=np.int64)
        return masks[_popcount(masks) <= self.k]

    @property
    def rank(self) -> int:
        return self.k

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        return CardinalityPolytope(self.n, self.k).contains(x, tol)

    def __repr__(self):
        return f"UniformMatroid(n={self.n}, k={self.k})"


class PartitionMatroid(Matroid):
    """At most ``caps[p]`` elements from each block ``parts[p]``; blocks must cover ``range(n)``."""

    def __init__(self, parts: Iterable[Iterable[int]], caps: Iterable[int]):
        self.parts = [tuple(int(i) for i in p) for p in parts]
        self.caps = [int(c) for c in caps]
        if len(self.parts) != len(self.caps):
            raise ValueError("one capacity per block required")
        flat = sorted(i for p in self.parts for i in p)
        if flat != list(range(len(flat))):
            raise ValueError("blocks must partition {0, ..., n-1}")
        if any(c < 0 for c in self.caps):
            raise ValueError("capacities must be non-negative")
        self.n = len(flat)
        self._block_masks = [_as_mask(p) for p in self.parts]

    def is_independent(self, S) -> bool:
        m = _as_mask(S)
        return all(bin(m & bm).count("1") <= c for bm, c in zip(self._block_masks, self.caps))

    def independent_masks(self) -> np.ndarray:
        if self.n > MAX_ENUM_N:
            raise ValueError(f"enumeration limited to n <= {MAX_ENUM_N}")
        masks = np.arange(1 << self.n, dtype=np.int64)
        ok = np.ones(masks.shape, dtype=bool)
        for bm, c in zip(self._block_masks, self.caps):
            ok &= _popcount(masks & bm) <= c
        return masks[ok]

    @property
    def rank(self) -> int:
        return sum(min(c, len(p)) for p, c in zip(self.parts, self.caps))

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        x = _vec(x, self.n, "point")
        if np.any(x < -tol) or np.any(x > 1 + tol):
            return False
        return all(x[list(p)].sum() <= c + tol for p, c in zip(self.parts, self.caps))

    def __repr__(self):
        return f"PartitionMatroid(parts={self.parts}, caps={self.caps})"


class GeneralMatroid(Matroid):
    """Matroid given by an independence predicate on bitmasks."""

    def __init__(self, n: int, is_independent: Callable[[int], bool]):
        self.n = int(n)
        self._pred = is_independent

    def is_independent(self, S) -> bool:
        return bool(self._pred(_as_mask(S)))


def lmo_matroid_max(d, m: Matroid) -> np.ndarray:
    """Indicator of the greedy independent set for ``d`` (optimal over the matroid polytope)."""
    v = np.zeros(m.n)
    v[m.greedy_basis(d)] = 1.0
    return v


def check_matroid_axioms(m: Matroid) -> list[str]:
    """Brute-force check of the independence axioms; returns violated axioms."""
    problems = []
    indep = set(int(s) for s in m.independent_masks())
    if 0 not in indep:
        problems.append("empty set not independent")
    for s in indep:
        sub = s
        while sub:
            sub = (sub - 1) & s
            if sub not in indep:
                problems.append(f"not down-closed at {s:#b}")
                break
    for a in indep:
        for b in indep:
            if bin(a).count("1") < bin(b).count("1"):
                diff = b & ~a
                if not any((a | (1 << i)) in indep for i in range(m.n) if diff >> i & 1):
                    problems.append(f"exchange fails for {a:#b}, {b:#b}")
                    return problems
    return problems


# ------------------------------------------------------------- nuclear PSD ball


@dataclass(frozen=True)
class NuclearPsdBall:
    """``{V symmetric PSD : ||V||_* <= alpha}``."""

    n: int
    alpha: float

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("radius must be non-negative")

    down_closed = False

    def contains(self, X, tol: float = 1e-8) -> bool:
        X = np.asarray(X, dtype=float)
        if X.shape != (self.n, self.n):
            return False
        scale = max(1.0, self.alpha)
        if np.max(np.abs(X - X.T), initial=0.0) > tol * scale:
            return False
        eig = np.linalg.eigvalsh(0.5 * (X + X.T))
        return bool(eig.min(initial=0.0) >= -tol * scale and eig.sum() <= self.alpha + tol * scale)

    def lmo_min(self, G, tol: float = 1e-8) -> np.ndarray:
        return lmo_nuclear_psd_min(G, self, tol)

    def warm_lmo(self, tol: float = 1e-8):
        """Stateful ``lmo_min`` that starts each power iteration from the previous eigenvector.

        Consecutive Frank-Wolfe directions differ little, so the warm start
        cuts iterations sharply when the bottom eigenvalues nearly coincide.
        """
        state = {"v": None}

        def call(G):
            V, state["v"] = _nuclear_min_vec(G, self, tol, 10000, state["v"])
            return V

        return call


def default_start_vector(n: int) -> np.ndarray:
    # ones plus a fixed irregular perturbation so no symmetric eigenvector is missed
    v = 1.0 + 0.1 * np.sin(1.0 + np.arange(n) * 2.399963229728653)
    return v / np.linalg.norm(v)


def smallest_eigenpair(G, tol: float = 1e-8, max_iter: int = 10000, v0=None) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue/eigenvector of ``(G + G^T)/2`` by shifted power iteration."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {G.shape}")
    if not np.all(np.isfinite(G)):
        raise ValueError("matrix has non-finite entries")
    Gs = 0.5 * (G + G.T)
    n = Gs.shape[0]
    start = default_start_vector(n) if v0 is None else np.asarray(v0, dtype=float)
    lam, v, iters, res, ok = kernels.power_iteration_min(Gs, float(tol), int(max_iter), start)
    if not ok:
        raise PowerIterationError("power iteration did not converge", res, iters)
    return float(lam), np.asarray(v)


def lmo_nuclear_psd_min(G, ball: NuclearPsdBall, tol: float = 1e-8, max_iter: int = 10000) -> np.ndarray:
    """Minimizer of ``tr(G^T V)`` over the PSD nuclear-norm ball.

    Returns ``alpha v v^T`` for the bottom eigenvector ``v`` when the smallest
    eigenvalue is negative, and the zero matrix otherwise.
    """
    return _nuclear_min_vec(G, ball, tol, max_iter, None)[0]


def _nuclear_min_vec(G, ball: NuclearPsdBall, tol: float, max_iter: int, v0) -> tuple[np.ndarray, np.ndarray]:
    G = np.asarray(G, dtype=float)
    if G.shape != (ball.n, ball.n):
        raise ValueError(f"gradient shape {G.shape} does not match ball side {ball.n}")
    lam, v = smallest_eigenpair(G, tol, max_iter, v0)
    if lam < 0:
        return ball.alpha * np.outer(v, v), v
    return np.zeros((ball.n, ball.n)), v


# --------------------------------------------------------------- shifted (NMSCG)


def lmo_shifted_downclosed_max(d, x, ubar, poly) -> np.ndarray:
    """Maximize ``<d, v>`` over ``v in poly`` with the extra cap ``v <= ubar - x``."""
    d = _vec(d)
    n = d.shape[0]
    x = _vec(x, n, "point")
    ubar = _vec(ubar, n, "upper bound")
    if np.any(x > ubar + FEAS_TOL):
        raise ValueError("current point exceeds the upper bound ubar")
    room = np.maximum(ubar - x, 0.0)
    if isinstance(poly, CardinalityPolytope):
        caps = np.minimum(1.0, room)
        v = np.zeros(n)
        budget = float(poly.k)
        for i in _order_desc(d):
            if d[i] <= 0 or budget <= 0:
                break
            take = min(caps[i], budget)
            v[i] = take
            budget -= take
        return v
    if isinstance(poly, BoxRegion):
        if not poly.down_closed:
            raise ValueError("shifted oracle needs a down-closed box (lower bound 0)")
        return np.where(d > 0, np.minimum(poly.upper, room), 0.0)
    raise TypeError(f"shifted oracle supports box and cardinality regions, not {type(poly).__name__}")


# ------------------------------------------------------------------ fuzz check


@dataclass
class CheckResult:
    name: str
    passed: int = 0
    failed: int = 0
    worst_gap: float = 0.0
    failures: list = field(default_factory=list)


def lmo_check(trials: int = 100, seed: int = 0, max_n: int = 8) -> list[CheckResult]:
    """Compare every oracle against brute-force vertex enumeration on random directions."""
    rng = np.random.default_rng(seed)
    results = []

    def run(name, make):
        res = CheckResult(name)
        for trial in range(trials):
            region, oracle, sense = make()
            d = rng.normal(size=region.n)
            if trial % 5 == 0:
                d = np.round(d)  # exercise ties and zero entries
            v = oracle(d, region)
            best = max(sense * float(d @ w) for w in region.vertices())
            gap = best - sense * float(d @ v)
            feasible = region.contains(v)
            res.worst_gap = max(res.worst_gap, gap)
            if gap <= 1e-9 and feasible:
                res.passed += 1
            else:
                res.failed += 1
                res.failures.append((d.tolist(), gap, feasible))
        results.append(res)

    def box():
        n = int(rng.integers(1, max_n + 1))
        lo = rng.uniform(-5, 5, n)
        return BoxRegion(lo, lo + rng.uniform(0, 5, n)), lmo_box_min, -1.0

    def card():
        n = int(rng.integers(1, max_n + 1))
        return CardinalityPolytope(n, int(rng.integers(0, n + 1))), lmo_cardinality_max, 1.0

    def uniform():
        n = int(rng.integers(1, max_n + 1))
        return UniformMatroid(n, int(rng.integers(0, n + 1))), lmo_matroid_max, 1.0

    def partition():
        n = int(rng.integers(1, max_n + 1))
        labels = rng.integers(0, max(1, n // 2), n)
        parts = [np.flatnonzero(labels == p).tolist() for p in np.unique(labels)]
        caps = [int(rng.integers(0, len(p) + 1)) for p in parts]
        return PartitionMatroid(parts, caps), lmo_matroid_max, 1.0

    run("box", box)
    run("cardinality", card)
    run("uniform-matroid", uniform)
    run("partition-matroid", partition)

    res = CheckResult("nuclear-psd")
    for _ in range(trials):
        n = int(rng.integers(1, 7))
        M = rng.normal(size=(n, n))
        ball = NuclearPsdBall(n, float(rng.uniform(0.5, 3.0)))
        V = lmo_nuclear_psd_min(M, ball, tol=1e-12)
        lam = np.linalg.eigvalsh(0.5 * (M + M.T))[0]
        best = ball.alpha * min(lam, 0.0)
        gap = float(np.sum(M * V)) - best
        ok = gap <= 1e-6 * max(1.0, abs(best)) and ball.contains(V)
        res.worst_gap = max(res.worst_gap, gap)
        if ok:
            res.passed += 1
        else:
            res.failed += 1
            res.failures.append((M.tolist(), gap, ok))
    results.append(res)
    return results
