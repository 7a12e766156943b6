"""Conditional-gradient solvers and baselines.

Every solver is a deterministic function of its inputs and seed and returns
a :class:`SolverRun` whose trace has one row per step ``t = 0..T``.

Indexing is zero-based: loop iteration ``t = 1..T`` averages with
``rho(t - 1)`` and (for the convex-combination solvers) mixes with
``gamma(t)``. Row ``t`` of ``grad_error_sq`` is the squared error of the
direction used in iteration ``t`` against the exact gradient at the point
where that direction was sampled (row 0: ``d = 0`` at ``x_0``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .estimator import GradientEstimate, has_exact
from .linear_oracles import lmo_shifted_downclosed_max
from .schedules import as_schedule
from .submodular import as_mask


@dataclass(frozen=True)
class TracePoint:
    t: int
    x: np.ndarray | None
    objective: float
    grad_error_sq: float | None
    samples_used: int


@dataclass
class SolverRun:
    algorithm: str
    T: int
    batch: int | None
    schedules: dict
    seed: object
    t: np.ndarray
    objective: np.ndarray
    grad_error_sq: np.ndarray
    samples_used: np.ndarray
    iterates: np.ndarray | None
    x_final: np.ndarray
    objective_exact: bool = True
    failed: bool = False
    error: str | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.shape[0]

    @property
    def trace(self) -> list[TracePoint]:
        rows = []
        for k in range(len(self)):
            e = self.grad_error_sq[k]
            rows.append(TracePoint(int(self.t[k]), None if self.iterates is None else self.iterates[k],
                                   float(self.objective[k]), None if np.isnan(e) else float(e),
                                   int(self.samples_used[k])))
        return rows

    @property
    def final_objective(self) -> float:
        return float(self.objective[-1])


class _Recorder:
    def __init__(self, T: int, shape: tuple, objective: Callable, keep_iterates: bool):
        self.t = np.arange(T + 1)
        self.obj = np.full(T + 1, np.nan)
        self.err = np.full(T + 1, np.nan)
        self.samples = np.zeros(T + 1, dtype=np.int64)
        self.xs = np.zeros((T + 1,) + tuple(shape)) if keep_iterates else None
        self.objective = objective
        self.n = 0
        self.x_last = None

    def record(self, t: int, x, err, samples: int):
        self.obj[t] = self.objective(x) if self.objective is not None else np.nan
        self.err[t] = np.nan if err is None else err
        self.samples[t] = samples
        if self.xs is not None:
            self.xs[t] = x
        self.x_last = np.array(x, copy=True)
        self.n = t + 1

    def finish(self, algorithm, T, batch, schedules, seed, exact_obj, error=None) -> SolverRun:
        k = self.n
        return SolverRun(algorithm, T, batch, schedules, seed, self.t[:k].copy(), self.obj[:k].copy(),
                         self.err[:k].copy(), self.samples[:k].copy(),
                         None if self.xs is None else self.xs[:k].copy(), self.x_last,
                         objective_exact=exact_obj, failed=error is not None, error=error)


def _objective_fn(oracle, objective):
    if objective is not None:
        return objective, True
    fn = getattr(oracle, "objective", None)
    return fn, bool(getattr(oracle, "objective_is_exact", fn is not None))


def _err(oracle, x, d, track):
    if not track:
        return None
    diff = np.asarray(oracle.exact(x), dtype=float) - d
    return float(np.sum(diff * diff))


def _lmo_min(region):
    # per-run oracle; regions with iterative LMOs may keep warm-start state
    warm = getattr(region, "warm_lmo", None)
    return warm() if warm is not None else region.lmo_min


def _check_horizon(T: int, b: int = 1):
    if T < 1:
        raise ValueError(f"horizon T must be >= 1, got {T}")
    if b < 1:
        raise ValueError(f"batch size must be >= 1, got {b}")


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _seed_tag(seed):
    return None if isinstance(seed, np.random.Generator) else seed


def sfw(oracle, region, rho, gamma, T: int, x0, b: int = 1, seed=None, *, objective=None,
        keep_iterates: bool = True, track_error: bool = True) -> SolverRun:
    """Stochastic Frank-Wolfe for ``min_{x in region} E[F(x, z)]``.

    Iteration ``t``: ``d <- (1 - rho(t-1)) d + rho(t-1) g`` with ``g`` the mean
    of ``b`` samples at the current point, ``v = argmin_{v} <d, v>``, then
    ``x <- (1 - gamma(t)) x + gamma(t) v``.
    """
    _check_horizon(T, b)
    rho, gamma = as_schedule(rho), as_schedule(gamma)
    x = np.array(x0, dtype=float)
    if not region.contains(x):
        raise ValueError("initial point is not feasible")
    rng = _rng(seed)
    track = track_error and has_exact(oracle)
    obj, exact_obj = _objective_fn(oracle, objective)
    rec = _Recorder(T, x.shape, obj, keep_iterates)
    est = GradientEstimate(x.shape)
    rec.record(0, x, _err(oracle, x, est.d, track), 0)
    lmo = _lmo_min(region)
    error = None
    try:
        for t in range(1, T + 1):
            est.update(rho(t - 1), oracle.sample(x, rng, b))
            err = _err(oracle, x, est.d, track)
            v = lmo(est.d)
            g_t = gamma(t)
            x = (1.0 - g_t) * x + g_t * v
            rec.record(t, x, err, b * t)
    except Exception as exc:  # noqa: BLE001 - partial trace is returned and flagged
        error = f"{type(exc).__name__}: {exc}"
    return rec.finish("sfw", T, b, {"rho": rho.name, "gamma": gamma.name}, _seed_tag(seed), exact_obj, error)


def fw_deterministic(oracle, region, gamma, T: int, x0, *, objective=None, keep_iterates: bool = True) -> SolverRun:
    """Frank-Wolfe with exact gradients; same step convention as :func:`sfw`."""
    _check_horizon(T)
    if not has_exact(oracle):
        raise ValueError("deterministic Frank-Wolfe needs an oracle with exact gradients")
    gamma = as_schedule(gamma)
    x = np.array(x0, dtype=float)
    if not region.contains(x):
        raise ValueError("initial point is not feasible")
    obj, exact_obj = _objective_fn(oracle, objective)
    rec = _Recorder(T, x.shape, obj, keep_iterates)
    rec.record(0, x, 0.0, 0)
    lmo = _lmo_min(region)
    error = None
    try:
        for t in range(1, T + 1):
            v = lmo(np.asarray(oracle.exact(x), dtype=float))
            g_t = gamma(t)
            x = (1.0 - g_t) * x + g_t * v
            rec.record(t, x, 0.0, 0)
    except Exception as exc:  # noqa: BLE001
        error = f"{type(exc).__name__}: {exc}"
    return rec.finish("fw", T, None, {"gamma": gamma.name}, None, exact_obj, error)


def minibatch_fw(oracle, region, gamma, T: int, x0, b: int = 1, seed=None, *, objective=None,
                 keep_iterates: bool = True, track_error: bool = True) -> SolverRun:
    """Frank-Wolfe driven directly by the mean of ``b`` fresh samples per step (no averaging)."""
    return _batched_fw("minibatch-fw", oracle, region, gamma, T, x0, lambda s: b, seed,
                       objective, keep_iterates, track_error, batch_tag=b)


def growing_batch_fw(oracle, region, gamma, T: int, x0, seed=None, *, objective=None,
                     keep_iterates: bool = True, track_error: bool = True) -> SolverRun:
    """Frank-Wolfe whose iteration ``t`` (1-based) averages ``t^2`` fresh samples."""
    return _batched_fw("growing-batch-fw", oracle, region, gamma, T, x0, lambda s: (s + 1) ** 2, seed,
                       objective, keep_iterates, track_error, batch_tag=None)


def growing_batch_horizon(budget: int) -> int:
    """Largest ``T`` with ``sum_{s<T} (s+1)^2 <= budget``."""
    T, used = 0, 0
    while used + (T + 1) ** 2 <= budget:
        used += (T + 1) ** 2
        T += 1
    return T


def _batched_fw(name, oracle, region, gamma, T, x0, batch_at, seed, objective, keep_iterates, track_error,
                batch_tag):
    _check_horizon(T)
    gamma = as_schedule(gamma)
    x = np.array(x0, dtype=float)
    if not region.contains(x):
        raise ValueError("initial point is not feasible")
    rng = _rng(seed)
    track = track_error and has_exact(oracle)
    obj, exact_obj = _objective_fn(oracle, objective)
    rec = _Recorder(T, x.shape, obj, keep_iterates)
    rec.record(0, x, _err(oracle, x, np.zeros(x.shape), track), 0)
    used = 0
    lmo = _lmo_min(region)
    error = None
    try:
        for t in range(1, T + 1):
            bt = batch_at(t - 1)
            if bt < 1:
                raise ValueError("batch size must be >= 1")
            g = oracle.sample(x, rng, bt)
            used += bt
            err = _err(oracle, x, g, track)
            v = lmo(g)
            g_t = gamma(t)
            x = (1.0 - g_t) * x + g_t * v
            rec.record(t, x, err, used)
    except Exception as exc:  # noqa: BLE001
        error = f"{type(exc).__name__}: {exc}"
    return rec.finish(name, T, batch_tag, {"gamma": gamma.name}, _seed_tag(seed), exact_obj, error)


def scg(oracle, region, rho, T: int, seed=None, b: int = 1, *, objective=None,
        keep_iterates: bool = True, track_error: bool = True) -> SolverRun:
    """Stochastic continuous greedy for monotone DR-submodular maximization.

    Starts from ``x = 0, d = 0``; each step ascends ``x <- x + v / T`` with
    ``v = argmax_{v in region} <d, v>``, so ``x_T`` is an average of vertices.
    """
    return _greedy_loop("scg", oracle, region, rho, T, seed, b, objective, keep_iterates, track_error,
                        lambda d, x: region.lmo_max(d))


def nmscg(oracle, region, ubar, rho, T: int, seed=None, b: int = 1, *, objective=None,
          keep_iterates: bool = True, track_error: bool = True) -> SolverRun:
    """Non-monotone variant of :func:`scg` whose direction is capped by ``v <= ubar - x``."""
    if not getattr(region, "down_closed", False):
        raise ValueError("non-monotone continuous greedy needs a down-closed region containing 0")
    ubar = np.asarray(ubar, dtype=float)
    if np.any(ubar < 0):
        raise ValueError("ubar must be non-negative")
    return _greedy_loop("nmscg", oracle, region, rho, T, seed, b, objective, keep_iterates, track_error,
                        lambda d, x: lmo_shifted_downclosed_max(d, x, ubar, region))


def _greedy_loop(name, oracle, region, rho, T, seed, b, objective, keep_iterates, track_error, direction):
    _check_horizon(T, b)
    rho = as_schedule(rho)
    rng = _rng(seed)
    shape = tuple(oracle.shape)
    x = np.zeros(shape)
    track = track_error and has_exact(oracle)
    obj, exact_obj = _objective_fn(oracle, objective)
    rec = _Recorder(T, shape, obj, keep_iterates)
    est = GradientEstimate(shape)
    rec.record(0, x, _err(oracle, x, est.d, track), 0)
    step = 1.0 / T
    error = None
    try:
        for t in range(1, T + 1):
            est.update(rho(t - 1), oracle.sample(x, rng, b))
            err = _err(oracle, x, est.d, track)
            v = direction(est.d, x)
            x = x + step * v
            rec.record(t, x, err, b * t)
    except Exception as exc:  # noqa: BLE001
        error = f"{type(exc).__name__}: {exc}"
    return rec.finish(name, T, b, {"rho": rho.name}, _seed_tag(seed), exact_obj, error)


def sga(oracle, region, mu_c: float, T: int, b: int = 1, seed=None, x0=None, *, objective=None,
        keep_iterates: bool = True) -> SolverRun:
    """Projected stochastic gradient ascent with step ``mu_c / sqrt(t)``."""
    _check_horizon(T, b)
    project = getattr(region, "project", None)
    if project is None:
        raise ValueError(f"no projection available for {type(region).__name__}")
    rng = _rng(seed)
    shape = tuple(oracle.shape)
    x = np.zeros(shape) if x0 is None else np.array(x0, dtype=float)
    obj, exact_obj = _objective_fn(oracle, objective)
    rec = _Recorder(T, shape, obj, keep_iterates)
    rec.record(0, x, None, 0)
    error = None
    try:
        for t in range(1, T + 1):
            g = oracle.sample(x, rng, b)
            x = project(x + (mu_c / math.sqrt(t)) * g)
            rec.record(t, x, None, b * t)
    except Exception as exc:  # noqa: BLE001
        error = f"{type(exc).__name__}: {exc}"
    return rec.finish("sga", T, b, {"mu": f"{mu_c!r}/sqrt(t)"}, _seed_tag(seed), exact_obj, error)


def _subsample_value(f, S: np.ndarray, users) -> float:
    if users is None:
        return f.value(S)
    if hasattr(f, "user_values"):
        return float(np.mean(f.user_values(S, users)))
    mask = as_mask(S)
    return float(np.mean([f.component_value(mask, u) for u in users]))


def discrete_greedy(f, k: int, b: int | None = None, seed=None) -> list[int]:
    """Greedy selection of ``k`` elements; each round estimates ``f`` on ``b`` random components.

    Components are drawn without replacement (all of them when ``b`` is at
    least their number). Returns elements in selection order; ties go to the
    lowest index.
    """
    if k < 0 or k > f.n:
        raise ValueError(f"k must lie in [0, n], got {k}")
    rng = _rng(seed)
    N = getattr(f, "n_samples", None)
    S = np.zeros(f.n, dtype=bool)
    chosen: list[int] = []
    for _ in range(k):
        if N is None or b is None or b >= N:
            users = None if N is None else np.arange(N)
        else:
            if b < 1:
                raise ValueError("batch must be >= 1")
            users = np.sort(rng.choice(N, size=b, replace=False))
        best_i, best_val = -1, -np.inf
        for i in range(f.n):
            if S[i]:
                continue
            S[i] = True
            val = _subsample_value(f, S, users)
            S[i] = False
            if val > best_val:
                best_i, best_val = i, val
        S[best_i] = True
        chosen.append(best_i)
    return chosen
