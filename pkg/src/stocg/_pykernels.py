"""Pure-Python/numpy implementations of the hot kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature, the same random-number consumption and the same results.
"""
from __future__ import annotations

import numpy as np

FRAC_EPS = 1e-12


def subset_values_facility(R: np.ndarray) -> np.ndarray:
    """Mean over users of ``max_{j in S} R[u, j]`` for every bitmask ``S``."""
    R = np.ascontiguousarray(R, dtype=np.float64)
    N, n = R.shape
    out = np.zeros(1 << n)
    vals = np.zeros(1 << n)
    for u in range(N):
        vals[0] = 0.0
        for i in range(n):
            lo = 1 << i
            np.maximum(vals[:lo], R[u, i], out=vals[lo:2 * lo])
        out += vals
    return out / N


def subset_values_concave(R: np.ndarray) -> np.ndarray:
    """Mean over users of ``sqrt(sum_{j in S} R[u, j])`` for every bitmask ``S``."""
    R = np.ascontiguousarray(R, dtype=np.float64)
    N, n = R.shape
    out = np.zeros(1 << n)
    sums = np.zeros(1 << n)
    for u in range(N):
        sums[0] = 0.0
        for i in range(n):
            lo = 1 << i
            np.add(sums[:lo], R[u, i], out=sums[lo:2 * lo])
        out += np.sqrt(sums)
    return out / N


def facility_marginals(R: np.ndarray, users: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Average over draws of ``f(S_b + i, u_b) - f(S_b - i, u_b)`` for facility location."""
    rows = np.asarray(R, dtype=np.float64)[np.asarray(users, dtype=np.int64)]
    S = np.asarray(S, dtype=bool)
    masked = np.where(S, rows, -np.inf)
    order = np.argsort(-masked, axis=1, kind="stable")
    b = rows.shape[0]
    idx = np.arange(b)
    top = np.maximum(masked[idx, order[:, 0]], 0.0)
    second = np.maximum(masked[idx, order[:, 1]], 0.0) if rows.shape[1] > 1 else np.zeros(b)
    argtop = order[:, 0]
    without = np.repeat(top[:, None], rows.shape[1], axis=1)
    hit = S & (np.arange(rows.shape[1])[None, :] == argtop[:, None])
    without[hit] = np.repeat(second[:, None], rows.shape[1], axis=1)[hit]
    with_ = np.maximum(without, rows)
    return (with_ - without).mean(axis=0)


def concave_marginals(R: np.ndarray, users: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Average over draws of ``f(S_b + i, u_b) - f(S_b - i, u_b)`` for sqrt-of-sum."""
    rows = np.asarray(R, dtype=np.float64)[np.asarray(users, dtype=np.int64)]
    S = np.asarray(S, dtype=bool)
    total = np.where(S, rows, 0.0).sum(axis=1, keepdims=True)
    without = np.where(S, total - rows, total)
    without = np.maximum(without, 0.0)
    return (np.sqrt(without + rows) - np.sqrt(without)).mean(axis=0)


def _is_frac(v: float) -> bool:
    return FRAC_EPS < v < 1.0 - FRAC_EPS


def pipage_batch(x: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Round ``x`` once per row of ``uniforms`` (shape ``(trials, n)``); returns 0/1 rows.

    Fractional coordinates are paired left to right. Each pair moves along
    ``e_i - e_j`` to the nearer face with mean-zero probabilities; a final
    lone fractional coordinate is settled by an independent coin.
    """
    x = np.asarray(x, dtype=np.float64)
    uniforms = np.asarray(uniforms, dtype=np.float64)
    n = x.shape[0]
    trials = uniforms.shape[0]
    out = np.zeros((trials, n), dtype=np.uint8)
    base = x.copy()
    base[base <= FRAC_EPS] = 0.0
    base[base >= 1.0 - FRAC_EPS] = 1.0
    for r in range(trials):
        y = base.tolist()
        u = uniforms[r]
        used = 0
        cur = -1
        for j in range(n):
            if not _is_frac(y[j]):
                continue
            if cur < 0:
                cur = j
                continue
            i = cur
            yi, yj = y[i], y[j]
            up = min(1.0 - yi, yj)
            down = min(yi, 1.0 - yj)
            if u[used] * (up + down) < down:
                if 1.0 - yi <= yj:
                    y[i] = 1.0
                    y[j] = yj - (1.0 - yi)
                else:
                    y[i] = yi + yj
                    y[j] = 0.0
            else:
                if yi <= 1.0 - yj:
                    y[i] = 0.0
                    y[j] = yj + yi
                else:
                    y[i] = yi - (1.0 - yj)
                    y[j] = 1.0
            used += 1
            for m in (i, j):
                if y[m] <= FRAC_EPS:
                    y[m] = 0.0
                elif y[m] >= 1.0 - FRAC_EPS:
                    y[m] = 1.0
            if _is_frac(y[i]):
                cur = i
            elif _is_frac(y[j]):
                cur = j
            else:
                cur = -1
        if cur >= 0:
            y[cur] = 1.0 if u[used] < y[cur] else 0.0
        for m in range(n):
            if y[m] == 1.0:
                out[r, m] = 1
    return out


def power_iteration_min(G: np.ndarray, tol: float, max_iter: int, v0: np.ndarray):
    """Smallest eigenpair of symmetric ``G`` by power iteration on ``c I - G``.

    Returns ``(lam, v, iterations, residual, converged)``.
    """
    G = np.ascontiguousarray(G, dtype=np.float64)
    n = G.shape[0]
    c = float(np.max(np.sum(np.abs(G), axis=1))) if n else 0.0
    B = c * np.eye(n) - G
    v = np.asarray(v0, dtype=np.float64).copy()
    v /= np.linalg.norm(v)
    mu_prev = np.nan
    mu = 0.0
    for it in range(1, max_iter + 1):
        w = B @ v
        mu = float(v @ w)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return c, v, it, 0.0, True
        v = w / nw
        if abs(mu - mu_prev) <= tol * abs(mu):
            w = B @ v
            mu = float(v @ w)
            res = float(np.linalg.norm(w - mu * v))
            return c - mu, v, it, res, True
        mu_prev = mu
    w = B @ v
    res = float(np.linalg.norm(w - float(v @ w) * v))
    return c - mu, v, max_iter, res, False
