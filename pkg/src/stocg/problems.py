"""Test problems: the noisy box-constrained quadratic and symmetric matrix completion."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .linear_oracles import BoxRegion, NuclearPsdBall


# ------------------------------------------------------------------ quadratic


@dataclass(frozen=True, eq=False)
class QuadraticProblem:
    """``F(x) = E[x^T (A + diag z) x / 2 + (b + z)^T x]`` with ``z ~ N(0, sigma^2 I)``.

    ``sigma`` is the per-coordinate standard deviation of ``z``.
    """

    A: np.ndarray
    b: np.ndarray
    box: BoxRegion
    sigma: float

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        n = b.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A has shape {A.shape}, expected ({n}, {n})")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise ValueError("A must be symmetric")
        A = 0.5 * (A + A.T)
        if np.linalg.eigvalsh(A)[0] <= 0:
            raise ValueError("A must be positive definite")
        if self.box.n != n:
            raise ValueError("box dimension does not match b")
        if np.any(self.box.lower >= self.box.upper):
            raise ValueError("box requires lower < upper")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        A.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.b.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.A @ x + self.b @ x)

    def gradient(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) + self.b

    def to_dict(self) -> dict:
        return {"kind": "quadratic", "A": self.A.tolist(), "b": self.b.tolist(),
                "lower": self.box.lower.tolist(), "upper": self.box.upper.tolist(), "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "QuadraticProblem":
        return cls(np.array(d["A"]), np.array(d["b"]), BoxRegion(d["lower"], d["upper"]), float(d["sigma"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "QuadraticProblem":
        return cls.from_dict(json.loads(text))


def make_quadratic(n: int = 5, sigma: float = 100.0, lower: float = 10.0, upper: float = 100.0,
                   seed: int = 0, eig_range: tuple[float, float] = (100.0, 1000.0)) -> QuadraticProblem:
    """Random instance whose unconstrained minimizer ``-A^{-1} b`` lies outside the box.

    ``A`` has eigenvalues spread log-uniformly over ``eig_range``; the default
    keeps the gradient comparable to the noise ``sigma * |x|`` at
    ``sigma`` in the hundreds and ``x`` in ``[10, 100]``. The
    unconstrained minimizer is drawn around the box with at least one
    coordinate outside it, so the constrained optimum sits on a face.
    """
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    lo_eig, hi_eig = eig_range
    if not (0 < lo_eig <= hi_eig):
        raise ValueError("eigenvalue range must satisfy 0 < low <= high")
    eig = np.geomspace(lo_eig, hi_eig, n) if n > 1 else np.full(1, float(lo_eig))
    A = (Q * eig) @ Q.T
    A = 0.5 * (A + A.T)
    width = upper - lower
    while True:
        x_free = rng.uniform(lower - 0.5 * width, upper + 0.5 * width, n)
        if np.any((x_free < lower) | (x_free > upper)):
            break
    b = -A @ x_free
    return QuadraticProblem(A, b, BoxRegion.uniform(n, lower, upper), float(sigma))


def quadratic_stochastic_grad(p: QuadraticProblem, x, rng: np.random.Generator) -> np.ndarray:
    """One draw of ``(A + diag z) x + b + z``."""
    x = np.asarray(x, dtype=float)
    z = rng.normal(0.0, p.sigma, p.n) if p.sigma > 0 else np.zeros(p.n)
    return p.A @ x + z * x + p.b + z


class QuadraticOracle:
    def __init__(self, problem: QuadraticProblem):
        self.problem = problem
        self.shape = (problem.n,)

    def sample(self, x, rng, batch: int = 1):
        p = self.problem
        x = np.asarray(x, dtype=float)
        if batch == 1:
            return quadratic_stochastic_grad(p, x, rng)
        z = rng.normal(0.0, p.sigma, (batch, p.n)).mean(axis=0) if p.sigma > 0 else np.zeros(p.n)
        return p.A @ x + z * x + p.b + z

    def exact(self, x):
        return self.problem.gradient(x)

    def objective(self, x):
        return self.problem.objective(x)

    objective_is_exact = True


def quadratic_opt(p: QuadraticProblem, tol: float = 1e-10, max_iter: int = 1_000_000) -> tuple[np.ndarray, float]:
    """Box-constrained minimizer by projected gradient descent with step ``1/lambda_max(A)``.

    Stops once the projected-gradient norm ``||x - P(x - grad)||`` is below ``tol``.
    """
    L = float(np.linalg.eigvalsh(p.A)[-1])
    lo, hi = p.box.lower, p.box.upper
    x = np.clip(-np.linalg.solve(p.A, p.b), lo, hi)
    for _ in range(max_iter):
        g = p.gradient(x)
        if np.linalg.norm(x - np.clip(x - g, lo, hi)) <= tol:
            return x, p.objective(x)
        x = np.clip(x - g / L, lo, hi)
    raise RuntimeError(f"projected gradient did not reach tolerance {tol} in {max_iter} iterations")


def quadratic_opt_faces(p: QuadraticProblem) -> tuple[np.ndarray, float]:
    """Exact minimizer by enumerating all ``3^n`` faces of the box (each coordinate at
    lower, at upper, or free) and keeping the best KKT-feasible candidate."""
    n = p.n
    if n > 10:
        raise ValueError("face enumeration limited to n <= 10")
    best_x, best_f = None, np.inf
    for state in itertools.product((0, 1, 2), repeat=n):
        state = np.array(state)
        x = np.where(state == 0, p.box.lower, p.box.upper).astype(float)
        free = state == 2
        if free.any():
            Aff = p.A[np.ix_(free, free)]
            rhs = -(p.b[free] + p.A[np.ix_(free, ~free)] @ x[~free])
            x[free] = np.linalg.solve(Aff, rhs)
        if not p.box.contains(x, tol=1e-9):
            continue
        fx = p.objective(x)
        if fx < best_f:
            best_x, best_f = x, fx
    return best_x, best_f


# ---------------------------------------------------------- matrix completion


@dataclass(frozen=True, eq=False)
class CompletionProblem:
    """Symmetric matrix completion over the PSD nuclear-norm ball.

    ``obs`` holds the observed upper-triangle pairs ``(i, j)`` with ``i <= j``;
    the mask is their symmetric closure.
    """

    C: np.ndarray
    obs: np.ndarray
    alpha: float
    mask: np.ndarray = field(init=False)

    def __post_init__(self):
        C = np.array(self.C, dtype=float)
        n = C.shape[0]
        if C.shape != (n, n) or not np.array_equal(C, C.T):
            raise ValueError("observation matrix must be square and symmetric")
        obs = np.array(self.obs, dtype=np.int64).reshape(-1, 2)
        if obs.size and (np.any(obs[:, 0] > obs[:, 1]) or obs.min() < 0 or obs.max() >= n):
            raise ValueError("observed pairs must satisfy 0 <= i <= j < n")
        if len({tuple(r) for r in obs.tolist()}) != obs.shape[0]:
            raise ValueError("observed pairs must be distinct")
        mask = np.zeros((n, n), dtype=bool)
        mask[obs[:, 0], obs[:, 1]] = True
        mask[obs[:, 1], obs[:, 0]] = True
        for a in (C, obs, mask):
            a.flags.writeable = False
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "obs", obs)
        object.__setattr__(self, "mask", mask)

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @property
    def ball(self) -> NuclearPsdBall:
        return NuclearPsdBall(self.n, self.alpha)

    def to_dict(self) -> dict:
        return {"kind": "completion", "n": self.n, "C": self.C.tolist(), "obs": self.obs.tolist(),
                "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d: dict) -> "CompletionProblem":
        return cls(np.array(d["C"]), np.array(d["obs"]), float(d["alpha"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CompletionProblem":
        return cls.from_dict(json.loads(text))


def gen_completion(n: int, r: int, p_obs: float, seed: int) -> CompletionProblem:
    """``C = W W^T + (L + L^T)/10``, upper triangle (with diagonal) observed w.p. ``p_obs``."""
    if not (1 <= r <= n):
        raise ValueError("rank must satisfy 1 <= r <= n")
    if not (0 < p_obs <= 1):
        raise ValueError("observation probability must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(n, r))
    L = rng.normal(size=(n, n))
    X_hat = W @ W.T
    C = X_hat + (L + L.T) / 10.0
    C = 0.5 * (C + C.T)
    iu, ju = np.triu_indices(n)
    keep = rng.random(iu.shape[0]) < p_obs
    obs = np.stack([iu[keep], ju[keep]], axis=1)
    alpha = float(np.trace(X_hat))  # nuclear norm of a PSD matrix
    return CompletionProblem(C, obs, alpha)


def mc_full_grad(prob: CompletionProblem, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.where(prob.mask, X - prob.C, 0.0)


def mc_objective(prob: CompletionProblem, X) -> float:
    R = np.where(prob.mask, np.asarray(X, dtype=float) - prob.C, 0.0)
    return 0.5 * float(np.sum(R * R))


def normalized_error(prob: CompletionProblem, X) -> float:
    R = np.where(prob.mask, np.asarray(X, dtype=float) - prob.C, 0.0)
    Cm = np.where(prob.mask, prob.C, 0.0)
    return float(np.sum(R * R) / np.sum(Cm * Cm))


def mc_stoch_grad(prob: CompletionProblem, X, b: int, rng: np.random.Generator) -> np.ndarray:
    """Unbiased gradient from ``b`` observed pairs drawn uniformly with replacement.

    Each draw contributes ``(|obs| / b) (X_ij - C_ij)`` at ``(i, j)`` and its mirror.
    """
    if b < 1:
        raise ValueError("batch must be >= 1")
    X = np.asarray(X, dtype=float)
    m = prob.obs.shape[0]
    picks = prob.obs[rng.integers(0, m, size=b)]
    i, j = picks[:, 0], picks[:, 1]
    res = (m / b) * (X[i, j] - prob.C[i, j])
    G = np.zeros((prob.n, prob.n))
    np.add.at(G, (i, j), res)
    off = i != j
    np.add.at(G, (j[off], i[off]), res[off])
    return G


class CompletionOracle:
    def __init__(self, problem: CompletionProblem):
        self.problem = problem
        self.shape = (problem.n, problem.n)

    def sample(self, X, rng, batch: int = 1):
        return mc_stoch_grad(self.problem, X, batch, rng)

    def exact(self, X):
        return mc_full_grad(self.problem, X)

    def objective(self, X):
        return normalized_error(self.problem, X)

    objective_is_exact = True
