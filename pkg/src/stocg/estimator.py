"""Momentum gradient averaging shared by the conditional-gradient solvers."""
from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np


@runtime_checkable
class GradientOracle(Protocol):
    """Source of unbiased stochastic gradients of an expected objective.

    ``sample(x, rng, batch)`` returns the mean of ``batch`` independent draws
    and must not modify ``x``. ``exact(x)``, when the oracle has it, returns
    the true gradient.
    """

    shape: tuple

    def sample(self, x: np.ndarray, rng: np.random.Generator, batch: int = 1) -> np.ndarray: ...


class ExactGradientUnavailable(RuntimeError):
    pass


def has_exact(oracle) -> bool:
    return callable(getattr(oracle, "exact", None))


class GradientEstimate:
    """Running average ``d_t = (1 - rho) d_{t-1} + rho g``, starting from ``d_0 = 0``."""

    def __init__(self, shape):
        if isinstance(shape, int):
            shape = (shape,)
        self._shape = tuple(shape)
        self.d = np.zeros(self._shape)
        self.t = 0

    @property
    def shape(self) -> tuple:
        return self._shape

    def update(self, rho: float, g: np.ndarray) -> "GradientEstimate":
        g = np.asarray(g, dtype=float)
        if g.shape != self._shape:
            raise ValueError(f"gradient shape {g.shape} does not match estimator shape {self._shape}")
        if not (0.0 < rho <= 1.0):
            raise ValueError(f"rho must lie in (0, 1], got {rho}")
        if rho == 1.0:
            self.d = g.copy()
        else:
            self.d = (1.0 - rho) * self.d + rho * g
        self.t += 1
        return self

    def grad_error_sq(self, oracle, x: np.ndarray) -> float:
        """Squared distance between the estimate and the oracle's exact gradient at ``x``."""
        return grad_error_sq(self, oracle, x)

    def __repr__(self) -> str:
        return f"GradientEstimate(shape={self._shape}, t={self.t})"


def update(est: GradientEstimate, rho: float, g: np.ndarray) -> GradientEstimate:
    return est.update(rho, g)


def grad_error_sq(est: GradientEstimate, oracle, x: np.ndarray) -> float:
    if not has_exact(oracle):
        raise ExactGradientUnavailable(f"{type(oracle).__name__} has no exact gradient")
    diff = np.asarray(oracle.exact(x), dtype=float) - est.d
    return float(np.sum(diff * diff))
