"""Step-size and averaging-parameter schedules.

All schedules are pure functions of a zero-based step index ``t``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class ScheduleKind(str, Enum):
    RHO_THEORY = "rho-theory"
    GAMMA_THEORY = "gamma-theory"
    RHO_EXPERIMENT = "rho-exp"
    GAMMA_EXPERIMENT = "gamma-exp"
    INV_T = "inv-t"
    CONSTANT = "const"


def rho_theory(t: int) -> float:
    """Averaging weight ``4 / (t + 8)^(2/3)``; equals 1 at ``t = 0``."""
    _check_index(t)
    return 4.0 / _pow23(t + 8.0)


def gamma_theory(t: int) -> float:
    _check_index(t)
    return 2.0 / (t + 8.0)


def rho_experiment(t: int) -> float:
    _check_index(t)
    return 1.0 / _pow23(t + 1.0)


def gamma_experiment(t: int) -> float:
    _check_index(t)
    return 1.0 / (t + 1.0)


def inv_t(t: int) -> float:
    _check_index(t)
    return 1.0 / (t + 1.0)


def scg_step(T: int) -> float:
    """Continuous-greedy step length ``1/T``."""
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {T}")
    return 1.0 / T


def _pow23(a: float) -> float:
    # cube root of the square is exact on perfect cubes, unlike a ** (2/3)
    return float(np.cbrt(a * a))


def _check_index(t: int) -> None:
    if t < 0:
        raise ValueError(f"step index must be >= 0, got {t}")


_FUNCS = {
    ScheduleKind.RHO_THEORY: rho_theory,
    ScheduleKind.GAMMA_THEORY: gamma_theory,
    ScheduleKind.RHO_EXPERIMENT: rho_experiment,
    ScheduleKind.GAMMA_EXPERIMENT: gamma_experiment,
    ScheduleKind.INV_T: inv_t,
}


@dataclass(frozen=True)
class Schedule:
    """A named schedule; call it with a step index to get its value."""

    kind: ScheduleKind
    value: float | None = None

    def __post_init__(self):
        if self.kind is ScheduleKind.CONSTANT:
            if self.value is None or not (0.0 < self.value <= 1.0):
                raise ValueError(f"constant schedule needs a value in (0, 1], got {self.value}")
        elif self.value is not None:
            raise ValueError(f"{self.kind.value} takes no value")

    def __call__(self, t: int) -> float:
        if self.kind is ScheduleKind.CONSTANT:
            _check_index(t)
            return float(self.value)
        return _FUNCS[self.kind](t)

    @property
    def name(self) -> str:
        if self.kind is ScheduleKind.CONSTANT:
            return f"const:{self.value!r}"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "Schedule":
        """Build a schedule from its config name, e.g. ``"rho-theory"`` or ``"const:0.5"``."""
        text = text.strip()
        if text.startswith("const:"):
            raw = text[len("const:"):]
            try:
                value = float(raw)
            except ValueError:
                raise ValueError(f"bad constant schedule value {raw!r}") from None
            return cls(ScheduleKind.CONSTANT, value)
        try:
            kind = ScheduleKind(text)
        except ValueError:
            names = ", ".join(k.value for k in ScheduleKind if k is not ScheduleKind.CONSTANT)
            raise ValueError(f"unknown schedule {text!r}; expected one of {names}, const:<x>") from None
        if kind is ScheduleKind.CONSTANT:
            raise ValueError("constant schedule must be written const:<x>")
        return cls(kind)

    def __str__(self) -> str:
        return self.name


def as_schedule(s) -> Schedule:
    if isinstance(s, Schedule):
        return s
    if isinstance(s, str):
        return Schedule.parse(s)
    raise TypeError(f"cannot interpret {s!r} as a schedule")


RHO_THEORY = Schedule(ScheduleKind.RHO_THEORY)
GAMMA_THEORY = Schedule(ScheduleKind.GAMMA_THEORY)
RHO_EXPERIMENT = Schedule(ScheduleKind.RHO_EXPERIMENT)
GAMMA_EXPERIMENT = Schedule(ScheduleKind.GAMMA_EXPERIMENT)
INV_T = Schedule(ScheduleKind.INV_T)
