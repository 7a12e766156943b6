"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise (or when the
environment variable ``STOCG_PURE_PYTHON`` is set to a non-empty value other
than ``0``) the numpy fallback is used. Both expose the same functions.
"""
from __future__ import annotations

import importlib
import os
import warnings

from . import _pykernels

KERNEL_NAMES = (
    "subset_values_facility",
    "subset_values_concave",
    "facility_marginals",
    "concave_marginals",
    "pipage_batch",
    "power_iteration_min",
)


def _load_compiled():
    try:
        return importlib.import_module("stocg._ckernels")
    except ImportError:
        return None


def get_backend(name: str):
    """Return the kernel module for ``"compiled"`` or ``"python"``."""
    if name == "python":
        return _pykernels
    if name == "compiled":
        mod = _load_compiled()
        if mod is None:
            raise ImportError("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        return mod
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    return ["compiled", "python"] if _load_compiled() is not None else ["python"]


_force_py = os.environ.get("STOCG_PURE_PYTHON", "") not in ("", "0")
_compiled = None if _force_py else _load_compiled()
if _compiled is None and not _force_py:
    warnings.warn("stocg: compiled kernels unavailable, using the pure-Python fallback", RuntimeWarning, stacklevel=2)

_impl = _compiled if _compiled is not None else _pykernels
BACKEND = "compiled" if _compiled is not None else "python"

subset_values_facility = _impl.subset_values_facility
subset_values_concave = _impl.subset_values_concave
facility_marginals = _impl.facility_marginals
concave_marginals = _impl.concave_marginals
pipage_batch = _impl.pipage_batch
power_iteration_min = _impl.power_iteration_min
