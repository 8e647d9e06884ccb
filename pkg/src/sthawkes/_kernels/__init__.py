"""Numerical kernel backend selection.

The compiled Cython core is used when available; setting the environment
variable ``STHAWKES_PURE=1`` (before import) forces the pure-NumPy
fallback.  Both backends implement the same functions with identical
semantics; see ``benchmarks/bench_kernels.py`` for the speed comparison.
"""

from __future__ import annotations

import os

from . import pure

if os.environ.get("STHAWKES_PURE", "").strip() not in ("", "0"):
    _impl = pure
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = pure

trig_sums = _impl.trig_sums
epan2_grid = _impl.epan2_grid
epan1_grid = _impl.epan1_grid
epan2_points = _impl.epan2_points
epan1_points = _impl.epan1_points

EXP_CUTOFF = pure.EXP_CUTOFF


def backend_name() -> str:
    """Name of the active kernel backend: "cython" or "pure"."""
    return _impl.BACKEND
