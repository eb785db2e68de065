"""Kernel backend selection.

The hot per-step loops (mirror descent recursion, affine SGD recursion,
discrete Kalman filtering, steady-state momentum filtering) exist twice:
as a compiled Cython extension (varopt.backend._core) and as a plain
numpy fallback (varopt.backend.fallback).  The compiled module is picked
at import when available; set VAROPT_BACKEND=python to force the
fallback, VAROPT_BACKEND=cython to fail loudly when the extension is
missing.

Both implementations run the same recursions; benchmarks/bench_kernels.py
compares their throughput.
"""

from __future__ import annotations

import os

from . import fallback as _fallback

_choice = os.environ.get("VAROPT_BACKEND", "auto").lower()

if _choice == "python":
    _impl = _fallback
elif _choice in ("auto", "cython"):
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        if _choice == "cython":
            raise ImportError(
                "VAROPT_BACKEND=cython but the compiled extension is not built"
            )
        _impl = _fallback
else:
    raise ValueError(f"unknown VAROPT_BACKEND value {_choice!r}")

BACKEND_NAME: str = _impl.NAME

mirror_run = _impl.mirror_run
affine_sgd_run = _impl.affine_sgd_run
kalman_filter_run = _impl.kalman_filter_run
momentum_filter_run = _impl.momentum_filter_run

__all__ = [
    "BACKEND_NAME",
    "mirror_run",
    "affine_sgd_run",
    "kalman_filter_run",
    "momentum_filter_run",
]
