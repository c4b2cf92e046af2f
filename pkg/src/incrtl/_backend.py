"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy fallback in ``_pykernels``. Setting ``INCRTL_BACKEND=python`` forces the
fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("INCRTL_BACKEND", "").lower() == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

spd_solve_batch = _impl.spd_solve_batch
signed_rank_counts = _impl.signed_rank_counts
pairwise_sq_dists = _impl.pairwise_sq_dists

__all__ = ["BACKEND", "spd_solve_batch", "signed_rank_counts", "pairwise_sq_dists"]
