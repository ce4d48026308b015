"""Backend selection: compiled kernels if available, NumPy otherwise.

Set ``SEGTRACK_PUREPY=1`` to force the NumPy fallback even when the
compiled extension is importable (used by the benchmark).
"""

from __future__ import annotations

import os

from . import _numpy_kernels

if os.environ.get("SEGTRACK_PUREPY", "") not in ("", "0"):
    impl = _numpy_kernels
else:
    try:
        from . import _speedups as impl  # type: ignore[no-redef]
    except ImportError:
        impl = _numpy_kernels

BACKEND_NAME: str = impl.BACKEND_NAME
HAVE_SPEEDUPS: bool = BACKEND_NAME == "cython"

medoid_argmin = impl.medoid_argmin
kernel_scores = impl.kernel_scores
accumulate_votes = impl.accumulate_votes
