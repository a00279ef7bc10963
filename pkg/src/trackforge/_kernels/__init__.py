"""Hot-loop kernels with backend selection at import time.

The compiled Cython extension is used when it was built; otherwise the
NumPy reference implementation takes over transparently.  Set
``TRACKFORGE_NO_EXT=1`` in the environment to force the fallback.
Both backends implement the same contract and are parity-tested.
"""

import os

if os.environ.get("TRACKFORGE_NO_EXT"):
    from trackforge._kernels import reference as _impl
else:
    try:
        from trackforge._kernels import _ext as _impl  # type: ignore[attr-defined]
    except ImportError:
        from trackforge._kernels import reference as _impl

COMPILED = bool(getattr(_impl, "COMPILED", False))
BACKEND = "compiled" if COMPILED else "numpy"

project_hulls = _impl.project_hulls
iou_matrix = _impl.iou_matrix

__all__ = ["COMPILED", "BACKEND", "project_hulls", "iou_matrix"]
