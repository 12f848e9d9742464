"""Backend selection for the numerical kernels.

The compiled Cython module is used when importable; otherwise the numpy
fallback is used. Set ``MORPHBO_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("MORPHBO_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

se_cross = _impl.se_cross
sq_diffs = _impl.sq_diffs
se_gram_from_diffs = _impl.se_gram_from_diffs
polygon_areas = _impl.polygon_areas


def backends():
    """Return the available backend modules keyed by name."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        out["cython"] = _kernels
    return out
