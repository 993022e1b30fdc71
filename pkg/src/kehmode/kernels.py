"""Select the compiled kernels when built, else the numpy fallback.

Set ``KEHMODE_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("KEHMODE_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"

rolling_std = _impl.rolling_std
peak_prominences = _impl.peak_prominences
omp_gram = _impl.omp_gram
omp_batch = _impl.omp_batch
lasso_homotopy = _impl.lasso_homotopy
