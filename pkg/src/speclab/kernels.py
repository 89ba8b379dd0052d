"""Backend dispatch for the hot kernels.

The compiled extension is preferred; the numpy fallback keeps the package
functional when no compiler was available. ``SPECLAB_FORCE_FALLBACK=1`` forces
the fallback, which the benchmark and the backend-agreement tests use.
"""

from __future__ import annotations

import os

if os.environ.get("SPECLAB_FORCE_FALLBACK"):
    from . import _core_fallback as _impl

    BACKEND = "fallback"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _core_fallback as _impl

        BACKEND = "fallback"

disorder_matrix = _impl.disorder_matrix
batch_eigvalsh = _impl.batch_eigvalsh


def backend() -> str:
    return BACKEND
