"""Selects the transient integration kernel at import time.

The compiled Cython kernel is preferred; the numpy implementation is the
fallback and the reference for equivalence tests. Set CRYOLOOP_PURE=1 to
force the pure-Python kernel (used by the benchmark and the test suite).
"""

import os

from . import _kernel_py

if os.environ.get("CRYOLOOP_PURE"):
    active = _kernel_py
else:
    try:
        from . import _kernel as active  # type: ignore[no-redef]
    except ImportError:
        active = _kernel_py

advance = active.advance
IMPLEMENTATION = active.IMPLEMENTATION
