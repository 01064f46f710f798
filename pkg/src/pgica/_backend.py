"""Backend selection for the hot kernels.

Set ``PGICA_BACKEND=numpy`` (or ``PGICA_DISABLE_NUMBA=1``) before import to
force the pure-numpy path. The default is numba when it imports cleanly.
"""

import os

_requested = os.environ.get("PGICA_BACKEND", "").strip().lower()
if os.environ.get("PGICA_DISABLE_NUMBA", "").strip() not in ("", "0"):
    _requested = "numpy"

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

if _requested not in ("", "numba", "numpy"):
    raise ImportError(f"PGICA_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numpy" if (_requested == "numpy" or not HAVE_NUMBA) else "numba"
