"""Backend switch for the compiled kernels.

Set ``PARKDUR_DISABLE_NUMBA=1`` to force the pure-numpy path. The flag is read
once at import time.
"""

import os

_FLAG = os.environ.get("PARKDUR_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    if DISABLED:
        raise ImportError("disabled by PARKDUR_DISABLE_NUMBA")
    from numba import njit

    NUMBA = True
except ImportError:
    NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


BACKEND = "numba" if NUMBA else "numpy"

# fastmath stays off: results must be reproducible bit-for-bit per backend
JIT_OPTS = dict(cache=True, nogil=True, fastmath=False, error_model="numpy")
