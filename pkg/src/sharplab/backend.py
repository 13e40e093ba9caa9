"""Backend selection for the hot numeric kernels.

The stepping loops in ``_qkernels`` are compiled with numba when available.
Set ``SHARPLAB_BACKEND=numpy`` to force the pure-numpy path (useful for
debugging and for the backend benchmark), or ``SHARPLAB_BACKEND=numba`` to
fail loudly if numba cannot be imported.
"""

import os

_ENV_VAR = "SHARPLAB_BACKEND"


def _resolve_backend() -> str:
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        import numba  # noqa: F401  (raises if unavailable, as requested)

        return "numba"
    if choice not in ("", "auto"):
        raise ValueError(
            f"{_ENV_VAR} must be 'numba', 'numpy' or 'auto', got {choice!r}"
        )
    try:
        import numba  # noqa: F401

        return "numba"
    except ImportError:
        return "numpy"


BACKEND = _resolve_backend()
USE_NUMBA = BACKEND == "numba"

if USE_NUMBA:
    from numba import njit
else:

    def njit(*args, **kwargs):
        """No-op stand-in for numba.njit on the numpy backend."""

        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap
