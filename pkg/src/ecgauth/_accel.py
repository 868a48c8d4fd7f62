"""Optional numba acceleration for the hot kernels.

The two per-sample/per-merge loops (QRS threshold scan, linkage ranks) run
under numba's @njit by default. Setting ECGAUTH_PURE_NUMPY=1 in the
environment, or running without numba installed, selects the interpreted
fallback. Both paths execute the same function bodies, so results are
identical either way.
"""

import os

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap


def _flag_set(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not _flag_set("ECGAUTH_PURE_NUMPY")


def maybe_jit(func):
    """Compile func with numba when enabled, otherwise return it unchanged."""
    if USE_NUMBA:
        return njit(cache=True)(func)
    return func
