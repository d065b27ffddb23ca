"""Kernel backend selection.

Hot loops have a numba ``@njit`` version and a pure-numpy version with
identical results.  Set ``DNFCOUNT_DISABLE_NUMBA=1`` to force numpy; the
numpy path is also used when numba is not importable.
"""
import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

ENV_FLAG = "DNFCOUNT_DISABLE_NUMBA"
BACKENDS = ("numba", "numpy")


def _env_disabled() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() not in ("", "0", "false", "no")


def default_backend() -> str:
    return "numba" if HAS_NUMBA and not _env_disabled() else "numpy"


def resolve(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    if backend == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


if HAS_NUMBA:
    njit = numba.njit
else:  # pragma: no cover
    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
