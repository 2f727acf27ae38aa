"""Kernel backend selection.

Hot loops exist twice: numba ``@njit`` kernels and a vectorised numpy path.
``GDC_NUMBA=0`` in the environment selects numpy as the default; numba is
also skipped silently when it cannot be imported.
"""
import os

try:
    import numba  # noqa: F401
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def _env_default():
    flag = os.environ.get("GDC_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off") or not HAVE_NUMBA:
        return "numpy"
    return "numba"


DEFAULT_BACKEND = _env_default()


def resolve(backend=None):
    name = backend or DEFAULT_BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


def thread_cap():
    """Upper bound on worker threads from ``GDC_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("GDC_THREADS", "1")))
    except ValueError:
        return 1
