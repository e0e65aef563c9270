"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when
``PATIENTSTAB_PURE_PYTHON`` is set to a non-empty value, the numpy
fallback is used. Both expose ``power_iterate``, ``simulate_steps`` and
``product_log_norms``.
"""

import importlib
import os

from . import _fallback


def load(name=None):
    """Return a kernel module by name (``"cython"`` or ``"python"``)."""
    if name == "python":
        return _fallback
    if name in (None, "cython"):
        try:
            return importlib.import_module("patientstab._kernels")
        except ImportError:
            if name == "cython":
                raise
            return _fallback
    raise ValueError(f"unknown backend {name!r}")


if os.environ.get("PATIENTSTAB_PURE_PYTHON"):
    kernels = _fallback
else:
    kernels = load()

BACKEND = "python" if kernels is _fallback else "cython"


def default_threads():
    """Worker threads for trajectory batches, from ``PATIENTSTAB_THREADS``."""
    raw = os.environ.get("PATIENTSTAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"PATIENTSTAB_THREADS must be an integer, got {raw!r}") from None
