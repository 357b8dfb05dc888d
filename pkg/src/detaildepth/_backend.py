"""Kernel backend selection.

``DETAILDEPTH_BACKEND=numpy`` forces the pure-numpy kernels; the default is
``numba`` when it imports, numpy otherwise. The choice is read once at import
time; :func:`use_backend` switches it at runtime (tests and benchmarks).
"""
import importlib
import logging
import os

logger = logging.getLogger(__name__)

ENV_VAR = "DETAILDEPTH_BACKEND"
BACKENDS = ("numba", "numpy")

_active = None


def _load(name):
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    return importlib.import_module(f"._kernels_{name}", __package__)


def use_backend(name):
    """Activate a backend by name and return its kernel module."""
    global _active
    _active = (name, _load(name))
    return _active[1]


def backend_name():
    kernels()
    return _active[0]


def kernels():
    if _active is None:
        requested = os.environ.get(ENV_VAR, "numba").strip().lower() or "numba"
        try:
            use_backend(requested)
        except ImportError:
            logger.warning("numba unavailable, falling back to numpy kernels")
            use_backend("numpy")
    return _active[1]
