"""Backend selection for the sequence hot-loop kernels.

Two interchangeable implementations exist: a numba-JIT backend (default
when numba imports) and a pure-numpy fallback. The active backend is
chosen once at import from the TRISPAN_KERNELS environment variable
("numba" or "numpy"); `set_backend` can override it in-process, which
the benchmark and the cross-backend tests rely on.
"""

import os

from ..errors import ConfigError
from . import _numpy

_BACKENDS = {"numpy": _numpy}

try:
    from . import _numba

    _BACKENDS["numba"] = _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None


def available_backends():
    return sorted(_BACKENDS)


def _resolve_initial():
    requested = os.environ.get("TRISPAN_KERNELS", "").strip().lower()
    if requested:
        if requested not in _BACKENDS:
            raise ConfigError(
                f"TRISPAN_KERNELS={requested!r} is not one of {available_backends()}"
            )
        return requested
    return "numba" if "numba" in _BACKENDS else "numpy"


_active_name = _resolve_initial()


def active_backend():
    """Name of the backend the dispatching wrappers currently use."""
    return _active_name


def get_backend(name):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ConfigError(f"unknown kernel backend {name!r}; have {available_backends()}")


def set_backend(name):
    global _active_name
    if name not in _BACKENDS:
        raise ConfigError(f"unknown kernel backend {name!r}; have {available_backends()}")
    _active_name = name


def lstm_fwd(x, wx, wh, b):
    return _BACKENDS[_active_name].lstm_fwd(x, wx, wh, b)


def lstm_bwd(x, wx, wh, gates, c_seq, h_seq, grad_h):
    return _BACKENDS[_active_name].lstm_bwd(x, wx, wh, gates, c_seq, h_seq, grad_h)


def conv1d_fwd(x, w):
    return _BACKENDS[_active_name].conv1d_fwd(x, w)


def conv1d_bwd(x, w, grad_y):
    return _BACKENDS[_active_name].conv1d_bwd(x, w, grad_y)
