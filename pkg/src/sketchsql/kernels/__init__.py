"""LSTM kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback keeps
the package pure-Python installable. SKETCHSQL_BACKEND=numpy|cython forces a
choice (cython raises if the extension is missing).
"""

import os

from sketchsql.kernels import lstm_numpy

_forced = os.environ.get("SKETCHSQL_BACKEND", "").strip().lower()

if _forced == "numpy":
    _impl = lstm_numpy
elif _forced == "cython":
    from sketchsql.kernels import _lstm_cy as _impl
else:
    try:
        from sketchsql.kernels import _lstm_cy as _impl
    except ImportError:
        _impl = lstm_numpy

BACKEND = _impl.NAME
lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward


def available_backends():
    names = ["numpy"]
    try:
        from sketchsql.kernels import _lstm_cy  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Return the kernel module for an explicit backend name."""
    if name == "numpy":
        return lstm_numpy
    if name == "cython":
        from sketchsql.kernels import _lstm_cy

        return _lstm_cy
    raise ValueError(f"unknown backend {name!r}")
