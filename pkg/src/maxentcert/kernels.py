"""Backend selection for the hot reductions.

The compiled extension is used when it was built; otherwise (or when
``MAXENTCERT_PURE_PYTHON=1``) the numpy implementation is used. Both expose
the same functions.
"""
import os

from . import _kernels_py

if os.environ.get("MAXENTCERT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"


def available_backends():
    out = {"python": _kernels_py}
    try:
        from . import _kernels
        out["compiled"] = _kernels
    except ImportError:
        pass
    return out


def set_backend(name):
    """Switch implementations at run time (``"compiled"`` or ``"python"``)."""
    global _impl, BACKEND
    backends = available_backends()
    if name not in backends:
        raise ValueError(f"backend {name!r} not available (have {sorted(backends)})")
    _impl, BACKEND = backends[name], name


def panel_sums(energy, weights, floor, kronrod, gauss, jacobian):
    return _impl.panel_sums(energy, weights, floor, kronrod, gauss, jacobian)


def tilted_line_stats(logw, f, t):
    return _impl.tilted_line_stats(logw, f, float(t))
