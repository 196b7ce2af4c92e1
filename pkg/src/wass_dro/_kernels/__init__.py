"""Kernel backend selection.

The compiled extension is preferred when importable; set
``WASS_DRO_BACKEND=python`` to force the NumPy fallback or
``WASS_DRO_BACKEND=cython`` to require the compiled path. The active
backend name is recorded in run metadata: results are bitwise
reproducible within a backend, and agree across backends only to
floating-point roundoff.
"""

import os

from . import impl_py

_requested = os.environ.get("WASS_DRO_BACKEND", "auto")
if _requested not in ("auto", "cython", "python"):
    raise ValueError(f"WASS_DRO_BACKEND must be auto|cython|python, got {_requested!r}")

_impl = None
if _requested in ("auto", "cython"):
    try:
        from . import _speedups as _impl
    except ImportError:
        if _requested == "cython":
            raise
        _impl = None
if _impl is None:
    _impl = impl_py

rbf_weights = _impl.rbf_weights
rbf_apply = _impl.rbf_apply
rbf_coeff_grad = _impl.rbf_coeff_grad


def backend_name() -> str:
    return _impl.BACKEND
