"""Quadrature kernel dispatch: the compiled extension when available,
otherwise the pure-numpy implementation. Set FGFPCA_FORCE_PYTHON=1 to
skip the compiled kernel (useful for benchmarking and debugging).
"""
import os

from . import _agq_py

if os.environ.get("FGFPCA_FORCE_PYTHON", "0") not in ("", "0"):
    _impl = _agq_py
    BACKEND = "python"
else:
    try:
        from . import _agq_cy as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _agq_py
        BACKEND = "python"

agq_nll_grad = _impl.agq_nll_grad
agq_loglik = _impl.agq_loglik
posterior_modes = _impl.posterior_modes


def available_backends():
    """Names and modules of every importable kernel backend."""
    out = {"python": _agq_py}
    try:
        from . import _agq_cy

        out["cython"] = _agq_cy
    except ImportError:
        pass
    return out
