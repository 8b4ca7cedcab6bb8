"""Kernel dispatch: compiled extension when built, numpy fallback otherwise.

Set ``REVIEWGEN_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("REVIEWGEN_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

lcs_length = _impl.lcs_length
gru_combine_forward = _impl.gru_combine_forward
gru_combine_backward = _impl.gru_combine_backward
gru_reset_backward = _impl.gru_reset_backward

__all__ = [
    "BACKEND",
    "lcs_length",
    "gru_combine_forward",
    "gru_combine_backward",
    "gru_reset_backward",
]
