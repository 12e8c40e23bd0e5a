"""Kernel backend selection.

The compiled extension is used when importable; otherwise the NumPy
fallback. Override with DEMIX_KGE_BACKEND=c (fail if missing) or =py.
"""

import os

from . import _pykernels

TRANSE = _pykernels.TRANSE
ROTATE = _pykernels.ROTATE
DISTMULT = _pykernels.DISTMULT
COMPLEX = _pykernels.COMPLEX


def _select():
    choice = os.environ.get("DEMIX_KGE_BACKEND", "auto")
    if choice == "py":
        return _pykernels, "py"
    try:
        from . import _ckernels

        return _ckernels, "c"
    except ImportError:
        if choice == "c":
            raise
        return _pykernels, "py"


_impl, BACKEND = _select()

score_into = _impl.score_into
score_swap_into = _impl.score_swap_into
grad_into = _impl.grad_into
grad_swap_into = _impl.grad_swap_into
score_all_into = _impl.score_all_into


def get_backend(name: str):
    """Return a specific backend module ("py" or "c"), for benchmarks."""
    if name == "py":
        return _pykernels
    if name == "c":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
