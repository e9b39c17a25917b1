"""Kernel collocation for nonlinear and parametric PDEs."""
from . import _backend
from .kernels import KernelSpec, UnsupportedOrderError, cross_row, eval_pair, gram

__all__ = ["KernelSpec", "UnsupportedOrderError", "cross_row", "eval_pair", "gram", "backend_name"]


def backend_name() -> str:
    """Name of the pairing backend chosen at import ('cython' or 'numpy')."""
    return _backend.name()
