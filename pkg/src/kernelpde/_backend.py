"""Backend selection for pairing-matrix assembly.

The compiled extension ``kernelpde._gram`` is used when it imports, unless the
environment variable ``KERNELPDE_PURE_PYTHON`` is set to a non-empty value
other than ``0``.  For high-dimensional first-order batches the numpy route is
a few BLAS products and beats the per-pair compiled loop, so those calls are
routed to numpy regardless (see ``benchmarks/bench_gram.py``).
"""
from __future__ import annotations

import logging
import os

import numpy as np

from . import _gram_py

log = logging.getLogger(__name__)

_gram_ext = None
if os.environ.get("KERNELPDE_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _gram as _gram_ext  # type: ignore[attr-defined]
    except ImportError:  # pragma: no cover - depends on the build
        log.debug("compiled pairing kernel unavailable, using numpy")

# above this many coordinates the numpy/BLAS route wins
BLAS_DIMENSION = 24

scaled_sqdist = _gram_py.scaled_sqdist


def compiled_available() -> bool:
    return _gram_ext is not None


def name() -> str:
    return "cython" if _gram_ext is not None else "numpy"


def _parts(fs):
    g = fs.grad if fs.grad is not None and np.any(fs.grad) else None
    h = fs.hess if fs.hess is not None and np.any(fs.hess) else None
    full = fs.hess_full and h is not None
    return fs.points, fs.value, g, h, full


def pair_matrix(k, a, b, symmetric=False, backend=None):
    """Dispatch one pairing-matrix assembly; ``backend`` forces 'numpy' or 'cython'."""
    xa, ca, ga, ha, fa = _parts(a)
    xb, cb, gb, hb, fb = _parts(b)
    order = (2 if ha is not None else 1 if ga is not None else 0) + (
        2 if hb is not None else 1 if gb is not None else 0
    )
    args = (k.metric, k.family_code, k.family_param, xa, ca, ga, ha, fa, xb, cb, gb, hb, fb, order, symmetric)
    if backend is None:
        use_ext = _gram_ext is not None and k.dimension <= BLAS_DIMENSION
    elif backend == "cython":
        if _gram_ext is None:
            raise RuntimeError("compiled pairing kernel is not built")
        use_ext = True
    elif backend == "numpy":
        use_ext = False
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if use_ext:
        return _gram_ext.pair_matrix(*args)
    return _gram_py.pair_matrix(*args)
