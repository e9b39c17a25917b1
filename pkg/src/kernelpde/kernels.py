"""Radial kernels, their derivative pairings, and Gram/cross matrix assembly.

Every kernel here is a function of the weighted anisotropic squared distance

    t = sum_i w_i (s_i - s2_i)**2 / sigma_i**2,

written ``k(s, s2) = psi(t)``.  Derivative pairings only ever need
``psi^(k)(t)`` for ``k <= 4`` plus polynomial contractions of the difference
vector, which is what the assembly backends compute.

Differentiability budget (total derivative order across both arguments):

==================  ======================
family              budget
==================  ======================
gaussian            unlimited
inverse_quadratic   unlimited
matern nu = p+1/2   2p
==================  ======================
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from ._kernel_math import MAX_PSI_ORDER, UnsupportedOrderError, matern_poly_coeffs, psi_derivatives
from .functionals import DualFunctional, FunctionalSet

GAUSSIAN = "gaussian"
MATERN = "matern"
INVERSE_QUADRATIC = "inverse_quadratic"

FAMILY_CODES = {GAUSSIAN: 0, MATERN: 1, INVERSE_QUADRATIC: 2}
MATERN_NUS = (0.5, 1.5, 2.5, 3.5, 4.5)

@dataclass(frozen=True)
class KernelSpec:
    family: str
    dimension: int
    lengthscales: tuple[float, ...] | float = 1.0
    coordinate_weights: tuple[float, ...] | None = None
    nu: float | None = None
    metric: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILY_CODES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        d = int(self.dimension)
        if d < 1:
            raise ValueError("dimension must be >= 1")
        object.__setattr__(self, "dimension", d)
        ls = np.broadcast_to(np.asarray(self.lengthscales, dtype=float), (d,)).copy()
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError("lengthscales must be finite and strictly positive")
        object.__setattr__(self, "lengthscales", tuple(ls))
        if self.coordinate_weights is None:
            w = np.ones(d)
        else:
            w = np.broadcast_to(np.asarray(self.coordinate_weights, dtype=float), (d,)).copy()
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("coordinate weights must be finite and nonnegative")
        object.__setattr__(self, "coordinate_weights", tuple(w))
        if self.family == MATERN:
            if self.nu is None or float(self.nu) not in MATERN_NUS:
                raise ValueError(f"matern nu must be one of {MATERN_NUS}, got {self.nu}")
            object.__setattr__(self, "nu", float(self.nu))
        elif self.nu is not None:
            raise ValueError("nu only applies to the matern family")
        metric = w / ls**2
        metric.setflags(write=False)
        object.__setattr__(self, "metric", metric)

    @property
    def budget(self) -> float:
        if self.family == MATERN:
            return 2 * int(self.nu - 0.5)
        return math.inf

    @property
    def family_code(self) -> int:
        return FAMILY_CODES[self.family]

    @property
    def family_param(self) -> float:
        """Matern half-order p (nu = p + 1/2) or inverse-quadratic scale 1/(2d)."""
        if self.family == MATERN:
            return float(int(self.nu - 0.5))
        if self.family == INVERSE_QUADRATIC:
            return 1.0 / (2.0 * self.dimension)
        return 0.0

    def psi(self, t, order: int = 0):
        """Derivatives ``psi^(k)(t)`` for ``k = 0..order``, shape ``(order+1,) + t.shape``."""
        return psi_derivatives(self.family_code, self.family_param, t, order)


def isotropic(family: str, dimension: int, lengthscale: float, nu: float | None = None) -> KernelSpec:
    return KernelSpec(family, dimension, float(lengthscale), None, nu)


def _check_compatible(k: KernelSpec, a: FunctionalSet, b: FunctionalSet) -> None:
    for fs in (a, b):
        if fs.dimension != k.dimension:
            raise ValueError(f"functional dimension {fs.dimension} != kernel dimension {k.dimension}")
    total = a.order + b.order
    if total > k.budget:
        raise UnsupportedOrderError(
            f"{k.family}(nu={k.nu}) supports total derivative order {k.budget}, pairing needs {total}"
        )


def pair_matrix(
    k: KernelSpec, a: FunctionalSet, b: FunctionalSet, symmetric: bool = False, backend: str | None = None
) -> np.ndarray:
    """Matrix ``[a_n (x) b_m] k`` with ``a`` acting on the first kernel argument."""
    _check_compatible(k, a, b)
    return _backend.pair_matrix(k, a, b, symmetric, backend)


def gram(k: KernelSpec, phis) -> np.ndarray:
    """Symmetric Gram matrix; the lower triangle mirrors the upper one exactly."""
    fs = phis if isinstance(phis, FunctionalSet) else FunctionalSet.from_functionals(phis)
    return pair_matrix(k, fs, fs, symmetric=True)


def cross_matrix(k: KernelSpec, points, phis) -> np.ndarray:
    """Rows ``K(s, phi)`` for every point ``s``."""
    fs = phis if isinstance(phis, FunctionalSet) else FunctionalSet.from_functionals(phis)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != k.dimension:
        raise ValueError(f"points have dimension {pts.shape[1]}, kernel has {k.dimension}")
    return pair_matrix(k, FunctionalSet.points_only(pts), fs)


def cross_row(k: KernelSpec, s, phis) -> np.ndarray:
    return cross_matrix(k, np.atleast_2d(np.asarray(s, dtype=float)), phis)[0]


def eval_pair(k: KernelSpec, F: DualFunctional, G: DualFunctional) -> float:
    fa = FunctionalSet.from_functionals([F])
    fb = FunctionalSet.from_functionals([G])
    return float(pair_matrix(k, fa, fb)[0, 0])


def eval(k: KernelSpec, s, s2) -> float:  # noqa: A001 - mirrors the kernel notation k(s, s2)
    s = np.asarray(s, dtype=float).ravel()
    s2 = np.asarray(s2, dtype=float).ravel()
    if s.shape != (k.dimension,) or s2.shape != (k.dimension,):
        raise ValueError(f"points must have dimension {k.dimension}")
    t = float(np.sum(k.metric * (s - s2) ** 2))
    return float(k.psi(t, 0)[0])


def representer_gradient(k: KernelSpec, points, phis: FunctionalSet, coef) -> np.ndarray:
    """Gradient of ``s -> K(s, phis) @ coef`` at each point, shape ``(n, d)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    coef = np.asarray(coef, dtype=float)
    if phis.order >= 2:
        # second-order functionals: one partial-derivative pairing per coordinate
        out = np.empty(pts.shape)
        for i in range(k.dimension):
            g = np.zeros(pts.shape)
            g[:, i] = 1.0
            out[:, i] = pair_matrix(k, FunctionalSet(pts, np.zeros(len(pts)), grad=g), phis) @ coef
        return out
    _check_compatible(k, FunctionalSet(pts, np.zeros(len(pts)), grad=np.zeros(pts.shape)), phis)
    a = k.metric
    x, y = pts, phis.points
    t = _backend.scaled_sqdist(a, x, y)
    psi = k.psi(t, 2)
    # d/ds K(s, G_m) = [c_m psi' - psi'' (u . g_m)] u - 2 psi' A g_m,  u = 2 A (s - y_m)
    w = psi[1] * phis.value[None, :]
    if phis.grad is not None:
        ag = phis.grad * a
        ug = 2.0 * (x @ ag.T - np.sum(ag * y, axis=1)[None, :])
        w = w - psi[2] * ug
    w = w * coef[None, :]
    out = 2.0 * a * (np.sum(w, axis=1)[:, None] * x - w @ y)
    if phis.grad is not None:
        out -= 2.0 * a * ((psi[1] * coef[None, :]) @ phis.grad)
    return out

