"""Independent reference computations used by the tests.

Kernels are re-implemented from their textbook closed forms in mpmath and
differentiated by nested central finite differences at 30 significant digits,
so a step of 1e-4 carries no visible round-off even for fourth-order pairings.
"""
from __future__ import annotations

import mpmath as mp
import numpy as np

from kernelpde.functionals import (
    IDENTITY,
    PARTIAL,
    SECOND_PARTIAL,
    DiffMonomial,
    DualFunctional,
    identity,
    laplacian,
    partial,
    second_partial,
)
from kernelpde.kernels import KernelSpec, eval_pair

mp.mp.dps = 30

_SQ7 = mp.sqrt(7)


def matern_closed_form(nu: float, r):
    """Matern kernel of half-integer order at scaled distance ``r`` (unit variance)."""
    r = mp.mpf(r)
    if nu == 0.5:
        return mp.e ** (-r)
    if nu == 1.5:
        return (1 + mp.sqrt(3) * r) * mp.e ** (-mp.sqrt(3) * r)
    if nu == 2.5:
        return (1 + mp.sqrt(5) * r + mp.mpf(5) / 3 * r**2) * mp.e ** (-mp.sqrt(5) * r)
    if nu == 3.5:
        return (1 + _SQ7 * r + mp.mpf(14) / 5 * r**2 + 7 * _SQ7 / 15 * r**3) * mp.e ** (-_SQ7 * r)
    if nu == 4.5:
        return (1 + 3 * r + mp.mpf(27) / 7 * r**2 + mp.mpf(18) / 7 * r**3 + mp.mpf(27) / 35 * r**4) * mp.e ** (-3 * r)
    raise ValueError(nu)


def mp_kernel(k):
    """mpmath version of ``kernels.eval`` for spec ``k``."""
    a = [mp.mpf(w) / mp.mpf(s) ** 2 for w, s in zip(k.coordinate_weights, k.lengthscales)]
    d = k.dimension

    def value(s, t):
        q = mp.fsum(a[i] * (mp.mpf(s[i]) - mp.mpf(t[i])) ** 2 for i in range(len(a)))
        if k.family == "gaussian":
            return mp.e ** (-q / 2)
        if k.family == "inverse_quadratic":
            return 1 / (1 + q / (2 * d))
        return matern_closed_form(k.nu, mp.sqrt(q))

    return value


def stencil(mono: DiffMonomial, d: int, h):
    """Central-difference stencil of ``mono`` as (weight, offset index list) pairs."""
    h = mp.mpf(h)

    def e(*moves):
        v = [mp.mpf(0)] * d
        for i, sgn in moves:
            v[i] += sgn * h
        return tuple(v)

    if mono.kind == IDENTITY:
        return [(mp.mpf(1), e())]
    if mono.kind == PARTIAL:
        (i,) = mono.indices
        return [(1 / (2 * h), e((i, 1))), (-1 / (2 * h), e((i, -1)))]
    if mono.kind == SECOND_PARTIAL and mono.indices[0] != mono.indices[1]:
        i, j = mono.indices
        w = 1 / (4 * h * h)
        return [(w, e((i, 1), (j, 1))), (-w, e((i, 1), (j, -1))), (-w, e((i, -1), (j, 1))), (w, e((i, -1), (j, -1)))]
    idx = mono.indices[:1] if mono.kind == SECOND_PARTIAL else mono.indices
    out = [(-2 * len(idx) / (h * h), e())]
    for i in idx:
        out += [(1 / (h * h), e((i, 1))), (1 / (h * h), e((i, -1)))]
    return out


def fd_pair(k, terms_a, s, terms_b, t, h=1e-4) -> float:
    """Nested finite differences of ``sum c_a c_b (m_a (x) m_b) k`` at ``(s, t)``."""
    kern = mp_kernel(k)
    d = k.dimension
    s = [mp.mpf(float(v)) for v in s]
    t = [mp.mpf(float(v)) for v in t]
    total = mp.mpf(0)
    for ca, ma in terms_a:
        for cb, mb in terms_b:
            acc = mp.mpf(0)
            for wa, oa in stencil(ma, d, h):
                sa = [s[i] + oa[i] for i in range(d)]
                for wb, ob in stencil(mb, d, h):
                    acc += wa * wb * kern(sa, [t[i] + ob[i] for i in range(d)])
            total += mp.mpf(ca) * mp.mpf(cb) * acc
    return float(total)


def fd_pair_float(k, F, G, h=1e-4) -> float:
    return fd_pair(k, F.terms, F.location, G.terms, G.location, h)


def random_monomials(d: int, rng):
    """One instance of each monomial shape in dimension ``d`` (d >= 2)."""
    i, j = rng.choice(d, size=2, replace=False)
    sub = sorted(rng.choice(d, size=int(rng.integers(1, d)), replace=False))
    return {
        "id": identity(),
        "d_i": partial(int(i)),
        "d_ii": second_partial(int(i), int(i)),
        "d_ij": second_partial(int(i), int(j)),
        "lap": laplacian(range(d)),
        "lap_sub": laplacian(sub),
    }


MONO_KINDS = ("id", "d_i", "d_ii", "d_ij", "lap", "lap_sub")


def relative_error(a, b, floor=1e-8) -> float:
    return abs(a - b) / max(abs(b), floor)


def analytic_darcy_constant_A(x):
    """Solution of -u'' = x on [0, 1] with homogeneous Dirichlet data."""
    x = np.asarray(x, dtype=float)
    return (x - x**3) / 6.0


FAMILIES = (
    ("gaussian", None),
    ("inverse_quadratic", None),
    ("matern", 0.5),
    ("matern", 1.5),
    ("matern", 2.5),
    ("matern", 3.5),
    ("matern", 4.5),
)


def random_config(family, nu, rng):
    """Random dimension, anisotropic lengthscales (>= 0.5), weights and distinct points."""
    d = int(rng.integers(2, 4))
    k = KernelSpec(family, d, tuple(rng.uniform(0.5, 2.0, d)), tuple(rng.uniform(0.5, 1.5, d)), nu)
    s = rng.uniform(-1, 1, d)
    t = rng.uniform(-1, 1, d)
    return k, s, t


def derivative_suite(n_configs: int, seed: int = 0, h: float = 1e-4):
    """Worst relative error of ``eval_pair`` against the oracle per (family, pair of monomial kinds).

    Pairs beyond a family's differentiability budget are skipped.  The relative error uses a floor of 1e-6 times the product of
    the metric scales so that pairings which happen to vanish do not blow up.
    """
    rng = np.random.default_rng(seed)
    worst = {}
    for family, nu in FAMILIES:
        for ka in MONO_KINDS:
            for kb in MONO_KINDS:
                budget = np.inf if family != "matern" else 2 * int(nu - 0.5)
                for _ in range(n_configs):
                    k, s, t = random_config(family, nu, rng)
                    monos = random_monomials(k.dimension, rng)
                    ma, mb = monos[ka], monos[kb]
                    if ma.order + mb.order > budget:
                        break
                    F = DualFunctional(tuple(s), ((1.0, ma),))
                    G = DualFunctional(tuple(t), ((1.0, mb),))
                    got = eval_pair(k, F, G)
                    ref = fd_pair_float(k, F, G, h)
                    scale = float(np.max(k.metric)) ** ((ma.order + mb.order) / 2)
                    err = relative_error(got, ref, 1e-6 * scale)
                    key = (family, nu, ka, kb)
                    worst[key] = max(worst.get(key, 0.0), err)
    return worst
