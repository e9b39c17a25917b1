"""Dual functionals: point evaluations composed with linear differential operators.

A :class:`DualFunctional` is a finite linear combination of differential
monomials evaluated at one location.  For Gram assembly the functionals are
packed into a :class:`FunctionalSet`, which stores for every functional a
value weight ``c``, a gradient weight vector ``g`` and a symmetric second-order
weight matrix ``H`` so that the functional acts on ``v`` as

    c * v(s) + g . grad v(s) + sum_ij H_ij d_i d_j v(s).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

IDENTITY = "identity"
PARTIAL = "partial"
SECOND_PARTIAL = "second_partial"
LAPLACIAN = "laplacian"

_KINDS = (IDENTITY, PARTIAL, SECOND_PARTIAL, LAPLACIAN)


@dataclass(frozen=True)
class DiffMonomial:
    """One differential building block.

    ``kind`` is one of ``identity``, ``partial`` (``indices=(i,)``),
    ``second_partial`` (``indices=(i, j)``) or ``laplacian`` (``indices`` is the
    coordinate subset the Laplacian runs over).
    """

    kind: str
    indices: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown monomial kind {self.kind!r}")
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if any(i < 0 for i in idx):
            raise ValueError("coordinate indices must be nonnegative")
        if self.kind == IDENTITY and idx:
            raise ValueError("identity takes no indices")
        if self.kind == PARTIAL and len(idx) != 1:
            raise ValueError("partial takes exactly one index")
        if self.kind == SECOND_PARTIAL and len(idx) != 2:
            raise ValueError("second_partial takes exactly two indices")
        if self.kind == LAPLACIAN:
            if not idx:
                raise ValueError("laplacian subset must be nonempty")
            if len(set(idx)) != len(idx):
                raise ValueError("laplacian subset has repeated coordinates")

    @property
    def order(self) -> int:
        return {IDENTITY: 0, PARTIAL: 1, SECOND_PARTIAL: 2, LAPLACIAN: 2}[self.kind]

    def check_dimension(self, dim: int) -> None:
        if any(i >= dim for i in self.indices):
            raise ValueError(f"{self} has a coordinate index outside dimension {dim}")

    def apply_derivatives(self, value, grad, hess):
        """Apply to closed-form derivatives; shapes (N,), (N, d), (N, d, d)."""
        if self.kind == IDENTITY:
            return np.asarray(value)
        if self.kind == PARTIAL:
            return grad[:, self.indices[0]]
        if self.kind == SECOND_PARTIAL:
            i, j = self.indices
            return hess[:, i, j]
        return sum(hess[:, i, i] for i in self.indices)

    def __str__(self):
        if self.kind == IDENTITY:
            return "id"
        if self.kind == PARTIAL:
            return f"d{self.indices[0]}"
        if self.kind == SECOND_PARTIAL:
            return "d{}d{}".format(*self.indices)
        return "lap" + "".join(str(i) for i in self.indices)


def identity() -> DiffMonomial:
    return DiffMonomial(IDENTITY)


def partial(i: int) -> DiffMonomial:
    return DiffMonomial(PARTIAL, (i,))


def second_partial(i: int, j: int) -> DiffMonomial:
    return DiffMonomial(SECOND_PARTIAL, (i, j))


def laplacian(subset: Sequence[int]) -> DiffMonomial:
    return DiffMonomial(LAPLACIAN, tuple(subset))


@dataclass(frozen=True)
class DualFunctional:
    location: tuple[float, ...]
    terms: tuple[tuple[float, DiffMonomial], ...]

    def __post_init__(self):
        loc = tuple(float(x) for x in np.ravel(self.location))
        object.__setattr__(self, "location", loc)
        if not loc:
            raise ValueError("location must have at least one coordinate")
        if not self.terms:
            raise ValueError("a functional needs at least one term")
        terms = tuple((float(c), m) for c, m in self.terms)
        for c, m in terms:
            if not math.isfinite(c):
                raise ValueError("functional coefficients must be finite")
            m.check_dimension(len(loc))
        object.__setattr__(self, "terms", terms)

    @property
    def dimension(self) -> int:
        return len(self.location)

    @property
    def order(self) -> int:
        return max(m.order for _, m in self.terms)


def point_eval(s) -> DualFunctional:
    return DualFunctional(tuple(np.ravel(s)), ((1.0, identity()),))


def combine(coeffs: Sequence[float], monos: Sequence[DiffMonomial], s) -> DualFunctional:
    """Build ``sum_q coeffs[q] * (monos[q] v)(s)``."""
    if len(coeffs) != len(monos):
        raise ValueError(f"{len(coeffs)} coefficients for {len(monos)} monomials")
    if not len(coeffs):
        raise ValueError("need at least one term")
    return DualFunctional(tuple(np.ravel(s)), tuple(zip(coeffs, monos)))


def apply_fd(F: DualFunctional, v: Callable, step: float) -> float:
    """Apply ``F`` to a scalar function of a point by central differences."""
    s = np.asarray(F.location, dtype=float)
    h = float(step)

    def shifted(*moves):
        x = s.copy()
        for i, k in moves:
            x[i] += k * h
        return float(v(x))

    total = 0.0
    v0 = None
    for c, m in F.terms:
        if m.kind == IDENTITY:
            if v0 is None:
                v0 = shifted()
            val = v0
        elif m.kind == PARTIAL:
            (i,) = m.indices
            val = (shifted((i, 1)) - shifted((i, -1))) / (2 * h)
        elif m.kind == SECOND_PARTIAL:
            i, j = m.indices
            if i == j:
                if v0 is None:
                    v0 = shifted()
                val = (shifted((i, 1)) - 2 * v0 + shifted((i, -1))) / h**2
            else:
                val = (
                    shifted((i, 1), (j, 1))
                    - shifted((i, 1), (j, -1))
                    - shifted((i, -1), (j, 1))
                    + shifted((i, -1), (j, -1))
                ) / (4 * h**2)
        else:
            if v0 is None:
                v0 = shifted()
            val = sum((shifted((i, 1)) - 2 * v0 + shifted((i, -1))) / h**2 for i in m.indices)
        total += c * val
    return total


class FunctionalSet:
    """A batch of functionals in packed (c, g, H) form.

    ``grad`` and ``hess`` may be ``None`` when every functional in the batch
    lacks first- or second-order terms.  ``hess`` is either diagonal-packed with
    shape ``(N, d)`` or full with shape ``(N, d, d)``; ``hess_full`` tells which.
    """

    def __init__(self, points, value, grad=None, hess=None, hess_full=False):
        self.points = np.ascontiguousarray(points, dtype=float)
        if self.points.ndim != 2:
            raise ValueError("points must be a 2-d array")
        n, d = self.points.shape
        self.value = np.ascontiguousarray(np.broadcast_to(np.asarray(value, float), (n,)))
        self.grad = None if grad is None else np.ascontiguousarray(grad, dtype=float)
        self.hess = None if hess is None else np.ascontiguousarray(hess, dtype=float)
        self.hess_full = bool(hess_full) and self.hess is not None
        if self.grad is not None and self.grad.shape != (n, d):
            raise ValueError(f"grad has shape {self.grad.shape}, expected {(n, d)}")
        if self.hess is not None:
            want = (n, d, d) if self.hess_full else (n, d)
            if self.hess.shape != want:
                raise ValueError(f"hess has shape {self.hess.shape}, expected {want}")

    def __len__(self):
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def order(self) -> int:
        if self.hess is not None and np.any(self.hess):
            return 2
        if self.grad is not None and np.any(self.grad):
            return 1
        return 0

    def full_hess(self):
        if self.hess is None:
            return None
        if self.hess_full:
            return self.hess
        n, d = self.hess.shape
        out = np.zeros((n, d, d))
        idx = np.arange(d)
        out[:, idx, idx] = self.hess
        return out

    def scaled(self, factor) -> "FunctionalSet":
        """Multiply functional ``n`` by ``factor[n]``."""
        f = np.broadcast_to(np.asarray(factor, float), (len(self),))
        return FunctionalSet(
            self.points,
            self.value * f,
            None if self.grad is None else self.grad * f[:, None],
            None if self.hess is None else self.hess * f.reshape((-1,) + (1,) * (self.hess.ndim - 1)),
            self.hess_full,
        )

    def take(self, index) -> "FunctionalSet":
        index = np.asarray(index)
        return FunctionalSet(
            self.points[index],
            self.value[index],
            None if self.grad is None else self.grad[index],
            None if self.hess is None else self.hess[index],
            self.hess_full,
        )

    @classmethod
    def points_only(cls, points) -> "FunctionalSet":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(pts, np.ones(pts.shape[0]))

    @classmethod
    def from_monomial(cls, points, mono: DiffMonomial, coef=1.0) -> "FunctionalSet":
        """``coef[n] * (mono v)(points[n])`` for every row of ``points``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n, d = pts.shape
        mono.check_dimension(d)
        c = np.broadcast_to(np.asarray(coef, float), (n,)).copy()
        if mono.kind == IDENTITY:
            return cls(pts, c)
        if mono.kind == PARTIAL:
            g = np.zeros((n, d))
            g[:, mono.indices[0]] = c
            return cls(pts, np.zeros(n), grad=g)
        if mono.kind == LAPLACIAN:
            h = np.zeros((n, d))
            h[:, list(mono.indices)] = c[:, None]
            return cls(pts, np.zeros(n), hess=h)
        i, j = mono.indices
        if i == j:
            h = np.zeros((n, d))
            h[:, i] = c
            return cls(pts, np.zeros(n), hess=h)
        h = np.zeros((n, d, d))
        h[:, i, j] = 0.5 * c
        h[:, j, i] = 0.5 * c
        return cls(pts, np.zeros(n), hess=h, hess_full=True)

    @classmethod
    def from_functionals(cls, phis: Sequence[DualFunctional]) -> "FunctionalSet":
        if not phis:
            raise ValueError("empty functional list")
        d = phis[0].dimension
        parts = []
        for F in phis:
            if F.dimension != d:
                raise ValueError("functionals of mixed dimension")
            for c, m in F.terms:
                parts.append(cls.from_monomial(np.array([F.location]), m, c))
        counts = [len(F.terms) for F in phis]
        stacked = concat(parts)
        owner = np.repeat(np.arange(len(phis)), counts)
        return _sum_by_owner(stacked, owner, len(phis))


def _sum_by_owner(fs: FunctionalSet, owner, n_out) -> FunctionalSet:
    d = fs.dimension
    # rows sharing an owner share a location
    pts = np.zeros((n_out, d))
    pts[owner] = fs.points
    value = np.bincount(owner, weights=fs.value, minlength=n_out)
    grad = None
    if fs.grad is not None:
        grad = np.zeros((n_out, d))
        np.add.at(grad, owner, fs.grad)
    hess = None
    if fs.hess is not None:
        hess = np.zeros((n_out,) + fs.hess.shape[1:])
        np.add.at(hess, owner, fs.hess)
    return FunctionalSet(pts, value, grad, hess, fs.hess_full)


def concat(sets: Sequence[FunctionalSet]) -> FunctionalSet:
    """Stack functional sets, widening the packed form where needed."""
    sets = [s for s in sets if len(s)]
    if not sets:
        raise ValueError("nothing to concatenate")
    d = sets[0].dimension
    if any(s.dimension != d for s in sets):
        raise ValueError("functional sets of mixed dimension")
    pts = np.concatenate([s.points for s in sets])
    value = np.concatenate([s.value for s in sets])
    grad = None
    if any(s.grad is not None for s in sets):
        grad = np.concatenate([s.grad if s.grad is not None else np.zeros((len(s), d)) for s in sets])
    hess = None
    full = any(s.hess_full for s in sets)
    if any(s.hess is not None for s in sets):
        blocks = []
        for s in sets:
            if s.hess is None:
                blocks.append(np.zeros((len(s), d, d) if full else (len(s), d)))
            else:
                blocks.append(s.full_hess() if full else s.hess)
        hess = np.concatenate(blocks)
    return FunctionalSet(pts, value, grad, hess, full)


def linear_combination(weights: Sequence, sets: Sequence[FunctionalSet]) -> FunctionalSet:
    """Pointwise ``sum_q weights[q][n] * sets[q][n]``; all sets share locations."""
    if len(weights) != len(sets) or not sets:
        raise ValueError("weights and sets must be nonempty and of equal length")
    n = len(sets[0])
    if any(len(s) != n for s in sets):
        raise ValueError("sets must have equal length")
    scaled = concat([s.scaled(w) for w, s in zip(weights, sets)])
    owner = np.tile(np.arange(n), len(sets))
    out = _sum_by_owner(scaled, owner, n)
    out.points = np.ascontiguousarray(sets[0].points)
    return out
