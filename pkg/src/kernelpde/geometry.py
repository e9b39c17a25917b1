"""Domains, uniform collocation sampling and Monte Carlo fill distances."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

BALL = "ball"
BOX = "box"
PRODUCT = "product"


@dataclass(frozen=True)
class Domain:
    """Unit ball, axis-aligned box, or product of a spatial domain with a parameter box.

    Build with :func:`unit_ball`, :func:`box` or :func:`product`.
    """

    kind: str
    dim: int = 0
    lo: tuple[float, ...] = ()
    hi: tuple[float, ...] = ()
    spatial: "Domain | None" = None
    parameter: "Domain | None" = None

    @property
    def dimension(self) -> int:
        if self.kind == PRODUCT:
            return self.spatial.dimension + self.parameter.dimension
        return self.dim

    @property
    def spatial_dimension(self) -> int:
        return self.spatial.dimension if self.kind == PRODUCT else self.dimension

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        if self.kind == BALL:
            return np.linalg.norm(pts, axis=1) <= 1.0 + tol
        if self.kind == BOX:
            return np.all((pts >= np.array(self.lo) - tol) & (pts <= np.array(self.hi) + tol), axis=1)
        k = self.spatial.dimension
        return self.spatial.contains(pts[:, :k], tol) & self.parameter.contains(pts[:, k:], tol)

    def on_boundary(self, pts, tol: float = 1e-12) -> np.ndarray:
        """Membership of the sampled boundary: the sphere, box faces, or (spatial boundary) x parameter box."""
        pts = np.atleast_2d(pts)
        if self.kind == BALL:
            return np.abs(np.linalg.norm(pts, axis=1) - 1.0) <= tol
        if self.kind == BOX:
            lo, hi = np.array(self.lo), np.array(self.hi)
            face = np.any((np.abs(pts - lo) <= tol) | (np.abs(pts - hi) <= tol), axis=1)
            return face & self.contains(pts, tol)
        k = self.spatial.dimension
        return self.spatial.on_boundary(pts[:, :k], tol) & self.parameter.contains(pts[:, k:], tol)


def unit_ball(d: int) -> Domain:
    if d < 1:
        raise ValueError("ball dimension must be >= 1")
    return Domain(BALL, dim=int(d))


def box(lo, hi) -> Domain:
    lo = tuple(float(x) for x in np.atleast_1d(lo))
    hi = tuple(float(x) for x in np.atleast_1d(hi))
    if len(lo) != len(hi) or not lo:
        raise ValueError("box bounds must be nonempty and of equal length")
    if any(a >= b for a, b in zip(lo, hi)):
        raise ValueError("box needs lo < hi in every coordinate")
    return Domain(BOX, dim=len(lo), lo=lo, hi=hi)


def unit_box(d: int) -> Domain:
    return box([0.0] * d, [1.0] * d)


def product(spatial: Domain, parameter: Domain) -> Domain:
    if parameter.kind != BOX:
        raise ValueError("the parameter factor must be a box")
    if spatial.kind == PRODUCT:
        raise ValueError("nested products are not supported")
    return Domain(PRODUCT, spatial=spatial, parameter=parameter)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _ball_interior(rng, m, d):
    g = rng.standard_normal((m, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random((m, 1)) ** (1.0 / d)
    return g * r


def _ball_surface(rng, m, d):
    if d == 1:
        return np.where(rng.random((m, 1)) < 0.5, -1.0, 1.0)
    g = rng.standard_normal((m, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _box_interior(rng, m, lo, hi):
    lo, hi = np.asarray(lo), np.asarray(hi)
    return lo + (hi - lo) * rng.random((m, len(lo)))


def _box_surface(rng, m, lo, hi):
    lo, hi = np.asarray(lo), np.asarray(hi)
    d = len(lo)
    width = hi - lo
    # face i (two copies) has (d-1)-volume prod_{j != i} width_j; a 1-d box has two unit "faces"
    area = np.array([np.prod(np.delete(width, i)) for i in range(d)])
    pick = rng.choice(2 * d, size=m, p=np.tile(area, 2) / (2 * area.sum()))
    pts = _box_interior(rng, m, lo, hi)
    axis = pick % d
    side = pick // d
    pts[np.arange(m), axis] = np.where(side == 0, lo[axis], hi[axis])
    return pts


def sample_interior(dom: Domain, M: int, seed) -> np.ndarray:
    """``M`` i.i.d. points uniform in the domain volume; deterministic given ``seed``."""
    if M < 0:
        raise ValueError("M must be nonnegative")
    rng = _rng(seed)
    if dom.kind == BALL:
        return _ball_interior(rng, M, dom.dim)
    if dom.kind == BOX:
        return _box_interior(rng, M, dom.lo, dom.hi)
    x = sample_interior(dom.spatial, M, rng)
    th = sample_interior(dom.parameter, M, rng)
    return np.hstack([x, th])


def sample_boundary(dom: Domain, M: int, seed) -> np.ndarray:
    """``M`` points uniform on the boundary (on spatial boundary x parameter box for products)."""
    if M < 0:
        raise ValueError("M must be nonnegative")
    rng = _rng(seed)
    if dom.kind == BALL:
        return _ball_surface(rng, M, dom.dim)
    if dom.kind == BOX:
        return _box_surface(rng, M, dom.lo, dom.hi)
    x = sample_boundary(dom.spatial, M, rng)
    th = sample_interior(dom.parameter, M, rng)
    return np.hstack([x, th])


@dataclass
class CollocationSet:
    interior: np.ndarray
    boundary: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.interior = np.atleast_2d(np.asarray(self.interior, dtype=float))
        d = self.interior.shape[1]
        b = np.asarray(self.boundary, dtype=float)
        self.boundary = b.reshape(-1, d)

    @property
    def n_interior(self) -> int:
        return self.interior.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary.shape[0]

    @property
    def all_points(self) -> np.ndarray:
        return np.vstack([self.interior, self.boundary])


def sample_collocation(dom: Domain, M_interior: int, M_boundary: int, seed: int) -> CollocationSet:
    """Interior then boundary points drawn from independent child streams of ``seed``."""
    ss = np.random.SeedSequence(seed)
    s_int, s_bdy = ss.spawn(2)
    return CollocationSet(
        sample_interior(dom, M_interior, np.random.default_rng(s_int)),
        sample_boundary(dom, M_boundary, np.random.default_rng(s_bdy)),
        seed,
    )


def fill_distance_estimate(points, dom: Domain, probes: int = 100_000, seed=0, boundary: bool = False) -> float:
    """Max over uniform probe points of the Euclidean distance to the nearest point.

    With ``boundary=True`` probes are drawn on the boundary (chordal distance).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("fill distance of an empty point set")
    if probes < 1:
        raise ValueError("probes must be >= 1")
    sampler = sample_boundary if boundary else sample_interior
    probe = sampler(dom, probes, seed)
    dist, _ = cKDTree(pts).query(probe)
    return float(np.max(dist))


def save_points_csv(path, points) -> None:
    pts = np.atleast_2d(points)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(pts.shape[1])])
        for row in pts:
            w.writerow([repr(float(v)) for v in row])


def load_points_csv(path) -> np.ndarray:
    rows = Path(path).read_text().strip().splitlines()[1:]
    return np.array([[float(v) for v in r.split(",")] for r in rows], dtype=float)
