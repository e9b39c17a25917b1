"""PDE problems written as nonlinear combiners of linear operators.

Interior constraint at a point ``s``:  ``P(L_1 u(s), ..., L_Q u(s)) = f(s)``;
boundary constraint:  ``B(L_{Q+1} u(s), ...) = g(s)``.  Each ``L_q`` is a
coefficient function times a differential monomial, so every functional the
solvers need is a combination of monomials at a point.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import geometry
from .functionals import (
    DiffMonomial,
    DualFunctional,
    FunctionalSet,
    apply_fd,
    concat,
    identity,
    laplacian,
    linear_combination,
    partial,
)
from .geometry import CollocationSet, Domain

Array = np.ndarray


@dataclass(frozen=True)
class Operator:
    """``u -> coef(s) * (mono u)(s)``."""

    mono: DiffMonomial
    coef: Callable[[Array], Array] | None = None

    def coefficients(self, pts) -> Array:
        if self.coef is None:
            return np.ones(len(pts))
        return np.broadcast_to(np.asarray(self.coef(pts), dtype=float), (len(pts),))

    def functionals(self, pts) -> FunctionalSet:
        return FunctionalSet.from_monomial(pts, self.mono, self.coefficients(pts))


@dataclass(frozen=True)
class Manufactured:
    """Closed-form solution with its gradient and Hessian, all vectorized over rows."""

    value: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    hess: Callable[[Array], Array]

    def __call__(self, pts):
        return self.value(np.atleast_2d(pts))


@dataclass
class PdeProblem:
    name: str
    domain: Domain
    interior_ops: Sequence[Operator]
    boundary_ops: Sequence[Operator]
    P: Callable[[Array], Array]
    P_grad: Callable[[Array], Array]
    B: Callable[[Array], Array]
    B_grad: Callable[[Array], Array]
    f: Callable[[Array], Array]
    g: Callable[[Array], Array]
    true_solution: Manufactured | None = None
    # interior operator index in which P is affine with unit slope; enables
    # constraint elimination (boundary must then be a single identity operator)
    eliminate: int | None = None
    params: dict = field(default_factory=dict)
    validate_points: int = 100

    def __post_init__(self):
        if len(self.interior_ops) < 1:
            raise ValueError("need at least one interior operator")
        if len(self.boundary_ops) < 1:
            raise ValueError("need at least one boundary operator")
        if self.eliminate is not None and not 0 <= self.eliminate < len(self.interior_ops):
            raise ValueError("elimination index out of range")
        if self.true_solution is not None and self.validate_points:
            self.validate_manufactured(self.validate_points)

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def q_interior(self) -> int:
        return len(self.interior_ops)

    @property
    def q_boundary(self) -> int:
        return len(self.boundary_ops)

    def operator_sets(self, colloc: CollocationSet):
        """Per-operator functional sets at the interior and boundary points."""
        ints = [op.functionals(colloc.interior) for op in self.interior_ops]
        bdys = [op.functionals(colloc.boundary) for op in self.boundary_ops] if colloc.n_boundary else []
        return ints, bdys

    def data(self, colloc: CollocationSet) -> Array:
        parts = [np.asarray(self.f(colloc.interior), dtype=float)]
        if colloc.n_boundary:
            parts.append(np.asarray(self.g(colloc.boundary), dtype=float))
        return np.concatenate(parts)

    def true_operator_values(self, pts, boundary: bool = False) -> Array:
        """Closed-form ``L_q u*`` at ``pts``, shape ``(len(pts), Q)``."""
        if self.true_solution is None:
            raise ValueError(f"{self.name} has no manufactured solution")
        pts = np.atleast_2d(pts)
        u = self.true_solution
        val, grad, hess = u.value(pts), u.grad(pts), u.hess(pts)
        ops = self.boundary_ops if boundary else self.interior_ops
        return np.column_stack([op.coefficients(pts) * op.mono.apply_derivatives(val, grad, hess) for op in ops])

    def validate_manufactured(self, n: int = 100, seed: int = 12345) -> None:
        """Check u* against the closed-form and a finite-difference residual."""
        pts = geometry.sample_interior(self.domain, n, seed)
        closed = self.P(self.true_operator_values(pts)) - self.f(pts)
        scale = 1.0 + np.abs(self.f(pts))
        if np.max(np.abs(closed) / scale) > 1e-8:
            raise ValueError(f"{self.name}: manufactured solution fails the closed-form residual check")
        u = self.true_solution
        fd_vals = np.empty((n, self.q_interior))
        for m, s in enumerate(pts):
            for q, op in enumerate(self.interior_ops):
                F = DualFunctional(s, ((1.0, op.mono),))
                coarse = apply_fd(F, lambda x: u.value(x[None, :])[0], 2e-3)
                fine = apply_fd(F, lambda x: u.value(x[None, :])[0], 1e-3)
                fd_vals[m, q] = op.coefficients(s[None, :])[0] * (4.0 * fine - coarse) / 3.0
        fd_res = self.P(fd_vals) - self.f(pts)
        if np.max(np.abs(fd_res) / scale) > 1e-5:
            raise ValueError(f"{self.name}: manufactured f disagrees with finite differences of u*")


@dataclass
class LinearizationSystem:
    functionals: FunctionalSet
    targets: Array
    n_interior: int


def _check_values(name, values, rows, cols):
    values = np.asarray(values, dtype=float)
    if values.shape != (rows, cols):
        raise ValueError(f"{name} values have shape {values.shape}, expected {(rows, cols)}")
    return values


def linearize(prob: PdeProblem, colloc: CollocationSet, current_interior, current_boundary=None) -> LinearizationSystem:
    """Linearize every constraint at the supplied operator values of the previous iterate."""
    t_int = _check_values("interior", current_interior, colloc.n_interior, prob.q_interior)
    ints, bdys = prob.operator_sets(colloc)
    grad = np.asarray(prob.P_grad(t_int), dtype=float).reshape(t_int.shape)
    funcs = [linear_combination([grad[:, q] for q in range(prob.q_interior)], ints)]
    z = [prob.f(colloc.interior) - prob.P(t_int) + np.sum(grad * t_int, axis=1)]
    if colloc.n_boundary:
        if current_boundary is None:
            raise ValueError("boundary values missing")
        t_b = _check_values("boundary", current_boundary, colloc.n_boundary, prob.q_boundary)
        gb = np.asarray(prob.B_grad(t_b), dtype=float).reshape(t_b.shape)
        funcs.append(linear_combination([gb[:, q] for q in range(prob.q_boundary)], bdys))
        z.append(prob.g(colloc.boundary) - prob.B(t_b) + np.sum(gb * t_b, axis=1))
    return LinearizationSystem(concat(funcs), np.concatenate(z), colloc.n_interior)


def residual(prob: PdeProblem, colloc: CollocationSet, u_interior, u_boundary=None) -> Array:
    """``F(z) - y`` per collocation point: interior rows first, then boundary."""
    t_int = _check_values("interior", u_interior, colloc.n_interior, prob.q_interior)
    parts = [prob.P(t_int) - prob.f(colloc.interior)]
    if colloc.n_boundary:
        t_b = _check_values("boundary", u_boundary, colloc.n_boundary, prob.q_boundary)
        parts.append(prob.B(t_b) - prob.g(colloc.boundary))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# built-in problems


def _cos_sum_solution(beta: float) -> Manufactured:
    """u(x) = exp(sin(beta * sum_j cos x_j)) with closed-form derivatives."""

    def value(x):
        return np.exp(np.sin(beta * np.cos(x).sum(axis=1)))

    def grad(x):
        w = beta * np.cos(x).sum(axis=1)
        u = np.exp(np.sin(w))
        return (u * np.cos(w))[:, None] * (-beta * np.sin(x))

    def hess(x):
        w = beta * np.cos(x).sum(axis=1)
        u = np.exp(np.sin(w))
        g = -beta * np.sin(x)
        out = (u * (np.cos(w) ** 2 - np.sin(w)))[:, None, None] * g[:, :, None] * g[:, None, :]
        diag = -(u * np.cos(w))[:, None] * beta * np.cos(x)
        idx = np.arange(x.shape[1])
        out[:, idx, idx] += diag
        return out

    return Manufactured(value, grad, hess)


def _sum_p(t):
    return np.sum(t[:, 1:], axis=1)


def _elliptic_like(name, d, tau, dtau, solution, params):
    coeff = _cos_sum_solution(1.0)  # A(x) = exp(sin(sum_j cos x_j))

    def neg_dA(i):
        return lambda x: -coeff.grad(x)[:, i]

    interior = [Operator(identity())]
    interior += [Operator(partial(i), neg_dA(i)) for i in range(d)]
    interior += [Operator(laplacian(range(d)), lambda x: -coeff.value(x))]

    def P(t):
        return tau(t[:, 0]) + _sum_p(t)

    def P_grad(t):
        out = np.ones_like(t)
        out[:, 0] = dtau(t[:, 0])
        return out

    def f(x):
        val, gr, he = solution.value(x), solution.grad(x), solution.hess(x)
        lap = np.trace(he, axis1=1, axis2=2)
        a, da = coeff.value(x), coeff.grad(x)
        return -np.sum(da * gr, axis=1) - a * lap + tau(val)

    return PdeProblem(
        name=name,
        domain=geometry.unit_ball(d),
        interior_ops=interior,
        boundary_ops=[Operator(identity())],
        P=P,
        P_grad=P_grad,
        B=lambda t: t[:, 0],
        B_grad=lambda t: np.ones_like(t),
        f=f,
        g=solution.value,
        true_solution=solution,
        eliminate=d + 1,
        params=params,
    )


def make_nonlinear_elliptic(d: int, beta: float) -> PdeProblem:
    """-div(A grad u) + u^3 = f on the unit ball, manufactured u* = exp(sin(beta sum cos x_j))."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return _elliptic_like(
        "nonlinear_elliptic",
        d,
        lambda v: v**3,
        lambda v: 3.0 * v**2,
        _cos_sum_solution(float(beta)),
        {"d": d, "beta": float(beta)},
    )


def make_darcy_tanh(d: int, beta_tau: float) -> PdeProblem:
    """-div(exp(a) grad u) + 1 + tanh(beta u) = f with a = sin(sum cos x_j) on the unit ball."""
    if d < 1:
        raise ValueError("d must be >= 1")
    b = float(beta_tau)
    return _elliptic_like(
        "darcy_tanh",
        d,
        lambda v: 1.0 + np.tanh(b * v),
        lambda v: b / np.cosh(b * v) ** 2,
        _cos_sum_solution(1.0),
        {"d": d, "beta_tau": b},
    )


def darcy_coefficient(x, theta, k_decay: float):
    """A(x, theta) = 2 + theta_0 + sum_j theta_j / j^k sin(pi x + j); ``theta`` has p+1 entries."""
    x = np.asarray(x, dtype=float)
    theta = np.atleast_2d(theta)
    j = np.arange(1, theta.shape[1])
    w = theta[:, 1:] / j**k_decay
    return 2.0 + theta[:, 0] + np.sum(w * np.sin(np.pi * x[:, None] + j), axis=1)


def darcy_coefficient_dx(x, theta, k_decay: float):
    x = np.asarray(x, dtype=float)
    theta = np.atleast_2d(theta)
    j = np.arange(1, theta.shape[1])
    w = theta[:, 1:] / j**k_decay
    return np.sum(w * np.pi * np.cos(np.pi * x[:, None] + j), axis=1)


def make_parametric_darcy(p: int, k_decay: float) -> PdeProblem:
    """-(A(x, theta) u_x)_x = x on [0,1], u(0) = u(1) = 0, solved on [0,1] x [0,1]^(p+1).

    Coordinates are ``(x, theta_0, theta_1, ..., theta_p)``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    k = float(k_decay)

    def coef(s):
        return darcy_coefficient(s[:, 0], s[:, 1:], k)

    def coef_dx(s):
        return darcy_coefficient_dx(s[:, 0], s[:, 1:], k)

    dom = geometry.product(geometry.unit_box(1), geometry.unit_box(p + 1))
    return PdeProblem(
        name="parametric_darcy",
        domain=dom,
        interior_ops=[
            Operator(partial(0), lambda s: -coef_dx(s)),
            Operator(laplacian([0]), lambda s: -coef(s)),
        ],
        boundary_ops=[Operator(identity())],
        P=lambda t: t[:, 0] + t[:, 1],
        P_grad=lambda t: np.ones_like(t),
        B=lambda t: t[:, 0],
        B_grad=lambda t: np.ones_like(t),
        f=lambda s: s[:, 0].copy(),
        g=lambda s: np.zeros(len(s)),
        eliminate=1,
        params={"p": p, "k_decay": k},
    )


def make_interpolation(domain: Domain, target: Callable[[Array], Array], true_solution=None) -> PdeProblem:
    """Pure interpolation: match ``target`` at every collocation point."""
    return PdeProblem(
        name="interpolation",
        domain=domain,
        interior_ops=[Operator(identity())],
        boundary_ops=[Operator(identity())],
        P=lambda t: t[:, 0],
        P_grad=lambda t: np.ones_like(t),
        B=lambda t: t[:, 0],
        B_grad=lambda t: np.ones_like(t),
        f=target,
        g=target,
        true_solution=true_solution,
        eliminate=0,
    )


def make_ball_interpolation(d: int, beta: float = 1.0) -> PdeProblem:
    """Interpolate the cos-sum solution on the unit ball, with no PDE at all."""
    sol = _cos_sum_solution(float(beta))
    return make_interpolation(geometry.unit_ball(d), sol.value, sol)


PROBLEMS = {
    "nonlinear_elliptic": make_nonlinear_elliptic,
    "darcy_tanh": make_darcy_tanh,
    "parametric_darcy": make_parametric_darcy,
    "interpolation": make_ball_interpolation,
}


def make_problem(name: str, **params) -> PdeProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**params)
