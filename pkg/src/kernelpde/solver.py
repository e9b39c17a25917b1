"""Minimum-norm collocation solvers.

Three variants share the same representer machinery:

``lto``
    linearize the PDE at the current iterate, then solve the linear
    minimum-norm problem over the ``M`` linearized functionals.
``gn_relaxed``
    Gauss-Newton on the penalized objective
    ``1/2 z^T K^-1 z + 1/(2 beta^2) |F(z) - y|^2`` over all ``N`` raw operator
    functionals.  Each step is written in Woodbury form
    ``z = K J^T (J K J^T + beta^2 I)^-1 b`` so ``beta -> 0`` stays stable.
``gn_eliminate``
    Gauss-Newton on the free values ``w`` after solving every constraint for
    one operator slot, minimizing ``1/2 z(w)^T K^-1 z(w)`` by linear least
    squares on ``L^-1 z``.

Every Gram matrix gets the diagonal-scaled nugget ``eta * diag(K)``; a failed
Cholesky retries once with ``eta`` multiplied by 100.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import kernels
from .functionals import FunctionalSet, concat
from .geometry import CollocationSet
from .kernels import KernelSpec
from .problems import PdeProblem, linearize, residual

log = logging.getLogger(__name__)

VARIANTS = ("lto", "gn_eliminate", "gn_relaxed")
NUGGET_ESCALATION = 100.0


class SolverError(RuntimeError):
    """Factorization failed even after nugget escalation."""


class UnsupportedVariantError(ValueError):
    """The problem lacks the structure a solver variant needs."""


@dataclass(frozen=True)
class SolverConfig:
    variant: str = "lto"
    nugget_eta: float = 1e-10
    max_iters: int = 3
    step_size: float = 1.0
    convergence_tol: float = 0.0
    beta_relax: float = 1e-6
    backtracking: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.nugget_eta > 0:
            raise ValueError("nugget_eta must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.step_size <= 1:
            raise ValueError("step_size must lie in (0, 1]")
        if self.convergence_tol < 0:
            raise ValueError("convergence_tol must be nonnegative")
        if self.variant == "gn_relaxed" and not self.beta_relax > 0:
            raise ValueError("beta_relax must be positive")


@dataclass
class Factor:
    """Cholesky factor of ``K + eta * diag(K)``."""

    cho: tuple
    eta: float
    size: int

    def solve(self, rhs):
        return linalg.cho_solve(self.cho, rhs, check_finite=False)

    @property
    def lower(self) -> np.ndarray:
        c, low = self.cho
        return np.tril(c) if low else np.triu(c).T


def factorize(K, eta: float) -> Factor:
    """Cholesky of ``K + eta * diag(K)`` with a single x100 escalation on failure."""
    K = np.asarray(K, dtype=float)
    diag = np.diag(K).copy()
    if np.any(diag < 0) or not np.all(np.isfinite(K)):
        raise SolverError("Gram matrix has negative or non-finite diagonal entries")
    floor = np.where(diag > 0, diag, 1.0)
    e = float(eta)
    for attempt in range(2):
        A = K.copy()
        A[np.diag_indices_from(A)] += e * floor
        try:
            return Factor(linalg.cho_factor(A, lower=True, check_finite=False), e, len(K))
        except linalg.LinAlgError:
            if attempt == 0:
                log.warning("Cholesky failed at eta=%.3g, retrying with eta=%.3g", e, e * NUGGET_ESCALATION)
                e *= NUGGET_ESCALATION
    ratio = diag.max() / max(diag.min(), np.finfo(float).tiny) if len(diag) else 1.0
    raise SolverError(
        f"Cholesky failed with eta={e:.3g}: size {len(K)}, diagonal range ratio {ratio:.3g}; "
        "check for duplicate collocation points or an overly long lengthscale"
    )


@dataclass
class Solution:
    kernel: KernelSpec
    functionals: FunctionalSet
    coefficients: np.ndarray
    targets: np.ndarray | None = None
    factor: Factor | None = None
    history: list = field(default_factory=list)
    variant: str = "lto"

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (len(self.functionals),):
            raise ValueError("one coefficient per functional required")

    @property
    def n_iterations(self) -> int:
        return len(self.history)


def evaluate(sol: Solution, pts) -> np.ndarray:
    """Representer ``u(s) = K(s, phi) @ coefficients`` at each row of ``pts``."""
    return kernels.cross_matrix(sol.kernel, pts, sol.functionals) @ sol.coefficients


def apply_functionals(sol: Solution, fs: FunctionalSet) -> np.ndarray:
    """Each functional of ``fs`` applied to the representer."""
    return kernels.pair_matrix(sol.kernel, fs, sol.functionals) @ sol.coefficients


def evaluate_gradient(sol: Solution, pts) -> np.ndarray:
    return kernels.representer_gradient(sol.kernel, pts, sol.functionals, sol.coefficients)


def rkhs_norm(sol: Solution) -> float:
    """Nugget-regularized norm ``sqrt(z^T (K + eta diag K)^-1 z)``.

    Solutions that are sums of several representers (damped LTO steps) carry
    no single factorization; their norm is ``sqrt(c^T K c)`` with the plain Gram.
    """
    if sol.factor is not None and sol.targets is not None:
        return float(np.sqrt(max(0.0, float(sol.targets @ sol.coefficients))))
    K = kernels.gram(sol.kernel, sol.functionals)
    return float(np.sqrt(max(0.0, float(sol.coefficients @ K @ sol.coefficients))))


def operator_values(sol: Solution | None, prob: PdeProblem, colloc: CollocationSet):
    """All ``L_q u`` at the collocation points; zeros for ``sol is None`` (u = 0)."""
    if sol is None:
        return np.zeros((colloc.n_interior, prob.q_interior)), np.zeros((colloc.n_boundary, prob.q_boundary))
    ints, bdys = prob.operator_sets(colloc)
    t_int = np.column_stack([apply_functionals(sol, fs) for fs in ints])
    if bdys:
        t_bdy = np.column_stack([apply_functionals(sol, fs) for fs in bdys])
    else:
        t_bdy = np.zeros((0, prob.q_boundary))
    return t_int, t_bdy


def _linear_solve(k, fs, z, eta):
    K = kernels.gram(k, fs)
    fac = factorize(K, eta)
    return fac, fac.solve(z)


def _resnorm(prob, colloc, t_int, t_bdy):
    return float(np.linalg.norm(residual(prob, colloc, t_int, t_bdy)))


def solve_lto(prob: PdeProblem, colloc: CollocationSet, k: KernelSpec, cfg: SolverConfig = SolverConfig()) -> Solution:
    """Linearize-then-optimize from the zero function."""
    current = None
    t_int, t_bdy = operator_values(None, prob, colloc)
    res_prev = _resnorm(prob, colloc, t_int, t_bdy)
    history = []
    for it in range(cfg.max_iters):
        sysm = linearize(prob, colloc, t_int, t_bdy)
        fac, alpha = _linear_solve(k, sysm.functionals, sysm.targets, cfg.nugget_eta)
        step = Solution(k, sysm.functionals, alpha, sysm.targets, fac, variant="lto")
        omega = cfg.step_size
        while True:
            cand = step if current is None or omega == 1.0 else _blend(current, step, omega)
            n_int, n_bdy = operator_values(cand, prob, colloc)
            res = _resnorm(prob, colloc, n_int, n_bdy)
            if not cfg.backtracking or res <= res_prev or omega < 1e-3:
                break
            omega *= 0.5
        change = np.max(np.abs(n_int - t_int)) / max(1.0, np.max(np.abs(n_int)))
        current, t_int, t_bdy, res_prev = cand, n_int, n_bdy, res
        history.append(res)
        log.debug("lto iteration %d: residual %.3e, change %.3e", it + 1, res, change)
        if change < cfg.convergence_tol:
            break
    current.history = history
    return current


def _blend(old: Solution, new: Solution, omega: float) -> Solution:
    # (1 - omega) u_old + omega u_new as one representer over both functional sets
    fs = concat([old.functionals, new.functionals])
    coef = np.concatenate([(1.0 - omega) * old.coefficients, omega * new.coefficients])
    return Solution(old.kernel, fs, coef, None, None, variant="lto")


class _RawSystem:
    """All raw operator functionals, ordered point-major within interior then boundary."""

    def __init__(self, prob: PdeProblem, colloc: CollocationSet):
        ints, bdys = prob.operator_sets(colloc)
        self.prob, self.colloc = prob, colloc
        self.qi, self.qb = prob.q_interior, prob.q_boundary
        self.mi, self.mb = colloc.n_interior, colloc.n_boundary
        # slot (m, q) sits at index m * Q + q inside its block
        order_i = np.arange(self.mi * self.qi).reshape(self.mi, self.qi)
        self.functionals = concat(
            [_interleave(ints, order_i)] + ([_interleave(bdys, np.arange(self.mb * self.qb).reshape(self.mb, self.qb))] if bdys else [])
        )
        self.n_int = self.mi * self.qi
        self.N = self.n_int + self.mb * self.qb
        self.y = prob.data(colloc)

    def split(self, z):
        return z[: self.n_int].reshape(self.mi, self.qi), z[self.n_int :].reshape(self.mb, self.qb)

    def F(self, z):
        t_i, t_b = self.split(z)
        return residual(self.prob, self.colloc, t_i, t_b) + self.y

    def jacobian(self, z):
        """Block-diagonal Jacobian of ``F`` as a dense ``(M, N)`` array."""
        t_i, t_b = self.split(z)
        J = np.zeros((self.mi + self.mb, self.N))
        gi = np.asarray(self.prob.P_grad(t_i), dtype=float).reshape(t_i.shape)
        rows = np.repeat(np.arange(self.mi), self.qi)
        J[rows, np.arange(self.n_int)] = gi.ravel()
        if self.mb:
            gb = np.asarray(self.prob.B_grad(t_b), dtype=float).reshape(t_b.shape)
            rows = self.mi + np.repeat(np.arange(self.mb), self.qb)
            J[rows, self.n_int + np.arange(self.mb * self.qb)] = gb.ravel()
        return J


def _interleave(sets, index):
    """Stack per-operator sets so that row ``index[m, q]`` is operator ``q`` at point ``m``."""
    stacked = concat(sets)  # operator-major
    m, q = index.shape
    perm = np.empty(m * q, dtype=int)
    perm[index.ravel()] = (np.arange(q)[None, :] * m + np.arange(m)[:, None]).ravel()
    return stacked.take(perm)


def solve_gn_relaxed(prob: PdeProblem, colloc: CollocationSet, k: KernelSpec, cfg: SolverConfig = SolverConfig(variant="gn_relaxed")) -> Solution:
    """Gauss-Newton on the relaxed objective over the full raw functional vector."""
    raw = _RawSystem(prob, colloc)
    K = kernels.gram(k, raw.functionals)
    fac = factorize(K, cfg.nugget_eta)
    Kn = K.copy()
    Kn[np.diag_indices_from(Kn)] += fac.eta * np.where(np.diag(K) > 0, np.diag(K), 1.0)
    beta2 = cfg.beta_relax**2
    z = np.zeros(raw.N)
    obj_prev = _relaxed_objective(z, fac, raw, beta2)
    history = []
    for it in range(cfg.max_iters):
        J = raw.jacobian(z)
        b = raw.y - raw.F(z) + J @ z
        KJt = Kn @ J.T
        S = J @ KJt
        S[np.diag_indices_from(S)] += beta2
        S = 0.5 * (S + S.T)
        inner = factorize(S, cfg.nugget_eta)
        z_new = KJt @ inner.solve(b)
        omega = cfg.step_size
        while True:
            cand = z + omega * (z_new - z)
            obj = _relaxed_objective(cand, fac, raw, beta2)
            if not cfg.backtracking or obj <= obj_prev or omega < 1e-3:
                break
            omega *= 0.5
        change = np.max(np.abs(cand - z)) / max(1.0, np.max(np.abs(cand)))
        z, obj_prev = cand, obj
        history.append(float(np.linalg.norm(raw.F(z) - raw.y)))
        log.debug("gn_relaxed iteration %d: residual %.3e", it + 1, history[-1])
        if change < cfg.convergence_tol:
            break
    return Solution(k, raw.functionals, fac.solve(z), z, fac, history, "gn_relaxed")


def _relaxed_objective(z, fac, raw, beta2):
    return 0.5 * float(z @ fac.solve(z)) + 0.5 / beta2 * float(np.sum((raw.F(z) - raw.y) ** 2))


def solve_gn_eliminate(prob: PdeProblem, colloc: CollocationSet, k: KernelSpec, cfg: SolverConfig = SolverConfig(variant="gn_eliminate")) -> Solution:
    """Gauss-Newton on the free operator values after eliminating every constraint."""
    q_star = prob.eliminate
    if q_star is None:
        raise UnsupportedVariantError(f"{prob.name} provides no elimination slot")
    if prob.q_boundary != 1 or not np.allclose(prob.B_grad(np.array([[0.3], [-1.7]])), 1.0):
        raise UnsupportedVariantError("elimination needs a single identity boundary operator")
    raw = _RawSystem(prob, colloc)
    probe = np.random.default_rng(0).standard_normal((4, prob.q_interior))
    if not np.allclose(np.asarray(prob.P_grad(probe))[:, q_star], 1.0):
        raise UnsupportedVariantError(f"{prob.name}: combiner is not unit-slope in slot {q_star}")
    K = kernels.gram(k, raw.functionals)
    fac = factorize(K, cfg.nugget_eta)
    L = fac.lower
    free = [q for q in range(raw.qi) if q != q_star]
    nf = len(free)
    f_int = np.asarray(prob.f(colloc.interior), dtype=float)
    g_bdy = np.asarray(prob.g(colloc.boundary), dtype=float) if raw.mb else np.zeros(0)
    slot = np.arange(raw.n_int).reshape(raw.mi, raw.qi)

    def assemble(w):
        t = np.zeros((raw.mi, raw.qi))
        t[:, free] = w.reshape(raw.mi, nf)
        # P is affine with unit slope in q_star: solve P(t) = f for that entry
        t[:, q_star] = f_int - prob.P(t)
        return np.concatenate([t.ravel(), g_bdy]), t

    def dz_dw(t):
        Z = np.zeros((raw.N, raw.mi * nf))
        grad = np.asarray(prob.P_grad(t), dtype=float).reshape(t.shape)
        cols = np.arange(raw.mi * nf).reshape(raw.mi, nf)
        for j, q in enumerate(free):
            Z[slot[:, q], cols[:, j]] = 1.0
            Z[slot[:, q_star], cols[:, j]] = -grad[:, q]
        return Z

    w = np.zeros(raw.mi * nf)
    z, t = assemble(w)
    history = []
    if nf:
        for it in range(cfg.max_iters):
            r = linalg.solve_triangular(L, z, lower=True, check_finite=False)
            A = linalg.solve_triangular(L, dz_dw(t), lower=True, check_finite=False)
            delta = linalg.lstsq(A, -r, check_finite=False, lapack_driver="gelsy")[0]
            omega = cfg.step_size
            e_prev = float(r @ r)
            while True:
                z_c, t_c = assemble(w + omega * delta)
                r_c = linalg.solve_triangular(L, z_c, lower=True, check_finite=False)
                if not cfg.backtracking or float(r_c @ r_c) <= e_prev or omega < 1e-3:
                    break
                omega *= 0.5
            change = np.max(np.abs(z_c - z)) / max(1.0, np.max(np.abs(z_c)))
            w, z, t = w + omega * delta, z_c, t_c
            history.append(float(np.sqrt(r_c @ r_c)))
            log.debug("gn_eliminate iteration %d: norm %.6e", it + 1, history[-1])
            if change < cfg.convergence_tol:
                break
    else:
        history.append(float(np.sqrt(z @ fac.solve(z))))
    return Solution(k, raw.functionals, fac.solve(z), z, fac, history, "gn_eliminate")


SOLVERS = {"lto": solve_lto, "gn_relaxed": solve_gn_relaxed, "gn_eliminate": solve_gn_eliminate}


def solve(prob: PdeProblem, colloc: CollocationSet, k: KernelSpec, cfg: SolverConfig = SolverConfig()) -> Solution:
    return SOLVERS[cfg.variant](prob, colloc, k, cfg)
