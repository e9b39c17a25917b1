"""Backward kernel solver for the HJB equation ``(d_t + Lap) V - |grad V|^2 = 0``.

Paths of ``dX = sqrt(2) dW`` are simulated forward; then, backward in time,
each step finds the minimum-norm ``u`` with

    u(X_n) + dt |grad u(X_n)|^2 + sqrt(2 dt) grad u(X_n) . xi_{n+1} = V(X_{n+1})

at every path, by linearize-then-optimize around the previous step's gradient.
The exact value follows from the Cole-Hopf transform,
``V(x, t) = -log E exp(-g(x + sqrt(2) W_{T-t}))``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels, solver
from .functionals import FunctionalSet
from .kernels import KernelSpec

log = logging.getLogger(__name__)


def terminal_log(x) -> np.ndarray:
    """g(x) = log(1/2 + |x|^2 / 2)."""
    x = np.atleast_2d(x)
    return np.log(0.5 + 0.5 * np.sum(x * x, axis=1))


def terminal_log_grad(x) -> np.ndarray:
    x = np.atleast_2d(x)
    return 2.0 * x / (1.0 + np.sum(x * x, axis=1))[:, None]


@dataclass(frozen=True)
class HjbConfig:
    d: int = 100
    T: float = 1.0
    n_steps: int = 20
    J: int = 2000
    x0: tuple | float = 0.0
    sigma: float = 100.0
    nugget: float = 1e-3
    seed: int = 0
    lto_iters: int = 2
    terminal: Callable = field(default=terminal_log, compare=False, repr=False)
    terminal_grad: Callable = field(default=terminal_log_grad, compare=False, repr=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.J < 2:
            raise ValueError("J must be >= 2")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.nugget > 0:
            raise ValueError("nugget must be positive")
        if self.lto_iters < 1:
            raise ValueError("lto_iters must be >= 1")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def start(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.x0, dtype=float), (self.d,)).copy()

    def kernel(self) -> KernelSpec:
        # inverse quadratic (1 + |x - y|^2 / (2 d sigma^2))^-1
        return kernels.isotropic(kernels.INVERSE_QUADRATIC, self.d, self.sigma)


@dataclass
class PathBundle:
    """``states[n, j]`` is path ``j`` at ``t_n``; ``increments[n]`` drives step ``n -> n+1``."""

    states: np.ndarray
    increments: np.ndarray
    dt: float


def simulate_paths(cfg: HjbConfig) -> PathBundle:
    """Euler-Maruyama (exact here) for ``dX = sqrt(2) dW`` from ``x0``."""
    rng = np.random.default_rng(cfg.seed)
    xi = rng.standard_normal((cfg.n_steps, cfg.J, cfg.d))
    states = np.empty((cfg.n_steps + 1, cfg.J, cfg.d))
    states[0] = cfg.start
    step = np.sqrt(2.0 * cfg.dt)
    for n in range(cfg.n_steps):
        states[n + 1] = states[n] + step * xi[n]
    return PathBundle(states, xi, cfg.dt)


@dataclass
class StepResult:
    values: np.ndarray
    gradients: np.ndarray
    solution: solver.Solution
    residual: float


def step_residual(u, grad, xi, targets, dt) -> np.ndarray:
    return u + dt * np.sum(grad * grad, axis=1) + np.sqrt(2.0 * dt) * np.sum(grad * xi, axis=1) - targets


def backward_step(cfg: HjbConfig, states, xi, targets, warm_grad=None, k: KernelSpec | None = None) -> StepResult:
    """One backward step by ``cfg.lto_iters`` linearize-then-optimize iterations.

    ``warm_grad`` is the gradient the first linearization uses (default zero).
    Returns value and gradient of the step solution at every state.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    targets = np.asarray(targets, dtype=float)
    if len(states) != len(targets) or xi.shape != states.shape:
        raise ValueError("states, increments and targets must describe the same paths")
    k = cfg.kernel() if k is None else k
    dt = cfg.dt
    grad = np.zeros_like(states) if warm_grad is None else np.asarray(warm_grad, dtype=float)
    # paths sharing a state (all of them at t = 0) are kept apart: their increments
    # differ, and regressing the targets on them is what pins down grad u there;
    # the relative nugget makes the rank-deficient Gram solvable
    pts, xi_c, tgt_c, grad_c = states, xi, targets, grad
    sol = None
    for _ in range(cfg.lto_iters):
        # u + (2 dt grad_prev + sqrt(2 dt) xi) . grad u = V + dt |grad_prev|^2
        weight = 2.0 * dt * grad_c + np.sqrt(2.0 * dt) * xi_c
        fs = FunctionalSet(pts, np.ones(len(pts)), grad=weight)
        z = tgt_c + dt * np.sum(grad_c * grad_c, axis=1)
        K = kernels.gram(k, fs)
        fac = solver.factorize(K, cfg.nugget)
        sol = solver.Solution(k, fs, fac.solve(z), z, fac, variant="lto")
        grad_c = solver.evaluate_gradient(sol, pts)
    u_c = solver.evaluate(sol, pts)
    res = float(np.sqrt(np.mean(step_residual(u_c, grad_c, xi_c, tgt_c, dt) ** 2)))
    sol.history = [res]
    return StepResult(u_c, grad_c, sol, res)


@dataclass
class HjbResult:
    value: float
    diagnostics: list  # (step, residual, value at x0)


def solve_hjb(cfg: HjbConfig, paths: PathBundle | None = None) -> HjbResult:
    """Backward sweep from ``V(., T) = g``; returns ``V(x0, 0)`` and per-step diagnostics."""
    paths = simulate_paths(cfg) if paths is None else paths
    k = cfg.kernel()
    x0 = cfg.start[None, :]
    V = cfg.terminal(paths.states[-1])
    grad_next = None
    diagnostics = []
    for n in range(cfg.n_steps - 1, -1, -1):
        X = paths.states[n]
        if grad_next is None:
            warm = cfg.terminal_grad(X)
        else:
            warm = solver.evaluate_gradient(grad_next, X)
        res = backward_step(cfg, X, paths.increments[n], V, warm, k)
        v0 = float(solver.evaluate(res.solution, x0)[0])
        diagnostics.append((n, res.residual, v0))
        log.info("hjb step %d: residual %.3e, V(x0) %.6f", n, res.residual, v0)
        V = res.values
        grad_next = res.solution
    return HjbResult(diagnostics[-1][2], diagnostics)


def write_diagnostics(path, result: HjbResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "residual", "value_x0"])
        for n, r, v in result.diagnostics:
            w.writerow([n, repr(float(r)), repr(float(v))])


def cole_hopf_reference(cfg: HjbConfig, mc_samples: int = 1_000_000, seed: int = 0, t: float = 0.0, chunk: int = 50_000):
    """Monte Carlo ``-log E exp(-g(x0 + sqrt(2) W_{T-t}))`` with its delta-method standard error."""
    if mc_samples < 1000:
        raise ValueError("mc_samples must be >= 1000")
    tau = cfg.T - t
    x0 = cfg.start
    if tau <= 0:
        return float(cfg.terminal(x0[None, :])[0]), 0.0
    rng = np.random.default_rng(seed)
    # sum and sum of squares of exp(-g), shifted by exp(-g(x0)) against overflow
    shift = float(cfg.terminal(x0[None, :])[0])
    s1 = s2 = 0.0
    done = 0
    while done < mc_samples:
        n = min(chunk, mc_samples - done)
        X = x0 + np.sqrt(2.0 * tau) * rng.standard_normal((n, cfg.d))
        w = np.exp(-(cfg.terminal(X) - shift))
        s1 += float(w.sum())
        s2 += float((w * w).sum())
        done += n
    mean = s1 / mc_samples
    var = max(0.0, s2 / mc_samples - mean * mean)
    value = shift - np.log(mean)
    stderr = np.sqrt(var / mc_samples) / mean
    return float(value), float(stderr)
