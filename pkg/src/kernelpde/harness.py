"""Experiment orchestration: convergence studies, parametric Darcy, fill distances.

Every study writes plain CSV (one-line header, ``repr`` floats) and a JSON
manifest holding the config, its hash, per-cell status and wall times.  CSV
files never contain timings, so reruns of the same config are byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate, stats

from . import _backend, geometry, kernels, problems, solver
from .problems import darcy_coefficient

log = logging.getLogger(__name__)

# Newton from the zero function needs a few more than three steps on the cubic
# problem before the linearization error drops below the discretization error
STUDY_SOLVER = {"variant": "lto", "max_iters": 12, "convergence_tol": 1e-8}


def fit_slope(xs, ys):
    """Least-squares line through ``(log x, log y)``; returns ``(slope, intercept, stderr)``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-d arrays of equal length")
    if len(xs) < 2:
        raise ValueError("need at least two points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("slope fits need strictly positive data")
    if np.ptp(np.log(xs)) == 0:
        raise ValueError("xs must not all be equal")
    fit = stats.linregress(np.log(xs), np.log(ys))
    stderr = float(fit.stderr) if len(xs) > 2 else 0.0
    return float(fit.slope), float(fit.intercept), stderr


def config_hash(cfg) -> str:
    payload = json.dumps(cfg if isinstance(cfg, dict) else asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write_manifest(outdir, cfg, cells, extra=None):
    manifest = {
        "config": asdict(cfg),
        "config_hash": config_hash(cfg),
        "backend": _backend.name(),
        "cells": cells,
        "failed_cells": sum(1 for c in cells if c["status"] != "ok"),
    }
    manifest.update(extra or {})
    Path(outdir, "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


# ---------------------------------------------------------------------------
# convergence studies


@dataclass
class ExperimentConfig:
    problem: str = "nonlinear_elliptic"
    problem_params: dict = field(default_factory=lambda: {"beta": 1.0})
    kernel: dict = field(default_factory=lambda: {"family": "matern", "nu": 3.5, "lengthscale": 0.25, "sqrt_d": True})
    dims: list = field(default_factory=lambda: [2])
    M_list: list = field(default_factory=lambda: [250, 500, 1000, 2000])
    boundary_ratio: float = 0.2
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    solver: dict = field(default_factory=lambda: dict(STUDY_SOLVER))
    n_test: int = 1000
    probes: int = 100_000
    output_dir: str | None = None

    def __post_init__(self):
        for name in ("dims", "M_list", "seeds"):
            if not list(getattr(self, name)):
                raise ValueError(f"{name} must be nonempty")
        if not self.boundary_ratio > 0:
            raise ValueError("boundary_ratio must be positive")
        if self.n_test < 1 or self.probes < 1:
            raise ValueError("n_test and probes must be positive")

    @classmethod
    def from_json(cls, path, **overrides) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text())
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def make_kernel(self, d: int) -> kernels.KernelSpec:
        spec = dict(self.kernel)
        ls = float(spec.get("lengthscale", 1.0))
        if spec.get("sqrt_d", False):
            ls *= np.sqrt(d)
        return kernels.isotropic(spec["family"], d, ls, spec.get("nu"))

    def make_problem(self, d: int) -> problems.PdeProblem:
        return problems.make_problem(self.problem, d=d, **self.problem_params)


@dataclass
class ConvergenceReport:
    rows: list  # dicts: group, d, M, seed, error, fill, runtime, status
    slopes: dict = field(default_factory=dict)  # group -> {"M": fit, "h": fit}
    medians: dict = field(default_factory=dict)  # group -> list of (M, median error, median h)

    ROW_FIELDS = ("group", "d", "M", "seed", "error", "fill", "status")

    def ok_rows(self, group=None):
        return [r for r in self.rows if r["status"] == "ok" and (group is None or r["group"] == group)]

    def write(self, outdir) -> None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "rows.csv", self.ROW_FIELDS, [[r[f] for f in self.ROW_FIELDS] for r in self.rows])
        med = [(g, M, e, h) for g, vals in sorted(self.medians.items()) for M, e, h in vals]
        _write_csv(out / "medians.csv", ("group", "M", "median_error", "median_fill"), med)
        fits = []
        for g, s in sorted(self.slopes.items()):
            for axis in ("M", "h"):
                if axis in s:
                    fits.append((g, axis, *s[axis]))
        _write_csv(out / "slopes.csv", ("group", "axis", "slope", "intercept", "stderr"), fits)


def summarize(rows) -> tuple[dict, dict]:
    """Per-group medians over seeds and log-log fits against M and fill distance."""
    medians, slopes = {}, {}
    groups = sorted({r["group"] for r in rows if r["status"] == "ok"})
    for g in groups:
        ok = [r for r in rows if r["status"] == "ok" and r["group"] == g]
        Ms = sorted({r["M"] for r in ok})
        vals = []
        for M in Ms:
            cell = [r for r in ok if r["M"] == M]
            vals.append((M, float(np.median([r["error"] for r in cell])), float(np.median([r["fill"] for r in cell]))))
        medians[g] = vals
        if len(vals) >= 2:
            Mv, ev, hv = (np.array(c) for c in zip(*vals))
            slopes[g] = {"M": fit_slope(Mv, ev), "h": fit_slope(hv, ev)}
    return medians, slopes


def rms_error(sol, prob, pts) -> float:
    return float(np.sqrt(np.mean((solver.evaluate(sol, pts) - prob.true_solution(pts)) ** 2)))


def run_convergence(cfg: ExperimentConfig) -> ConvergenceReport:
    """Solve every ``(d, M, seed)`` cell and measure RMS test error and fill distance."""
    scfg = solver.SolverConfig(**cfg.solver)
    rows, cells = [], []
    for d in cfg.dims:
        prob = cfg.make_problem(d)
        k = cfg.make_kernel(d)
        for M in cfg.M_list:
            Mb = max(1, int(round(M * cfg.boundary_ratio)))
            for seed in cfg.seeds:
                t0 = time.perf_counter()
                row = {"group": f"d={d}", "d": d, "M": M, "seed": seed, "error": float("nan"), "fill": float("nan")}
                try:
                    colloc = geometry.sample_collocation(prob.domain, M, Mb, seed)
                    test = geometry.sample_interior(prob.domain, cfg.n_test, [seed, 1])
                    sol = solver.solve(prob, colloc, k, scfg)
                    row["error"] = rms_error(sol, prob, test)
                    row["fill"] = geometry.fill_distance_estimate(colloc.interior, prob.domain, cfg.probes, [seed, 2])
                    row["status"] = "ok" if np.isfinite(row["error"]) else "failed: non-finite error"
                except (solver.SolverError, ValueError, np.linalg.LinAlgError) as exc:
                    row["status"] = f"failed: {exc}"
                    log.error("cell d=%d M=%d seed=%d failed: %s", d, M, seed, exc)
                row["runtime"] = time.perf_counter() - t0
                rows.append(row)
                cells.append({k_: row[k_] for k_ in ("d", "M", "seed", "status", "runtime")})
                log.info("d=%d M=%d seed=%d error=%.3e (%.1fs)", d, M, seed, row["error"], row["runtime"])
    medians, slopes = summarize(rows)
    report = ConvergenceReport(rows, slopes, medians)
    if cfg.output_dir:
        report.write(cfg.output_dir)
        _write_manifest(cfg.output_dir, cfg, cells, {"probes": cfg.probes})
    return report


# ---------------------------------------------------------------------------
# parametric Darcy


def solve_darcy_1d(A: Callable, f: Callable, grid_n: int):
    """``-(A u')' = f`` on [0, 1] with ``u(0) = u(1) = 0`` by quadrature on ``grid_n`` cells.

    ``A u' = C - F`` with ``F(x) = int_0^x f``; integrating once more and
    imposing ``u(1) = 0`` fixes ``C``.  Cumulative trapezoid rules make the
    result second-order accurate.  Returns the grid and the solution on it.
    """
    if grid_n < 16:
        raise ValueError("grid_n must be >= 16")
    x = np.linspace(0.0, 1.0, grid_n + 1)
    a = np.asarray(A(x), dtype=float)
    if np.any(a <= 0):
        raise ValueError("coefficient must be positive for a well-posed problem")
    F = integrate.cumulative_trapezoid(f(x), x, initial=0.0)
    inv = integrate.cumulative_trapezoid(1.0 / a, x, initial=0.0)
    Fa = integrate.cumulative_trapezoid(F / a, x, initial=0.0)
    C = Fa[-1] / inv[-1]
    u = C * inv - Fa
    u[0] = 0.0
    u[-1] = 0.0
    return x, u


def reference_darcy_1d(theta, grid_n: int, k_decay: float):
    """Reference solution for one parameter vector ``theta = (theta_0, ..., theta_p)``."""
    th = np.asarray(theta, dtype=float)[None, :]
    return solve_darcy_1d(lambda x: darcy_coefficient(x, np.repeat(th, len(x), axis=0), k_decay), lambda x: x, grid_n)


def darcy_reference_values(pts, k_decay: float, grid_n: int = 2048) -> np.ndarray:
    """Reference ``u(x, theta)`` at rows ``(x, theta_0, ..., theta_p)``."""
    pts = np.atleast_2d(pts)
    out = np.empty(len(pts))
    for i, s in enumerate(pts):
        xg, ug = reference_darcy_1d(s[1:], grid_n, k_decay)
        out[i] = np.interp(s[0], xg, ug)
    return out


@dataclass
class ParamDarcyConfig:
    p_list: list = field(default_factory=lambda: [2, 3])
    k_decay: float = 2.0
    M_list: list = field(default_factory=lambda: [100, 200, 400, 800])
    boundary_ratio: float = 0.1
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    # candidate lengthscales for cross-validation: x block and base theta block
    cv_sigma_x: list = field(default_factory=lambda: [0.2, 0.3, 0.5])
    cv_sigma_theta: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    cv_folds: int = 4
    nugget_eta: float = 1e-10
    n_test: int = 500
    grid_n: int = 2048
    probes: int = 20_000
    output_dir: str | None = None

    def __post_init__(self):
        for name in ("p_list", "M_list", "seeds", "cv_sigma_x", "cv_sigma_theta"):
            if not list(getattr(self, name)):
                raise ValueError(f"{name} must be nonempty")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")

    @classmethod
    def from_json(cls, path, **overrides) -> "ParamDarcyConfig":
        data = json.loads(Path(path).read_text())
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


def darcy_kernel(p: int, sigma_x: float, sigma_theta: float, adapted: bool, k_decay: float) -> kernels.KernelSpec:
    """Gaussian kernel on ``(x, theta_0..theta_p)``; theta lengthscale grows like sqrt(p).

    The adapted kernel measures ``theta_j`` through ``theta_j / j^k``, the way
    it enters the coefficient.
    """
    ls = [sigma_x] + [sigma_theta * np.sqrt(p)] * (p + 1)
    weights = None
    if adapted:
        weights = [1.0, 1.0] + [float(j) ** (-2.0 * k_decay) for j in range(1, p + 1)]
    return kernels.KernelSpec(kernels.GAUSSIAN, p + 2, tuple(ls), weights)


def cv_score(prob, colloc, k, folds: int, eta: float, seed: int = 0) -> float:
    """Held-out PDE residual (RMS, relative to data scale) over ``folds`` splits of the collocation set."""
    rng = np.random.default_rng(seed)
    fi = rng.permutation(colloc.n_interior) % folds
    fb = rng.permutation(colloc.n_boundary) % folds
    cfg = solver.SolverConfig(nugget_eta=eta, max_iters=1)
    errs = []
    for f in range(folds):
        train = geometry.CollocationSet(colloc.interior[fi != f], colloc.boundary[fb != f])
        held = geometry.CollocationSet(colloc.interior[fi == f], colloc.boundary[fb == f])
        try:
            sol = solver.solve_lto(prob, train, k, cfg)
        except solver.SolverError:
            return float("inf")
        t_i, t_b = solver.operator_values(sol, prob, held)
        r = problems.residual(prob, held, t_i, t_b)
        errs.append(np.mean((r / (1.0 + np.abs(prob.data(held)))) ** 2))
    return float(np.sqrt(np.mean(errs)))


def tune_darcy_kernel(prob, colloc, p, adapted, cfg: ParamDarcyConfig):
    best = None
    for sx in cfg.cv_sigma_x:
        for st in cfg.cv_sigma_theta:
            k = darcy_kernel(p, sx, st, adapted, cfg.k_decay)
            score = cv_score(prob, colloc, k, cfg.cv_folds, cfg.nugget_eta)
            if best is None or score < best[0]:
                best = (score, sx, st)
    return best


def run_param_darcy(cfg: ParamDarcyConfig) -> ConvergenceReport:
    """Vanilla vs decay-adapted Gaussian kernels on the parametric Darcy problem."""
    scfg = solver.SolverConfig(nugget_eta=cfg.nugget_eta, max_iters=1)
    rows, cells, tuned = [], [], {}
    for p in cfg.p_list:
        prob = problems.make_parametric_darcy(p, cfg.k_decay)
        test = geometry.sample_interior(prob.domain, cfg.n_test, [9999, p])
        ref = darcy_reference_values(test, cfg.k_decay, cfg.grid_n)
        for M in cfg.M_list:
            Mb = max(1, int(round(M * cfg.boundary_ratio)))
            for adapted in (False, True):
                group = f"p={p},{'adapted' if adapted else 'vanilla'}"
                # lengthscales chosen once per (p, M, kernel) on the first seed's points
                cv_colloc = geometry.sample_collocation(prob.domain, M, Mb, cfg.seeds[0])
                score, sx, st = tune_darcy_kernel(prob, cv_colloc, p, adapted, cfg)
                tuned[f"{group},M={M}"] = {"sigma_x": sx, "sigma_theta": st, "cv_score": score}
                k = darcy_kernel(p, sx, st, adapted, cfg.k_decay)
                for seed in cfg.seeds:
                    t0 = time.perf_counter()
                    row = {"group": group, "d": p, "M": M, "seed": seed, "error": float("nan"), "fill": float("nan")}
                    try:
                        colloc = geometry.sample_collocation(prob.domain, M, Mb, seed)
                        sol = solver.solve(prob, colloc, k, scfg)
                        row["error"] = float(np.sqrt(np.mean((solver.evaluate(sol, test) - ref) ** 2)))
                        row["fill"] = geometry.fill_distance_estimate(colloc.interior, prob.domain, cfg.probes, [seed, 2])
                        row["status"] = "ok" if np.isfinite(row["error"]) else "failed: non-finite error"
                    except (solver.SolverError, ValueError) as exc:
                        row["status"] = f"failed: {exc}"
                    row["runtime"] = time.perf_counter() - t0
                    rows.append(row)
                    cells.append({k_: row[k_] for k_ in ("group", "M", "seed", "status", "runtime")})
                    log.info("%s M=%d seed=%d error=%.3e", group, M, seed, row["error"])
    medians, slopes = summarize(rows)
    report = ConvergenceReport(rows, slopes, medians)
    report.tuned = tuned
    if cfg.output_dir:
        report.write(cfg.output_dir)
        _write_manifest(cfg.output_dir, cfg, cells, {"tuned_lengthscales": tuned})
    return report


# ---------------------------------------------------------------------------
# fill distances


@dataclass
class FillDistanceConfig:
    dims: list = field(default_factory=lambda: [1, 2, 3])
    M_list: list = field(default_factory=lambda: [2**k for k in range(5, 13)])
    seeds: list = field(default_factory=lambda: list(range(10)))
    probes: int = 100_000
    output_dir: str | None = None

    def __post_init__(self):
        for name in ("dims", "M_list", "seeds"):
            if not list(getattr(self, name)):
                raise ValueError(f"{name} must be nonempty")

    @classmethod
    def from_json(cls, path, **overrides) -> "FillDistanceConfig":
        data = json.loads(Path(path).read_text())
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


@dataclass
class FillDistanceReport:
    rows: list  # (d, M, seed, h)
    slopes: dict  # d -> (slope, intercept, stderr)

    def write(self, outdir) -> None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "filldist.csv", ("d", "M", "seed", "fill"), self.rows)
        _write_csv(
            out / "filldist_slopes.csv",
            ("d", "slope", "intercept", "stderr", "expected"),
            [(d, *s, -1.0 / d) for d, s in sorted(self.slopes.items())],
        )


def run_filldist_study(cfg: FillDistanceConfig) -> FillDistanceReport:
    """Median Monte Carlo fill distance of uniform points in the unit ball against M."""
    rows, slopes, cells = [], {}, []
    for d in cfg.dims:
        dom = geometry.unit_ball(d)
        med = []
        for M in cfg.M_list:
            hs = []
            for seed in cfg.seeds:
                t0 = time.perf_counter()
                pts = geometry.sample_interior(dom, M, [seed, d, M])
                h = geometry.fill_distance_estimate(pts, dom, cfg.probes, [seed, d, M, 1])
                hs.append(h)
                rows.append((d, M, seed, h))
                cells.append({"d": d, "M": M, "seed": seed, "status": "ok", "runtime": time.perf_counter() - t0})
            med.append(float(np.median(hs)))
        slopes[d] = fit_slope(cfg.M_list, med)
    report = FillDistanceReport(rows, slopes)
    if cfg.output_dir:
        report.write(cfg.output_dir)
        _write_manifest(cfg.output_dir, cfg, cells, {"probes": cfg.probes})
    return report
