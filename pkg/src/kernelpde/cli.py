"""Command line entry point: ``kernelpde {solve,convergence,param-darcy,filldist,hjb}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import geometry, harness, hjb, kernels, problems, solver


def _ints(text):
    return [int(v) for v in text.split(",")]


def _config(cls, args, fields):
    overrides = {f: getattr(args, f) for f in fields}
    if args.config:
        return cls.from_json(args.config, **overrides)
    return cls(**{k: v for k, v in overrides.items() if v is not None})


def cmd_solve(args) -> int:
    params = {"d": args.d}
    if args.problem == "nonlinear_elliptic":
        params["beta"] = args.beta
    elif args.problem == "darcy_tanh":
        params["beta_tau"] = args.beta
    else:
        raise SystemExit("solve supports nonlinear_elliptic and darcy_tanh")
    prob = problems.make_problem(args.problem, **params)
    k = kernels.isotropic(args.kernel, args.d, args.lengthscale, args.nu if args.kernel == "matern" else None)
    colloc = geometry.sample_collocation(prob.domain, args.M, max(1, int(args.M * args.boundary_ratio)), args.seed)
    cfg = solver.SolverConfig(variant=args.variant, max_iters=args.max_iters, nugget_eta=args.nugget)
    sol = solver.solve(prob, colloc, k, cfg)
    test = geometry.sample_interior(prob.domain, args.n_test, [args.seed, 1])
    err = harness.rms_error(sol, prob, test)
    t_i, t_b = solver.operator_values(sol, prob, colloc)
    res = np.max(np.abs(problems.residual(prob, colloc, t_i, t_b)))
    print(f"rms_test_error {err:.6e}")
    print(f"max_collocation_residual {res:.6e}")
    print("iteration_history " + " ".join(f"{h:.3e}" for h in sol.history))
    return 0


def _report_slopes(report):
    for g, s in sorted(report.slopes.items()):
        print(f"{g}: slope vs M {s['M'][0]:+.3f} (se {s['M'][2]:.3f}), slope vs h {s['h'][0]:+.3f} (se {s['h'][2]:.3f})")


def _failed(report) -> int:
    bad = [r for r in report.rows if r["status"] != "ok"]
    for r in bad:
        print(f"FAILED cell {r['group']} M={r['M']} seed={r['seed']}: {r['status']}", file=sys.stderr)
    return 1 if bad else 0


def cmd_convergence(args) -> int:
    cfg = _config(harness.ExperimentConfig, args, ("dims", "M_list", "seeds", "output_dir"))
    report = harness.run_convergence(cfg)
    for g, vals in sorted(report.medians.items()):
        for M, e, h in vals:
            print(f"{g} M={M} median_error={e:.4e} median_fill={h:.4f}")
    _report_slopes(report)
    return _failed(report)


def cmd_param_darcy(args) -> int:
    cfg = _config(harness.ParamDarcyConfig, args, ("p_list", "M_list", "seeds", "k_decay", "output_dir"))
    report = harness.run_param_darcy(cfg)
    for g, vals in sorted(report.medians.items()):
        for M, e, _ in vals:
            print(f"{g} M={M} median_error={e:.4e}")
    return _failed(report)


def cmd_filldist(args) -> int:
    cfg = _config(harness.FillDistanceConfig, args, ("dims", "M_list", "seeds", "probes", "output_dir"))
    report = harness.run_filldist_study(cfg)
    for d, (slope, _, se) in sorted(report.slopes.items()):
        print(f"d={d}: slope {slope:+.4f} (se {se:.4f}), expected {-1.0 / d:+.4f}")
    return 0


def cmd_hjb(args) -> int:
    base = json.loads(Path(args.config).read_text()) if args.config else {}
    for f in ("d", "J", "sigma", "nugget", "T", "n_steps", "seed"):
        if getattr(args, f) is not None:
            base[f] = getattr(args, f)
    cfg = hjb.HjbConfig(**base)
    result = hjb.solve_hjb(cfg)
    print(f"V(x0,0) {result.value:.6f}")
    if args.reference:
        ref, se = hjb.cole_hopf_reference(cfg, args.reference, cfg.seed + 1)
        print(f"cole_hopf_reference {ref:.6f} +- {se:.6f}")
        print(f"relative_error {abs(result.value - ref) / abs(ref):.4%}")
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        hjb.write_diagnostics(out / "hjb_steps.csv", result)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kernelpde", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one problem instance")
    s.add_argument("--problem", default="nonlinear_elliptic", choices=["nonlinear_elliptic", "darcy_tanh"])
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--M", type=int, default=500)
    s.add_argument("--boundary-ratio", type=float, default=0.2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--kernel", default="matern", choices=sorted(kernels.FAMILY_CODES))
    s.add_argument("--nu", type=float, default=3.5)
    s.add_argument("--lengthscale", type=float, default=0.25 * np.sqrt(2))
    s.add_argument("--variant", default="lto", choices=solver.VARIANTS)
    s.add_argument("--max-iters", type=int, default=harness.STUDY_SOLVER["max_iters"])
    s.add_argument("--nugget", type=float, default=1e-10)
    s.add_argument("--n-test", type=int, default=1000)
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("convergence", help="error vs number of collocation points")
    c.add_argument("--config")
    c.add_argument("--dims", type=_ints)
    c.add_argument("--M-list", dest="M_list", type=_ints)
    c.add_argument("--seeds", type=_ints)
    c.add_argument("--output-dir")
    c.set_defaults(func=cmd_convergence)

    p = sub.add_parser("param-darcy", help="vanilla vs adapted kernels on parametric Darcy")
    p.add_argument("--config")
    p.add_argument("--p-list", dest="p_list", type=_ints)
    p.add_argument("--M-list", dest="M_list", type=_ints)
    p.add_argument("--seeds", type=_ints)
    p.add_argument("--k-decay", dest="k_decay", type=float)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_param_darcy)

    f = sub.add_parser("filldist", help="fill distance scaling study")
    f.add_argument("--config")
    f.add_argument("--dims", type=_ints)
    f.add_argument("--M-list", dest="M_list", type=_ints)
    f.add_argument("--seeds", type=_ints)
    f.add_argument("--probes", type=int)
    f.add_argument("--output-dir")
    f.set_defaults(func=cmd_filldist)

    h = sub.add_parser("hjb", help="backward kernel solver for the HJB benchmark")
    h.add_argument("--config")
    h.add_argument("--d", type=int)
    h.add_argument("--J", type=int)
    h.add_argument("--sigma", type=float)
    h.add_argument("--nugget", type=float)
    h.add_argument("--T", type=float)
    h.add_argument("--n-steps", dest="n_steps", type=int)
    h.add_argument("--seed", type=int)
    h.add_argument("--reference", type=int, default=0, help="Monte Carlo samples for the Cole-Hopf check")
    h.add_argument("--output-dir")
    h.set_defaults(func=cmd_hjb)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
