"""Command-line entry point: evaluation, minimization, diagnostics, finite-size checks.

Machine output (json or csv) goes to stdout with full-precision floats and is
byte-stable for a fixed seed, independent of ``--jobs``; diagnostics go to
stderr.  Exit codes: 0 success, 1 validation error, 2 numerical
non-convergence (results are still emitted).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np

from .calculus import overlap_moment_limit, subdifferential_probe
from .finite_model import disorder_average
from .functional import DEFAULT_QUAD, QuadratureConfig, evaluate
from .measure import DiscreteMeasure, moment
from .mixture import MixtureSpec
from .optimizer import LadderReport, OptimizerOptions, minimize_ladder
from .phase import boundary_scan, classify

__all__ = ["dispatch", "main"]


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); validation errors are exit 1
        raise _ArgError(message)


def _csv_float(x: float) -> str:
    return f"{float(x):.17g}"


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _load_spec(path: str) -> MixtureSpec:
    return MixtureSpec.from_config(_load_json(path))


def _load_measure(path: str) -> DiscreteMeasure:
    return DiscreteMeasure.from_config(_load_json(path))


def _quad_from(args) -> QuadratureConfig:
    quad = DEFAULT_QUAD
    kwargs = {}
    if getattr(args, "quad_nodes", None) is not None:
        kwargs["hermite_nodes"] = args.quad_nodes
    if getattr(args, "grid_points", None) is not None:
        kwargs["grid_points"] = args.grid_points
    if kwargs:
        quad = QuadratureConfig(
            hermite_nodes=kwargs.get("hermite_nodes", quad.hermite_nodes),
            grid_points=kwargs.get("grid_points", quad.grid_points),
            grid_halfwidth_sigmas=quad.grid_halfwidth_sigmas,
            interpolation_order=quad.interpolation_order,
        )
    return quad


def _opts_from(args) -> OptimizerOptions:
    kwargs = {}
    if getattr(args, "restarts", None) is not None:
        kwargs["restarts"] = args.restarts
    if getattr(args, "seed", None) is not None:
        kwargs["seed"] = args.seed
    if getattr(args, "max_iters", None) is not None:
        kwargs["max_iters"] = args.max_iters
    return OptimizerOptions(**kwargs)


def _emit(payload: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(payload, sort_keys=True))
    else:
        _emit_human(payload)


def _emit_human(payload: dict, indent: str = "") -> None:
    for key in payload:
        val = payload[key]
        if isinstance(val, dict):
            print(f"{indent}{key}:")
            _emit_human(val, indent + "  ")
        elif isinstance(val, list):
            print(f"{indent}{key}: " + ", ".join(_human_scalar(v) for v in val))
        else:
            print(f"{indent}{key} = {_human_scalar(val)}")


def _human_scalar(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v).lower() if v is not None else "none"
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, dict):
        return json.dumps({k: _human_scalar(x) for k, x in v.items()})
    return str(v)


def _measure_payload(m: DiscreteMeasure) -> dict:
    return {"q": list(m.q), "m": list(m.m)}


def _ladder_payload(report: LadderReport) -> dict:
    return {
        "seed": report.seed,
        "k_max": report.k_max,
        "eps": list(report.eps),
        "levels": [
            {
                "k": lvl.k,
                "value": lvl.value,
                "stationarity_max_residual": lvl.stationarity_max_residual,
                "converged": lvl.converged,
                "measure": _measure_payload(lvl.measure),
                "alternates": [_measure_payload(a) for a in lvl.alternates],
            }
            for lvl in report.levels
        ],
    }


def _ladder_exit(report: LadderReport) -> int:
    return 0 if all(lvl.converged for lvl in report.levels) else 2


# ---------------------------------------------------------------------------
# subcommands


def _cmd_eval(args) -> int:
    spec = _load_spec(args.spec)
    measure = _load_measure(args.measure)
    quad = _quad_from(args)
    fv = evaluate(spec, measure, quad, with_entropy=args.with_entropy)
    _emit(
        {
            "value": fv.value,
            "e_x0": fv.e_x0,
            "correction": fv.correction,
            "quad_error_estimate": fv.quad_error_estimate,
        },
        args.format,
    )
    return 0


def _cmd_minimize(args) -> int:
    spec = _load_spec(args.spec)
    report = minimize_ladder(spec, args.k_max, _opts_from(args), _quad_from(args))
    if args.csv:
        print("k,value,eps,stationarity_residual,converged,q,m")
        for lvl, eps in zip(report.levels, report.eps):
            qs = ";".join(_csv_float(v) for v in lvl.measure.q)
            ms = ";".join(_csv_float(v) for v in lvl.measure.m)
            print(
                f"{lvl.k},{_csv_float(lvl.value)},{_csv_float(eps)},"
                f"{_csv_float(lvl.stationarity_max_residual)},"
                f"{str(lvl.converged).lower()},{qs},{ms}"
            )
    elif args.format == "human":
        for lvl, eps in zip(report.levels, report.eps):
            print(
                f"k={lvl.k}  value={lvl.value:.9f}  eps={eps:.3e}  "
                f"residual={lvl.stationarity_max_residual:.2e}  "
                f"converged={str(lvl.converged).lower()}"
            )
            print("   q: " + ", ".join(f"{v:.6f}" for v in lvl.measure.q))
            print("   m: " + ", ".join(f"{v:.6f}" for v in lvl.measure.m))
    else:
        _emit(_ladder_payload(report), args.format)
    return _ladder_exit(report)


def _cmd_grad_check(args) -> int:
    spec = _load_spec(args.spec)
    quad = _quad_from(args)
    report = minimize_ladder(spec, args.k_max, _opts_from(args), quad)
    probe = subdifferential_probe(spec, args.p, report, quad)
    _emit(
        {
            "p": probe.p,
            "beta_value": probe.beta_value,
            "analytic": probe.analytic,
            "lower": probe.lower,
            "upper": probe.upper,
            "eps_k": probe.eps_k,
            "k": probe.k,
            "y": probe.y,
            "curvature_bound": probe.curvature_bound,
            "slack": probe.slack,
            "contained": probe.contained,
            "analytic_alternates": list(probe.analytic_alternates),
        },
        args.format,
    )
    return _ladder_exit(report)


def _cmd_moments(args) -> int:
    spec = _load_spec(args.spec)
    report = minimize_ladder(spec, args.k_max, _opts_from(args), _quad_from(args))
    rows = []
    for p in args.p:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            value = overlap_moment_limit(spec, report, p)
        rows.append({"p": p, "value": value, "guaranteed": spec.beta(p) != 0.0})
    _emit({"k_max": report.k_max, "moments": rows}, args.format)
    return _ladder_exit(report)


def _cmd_classify(args) -> int:
    spec = _load_spec(args.spec)
    diag = classify(spec, args.k_max, args.tol, _quad_from(args), _opts_from(args))
    payload = {
        "best_dirac_q": diag.best_dirac_q,
        "best_dirac_value": diag.best_dirac_value,
        "ladder_value": diag.ladder_value,
        "rs_margin": diag.rs_margin,
        "is_rs": diag.is_rs,
        "band": diag.band,
        "symmetric": diag.symmetric,
        "delta0_margin": diag.delta0_margin,
        "l1_spread": diag.l1_spread,
        "variance_proxy": diag.variance_proxy,
        "moments": {str(p): v for p, v in sorted(diag.moments.items())},
        "moment_gap": {f"{a}-{b}": v for (a, b), v in sorted(diag.moment_gap.items())},
    }
    _emit(payload, args.format)
    return _ladder_exit(diag.ladder)


def _parse_sweep(text: str) -> tuple[int, np.ndarray]:
    try:
        lhs, rest = text.split("=", 1)
        fields = rest.split(":")
        if lhs == "p":
            p = int(fields[0])
            start, stop, step = (float(v) for v in fields[1:])
        else:
            p = int(lhs)
            start, stop, step = (float(v) for v in fields)
    except Exception as exc:
        raise ValueError(f"sweep must look like p=2:0.1:1.5:0.05, got {text!r}") from exc
    if step <= 0 or stop <= start:
        raise ValueError(f"sweep range must be increasing with positive step, got {text!r}")
    count = int(round((stop - start) / step)) + 1
    betas = start + step * np.arange(count)
    return p, betas[betas <= stop + 1e-12]


def _cmd_phase_scan(args) -> int:
    spec = _load_spec(args.spec)
    p, betas = _parse_sweep(args.sweep)
    result = boundary_scan(
        spec,
        p,
        betas,
        tol=args.tol,
        quad=_quad_from(args),
        opts=_opts_from(args),
        k_max=args.k_max,
        jobs=args.jobs,
    )
    orders = sorted(set(spec.orders) | {p})
    header = "beta,rs_margin,is_rs,best_dirac_q,l1_spread,variance_proxy," + ",".join(
        f"moment_{q}" for q in orders
    )
    lines = [header]
    for row in result.rows:
        cells = [
            _csv_float(row.beta),
            _csv_float(row.rs_margin),
            str(row.is_rs).lower(),
            _csv_float(row.best_dirac_q),
            _csv_float(row.l1_spread),
            _csv_float(row.variance_proxy),
        ] + [_csv_float(row.moments.get(q, 0.0)) for q in orders]
        lines.append(",".join(cells))
    csv_text = "\n".join(lines) + "\n"
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    _emit(
        {
            "p": result.p,
            "beta_c": result.beta_c,
            "beta_c_fixed_point": result.beta_c_fixed_point,
            "note": result.note,
            "csv": args.csv or "-",
        },
        args.format,
    )
    return 0


def _cmd_sk_exact(args) -> int:
    spec = _load_spec(args.spec)
    avg = disorder_average(spec, args.n, args.moments, args.samples, args.seed, jobs=args.jobs)
    payload = {
        "n": avg.n,
        "samples": avg.samples,
        "seed": args.seed,
        "f_n": {"mean": avg.f_n.mean, "stderr": avg.f_n.stderr},
        "overlap_moments": {
            str(p): {"mean": v.mean, "stderr": v.stderr}
            for p, v in sorted(avg.overlap_moments.items())
        },
        "overlap_mean": {"mean": avg.overlap_mean.mean, "stderr": avg.overlap_mean.stderr},
        "overlap_mean_variance": {
            "mean": avg.overlap_mean_variance.mean,
            "stderr": avg.overlap_mean_variance.stderr,
        },
    }
    _emit(payload, args.format)
    return 0


def _cmd_sk_compare(args) -> int:
    spec = _load_spec(args.spec)
    odd = [p for p in spec.orders if p > 1 and p % 2 == 1 and spec.beta(p) != 0.0]
    if odd:
        print(
            f"warning: odd interaction orders {odd} are outside the regime where the "
            "finite-size comparison is meaningful",
            file=sys.stderr,
        )
    moments = args.moments if args.moments else [p for p in spec.orders if spec.beta(p) != 0.0]
    quad = _quad_from(args)
    avg = disorder_average(spec, args.n, moments, args.samples, args.seed, jobs=args.jobs)
    report = minimize_ladder(spec, args.k_max, _opts_from(args), quad)
    mstar = report.levels[-1].measure
    prediction = evaluate(spec, mstar, quad, with_entropy=True).value
    payload = {
        "n": avg.n,
        "samples": avg.samples,
        "k_max": report.k_max,
        "free_energy": {
            "finite_n": avg.f_n.mean,
            "stderr": avg.f_n.stderr,
            "prediction": prediction,
            "diff": avg.f_n.mean - prediction,
        },
        "overlap_moments": {
            str(p): {
                "finite_n": avg.overlap_moments[p].mean,
                "stderr": avg.overlap_moments[p].stderr,
                "prediction": moment(mstar, p),
                "diff": avg.overlap_moments[p].mean - moment(mstar, p),
            }
            for p in sorted(avg.overlap_moments)
        },
    }
    _emit(payload, args.format)
    return _ladder_exit(report)


# ---------------------------------------------------------------------------
# parser


def _add_common(sub, *, seed=True, kmax=None, quad=True, fmt=True, jobs=False, restarts=False):
    if seed:
        sub.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    if kmax is not None:
        sub.add_argument("--k-max", type=int, default=kmax, help=f"ladder depth (default {kmax})")
    if restarts:
        sub.add_argument("--restarts", type=int, default=None, help="optimizer restarts (default 8)")
        sub.add_argument("--max-iters", type=int, default=None, help="search iterations per restart")
    if quad:
        sub.add_argument("--quad-nodes", type=int, default=None, help="Gauss-Hermite nodes per layer")
        sub.add_argument("--grid-points", type=int, default=None, help="grid points (odd)")
    if jobs:
        default_jobs = int(os.environ.get("PARISI_JOBS", "1"))
        sub.add_argument("--jobs", type=int, default=default_jobs, help="worker processes")
    if fmt:
        sub.add_argument("--format", choices=("human", "json"), default="human")


def _build_parser() -> _Parser:
    parser = _Parser(prog="parisi", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("eval", help="evaluate the functional at a measure")
    s.add_argument("--spec", required=True)
    s.add_argument("--measure", required=True)
    s.add_argument("--with-entropy", action="store_true", help="add log 2 for finite-size comparisons")
    _add_common(s, seed=False)
    s.set_defaults(func=_cmd_eval)

    s = subs.add_parser("minimize", help="minimize over k-atom measures, k = 1..k_max")
    s.add_argument("--spec", required=True)
    s.add_argument("--csv", action="store_true", help="emit per-level CSV rows")
    _add_common(s, kmax=4, restarts=True)
    s.set_defaults(func=_cmd_minimize)

    s = subs.add_parser("grad-check", help="derivative sandwich probe in one beta_p")
    s.add_argument("--spec", required=True)
    s.add_argument("--p", type=int, required=True)
    _add_common(s, kmax=4, restarts=True)
    s.set_defaults(func=_cmd_grad_check)

    s = subs.add_parser("moments", help="predicted limiting overlap moments")
    s.add_argument("--spec", required=True)
    s.add_argument("--p", type=int, nargs="+", required=True)
    _add_common(s, kmax=3, restarts=True)
    s.set_defaults(func=_cmd_moments)

    s = subs.add_parser("classify", help="replica-symmetry diagnostics at one model")
    s.add_argument("--spec", required=True)
    s.add_argument("--tol", type=float, default=1e-7)
    _add_common(s, kmax=3, restarts=True)
    s.set_defaults(func=_cmd_classify)

    s = subs.add_parser("phase-scan", help="sweep one beta_p and locate the RS flip")
    s.add_argument("--spec", required=True)
    s.add_argument("--sweep", required=True, help="p=START:STOP:STEP, e.g. p=2:0.1:1.5:0.05")
    s.add_argument("--csv", default=None, help="write the scan table to this file")
    s.add_argument("--tol", type=float, default=1e-7)
    _add_common(s, kmax=2, restarts=True, jobs=True)
    s.set_defaults(func=_cmd_phase_scan)

    s = subs.add_parser("sk-exact", help="exact finite-size disorder averages")
    s.add_argument("--spec", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--samples", type=int, default=200)
    s.add_argument("--moments", type=int, nargs="+", default=[2])
    _add_common(s, quad=False, jobs=True)
    s.set_defaults(func=_cmd_sk_exact)

    s = subs.add_parser("sk-compare", help="finite-size results against the minimizer prediction")
    s.add_argument("--spec", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--samples", type=int, default=200)
    s.add_argument("--moments", type=int, nargs="+", default=None)
    _add_common(s, kmax=3, restarts=True, jobs=True)
    s.set_defaults(func=_cmd_sk_compare)

    return parser


def dispatch(argv: list[str]) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _ArgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
