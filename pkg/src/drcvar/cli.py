"""Command-line front door: fit, eval, sweep, check-dual, gen-data.

Every run prints one machine-readable JSON document to stdout (and writes it
to ``--out`` when given); the documents conform to the schemas shipped under
``drcvar/schemas``.  Exit codes: 0 success, 1 usage error, 2 data error,
3 solver failure.  All randomness flows from explicit ``--seed`` flags; the
only wall-clock-dependent outputs are the solve-time fields.

The default solver tolerance profile is 'strict'; set DRCVAR_TOL_PROFILE=fast
to trade accuracy for speed across all subcommands.
"""
from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import math
import os
import sys

import numpy as np

from .data import (
    DataError,
    Dataset,
    MinMaxScaler,
    SpikyConfig,
    evaluate_out_of_sample,
    load_dataset,
    radius_sweep,
    split_and_normalize,
    synth_spiky,
    write_dataset,
)
from .estimate import (
    CROSS_CHECK_TOL,
    FitError,
    default_solver_settings,
    fit_dr_cvar,
    fit_dr_mse,
    fit_nominal_cvar,
    fit_nominal_mse,
)
from .model import AffineEstimator, EmpiricalDistribution, RiskSpec

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SOLVER = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; we reserve 2 for data errors
    def error(self, message):
        raise _UsageError(message)


def _settings():
    profile = os.environ.get("DRCVAR_TOL_PROFILE", "strict")
    return default_solver_settings(profile)


def _emit(doc: dict, out_path=None) -> None:
    text = json.dumps(doc, indent=2, allow_nan=False)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _num(value):
    """JSON-safe number: non-finite floats become null."""
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def _parse_date_flag(text: str) -> datetime.date:
    try:
        return datetime.date.fromisoformat(text)
    except ValueError:
        raise _UsageError(f"bad date '{text}', expected YYYY-MM-DD") from None


def _prepare(args):
    """Load a dataset and produce (train, test_or_none, scaler)."""
    ds = load_dataset(args.data)
    if getattr(args, "split_date", None):
        split = _parse_date_flag(args.split_date)
        return split_and_normalize(ds, split)
    scaler = MinMaxScaler.fit(ds.rows())
    dist = EmpiricalDistribution(atoms=scaler.transform(ds.rows()),
                                 n=24, m=24)
    return dist, None, scaler


def _fit_doc(fit, alpha, radius, scaler, data_info) -> dict:
    est = fit.estimator
    return {
        "kind": "fit_result",
        "method": fit.method,
        "alpha": alpha,
        "radius": radius,
        "value": _num(fit.optimal_value),
        "gamma": _num(fit.gamma),
        "tau": _num(fit.tau),
        "cross_check_gap": _num(fit.cross_check_gap),
        "boundary_gamma": bool(fit.boundary_gamma),
        "solve_time_s": float(fit.solve_time),
        "iterations": int(fit.iterations),
        "estimator": {
            "n": est.n, "m": est.m,
            "A": est.A.tolist(), "b": est.b.tolist(),
        },
        "normalization": {
            "minimum": scaler.minimum.tolist(),
            "maximum": scaler.maximum.tolist(),
        } if scaler is not None else None,
        "data": data_info,
    }


def _cmd_fit(args) -> int:
    train, _, scaler = _prepare(args)
    settings = _settings()
    spec = RiskSpec(alpha=args.alpha, radius=args.radius)
    if args.method == "dr_cvar":
        fit = fit_dr_cvar(train, spec, settings=settings)
    elif args.method == "dr_mse":
        fit = fit_dr_mse(train, args.radius, settings=settings)
    elif args.method == "nominal_cvar":
        fit = fit_nominal_cvar(train, args.alpha, settings=settings)
    else:
        fit = fit_nominal_mse(train)
    info = {"path": args.data, "train_days": train.size}
    if args.split_date:
        info["split_date"] = args.split_date
    _emit(_fit_doc(fit, args.alpha, args.radius, scaler, info), args.out)
    return EXIT_OK


def _cmd_eval(args) -> int:
    with open(args.estimator) as fh:
        fit_doc = json.load(fh)
    if fit_doc.get("kind") != "fit_result":
        raise DataError(f"{args.estimator}: not a fit_result document")
    est = AffineEstimator(A=np.array(fit_doc["estimator"]["A"]),
                          b=np.array(fit_doc["estimator"]["b"]))
    norm = fit_doc.get("normalization")
    if norm is None:
        raise DataError(f"{args.estimator}: missing normalization parameters")
    scaler = MinMaxScaler(minimum=np.array(norm["minimum"]),
                          maximum=np.array(norm["maximum"]))

    ds = load_dataset(args.data)
    mask = np.ones(ds.days, dtype=bool)
    if args.split_date:
        split = _parse_date_flag(args.split_date)
        mask = np.array(ds.dates) >= split
        if not mask.any():
            raise DataError(f"no days on or after {args.split_date}")
    rows = scaler.transform(ds.rows()[mask])
    test = EmpiricalDistribution(atoms=rows, n=24, m=24)
    metrics = evaluate_out_of_sample(est, test, args.alpha, scaler)
    doc = {
        "kind": "eval_metrics",
        "alpha": metrics.alpha,
        "n_test": metrics.n_test,
        "oos_cvar": _num(metrics.cvar),
        "oos_mse": _num(metrics.mse),
        "oos_cvar_original": _num(metrics.cvar_original),
        "oos_mse_original": _num(metrics.mse_original),
        "data": {"path": args.data},
    }
    _emit(doc, args.out)
    return EXIT_OK


def _radii_from_args(args):
    if args.radii:
        radii = sorted(float(tok) for tok in args.radii.split(","))
        if any(r <= 0 for r in radii):
            raise _UsageError("--radii values must be positive")
        return radii
    lo, hi = args.radii_log_from, args.radii_log_to
    if hi < lo:
        raise _UsageError("--radii-log-to must be >= --radii-log-from")
    count = int(round((hi - lo) * args.per_decade)) + 1
    return list(np.logspace(lo, hi, count))


def _cmd_sweep(args) -> int:
    train, test, scaler = _prepare(args)
    if test is None:
        raise _UsageError("sweep requires --split-date")
    radii = _radii_from_args(args)
    report = radius_sweep(train, test, args.alpha, radii,
                          settings=_settings(), scaler=scaler,
                          threads=args.threads)
    doc = {"kind": "sweep_report", **report.to_dict()}
    for row in doc["rows"]:
        for key in ("in_sample", "oos_cvar", "oos_mse", "gamma",
                    "oos_cvar_original", "oos_mse_original"):
            row[key] = _num(row[key])
    doc["data"] = {"path": args.data, "split_date": args.split_date,
                   "train_days": train.size, "test_days": test.size}
    files = {}
    if args.out:
        base = args.out[:-5] if args.out.endswith(".json") else args.out
        csv_path = base + ".csv"
        plot_path = base + "_plot.csv"
        report.to_csv(csv_path)
        series = report.plot_data()
        with open(plot_path, "w") as fh:
            fh.write("radius," + ",".join(f"oos_cvar_{m}" for m in series) + "\n")
            radii_list = series[next(iter(series))]["radius"]
            for i, r in enumerate(radii_list):
                cells = [f"{r:.10g}"]
                for m in series:
                    val = series[m]["oos_cvar"][i]
                    cells.append("" if not math.isfinite(val) else f"{val:.10g}")
                fh.write(",".join(cells) + "\n")
        files = {"csv": csv_path, "plot_csv": plot_path}
    doc["files"] = files
    _emit(doc, args.out if args.out and args.out.endswith(".json")
          else (args.out + ".json" if args.out else None))
    return EXIT_OK


def _cmd_check_dual(args) -> int:
    train, _, scaler = _prepare(args)
    spec = RiskSpec(alpha=args.alpha, radius=args.radius)
    fit = fit_dr_cvar(train, spec, settings=_settings())
    from .dual import worst_case_cvar
    from .model import affine_to_quadratic

    cert = worst_case_cvar(affine_to_quadratic(fit.estimator), train, spec)
    tol = args.tol * (1.0 + abs(fit.optimal_value))
    gap = abs(fit.optimal_value - cert.value)
    ok = gap <= tol
    doc = {
        "kind": "check_dual",
        "alpha": args.alpha,
        "radius": args.radius,
        "sdp_value": _num(fit.optimal_value),
        "dual_value": _num(cert.value),
        "gap": _num(gap),
        "tol": tol,
        "ok": ok,
        "gamma_sdp": _num(fit.gamma),
        "gamma_dual": _num(cert.gamma_star),
        "boundary_gamma": bool(fit.boundary_gamma),
        "data": {"path": args.data},
    }
    _emit(doc, args.out)
    return EXIT_OK if ok else EXIT_SOLVER


def _cmd_gen_data(args) -> int:
    config = SpikyConfig(
        days=args.days, spike_prob=args.spike_prob,
        spike_scale=args.spike_scale, noise=args.noise,
        spike_ramp=args.spike_ramp,
        start_date=_parse_date_flag(args.start_date),
    )
    ds = synth_spiky(config, seed=args.seed)
    write_dataset(ds, args.out)
    with open(args.out, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    doc = {
        "kind": "gen_data",
        "path": args.out,
        "days": config.days,
        "seed": args.seed,
        "spike_prob": config.spike_prob,
        "spike_scale": config.spike_scale,
        "spike_ramp": config.spike_ramp,
        "noise": config.noise,
        "start_date": config.start_date.isoformat(),
        "sha256": digest,
    }
    _emit(doc)
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="drcvar",
        description="Distributionally robust CVaR-optimal affine estimation.",
        epilog="Environment: DRCVAR_TOL_PROFILE={strict,fast} selects solver "
               "tolerances; DRCVAR_PURE_PYTHON=1 disables the compiled kernel.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one estimator on a dataset")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--alpha", type=float, default=0.01)
    p_fit.add_argument("--radius", type=float, default=0.01)
    p_fit.add_argument("--method", default="dr_cvar",
                       choices=["dr_cvar", "dr_mse", "nominal_cvar",
                                "nominal_mse"])
    p_fit.add_argument("--split-date", default=None,
                       help="train on days before this date (default: all)")
    p_fit.add_argument("--out", default=None)
    p_fit.set_defaults(func=_cmd_fit)

    p_eval = sub.add_parser("eval", help="evaluate a saved fit on a dataset")
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--estimator", required=True,
                        help="fit_result JSON produced by the fit command")
    p_eval.add_argument("--alpha", type=float, default=0.01)
    p_eval.add_argument("--split-date", default=None,
                        help="evaluate on days from this date (default: all)")
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=_cmd_eval)

    p_sweep = sub.add_parser("sweep", help="radius sweep of both robust fits")
    p_sweep.add_argument("--data", required=True)
    p_sweep.add_argument("--alpha", type=float, default=0.01)
    p_sweep.add_argument("--split-date", required=True)
    p_sweep.add_argument("--radii-log-from", type=float, default=-5.0)
    p_sweep.add_argument("--radii-log-to", type=float, default=5.0)
    p_sweep.add_argument("--per-decade", type=float, default=1.0)
    p_sweep.add_argument("--radii", default=None,
                         help="explicit comma-separated radii (overrides the "
                              "log grid)")
    p_sweep.add_argument("--threads", type=int, default=1)
    p_sweep.add_argument("--out", default=None,
                         help="output prefix or .json path; also writes "
                              "<base>.csv and <base>_plot.csv")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_chk = sub.add_parser("check-dual",
                           help="cross-validate the conic optimum against "
                                "the dual evaluation")
    p_chk.add_argument("--data", required=True)
    p_chk.add_argument("--alpha", type=float, default=0.01)
    p_chk.add_argument("--radius", type=float, default=0.01)
    p_chk.add_argument("--split-date", default=None)
    p_chk.add_argument("--tol", type=float, default=CROSS_CHECK_TOL)
    p_chk.add_argument("--out", default=None)
    p_chk.set_defaults(func=_cmd_check_dual)

    p_gen = sub.add_parser("gen-data", help="write a synthetic spiky dataset")
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--days", type=int, default=120)
    p_gen.add_argument("--spike-prob", type=float, default=0.08)
    p_gen.add_argument("--spike-scale", type=float, default=60.0)
    p_gen.add_argument("--spike-ramp", type=float, default=0.0)
    p_gen.add_argument("--noise", type=float, default=5.0)
    p_gen.add_argument("--start-date", default="2013-05-01")
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=_cmd_gen_data)
    return parser


def dispatch(argv) -> int:
    """Run one CLI invocation; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        _emit({"kind": "error", "error": str(exc), "exit_code": EXIT_USAGE})
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        _emit({"kind": "error", "error": str(exc), "exit_code": EXIT_USAGE})
        return EXIT_USAGE
    except (DataError, FileNotFoundError, json.JSONDecodeError) as exc:
        _emit({"kind": "error", "error": str(exc), "exit_code": EXIT_DATA})
        return EXIT_DATA
    except FitError as exc:
        _emit({"kind": "error", "error": str(exc), "exit_code": EXIT_SOLVER})
        return EXIT_SOLVER


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
