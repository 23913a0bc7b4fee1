"""Command-line surface: `fit` on CSV data, `simulate` for Monte-Carlo
studies, and `kappa` for the identifiability diagnostic.

Exit codes: 0 success, 2 input/configuration error, 3 estimation
failure.  All runs are reproducible from the argument vector, the input
files, and the seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from .dataset import load_csv, _read_numeric_rows
from .errors import (
    DeltaNotHalvable,
    DeltaOutOfRange,
    ParseError,
    PoiRegError,
    ShapeMismatch,
    TauOffGrid,
)
from .fpca import KpsConfig, kps_fit
from .impact_search import estimate_kappa, make_delta_spec, second_moment_sums
from .penalty import build_penalty, dump_penalty
from .reports import (
    dump_json,
    fit_result_to_dict,
    load_study_config,
    run_study_config,
    write_report_csv,
    write_report_json,
)
from .select import SelectorConfig, run_variant

_INPUT_ERRORS = (ParseError, ShapeMismatch, DeltaOutOfRange, DeltaNotHalvable, TauOffGrid)
ESTIMATOR_CHOICES = ("pes", "pes-es", "pes-2es", "cks", "kps")
_VARIANTS = {"pes": "PES", "pes-es": "PES-ES", "pes-2es": "PES-2ES", "cks": "CKS"}


def _parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poireg")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit an estimator on CSV data")
    fit.add_argument("--x", required=True, help="CSV of trajectories, one row per curve")
    fit.add_argument("--y", required=True, help="CSV of responses, one value per line")
    fit.add_argument("--header", action="store_true", help="skip one header row")
    fit.add_argument("--estimator", choices=ESTIMATOR_CHOICES, default="pes-es")
    fit.add_argument("--delta-grid", type=_parse_float_list, default=None)
    fit.add_argument("--rho-min", type=float, default=1e-6)
    fit.add_argument("--rho-max", type=float, default=200.0)
    fit.add_argument("--rho-points", type=int, default=30)
    fit.add_argument("--k-max", type=int, default=150)
    fit.add_argument("--max-candidates", type=int, default=None)
    fit.add_argument("--no-standardize-preselect", dest="standardize_preselect",
                     action="store_false")
    fit.add_argument("--dump-penalty", metavar="DIR", default=None)
    fit.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    fit.add_argument("--out", default=None, help="write JSON here instead of stdout")
    fit.set_defaults(func=cmd_fit)

    sim = sub.add_parser("simulate", help="run a Monte-Carlo study from a TOML config")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", default=".", help="directory for report.json / report.csv")
    sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    sim.add_argument("--replications", type=int, default=None)
    sim.add_argument("--threads", type=int, default=None)
    sim.add_argument("--format", choices=("json", "csv"), default="json",
                     help="which report to echo on stdout")
    sim.set_defaults(func=cmd_simulate)

    kap = sub.add_parser("kappa", help="covariance smoothness diagnostic")
    kap.add_argument("--x", required=True)
    kap.add_argument("--header", action="store_true")
    kap.add_argument("--delta", type=float, required=True)
    kap.add_argument("--out", default=None)
    kap.set_defaults(func=cmd_kappa)
    return parser


def _emit(text: str, out_path) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w") as fh:
            fh.write(text)


def cmd_fit(args) -> int:
    ds = load_csv(args.x, args.y, header=args.header)
    if args.dump_penalty:
        dump_penalty(build_penalty(ds.grid), args.dump_penalty)
    rho_grid = tuple(np.geomspace(args.rho_min, args.rho_max, args.rho_points))
    with threadpool_limits(limits=args.threads):
        if args.estimator == "kps":
            kps_kwargs = {}
            if args.max_candidates is not None:
                kps_kwargs["max_candidates"] = args.max_candidates
            cfg = KpsConfig(
                k_max=args.k_max,
                delta_grid=args.delta_grid,
                standardize_preselect=args.standardize_preselect,
                **kps_kwargs,
            )
            fit = kps_fit(ds, cfg, with_std_errors=True)
        else:
            cfg = SelectorConfig(
                variant=_VARIANTS[args.estimator],
                delta_grid=args.delta_grid,
                rho_grid=rho_grid,
                standardize_preselect=args.standardize_preselect,
                max_candidates=args.max_candidates,
            )
            fit = run_variant(ds, cfg, with_std_errors=True)
    _emit(dump_json(fit_result_to_dict(fit)), args.out)
    return 0


def cmd_simulate(args) -> int:
    cfg = load_study_config(args.config)
    report = run_study_config(
        cfg, threads=args.threads, replications=args.replications, seed=args.seed
    )
    os.makedirs(args.out, exist_ok=True)
    json_path = os.path.join(args.out, "report.json")
    csv_path = os.path.join(args.out, "report.csv")
    write_report_json(report, json_path)
    write_report_csv(report, csv_path)
    with open(json_path if args.format == "json" else csv_path) as fh:
        sys.stdout.write(fh.read())
    return 0


def cmd_kappa(args) -> int:
    rows = _read_numeric_rows(args.x, args.header)
    X = np.asarray(rows, dtype=np.float64)
    spec = make_delta_spec(args.delta, X.shape[1])
    full, half = second_moment_sums(X, spec)
    kappa = estimate_kappa(X, spec)
    payload = {
        "kappa": kappa,
        "mean_square_full": full,
        "mean_square_half": half,
        "delta": spec.delta,
        "k_delta": spec.k_delta,
        "identifiable": bool(kappa < 2.0),
    }
    _emit(dump_json(payload), args.out)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"poireg: input error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, PermissionError, ValueError) as exc:
        print(f"poireg: {exc}", file=sys.stderr)
        return 2
    except PoiRegError as exc:
        print(f"poireg: estimation failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
