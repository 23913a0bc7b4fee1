"""Serialization of fit results and study reports (JSON and CSV) and
the TOML study-configuration schema.

Report files are byte-reproducible for a fixed seed and thread count:
floats serialize via repr, keys are ordered, and wall-clock runtime is
kept out of the files (it lives only on the in-memory report).
"""

from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .ridge import SlopeEstimate, DEFAULT_RHO_MIN, DEFAULT_RHO_MAX, DEFAULT_RHO_POINTS
from .select import FitResult, ImpactTerm
from .simulate import (
    DEFAULT_SIGMA_EPS,
    StudyOptions,
    StudyReport,
    make_dgp,
    run_study,
)

CSV_COLUMNS = (
    "estimator",
    "dgp",
    "n",
    "p",
    "detect_pct",
    "bias2_beta",
    "var_beta",
    "bias2_pois",
    "var_pois",
)


def _num(x):
    """None for NaN so the JSON stays standards-compliant."""
    if x is None:
        return None
    x = float(x)
    return None if math.isnan(x) else x


def fit_result_to_dict(fit: FitResult) -> dict:
    return {
        "variant": fit.variant,
        "p": int(fit.estimate.beta_grid.shape[0]),
        "beta_grid": [float(v) for v in fit.estimate.beta_grid],
        "pois": [
            {
                "location": t.location,
                "coefficient": t.coefficient,
                "std_err": _num(t.std_err),
                "index": t.index,
            }
            for t in fit.selected_pois
        ],
        "rho": _num(fit.estimate.rho),
        "delta": _num(fit.delta),
        "edf": _num(fit.estimate.edf),
        "bic": _num(fit.bic_delta),
        "rss": _num(fit.estimate.rss),
        "gcv": _num(fit.estimate.gcv_value),
        "smoother_trace": _num(fit.estimate.smoother_trace),
    }


def fit_result_from_dict(data: dict) -> FitResult:
    def back(x):
        return float("nan") if x is None else float(x)

    pois = tuple(
        ImpactTerm(
            index=int(d["index"]),
            location=float(d["location"]),
            coefficient=float(d["coefficient"]),
            std_err=None if d.get("std_err") is None else float(d["std_err"]),
        )
        for d in data["pois"]
    )
    estimate = SlopeEstimate(
        beta_grid=np.asarray(data["beta_grid"], dtype=np.float64),
        beta_poi=np.asarray([t.coefficient for t in pois], dtype=np.float64),
        rho=back(data["rho"]),
        gcv_value=back(data["gcv"]),
        edf=back(data["edf"]),
        rss=back(data["rss"]),
        smoother_trace=back(data["smoother_trace"]),
    )
    return FitResult(
        estimate=estimate,
        selected_pois=pois,
        delta=back(data["delta"]),
        bic_delta=back(data["bic"]),
        variant=data["variant"],
    )


def study_report_to_dict(report: StudyReport, include_runtime: bool = False) -> dict:
    estimators = []
    for er in report.estimators:
        entry = {
            "name": er.name,
            "replications_ok": er.replications_ok,
            "failures": er.failures,
            "bias2_beta": _num(er.bias2_beta),
            "var_beta": _num(er.var_beta),
            "bias2_pois": _num(er.bias2_pois),
            "var_pois": _num(er.var_pois),
            "detect_pct": _num(er.detect_pct),
            "detect_each": [_num(v) for v in er.detect_each],
        }
        if include_runtime:
            entry["runtime_seconds"] = er.runtime_seconds
        estimators.append(entry)
    return {
        "dgp": report.dgp,
        "n": report.n,
        "p": report.p,
        "sigma_eps": report.sigma_eps,
        "replications": report.replications,
        "seed": report.seed,
        "estimators": estimators,
    }


def dump_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report_json(report: StudyReport, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_json(study_report_to_dict(report)))


def report_csv_rows(report: StudyReport) -> list[list[str]]:
    def cell(x):
        return "" if x is None else repr(float(x))

    rows = [list(CSV_COLUMNS)]
    for er in report.estimators:
        rows.append(
            [
                er.name,
                report.dgp,
                str(report.n),
                str(report.p),
                cell(er.detect_pct),
                cell(er.bias2_beta),
                cell(er.var_beta),
                cell(er.bias2_pois),
                cell(er.var_pois),
            ]
        )
    return rows


def write_report_csv(report: StudyReport, path) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(report_csv_rows(report))


@dataclass(frozen=True)
class StudyConfig:
    dgp: str
    n: int
    p: int
    estimators: tuple[str, ...]
    replications: int
    seed: int
    sigma_eps: float = DEFAULT_SIGMA_EPS
    standardize_preselect: bool = True
    threads: int = 1
    delta_grid: tuple[float, ...] | None = None
    rho_min: float = DEFAULT_RHO_MIN
    rho_max: float = DEFAULT_RHO_MAX
    rho_points: int = DEFAULT_RHO_POINTS
    k_max: int = 150
    max_candidates: int | None = None


def load_study_config(path) -> StudyConfig:
    with open(path, "rb") as fh:
        data = _toml.load(fh)
    if "study" not in data:
        raise ValueError(f"{path}: missing [study] table")
    study = dict(data["study"])
    rho = study.pop("rho", {})
    kps = study.pop("kps", {})
    known = {
        "dgp",
        "n",
        "p",
        "sigma_eps",
        "estimators",
        "replications",
        "seed",
        "standardize_preselect",
        "threads",
        "delta_grid",
        "max_candidates",
    }
    unknown = set(study) - known
    if unknown:
        raise ValueError(f"{path}: unknown [study] keys: {sorted(unknown)}")
    for key in ("dgp", "n", "p", "estimators", "replications", "seed"):
        if key not in study:
            raise ValueError(f"{path}: [study] is missing required key {key!r}")
    return StudyConfig(
        dgp=str(study["dgp"]),
        n=int(study["n"]),
        p=int(study["p"]),
        sigma_eps=float(study.get("sigma_eps", DEFAULT_SIGMA_EPS)),
        estimators=tuple(study["estimators"]),
        replications=int(study["replications"]),
        seed=int(study["seed"]),
        standardize_preselect=bool(study.get("standardize_preselect", True)),
        threads=int(study.get("threads", 1)),
        delta_grid=tuple(study["delta_grid"]) if "delta_grid" in study else None,
        rho_min=float(rho.get("min", DEFAULT_RHO_MIN)),
        rho_max=float(rho.get("max", DEFAULT_RHO_MAX)),
        rho_points=int(rho.get("points", DEFAULT_RHO_POINTS)),
        k_max=int(kps.get("k_max", 150)),
        max_candidates=(
            int(study["max_candidates"]) if "max_candidates" in study else None
        ),
    )


def run_study_config(cfg: StudyConfig, threads: int | None = None, replications: int | None = None,
                     seed: int | None = None, keep_curves: bool = False) -> StudyReport:
    spec = make_dgp(
        cfg.dgp,
        n=cfg.n,
        p=cfg.p,
        sigma_eps=cfg.sigma_eps,
        standardize_preselect=cfg.standardize_preselect,
    )
    options = StudyOptions(
        delta_grid=cfg.delta_grid,
        rho_grid=tuple(np.geomspace(cfg.rho_min, cfg.rho_max, cfg.rho_points)),
        k_max=cfg.k_max,
        max_candidates=cfg.max_candidates,
    )
    return run_study(
        spec,
        cfg.estimators,
        replications if replications is not None else cfg.replications,
        seed if seed is not None else cfg.seed,
        options=options,
        threads=threads if threads is not None else cfg.threads,
        keep_curves=keep_curves,
    )
