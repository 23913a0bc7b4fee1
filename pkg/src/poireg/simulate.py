"""Monte-Carlo study lab: data-generating processes on Brownian-motion
trajectories, a replication engine, and bias/variance/detection
aggregation.

Replication r of a study draws its generator from SeedSequence
(seed, r), so results do not depend on execution order and serial and
parallel runs agree bit for bit.  BLAS threading is pinned to one
thread inside each replication for the same reason; parallelism comes
from the replication pool.
"""

from __future__ import annotations

import math
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from threadpoolctl import threadpool_limits

from .dataset import FunctionalDataset, Grid
from .errors import TauOffGrid
from .fpca import KpsConfig, kps_fit
from .select import FitResult, SelectorConfig, run_variant

DEFAULT_SIGMA_EPS = 0.125
DETECTION_TOL = 0.01
ESTIMATOR_NAMES = ("pes", "pes-es", "pes-2es", "cks", "kps")
_VARIANT_OF = {"pes": "PES", "pes-es": "PES-ES", "pes-2es": "PES-2ES", "cks": "CKS"}


def _beta_easy(t: np.ndarray) -> np.ndarray:
    return -((t - 1.0) ** 2) + 2.0


def _beta_complicated(t: np.ndarray) -> np.ndarray:
    return -5.0 * (t - 0.5) ** 3 - t + 1.0


def _beta_zero(t: np.ndarray) -> np.ndarray:
    return np.zeros_like(t)


_NAMED_DGPS = {
    "easy": (_beta_easy, (0.3, 0.6), (-3.0, 3.0)),
    "complicated": (_beta_complicated, (0.3, 0.4, 0.6), (-3.0, 3.0, 3.0)),
    "onlypoi": (_beta_zero, (0.3, 0.6), (-3.0, 3.0)),
    "nopoi": (_beta_easy, (), ()),
}


@dataclass(frozen=True)
class DgpSpec:
    """A data-generating process: smooth slope, impact points, noise."""

    name: str
    beta_fn: Callable[[np.ndarray], np.ndarray]
    taus: tuple[float, ...]
    betas: tuple[float, ...]
    sigma_eps: float
    n: int
    p: int
    standardize_preselect: bool = True

    def __post_init__(self):
        if len(self.taus) != len(self.betas):
            raise ValueError("taus and betas must have the same length")
        if len(set(self.taus)) != len(self.taus):
            raise ValueError("taus must be distinct")
        if any(not 0.0 < tau < 1.0 for tau in self.taus):
            raise ValueError("taus must lie strictly inside (0, 1)")
        if self.sigma_eps < 0:
            raise ValueError("sigma_eps must be nonnegative")

    def beta_on_grid(self, grid: Grid) -> np.ndarray:
        return np.asarray(self.beta_fn(grid.points), dtype=np.float64)


def make_dgp(
    name: str,
    n: int,
    p: int,
    sigma_eps: float = DEFAULT_SIGMA_EPS,
    standardize_preselect: bool = True,
) -> DgpSpec:
    key = name.lower()
    if key not in _NAMED_DGPS:
        raise ValueError(
            f"unknown dgp {name!r}; valid options: {', '.join(sorted(_NAMED_DGPS))}"
        )
    beta_fn, taus, betas = _NAMED_DGPS[key]
    return DgpSpec(
        name=key,
        beta_fn=beta_fn,
        taus=taus,
        betas=betas,
        sigma_eps=sigma_eps,
        n=n,
        p=p,
        standardize_preselect=standardize_preselect,
    )


def gen_brownian(n: int, p: int, rng) -> np.ndarray:
    """Standard Brownian motion paths on the uniform grid: cumulative
    sums of N(0, 1/(p-1)) increments, pinned to zero at t=0."""
    if p < 2:
        raise ValueError("need p >= 2")
    rng = np.random.default_rng(rng)
    increments = rng.normal(scale=math.sqrt(1.0 / (p - 1)), size=(n, p - 1))
    X = np.empty((n, p))
    X[:, 0] = 0.0
    np.cumsum(increments, axis=1, out=X[:, 1:])
    return X


def snap_taus_to_grid(taus, p: int, strict: bool = True) -> np.ndarray:
    """Nearest grid indices for the impact locations."""
    taus = np.asarray(taus, dtype=np.float64)
    idx = np.rint(taus * (p - 1)).astype(int)
    idx = np.clip(idx, 0, p - 1)
    if strict:
        off = np.abs(idx / (p - 1) - taus)
        half = 0.5 / (p - 1)
        if np.any(off > half * (1 + 1e-9)):
            bad = taus[off > half * (1 + 1e-9)]
            raise TauOffGrid(f"locations {bad} are more than half a grid step off the grid")
    return idx


def gen_response(X: np.ndarray, spec: DgpSpec, rng, strict_taus: bool = True) -> np.ndarray:
    """Responses p^-1 sum_j beta(t_j) X_ij + sum_s beta_s X_i(tau_s) + noise."""
    n, p = X.shape
    t = np.linspace(0.0, 1.0, p)
    signal = X @ spec.beta_fn(t) / p
    if spec.taus:
        idx = snap_taus_to_grid(spec.taus, p, strict=strict_taus)
        signal = signal + X[:, idx] @ np.asarray(spec.betas)
    rng = np.random.default_rng(rng)
    noise = rng.normal(scale=spec.sigma_eps, size=n) if spec.sigma_eps > 0 else 0.0
    return signal + noise


@dataclass(frozen=True)
class DetectionResult:
    found: tuple[bool, ...]
    matched: tuple[int | None, ...]
    all_found: bool


def detection_check(found_locations, true_locations, tol: float = DETECTION_TOL) -> DetectionResult:
    """Greedy matching: each true location takes the nearest unmatched
    estimate strictly within tol."""
    found_locations = list(found_locations)
    used = [False] * len(found_locations)
    flags: list[bool] = []
    matched: list[int | None] = []
    for tau in true_locations:
        best_j, best_d = None, tol
        for j, loc in enumerate(found_locations):
            if used[j]:
                continue
            d = abs(loc - tau)
            if d < best_d:
                best_j, best_d = j, d
        if best_j is None:
            flags.append(False)
            matched.append(None)
        else:
            used[best_j] = True
            flags.append(True)
            matched.append(best_j)
    return DetectionResult(
        found=tuple(flags),
        matched=tuple(matched),
        all_found=all(flags) if flags else True,
    )


@dataclass(frozen=True)
class StudyOptions:
    """Estimation options shared by every replication of a study."""

    delta_grid: tuple[float, ...] | None = None
    rho_grid: tuple[float, ...] | None = None
    k_max: int = 150
    max_candidates: int | None = None
    kps_fixed_delta: float | None = None


def _selector_config(name: str, spec: DgpSpec, opts: StudyOptions) -> SelectorConfig:
    return SelectorConfig(
        variant=_VARIANT_OF[name],
        delta_grid=opts.delta_grid,
        rho_grid=opts.rho_grid,
        standardize_preselect=spec.standardize_preselect,
        max_candidates=opts.max_candidates,
    )


def _kps_config(spec: DgpSpec, opts: StudyOptions) -> KpsConfig:
    kwargs = {}
    if opts.max_candidates is not None:
        kwargs["max_candidates"] = opts.max_candidates
    return KpsConfig(
        k_max=opts.k_max,
        delta_grid=opts.delta_grid,
        standardize_preselect=spec.standardize_preselect,
        fixed_delta=opts.kps_fixed_delta,
        **kwargs,
    )


def fit_estimator(name: str, ds: FunctionalDataset, spec: DgpSpec, opts: StudyOptions) -> FitResult:
    if name == "kps":
        return kps_fit(ds, _kps_config(spec, opts))
    if name in _VARIANT_OF:
        return run_variant(ds, _selector_config(name, spec, opts))
    raise ValueError(f"unknown estimator {name!r}; valid options: {', '.join(ESTIMATOR_NAMES)}")


def _replicate(spec: DgpSpec, estimators, opts: StudyOptions, seed: int, rep: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(rep,)))
    X = gen_brownian(spec.n, spec.p, rng)
    Y = gen_response(X, spec, rng)
    ds = FunctionalDataset(grid=Grid.uniform(spec.p), X=X, Y=Y)
    out: dict[str, tuple] = {}
    with threadpool_limits(limits=1):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for name in estimators:
                start = time.perf_counter()
                try:
                    fit = fit_estimator(name, ds, spec, opts)
                except Exception as exc:  # failures are recorded, not fatal
                    out[name] = ("error", f"{type(exc).__name__}: {exc}", time.perf_counter() - start)
                    continue
                out[name] = (
                    "ok",
                    np.asarray(fit.estimate.beta_grid),
                    np.asarray(fit.poi_locations, dtype=np.float64),
                    np.asarray(fit.poi_coefficients, dtype=np.float64),
                    time.perf_counter() - start,
                )
    return out


@dataclass(frozen=True)
class EstimatorReport:
    name: str
    replications_ok: int
    failures: int
    bias2_beta: float
    var_beta: float
    bias2_pois: float | None
    var_pois: float | None
    detect_pct: float | None
    detect_each: tuple[float, ...]
    runtime_seconds: float


@dataclass(frozen=True)
class StudyReport:
    dgp: str
    n: int
    p: int
    sigma_eps: float
    replications: int
    seed: int
    estimators: tuple[EstimatorReport, ...]
    curves: dict = field(default_factory=dict, repr=False, compare=False)

    def estimator(self, name: str) -> EstimatorReport:
        for rep in self.estimators:
            if rep.name == name:
                return rep
        raise KeyError(name)


def _aggregate(name, spec, reps, results, keep_curves):
    beta_true = spec.beta_fn(np.linspace(0.0, 1.0, spec.p))
    ok_curves = []
    detections = []
    per_tau_coefs: list[list[float]] = [[] for _ in spec.taus]
    per_tau_found: list[int] = [0 for _ in spec.taus]
    failures = 0
    runtime = 0.0
    for r in range(reps):
        rec = results[r][name]
        runtime += rec[-1]
        if rec[0] == "error":
            failures += 1
            continue
        _, beta_grid, locations, coefs, _ = rec
        ok_curves.append(beta_grid)
        if spec.taus:
            det = detection_check(locations, spec.taus)
            detections.append(det.all_found)
            for s, j in enumerate(det.matched):
                if j is not None:
                    per_tau_found[s] += 1
                    per_tau_coefs[s].append(float(coefs[j]))
    n_ok = len(ok_curves)
    if n_ok == 0:
        raise RuntimeError(f"estimator {name} failed in every replication")
    curves = np.asarray(ok_curves)
    mean_curve = curves.mean(axis=0)
    bias2 = float(np.mean((mean_curve - beta_true) ** 2))
    var = float(np.mean(np.mean((curves - mean_curve) ** 2, axis=1)))
    if spec.taus:
        biases = []
        variances = []
        for s, coefs_s in enumerate(per_tau_coefs):
            if not coefs_s:
                continue
            arr = np.asarray(coefs_s)
            biases.append((arr.mean() - spec.betas[s]) ** 2)
            variances.append(float(np.mean((arr - arr.mean()) ** 2)))
        bias2_pois = float(np.mean(biases)) if biases else None
        var_pois = float(np.mean(variances)) if variances else None
        detect_pct = 100.0 * float(np.mean(detections))
        detect_each = tuple(100.0 * per_tau_found[s] / n_ok for s in range(len(spec.taus)))
    else:
        bias2_pois = None
        var_pois = None
        detect_pct = None
        detect_each = ()
    report = EstimatorReport(
        name=name,
        replications_ok=n_ok,
        failures=failures,
        bias2_beta=bias2,
        var_beta=var,
        bias2_pois=bias2_pois,
        var_pois=var_pois,
        detect_pct=detect_pct,
        detect_each=detect_each,
        runtime_seconds=runtime,
    )
    return report, (curves if keep_curves else None)


def run_study(
    spec: DgpSpec,
    estimators,
    replications: int,
    seed: int,
    options: StudyOptions = StudyOptions(),
    threads: int = 1,
    keep_curves: bool = False,
) -> StudyReport:
    """Run every estimator on `replications` fresh datasets and
    aggregate bias, variance, and detection metrics."""
    estimators = tuple(estimators)
    for name in estimators:
        if name not in ESTIMATOR_NAMES:
            raise ValueError(
                f"unknown estimator {name!r}; valid options: {', '.join(ESTIMATOR_NAMES)}"
            )
    if replications < 2:
        raise ValueError("need at least 2 replications")

    if threads > 1 and sys.platform != "win32":
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(
                    _replicate,
                    [spec] * replications,
                    [estimators] * replications,
                    [options] * replications,
                    [seed] * replications,
                    range(replications),
                    chunksize=max(1, replications // (4 * threads)),
                )
            )
    else:
        results = [
            _replicate(spec, estimators, options, seed, rep) for rep in range(replications)
        ]

    reports = []
    curves = {}
    for name in estimators:
        rep, kept = _aggregate(name, spec, replications, results, keep_curves)
        reports.append(rep)
        if kept is not None:
            curves[name] = kept
    return StudyReport(
        dgp=spec.name,
        n=spec.n,
        p=spec.p,
        sigma_eps=spec.sigma_eps,
        replications=replications,
        seed=seed,
        estimators=tuple(reports),
        curves=curves,
    )
