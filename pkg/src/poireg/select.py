"""BIC sub-selection of impact points and the sequential estimation
pipelines.

A pipeline for one window width delta runs pre-select -> estimate ->
sub-select, optionally repeating the estimate/sub-select pair once
(PES-ES) or twice (PES-2ES).  Each delta is then scored by a BIC on the
residuals of a GCV fit restricted to the finally selected impact set,
and the best delta wins.  The CKS variant is the same penalized fit
with no impact machinery at all.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import (
    FunctionalDataset,
    center,
    default_sd_floor,
    sd,
    standardize,
    _readonly,
)
from .errors import AllDeltaFailed, CollinearPoIColumns, DegenerateResponse, PoiRegError
from .impact_search import PoICandidate, make_delta_spec, search_potential_pois
from .penalty import build_penalty
from .ridge import SlopeEstimate, augment, default_rho_grid, optimize_gcv, standard_errors

VARIANTS = ("PES", "PES-ES", "PES-2ES", "CKS")
_ES_ROUNDS = {"PES": 1, "PES-ES": 2, "PES-2ES": 3}
_RSS_FLOOR = 1e-300


@dataclass(frozen=True)
class ImpactTerm:
    """One selected impact point with its fitted coefficient."""

    index: int
    location: float
    coefficient: float
    std_err: float | None = None


@dataclass(frozen=True)
class FitResult:
    estimate: SlopeEstimate
    selected_pois: tuple[ImpactTerm, ...]
    delta: float
    bic_delta: float
    variant: str
    standard_errors: np.ndarray | None = None

    def __post_init__(self):
        if self.standard_errors is not None:
            object.__setattr__(self, "standard_errors", _readonly(self.standard_errors))

    @property
    def poi_locations(self) -> tuple[float, ...]:
        return tuple(t.location for t in self.selected_pois)

    @property
    def poi_coefficients(self) -> tuple[float, ...]:
        return tuple(t.coefficient for t in self.selected_pois)


@dataclass(frozen=True)
class SelectorConfig:
    variant: str = "PES-ES"
    delta_grid: tuple[float, ...] | None = None  # None -> default for the grid size
    rho_grid: tuple[float, ...] | None = None  # None -> default_rho_grid()
    sd_floor: float | None = None
    standardize_preselect: bool = True
    max_candidates: int | None = None
    basis_order: int = 2

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


def default_delta_grid(p: int, count: int = 30, delta_max: float = 0.1) -> tuple[float, ...]:
    """Log-spaced window widths in [2/(p-1), delta_max], quantized to
    the grid and deduplicated; falls back to the smallest admissible
    offset on very coarse grids.

    The default count makes the grid nearly as fine as the quantization
    allows at p ~ 300.  Detection of an impact point needs some window
    whose score peak lands within a hair of the true location, and the
    peak noise is only partially correlated across widths, so a fine
    grid materially raises the detection ceiling.
    """
    lo = 2.0 / (p - 1)
    hi = max(delta_max, lo)
    seen = {}
    for delta in np.geomspace(lo, hi, count):
        try:
            spec = make_delta_spec(float(delta), p)
        except PoiRegError:
            continue
        seen.setdefault(spec.k_delta, spec.delta)
    if not seen:
        spec = make_delta_spec(1.0 / (p - 1), p)
        seen[spec.k_delta] = spec.delta
    return tuple(seen.values())


def neutralize_response(
    Yc: np.ndarray, Xc: np.ndarray, beta_grid: np.ndarray, sd_floor: float | None = None
) -> np.ndarray:
    """Remove the fitted smooth component p^-1 sum_j beta_j Xc_ij from
    Yc and scale the remainder to unit standard deviation."""
    p = Xc.shape[1]
    v = Yc - Xc @ beta_grid / p
    if sd_floor is None:
        sd_floor = default_sd_floor(Xc)
    scale = sd(v)
    if scale < sd_floor:
        raise DegenerateResponse(
            f"neutralized response has sd {scale:.3e} below floor {sd_floor:.3e}"
        )
    return v / scale


def _ols_rss(v: np.ndarray, cols: np.ndarray) -> float:
    coef, residual, rank, _ = np.linalg.lstsq(cols, v, rcond=None)
    if rank < cols.shape[1]:
        raise CollinearPoIColumns(f"rank {rank} < {cols.shape[1]} impact columns")
    resid = v - cols @ coef
    return float(resid @ resid)


def bic_subset(indices: Sequence[int], neutralized: np.ndarray, Xst: np.ndarray) -> float:
    """BIC of the intercept-free regression of the neutralized response
    on the standardized impact columns: n log(rss/n) + log(n) |R|."""
    n = neutralized.shape[0]
    indices = list(indices)
    if indices:
        rss = _ols_rss(neutralized, Xst[:, indices])
    else:
        rss = float(neutralized @ neutralized)
    return n * math.log(max(rss, _RSS_FLOOR) / n) + math.log(n) * len(indices)


def subselect(
    candidates: Sequence[PoICandidate], neutralized: np.ndarray, Xst: np.ndarray
) -> tuple[PoICandidate, ...]:
    """Directed search along the candidate order.

    Evaluates the BIC at the empty set and at each grown set, keeping
    the global minimizer; ties go to the smaller set.  A candidate whose
    column is collinear with the ones already kept is dropped and the
    sweep continues.
    """
    best_set: tuple[PoICandidate, ...] = ()
    best_bic = bic_subset([], neutralized, Xst)
    kept: list[PoICandidate] = []
    for cand in candidates:
        trial = [c.index for c in kept] + [cand.index]
        try:
            bic = bic_subset(trial, neutralized, Xst)
        except CollinearPoIColumns:
            continue
        kept.append(cand)
        if bic < best_bic:
            best_bic = bic
            best_set = tuple(kept)
    return best_set


def bic_delta(rss: float, edf: float, n: int) -> float:
    """Window-width score: n log(rss/n) + log(n) * edf, with
    edf = Tr(H'H) of the smoother on the final impact set."""
    return n * math.log(max(rss, _RSS_FLOOR) / n) + math.log(n) * edf


@dataclass(frozen=True)
class _DeltaOutcome:
    delta: float
    estimate: SlopeEstimate
    fitted_indices: tuple[int, ...]
    selected: tuple[PoICandidate, ...]
    bic: float


class _GcvCache:
    """One GCV-optimized fit per distinct impact-index tuple."""

    def __init__(self, Xc, bundle, Yc, rho_grid):
        self.Xc, self.bundle, self.Yc, self.rho_grid = Xc, bundle, Yc, rho_grid
        self._fits: dict[tuple[int, ...], SlopeEstimate] = {}

    def fit(self, indices: tuple[int, ...]) -> SlopeEstimate:
        if indices not in self._fits:
            design = augment(self.Xc, self.bundle, indices)
            self._fits[indices] = optimize_gcv(design, self.Yc, self.rho_grid)
        return self._fits[indices]


def _run_delta_pipeline(
    delta: float, *, p: int, Xpre, Ypre, Xst, Xc, Yc, cache: _GcvCache, rounds: int,
    sd_floor: float | None, max_candidates: int | None,
) -> _DeltaOutcome:
    spec = make_delta_spec(delta, p)
    cand_list = search_potential_pois(Xpre, Ypre, spec)
    seq: tuple[PoICandidate, ...] = cand_list.candidates
    if max_candidates is not None:
        seq = seq[:max_candidates]
    fit = None
    fitted: tuple[int, ...] = ()
    for _ in range(rounds):
        fitted = tuple(c.index for c in seq)
        fit = cache.fit(fitted)
        neutralized = neutralize_response(Yc, Xc, fit.beta_grid, sd_floor)
        seq = subselect(seq, neutralized, Xst)
    scoring = cache.fit(tuple(c.index for c in seq))
    n = Yc.shape[0]
    return _DeltaOutcome(
        delta=spec.delta,
        estimate=fit,
        fitted_indices=fitted,
        selected=seq,
        bic=bic_delta(scoring.rss, scoring.edf, n),
    )


def run_variant(
    ds: FunctionalDataset, cfg: SelectorConfig, with_std_errors: bool = False
) -> FitResult:
    """Run the configured estimation pipeline on a dataset.

    Window widths whose pipeline errors are skipped with a warning; the
    returned fit carries the BIC-minimizing delta.  The CKS variant
    fits the penalized model with no impact points.
    """
    cds = center(ds)
    bundle = build_penalty(ds.grid, cfg.basis_order)
    rho_grid = (
        np.asarray(cfg.rho_grid, dtype=np.float64)
        if cfg.rho_grid is not None
        else default_rho_grid()
    )
    n = ds.n

    if cfg.variant == "CKS":
        fit = optimize_gcv(augment(cds.Xc, bundle, ()), cds.Yc, rho_grid)
        errs = (
            standard_errors(augment(cds.Xc, bundle, ()), cds.Yc, fit.rho)
            if with_std_errors
            else None
        )
        return FitResult(
            estimate=fit,
            selected_pois=(),
            delta=float("nan"),
            bic_delta=bic_delta(fit.rss, fit.edf, n),
            variant="CKS",
            standard_errors=errs,
        )

    sds = standardize(cds, cfg.sd_floor)
    Xpre, Ypre = (sds.Xst, sds.Yst) if cfg.standardize_preselect else (cds.Xc, cds.Yc)
    deltas = cfg.delta_grid if cfg.delta_grid is not None else default_delta_grid(ds.grid.p)
    cache = _GcvCache(cds.Xc, bundle, cds.Yc, rho_grid)

    outcomes: list[_DeltaOutcome] = []
    for delta in deltas:
        try:
            outcomes.append(
                _run_delta_pipeline(
                    delta,
                    p=ds.grid.p,
                    Xpre=Xpre,
                    Ypre=Ypre,
                    Xst=sds.Xst,
                    Xc=cds.Xc,
                    Yc=cds.Yc,
                    cache=cache,
                    rounds=_ES_ROUNDS[cfg.variant],
                    sd_floor=cfg.sd_floor,
                    max_candidates=cfg.max_candidates,
                )
            )
        except PoiRegError as exc:
            warnings.warn(f"delta={delta:.6g} skipped: {exc}", RuntimeWarning, stacklevel=2)
    if not outcomes:
        raise AllDeltaFailed("every delta in the grid failed")

    best = outcomes[0]
    for outcome in outcomes[1:]:
        if outcome.bic < best.bic:
            best = outcome

    errs = None
    if with_std_errors:
        design = augment(cds.Xc, bundle, best.fitted_indices)
        errs = standard_errors(design, cds.Yc, best.estimate.rho)
    pos = {idx: s for s, idx in enumerate(best.fitted_indices)}
    p = ds.grid.p
    selected = tuple(
        ImpactTerm(
            index=c.index,
            location=c.location,
            coefficient=float(best.estimate.beta_poi[pos[c.index]]),
            std_err=float(errs[p + pos[c.index]]) if errs is not None else None,
        )
        for c in best.selected
    )
    return FitResult(
        estimate=best.estimate,
        selected_pois=selected,
        delta=best.delta,
        bic_delta=best.bic,
        variant=cfg.variant,
        standard_errors=errs,
    )
