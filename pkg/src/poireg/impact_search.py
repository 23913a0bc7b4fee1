"""Pre-selection of candidate impact points and the covariance
smoothness diagnostic.

The search filters each trajectory with the central second-order
difference Z(t) = X(t) - (X(t-delta) + X(t+delta))/2, which suppresses
smooth variation and keeps local variation.  Candidate locations are
picked greedily at the maxima of |n^-1 sum_i Z_i(t_j) Y_i|, removing a
sqrt(delta)/2 neighbourhood around each pick so that subsequent picks
are well separated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DeltaNotHalvable,
    DeltaOutOfRange,
    IndexOutOfInterior,
    ZeroDenominator,
)


@dataclass(frozen=True)
class DeltaSpec:
    """A window width quantized to the grid: delta = k_delta/(p-1)."""

    delta: float
    k_delta: int
    p: int

    @property
    def interior(self) -> np.ndarray:
        """0-based grid indices j with both j-k and j+k on the grid."""
        return np.arange(self.k_delta, self.p - self.k_delta)

    @property
    def n_interior(self) -> int:
        return self.p - 2 * self.k_delta


@dataclass(frozen=True)
class PoICandidate:
    index: int  # 0-based grid index
    location: float
    score: float


@dataclass(frozen=True)
class PoICandidateList:
    delta_spec: DeltaSpec
    candidates: tuple[PoICandidate, ...]

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(c.index for c in self.candidates)

    @property
    def locations(self) -> tuple[float, ...]:
        return tuple(c.location for c in self.candidates)

    def __len__(self) -> int:
        return len(self.candidates)


def make_delta_spec(delta: float, p: int) -> DeltaSpec:
    """Quantize delta to the nearest grid offset k = round(delta*(p-1)).

    Rounds half away from zero and re-quantizes delta to k/(p-1), so
    that t - delta and t + delta are exact grid points.  Admissible
    offsets satisfy 1 <= k < (p-1)/2.
    """
    if delta <= 0:
        raise DeltaOutOfRange(f"delta must be positive, got {delta}")
    k = math.floor(delta * (p - 1) + 0.5)
    if not 1 <= k < (p - 1) / 2:
        raise DeltaOutOfRange(
            f"delta={delta} quantizes to offset {k}, outside [1, {(p - 1) / 2})"
        )
    return DeltaSpec(delta=k / (p - 1), k_delta=k, p=p)


def second_diff(x: np.ndarray, spec: DeltaSpec, j: int) -> float:
    """Central second-order difference of one trajectory at grid index j."""
    k = spec.k_delta
    if not k <= j <= spec.p - 1 - k:
        raise IndexOutOfInterior(f"index {j} outside interior [{k}, {spec.p - 1 - k}]")
    return float(x[j] - 0.5 * (x[j - k] + x[j + k]))


def second_diff_matrix(X: np.ndarray, spec: DeltaSpec, k: int | None = None) -> np.ndarray:
    """All interior second differences at offset k (default spec.k_delta),
    evaluated on spec's interior index set; returns n x (p - 2*k_delta)."""
    if k is None:
        k = spec.k_delta
    lo, hi = spec.k_delta, spec.p - spec.k_delta  # interior of the spec window
    return X[:, lo:hi] - 0.5 * (X[:, lo - k : hi - k] + X[:, lo + k : hi + k])


def search_potential_pois(Xst: np.ndarray, Yst: np.ndarray, spec: DeltaSpec) -> PoICandidateList:
    """Greedy candidate search on the cross-moment trajectory.

    Repeatedly selects the interior index maximizing
    |n^-1 sum_i Z_i(t_j) Y_i| (ties to the smallest index), then drops
    every index within sqrt(delta)/2 of the pick; indices at distance
    exactly sqrt(delta)/2 survive.  Terminates when no index remains.
    """
    n, p = Xst.shape
    if p != spec.p:
        raise ValueError("X has a different grid size than the delta spec")
    Z = second_diff_matrix(Xst, spec)
    scores = np.abs(Z.T @ Yst) / n
    interior = spec.interior
    t = interior / (p - 1)
    radius = math.sqrt(spec.delta) / 2.0
    alive = np.ones(interior.shape[0], dtype=bool)
    picks: list[PoICandidate] = []
    while alive.any():
        masked = np.where(alive, scores, -np.inf)
        pos = int(np.argmax(masked))
        picks.append(
            PoICandidate(index=int(interior[pos]), location=float(t[pos]), score=float(scores[pos]))
        )
        alive &= np.abs(t - t[pos]) >= radius
    return PoICandidateList(delta_spec=spec, candidates=tuple(picks))


def second_moment_sums(X: np.ndarray, spec: DeltaSpec) -> tuple[float, float]:
    """Mean-square second differences at offsets k and k/2, both over
    the interior index set of the full window."""
    k = spec.k_delta
    if k % 2 != 0 or k < 2:
        raise DeltaNotHalvable(f"offset k={k} must be even (and >= 2) to halve delta exactly")
    norm = 1.0 / spec.n_interior
    full = norm * float(np.sum(second_diff_matrix(X, spec) ** 2))
    half = norm * float(np.sum(second_diff_matrix(X, spec, k=k // 2) ** 2))
    return full, half


def estimate_kappa(X: np.ndarray, spec: DeltaSpec) -> float:
    """Covariance smoothness exponent estimate
    log2(sum Z_delta^2 / sum Z_{delta/2}^2).

    Values below 2 indicate enough local variability for impact points
    to be identifiable.
    """
    full, half = second_moment_sums(X, spec)
    if half <= 0.0:
        raise ZeroDenominator("second differences at delta/2 vanish; ratio undefined")
    return float(np.log2(full / half))
