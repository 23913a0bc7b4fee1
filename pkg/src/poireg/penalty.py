"""Construction of the spline penalty: polynomial projection, natural
cubic curvature matrix, and their positive-definite combination.

The curvature matrix realizes the quadratic form v -> integral of the
squared second derivative of the natural cubic spline interpolating v
at the grid points.  With the interpolation (cardinal) basis the basis
evaluation matrix is the identity, so the matrix is assembled directly
from the classical tridiagonal second-derivative system: for knots
t_1 < ... < t_p with gaps h_j, the interior second derivatives g solve
R g = Q' v and the integral equals g' R g, hence the matrix is
Q R^{-1} Q'.  The per-interval integrals are exact because the second
derivative of a cubic spline is piecewise linear.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solveh_banded

from .dataset import Grid, _readonly
from .errors import SingularBasis

DEFAULT_ORDER = 2
MAX_ORDER = 5


@dataclass(frozen=True)
class PenaltyBundle:
    """Projection P, curvature A*, and combined penalty A = P + p*A*.

    ``chol_upper`` is the upper Cholesky factor of the combined matrix
    (A = R'R); its existence certifies positive definiteness, which is
    what makes the downstream ridge estimator unique.
    """

    grid: Grid
    order: int
    projection: np.ndarray
    curvature: np.ndarray
    combined: np.ndarray
    chol_upper: np.ndarray

    def __post_init__(self):
        for name in ("projection", "curvature", "combined", "chol_upper"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def p(self) -> int:
        return self.grid.p


def build_projection(grid: Grid, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Orthogonal projection onto polynomials of degree < order,
    evaluated on the grid."""
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in [1, {MAX_ORDER}]")
    W = np.vander(grid.points, N=order, increasing=True)
    # QR instead of the normal equations: same projector, better conditioned.
    Q, R = np.linalg.qr(W)
    diag = np.abs(np.diag(R))
    if diag.min() <= grid.p * np.finfo(float).eps * diag.max():
        raise SingularBasis("polynomial basis is numerically singular on this grid")
    P = Q @ Q.T
    return (P + P.T) / 2.0


def build_curvature(grid: Grid) -> np.ndarray:
    """Curvature matrix Q R^{-1} Q' of the natural cubic interpolation
    spline on the grid knots."""
    t = grid.points
    p = grid.p
    h = np.diff(t)
    Q = np.zeros((p, p - 2))
    cols = np.arange(p - 2)
    Q[cols, cols] = 1.0 / h[:-1]
    Q[cols + 1, cols] = -1.0 / h[:-1] - 1.0 / h[1:]
    Q[cols + 2, cols] = 1.0 / h[1:]
    # R is symmetric tridiagonal PD; banded storage for solveh_banded.
    band = np.zeros((2, p - 2))
    band[0, 1:] = h[1:-1] / 6.0
    band[1, :] = (h[:-1] + h[1:]) / 3.0
    try:
        sol = solveh_banded(band, Q.T)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - R is PD by construction
        raise SingularBasis(f"curvature system is singular: {exc}") from None
    A = Q @ sol
    return (A + A.T) / 2.0


def build_penalty(grid: Grid, order: int = DEFAULT_ORDER) -> PenaltyBundle:
    """Assemble A = P + p*A* and certify positive definiteness."""
    P = build_projection(grid, order)
    Astar = build_curvature(grid)
    A = P + grid.p * Astar
    A = (A + A.T) / 2.0
    try:
        chol_lower = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise SingularBasis(
            "combined penalty is not positive definite; the projection order "
            "must cover the curvature null space (order >= 2)"
        ) from None
    return PenaltyBundle(
        grid=grid,
        order=order,
        projection=P,
        curvature=Astar,
        combined=A,
        chol_upper=chol_lower.T.copy(),
    )


def dump_penalty(bundle: PenaltyBundle, directory) -> None:
    """Write the three matrices as CSV files for inspection."""
    os.makedirs(directory, exist_ok=True)
    for name, mat in (
        ("projection", bundle.projection),
        ("curvature", bundle.curvature),
        ("penalty", bundle.combined),
    ):
        np.savetxt(os.path.join(directory, f"{name}.csv"), mat, delimiter=",", fmt="%.17g")
